// SPDX-License-Identifier: Apache-2.0

#include "gremc/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "gremc/spectral.hpp"
#include "json.hpp"

namespace gremc {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_grad(double x) {
  double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
  double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return cdf + x * pdf;
}

void softmax_inplace(std::span<double> v) {
  double mx = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double& x : v) {
    x = std::exp(x - mx);
    sum += x;
  }
  for (double& x : v) x /= sum;
}

/// y = x W^T + b with x: n x in, W: out x in, b: out x 1 (or empty).
Mat linear(const Mat& x, ConstMatView w, ConstMatView b) {
  Mat y(x.rows, w.rows, 0.0);
  for (size_t r = 0; r < x.rows; ++r) {
    for (size_t o = 0; o < w.rows; ++o) {
      double acc = b.rows ? b(o, 0) : 0.0;
      auto xr = x.row(r);
      auto wr = w.row(o);
      for (size_t i = 0; i < x.cols; ++i) acc += xr[i] * wr[i];
      y(r, o) = acc;
    }
  }
  return y;
}

/// Backward of linear(): accumulates into gw/gb and optionally gx.
void linear_backward(const Mat& x, ConstMatView w, const Mat& gy, Mat* gx, MatView gw, MatView gb) {
  for (size_t r = 0; r < x.rows; ++r) {
    auto xr = x.row(r);
    auto gyr = gy.row(r);
    for (size_t o = 0; o < w.rows; ++o) {
      double go = gyr[o];
      if (go == 0.0) continue;
      if (gb.rows) gb(o, 0) += go;
      auto gwr = gw.row(o);
      for (size_t i = 0; i < x.cols; ++i) gwr[i] += go * xr[i];
      if (gx) {
        auto wr = w.row(o);
        auto gxr = gx->row(r);
        for (size_t i = 0; i < x.cols; ++i) gxr[i] += go * wr[i];
      }
    }
  }
}

void layer_norm(const Mat& x, ConstMatView gamma, ConstMatView beta, Mat& y,
                std::vector<double>& mu, std::vector<double>& rs) {
  size_t n = x.rows, d = x.cols;
  y = Mat(n, d);
  mu.resize(n);
  rs.resize(n);
  for (size_t r = 0; r < n; ++r) {
    auto xr = x.row(r);
    double m = std::accumulate(xr.begin(), xr.end(), 0.0) / static_cast<double>(d);
    double var = 0.0;
    for (double v : xr) var += (v - m) * (v - m);
    var /= static_cast<double>(d);
    double inv = 1.0 / std::sqrt(var + kLnEps);
    mu[r] = m;
    rs[r] = inv;
    for (size_t c = 0; c < d; ++c) y(r, c) = gamma(c, 0) * ((xr[c] - m) * inv) + beta(c, 0);
  }
}

/// Accumulates LN input gradient into gx; gamma/beta gradients into gg/gb.
void layer_norm_backward(const Mat& x, const std::vector<double>& mu, const std::vector<double>& rs,
                         ConstMatView gamma, const Mat& gy, Mat& gx, MatView gg, MatView gb) {
  size_t n = x.rows, d = x.cols;
  std::vector<double> xc(d), gxc(d);
  for (size_t r = 0; r < n; ++r) {
    auto xr = x.row(r);
    auto gyr = gy.row(r);
    double m1 = 0.0, m2 = 0.0;
    for (size_t c = 0; c < d; ++c) {
      xc[c] = (xr[c] - mu[r]) * rs[r];
      gg(c, 0) += gyr[c] * xc[c];
      gb(c, 0) += gyr[c];
      gxc[c] = gyr[c] * gamma(c, 0);
      m1 += gxc[c];
      m2 += gxc[c] * xc[c];
    }
    m1 /= static_cast<double>(d);
    m2 /= static_cast<double>(d);
    auto gxr = gx.row(r);
    for (size_t c = 0; c < d; ++c) gxr[c] += rs[r] * (gxc[c] - m1 - xc[c] * m2);
  }
}

Mat dropout_mask(size_t rows, size_t cols, double rate, Rng& rng) {
  Mat m(rows, cols);
  double scale = 1.0 / (1.0 - rate);
  for (double& v : m.data) v = rng.uniform01() < rate ? 0.0 : scale;
  return m;
}

bool dropout_active(const ModelConfig& cfg, const ForwardOptions& opts) {
  return opts.training && opts.use_dropout && cfg.dropout > 0.0;
}

}  // namespace

unsigned ModelConfig::input_dim() const {
  unsigned f = pe_k;
  for (unsigned dim : modality_dims) f += dim;
  return f;
}

void ModelConfig::validate() const {
  require(d > 0 && heads > 0 && d % heads == 0, "d must be a positive multiple of heads");
  require(layers > 0, "at least one transformer layer");
  require(pe_k >= 1, "pe_k must be positive");
  require(top_p >= 1 && top_p <= codebook_size, "need 1 <= P <= C");
  require(tau > 0.0, "temperature must be positive");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
  require(!modality_dims.empty(), "modality dims unset");
  require(batch >= 1, "batch must be positive");
}

namespace {

struct EntrySpec {
  std::string name;
  size_t rows, cols;
  ParamInit init;
};

template <typename Fn>
void for_each_entry(const ModelConfig& cfg, Fn&& fn) {
  const size_t d = cfg.d, f = cfg.input_dim(), dk = cfg.head_dim(), c = cfg.codebook_size;
  auto u = ParamInit::kUniformFanIn;
  auto z = ParamInit::kZero;
  auto one = ParamInit::kOne;

  fn(EntrySpec{"token_mlp.w1", d, f, u});
  fn(EntrySpec{"token_mlp.b1", d, 1, z});
  fn(EntrySpec{"token_mlp.w2", d, d, u});
  fn(EntrySpec{"token_mlp.b2", d, 1, z});
  for (unsigned l = 0; l < cfg.layers; ++l) {
    std::string p = "layer" + std::to_string(l) + ".";
    fn(EntrySpec{p + "ln1.gamma", d, 1, one});
    fn(EntrySpec{p + "ln1.beta", d, 1, z});
    for (const char* nm : {"wq", "wk", "wv", "wo"}) {
      fn(EntrySpec{p + "attn." + nm, d, d, u});
      fn(EntrySpec{p + "attn.b" + std::string(nm + 1), d, 1, z});
    }
    fn(EntrySpec{p + "ln2.gamma", d, 1, one});
    fn(EntrySpec{p + "ln2.beta", d, 1, z});
    fn(EntrySpec{p + "ffn.w1", 4 * d, d, u});
    fn(EntrySpec{p + "ffn.b1", 4 * d, 1, z});
    fn(EntrySpec{p + "ffn.w2", d, 4 * d, u});
    fn(EntrySpec{p + "ffn.b2", d, 1, z});
  }
  fn(EntrySpec{"pool.wq", dk, d, u});
  fn(EntrySpec{"pool.wk", dk, d, u});
  fn(EntrySpec{"router.w", c, d, u});
  fn(EntrySpec{"codebook", c, d, ParamInit::kCodebook});
  for (size_t m = 0; m < cfg.modality_dims.size(); ++m) {
    std::string p = "decoder" + std::to_string(m) + ".";
    fn(EntrySpec{p + "w1", d, d, u});
    fn(EntrySpec{p + "b1", d, 1, z});
    fn(EntrySpec{p + "w2", cfg.modality_dims[m], d, u});
    fn(EntrySpec{p + "b2", cfg.modality_dims[m], 1, z});
  }
}

}  // namespace

ModelParams build_params(const ModelConfig& cfg) {
  cfg.validate();
  ModelParams p;
  p.cfg = cfg;
  size_t offset = 0;
  for_each_entry(cfg, [&](const EntrySpec& e) {
    p.entries.push_back({e.name, e.rows, e.cols, offset, e.cols > 1, e.init});
    offset += e.rows * e.cols;
  });
  p.values.assign(offset, 0.0);
  return p;
}

size_t ModelParams::entry_index(std::string_view name) const {
  for (size_t i = 0; i < entries.size(); ++i)
    if (entries[i].name == name) return i;
  fail("unknown parameter: " + std::string(name));
}

MatView ModelParams::view(size_t idx) {
  const auto& e = entries[idx];
  return {values.data() + e.offset, e.rows, e.cols};
}

ConstMatView ModelParams::view(size_t idx) const {
  const auto& e = entries[idx];
  return {values.data() + e.offset, e.rows, e.cols};
}

MatView ModelParams::view(std::string_view name) { return view(entry_index(name)); }
ConstMatView ModelParams::view(std::string_view name) const { return view(entry_index(name)); }

void init_params(ModelParams& params, uint64_t seed) {
  Rng rng = derive_stream(seed, "init");
  double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(params.cfg.d));
  for (size_t i = 0; i < params.entries.size(); ++i) {
    const auto& e = params.entries[i];
    double* dst = params.values.data() + e.offset;
    size_t count = e.rows * e.cols;
    switch (e.init) {
      case ParamInit::kZero:
        std::fill(dst, dst + count, 0.0);
        break;
      case ParamInit::kOne:
        std::fill(dst, dst + count, 1.0);
        break;
      case ParamInit::kUniformFanIn: {
        double bound = 1.0 / std::sqrt(static_cast<double>(e.cols));
        for (size_t j = 0; j < count; ++j) dst[j] = rng.uniform(-bound, bound);
        break;
      }
      case ParamInit::kCodebook:
        for (size_t j = 0; j < count; ++j) dst[j] = rng.normal();
        break;
    }
  }
}

EncodedSample encode_query(const ItemGraph& g, const ModalityStore& store,
                           const ModalityMask& mask, uint32_t i, const RetrievalConfig& rcfg,
                           unsigned pe_k) {
  RetrievalOutcome outcome = retrieve_subgraph(g, store, mask, i, rcfg);

  EncodedSample s;
  s.item = i;
  s.tokens = outcome.subgraph.nodes;
  auto pos = std::lower_bound(s.tokens.begin(), s.tokens.end(), i);
  if (pos == s.tokens.end() || *pos != i) {
    s.tokens.push_back(i);  // query joins the token set at encoding time only
    s.query_row = s.tokens.size() - 1;
  } else {
    s.query_row = static_cast<size_t>(pos - s.tokens.begin());
  }

  LaplacianPE pe = laplacian_pe(induced_adjacency(g, s.tokens), pe_k);

  size_t n_mod = store.n_modalities();
  size_t f = pe_k;
  for (size_t m = 0; m < n_mod; ++m) f += store.dim(static_cast<uint32_t>(m));
  s.input = Mat(s.tokens.size(), f, 0.0);
  for (size_t r = 0; r < s.tokens.size(); ++r) {
    uint32_t v = s.tokens[r];
    size_t col = 0;
    for (size_t m = 0; m < n_mod; ++m) {
      size_t dim = store.dim(static_cast<uint32_t>(m));
      if (mask.is_observed(v, static_cast<uint32_t>(m))) {
        auto feat = store.feature(v, static_cast<uint32_t>(m));
        for (size_t j = 0; j < dim; ++j) s.input(r, col + j) = feat[j];
      }
      col += dim;  // unobserved slots stay exact zero
    }
    for (size_t j = 0; j < pe_k; ++j) s.input(r, col + j) = pe.vectors(r, j);
  }
  return s;
}

Mat embed_tokens(const EncodedSample& sample, const ModelParams& params, SampleCache* cache) {
  require(sample.input.cols == params.cfg.input_dim(), "token input width mismatch");
  Mat a1 = linear(sample.input, params.view("token_mlp.w1"), params.view("token_mlp.b1"));
  Mat z1 = a1;
  for (double& v : z1.data) v = gelu(v);
  Mat h0 = linear(z1, params.view("token_mlp.w2"), params.view("token_mlp.b2"));
  if (cache) {
    cache->a1 = std::move(a1);
    cache->z1 = std::move(z1);
    cache->h0 = h0;
  }
  return h0;
}

Mat transformer_forward(const Mat& h0, const ModelParams& params, const ForwardOptions& opts,
                        SampleCache* cache) {
  const ModelConfig& cfg = params.cfg;
  require(h0.cols == cfg.d, "token state width mismatch");
  const size_t n = h0.rows, d = cfg.d, dh = cfg.head_dim();
  const bool drop = dropout_active(cfg, opts);
  if (drop) require(opts.dropout_rng != nullptr, "dropout requires an rng");

  Mat h = h0;
  for (unsigned l = 0; l < cfg.layers; ++l) {
    std::string p = "layer" + std::to_string(l) + ".";
    LayerCache lc;
    lc.h_in = h;
    layer_norm(lc.h_in, params.view(p + "ln1.gamma"), params.view(p + "ln1.beta"), lc.u1, lc.mu1,
               lc.rs1);
    lc.q = linear(lc.u1, params.view(p + "attn.wq"), params.view(p + "attn.bq"));
    lc.k = linear(lc.u1, params.view(p + "attn.wk"), params.view(p + "attn.bk"));
    lc.v = linear(lc.u1, params.view(p + "attn.wv"), params.view(p + "attn.bv"));

    lc.concat = Mat(n, d, 0.0);
    double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    for (unsigned head = 0; head < cfg.heads; ++head) {
      size_t off = head * dh;
      Mat a(n, n);
      for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < n; ++j) {
          double s = 0.0;
          for (size_t t = 0; t < dh; ++t) s += lc.q(i, off + t) * lc.k(j, off + t);
          a(i, j) = s * inv_sqrt_dh;
        }
        softmax_inplace(a.row(i));
      }
      lc.attn.push_back(a);
      if (drop) lc.attn_mask.push_back(dropout_mask(n, n, cfg.dropout, *opts.dropout_rng));
      const Mat* mask = drop ? &lc.attn_mask.back() : nullptr;
      for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < n; ++j) {
          double w = mask ? a(i, j) * (*mask)(i, j) : a(i, j);
          if (w == 0.0) continue;
          for (size_t t = 0; t < dh; ++t) lc.concat(i, off + t) += w * lc.v(j, off + t);
        }
      }
    }
    lc.attn_out = linear(lc.concat, params.view(p + "attn.wo"), params.view(p + "attn.bo"));
    lc.h_mid = lc.h_in;
    for (size_t idx = 0; idx < lc.h_mid.data.size(); ++idx) lc.h_mid.data[idx] += lc.attn_out.data[idx];

    layer_norm(lc.h_mid, params.view(p + "ln2.gamma"), params.view(p + "ln2.beta"), lc.u2, lc.mu2,
               lc.rs2);
    lc.f1 = linear(lc.u2, params.view(p + "ffn.w1"), params.view(p + "ffn.b1"));
    lc.f1g = lc.f1;
    for (double& v : lc.f1g.data) v = gelu(v);
    lc.f2 = linear(lc.f1g, params.view(p + "ffn.w2"), params.view(p + "ffn.b2"));
    if (drop) lc.f2_mask = dropout_mask(n, d, cfg.dropout, *opts.dropout_rng);

    lc.h_out = lc.h_mid;
    for (size_t idx = 0; idx < lc.h_out.data.size(); ++idx) {
      double v = lc.f2.data[idx];
      if (drop) v *= lc.f2_mask.data[idx];
      lc.h_out.data[idx] += v;
    }
    h = lc.h_out;
    if (cache) cache->layers.push_back(std::move(lc));
  }
  if (cache) cache->h_final = h;
  return h;
}

std::vector<double> attention_pool(const Mat& h_final, size_t query_row, const ModelParams& params,
                                   SampleCache* cache) {
  require(query_row < h_final.rows, "query row out of range");
  const size_t n = h_final.rows, d = h_final.cols, dk = params.cfg.head_dim();
  ConstMatView wq = params.view("pool.wq");
  ConstMatView wk = params.view("pool.wk");

  std::vector<double> pq(dk, 0.0);
  for (size_t r = 0; r < dk; ++r)
    for (size_t c = 0; c < d; ++c) pq[r] += wq(r, c) * h_final(query_row, c);

  Mat pk(n, dk, 0.0);
  for (size_t j = 0; j < n; ++j)
    for (size_t r = 0; r < dk; ++r)
      for (size_t c = 0; c < d; ++c) pk(j, r) += wk(r, c) * h_final(j, c);

  double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<double> logits(n, 0.0);
  for (size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (size_t r = 0; r < dk; ++r) s += pq[r] * pk(j, r);
    logits[j] = s * inv_sqrt_dk;
  }
  std::vector<double> alpha = logits;
  softmax_inplace(alpha);

  std::vector<double> z(d, 0.0);
  for (size_t j = 0; j < n; ++j)
    for (size_t c = 0; c < d; ++c) z[c] += alpha[j] * h_final(j, c);

  if (cache) {
    cache->pool_q = pq;
    cache->pool_k = std::move(pk);
    cache->pool_logits = std::move(logits);
    cache->alpha = alpha;
    cache->z = z;
  }
  return z;
}

RoutingState route_codebook(std::span<const double> z, const ModelParams& params,
                            const ForwardOptions& opts) {
  const ModelConfig& cfg = params.cfg;
  const size_t c = cfg.codebook_size;
  require(z.size() == cfg.d, "router input width mismatch");

  RoutingState rs;
  rs.logits.assign(c, 0.0);
  ConstMatView w = params.view("router.w");
  for (size_t e = 0; e < c; ++e)
    for (size_t j = 0; j < cfg.d; ++j) rs.logits[e] += w(e, j) * z[j];

  if (opts.forced_eps) {
    require(opts.forced_eps->size() == c, "forced noise width mismatch");
    rs.eps = *opts.forced_eps;
  } else if (opts.training && cfg.noise_scale != 0.0) {
    require(opts.gumbel_rng != nullptr, "training-mode routing requires an rng");
    rs.eps.resize(c);
    for (double& e : rs.eps) e = opts.gumbel_rng->gumbel() * cfg.noise_scale;
  } else {
    rs.eps.assign(c, 0.0);
  }

  rs.g.resize(c);
  for (size_t e = 0; e < c; ++e) rs.g[e] = (rs.logits[e] + rs.eps[e]) / cfg.tau;
  softmax_inplace(rs.g);

  if (opts.forced_top_p) {
    rs.top_p = *opts.forced_top_p;
    require(rs.top_p.size() == std::min<size_t>(cfg.top_p, c), "forced selection size mismatch");
  } else {
    std::vector<uint32_t> order(c);
    std::iota(order.begin(), order.end(), 0);
    size_t keep = std::min<size_t>(cfg.top_p, c);
    std::partial_sort(order.begin(), order.begin() + keep, order.end(),
                      [&](uint32_t a, uint32_t b) {
                        if (rs.g[a] != rs.g[b]) return rs.g[a] > rs.g[b];
                        return a < b;
                      });
    rs.top_p.assign(order.begin(), order.begin() + keep);
  }

  rs.q_mix.assign(cfg.d, 0.0);
  ConstMatView codebook = params.view("codebook");
  for (uint32_t e : rs.top_p)
    for (size_t j = 0; j < cfg.d; ++j) rs.q_mix[j] += rs.g[e] * codebook(e, j);
  return rs;
}

std::vector<double> decode(std::span<const double> q_mix, unsigned m, const ModelParams& params,
                           SampleCache* cache) {
  require(m < params.cfg.modality_dims.size(), "unknown modality");
  std::string p = "decoder" + std::to_string(m) + ".";
  ConstMatView w1 = params.view(p + "w1");
  ConstMatView b1 = params.view(p + "b1");
  ConstMatView w2 = params.view(p + "w2");
  ConstMatView b2 = params.view(p + "b2");

  std::vector<double> a(params.cfg.d, 0.0);
  for (size_t r = 0; r < w1.rows; ++r) {
    double acc = b1(r, 0);
    for (size_t c = 0; c < w1.cols; ++c) acc += w1(r, c) * q_mix[c];
    a[r] = acc;
  }
  std::vector<double> hg(a.size());
  for (size_t r = 0; r < a.size(); ++r) hg[r] = gelu(a[r]);

  std::vector<double> out(w2.rows, 0.0);
  for (size_t r = 0; r < w2.rows; ++r) {
    double acc = b2(r, 0);
    for (size_t c = 0; c < w2.cols; ++c) acc += w2(r, c) * hg[c];
    out[r] = acc;
  }
  if (cache) {
    cache->dec_a = std::move(a);
    cache->dec_g = std::move(hg);
    cache->xhat = out;
  }
  return out;
}

std::vector<double> forward_sample(const EncodedSample& sample, const ModelParams& params,
                                   const ForwardOptions& opts, SampleCache& cache) {
  cache = SampleCache{};
  Mat h0 = embed_tokens(sample, params, &cache);
  Mat hl = transformer_forward(h0, params, opts, &cache);
  std::vector<double> z = attention_pool(hl, sample.query_row, params, &cache);
  cache.routing = route_codebook(z, params, opts);
  if (sample.hidden_modality < 0) return {};
  return decode(cache.routing.q_mix, static_cast<unsigned>(sample.hidden_modality), params, &cache);
}

double loss_usage(const Mat& g_batch) {
  require(g_batch.rows >= 1, "empty routing batch");
  const size_t b = g_batch.rows, c = g_batch.cols;
  for (size_t r = 0; r < b; ++r) {
    double s = std::accumulate(g_batch.row(r).begin(), g_batch.row(r).end(), 0.0);
    require(std::abs(s - 1.0) < 1e-6, "routing row off the simplex");
  }
  double kl = 0.0;
  for (size_t e = 0; e < c; ++e) {
    double mean = 0.0;
    for (size_t r = 0; r < b; ++r) mean += g_batch(r, e);
    mean /= static_cast<double>(b);
    if (mean > 0.0) kl += mean * std::log(mean * static_cast<double>(c));
  }
  return kl;
}

double loss_load(const Mat& g_hat_batch, unsigned p) {
  require(g_hat_batch.rows >= 1, "empty load batch");
  const size_t b = g_hat_batch.rows, c = g_hat_batch.cols;
  size_t expect = std::min<size_t>(p, c);
  for (size_t r = 0; r < b; ++r) {
    size_t ones = 0;
    for (double v : g_hat_batch.row(r)) {
      require(v == 0.0 || v == 1.0, "load indicators must be binary");
      ones += v == 1.0;
    }
    require(ones == expect, "row weight != P");
  }
  double load = 0.0;
  for (size_t e = 0; e < c; ++e) {
    double mean = 0.0;
    for (size_t r = 0; r < b; ++r) mean += g_hat_batch(r, e);
    mean /= static_cast<double>(b);
    load += mean * mean;
  }
  return load * static_cast<double>(c);
}

BatchResult batch_forward(std::span<const EncodedSample> samples, const ModelParams& params,
                          const ForwardOptions& opts, const std::vector<FrozenRouting>* frozen,
                          std::vector<SampleCache>* caches) {
  require(!samples.empty(), "empty batch");
  if (frozen) require(frozen->size() == samples.size(), "frozen routing count mismatch");
  const size_t c = params.cfg.codebook_size;

  BatchResult out;
  out.g_batch = Mat(samples.size(), c, 0.0);
  out.g_hat_batch = Mat(samples.size(), c, 0.0);
  if (caches) caches->resize(samples.size());

  size_t reconstructable = 0;
  SampleCache local;
  for (size_t idx = 0; idx < samples.size(); ++idx) {
    ForwardOptions o = opts;
    if (frozen) {
      o.forced_eps = &(*frozen)[idx].eps;
      o.forced_top_p = &(*frozen)[idx].top_p;
    }
    SampleCache& cache = caches ? (*caches)[idx] : local;
    std::vector<double> xhat = forward_sample(samples[idx], params, o, cache);

    const EncodedSample& s = samples[idx];
    if (s.hidden_modality >= 0) {
      require(s.target.size() == xhat.size(), "target width mismatch");
      double se = 0.0;
      for (size_t j = 0; j < xhat.size(); ++j) {
        double diff = xhat[j] - s.target[j];
        se += diff * diff;
      }
      out.loss.recon += se;
      ++reconstructable;
    }
    for (size_t e = 0; e < c; ++e) out.g_batch(idx, e) = cache.routing.g[e];
    for (uint32_t e : cache.routing.top_p) out.g_hat_batch(idx, e) = 1.0;
  }
  require(reconstructable > 0, "no reconstructable slot in batch");

  out.loss.usage = loss_usage(out.g_batch);
  out.loss.load = loss_load(out.g_hat_batch, params.cfg.top_p);
  out.loss.total = out.loss.recon + params.cfg.lambda_usage * out.loss.usage +
                   params.cfg.lambda_load * out.loss.load;
  return out;
}

namespace {

void sample_backward(const EncodedSample& sample, const ModelParams& params,
                     const SampleCache& cache, const std::vector<double>& usage_grad,
                     std::vector<double>& grad) {
  const ModelConfig& cfg = params.cfg;
  const size_t d = cfg.d, dh = cfg.head_dim(), dk = cfg.head_dim(), n = sample.tokens.size();
  auto gv = [&](std::string_view name) {
    const auto& e = params.entries[params.entry_index(name)];
    return MatView{grad.data() + e.offset, e.rows, e.cols};
  };

  require(sample.hidden_modality >= 0, "backward needs a training target");
  const unsigned m = static_cast<unsigned>(sample.hidden_modality);
  std::string dp = "decoder" + std::to_string(m) + ".";

  // Reconstruction head.
  std::vector<double> gxhat(cache.xhat.size());
  for (size_t j = 0; j < gxhat.size(); ++j) gxhat[j] = 2.0 * (cache.xhat[j] - sample.target[j]);

  ConstMatView dw2 = params.view(dp + "w2");
  MatView gdw2 = gv(dp + "w2"), gdb2 = gv(dp + "b2");
  std::vector<double> ggact(d, 0.0);
  for (size_t r = 0; r < dw2.rows; ++r) {
    double go = gxhat[r];
    gdb2(r, 0) += go;
    for (size_t c = 0; c < d; ++c) {
      gdw2(r, c) += go * cache.dec_g[c];
      ggact[c] += go * dw2(r, c);
    }
  }
  ConstMatView dw1 = params.view(dp + "w1");
  MatView gdw1 = gv(dp + "w1"), gdb1 = gv(dp + "b1");
  std::vector<double> gq_mix(d, 0.0);
  for (size_t r = 0; r < d; ++r) {
    double ga = ggact[r] * gelu_grad(cache.dec_a[r]);
    gdb1(r, 0) += ga;
    for (size_t c = 0; c < d; ++c) {
      gdw1(r, c) += ga * cache.routing.q_mix[c];
      gq_mix[c] += ga * dw1(r, c);
    }
  }

  // Routing: recon path touches only the selected entries; the usage term
  // reaches every coordinate of g; the load term has no gradient because the
  // hard selection is constant under the routing-gradient contract.
  const RoutingState& rt = cache.routing;
  const size_t cb = cfg.codebook_size;
  ConstMatView codebook = params.view("codebook");
  MatView gcodebook = gv("codebook");
  std::vector<double> dg(usage_grad);
  for (uint32_t e : rt.top_p) {
    double acc = 0.0;
    for (size_t j = 0; j < d; ++j) {
      acc += codebook(e, j) * gq_mix[j];
      gcodebook(e, j) += rt.g[e] * gq_mix[j];
    }
    dg[e] += acc;
  }
  double gdot = 0.0;
  for (size_t e = 0; e < cb; ++e) gdot += rt.g[e] * dg[e];
  ConstMatView router = params.view("router.w");
  MatView grouter = gv("router.w");
  std::vector<double> gz(d, 0.0);
  for (size_t e = 0; e < cb; ++e) {
    double dlogit = rt.g[e] * (dg[e] - gdot) / cfg.tau;
    for (size_t j = 0; j < d; ++j) {
      grouter(e, j) += dlogit * cache.z[j];
      gz[j] += dlogit * router(e, j);
    }
  }

  // Attention pooling.
  const Mat& hf = cache.h_final;
  Mat gh(n, d, 0.0);
  std::vector<double> galpha(n, 0.0);
  for (size_t j = 0; j < n; ++j) {
    double acc = 0.0;
    for (size_t c = 0; c < d; ++c) {
      acc += hf(j, c) * gz[c];
      gh(j, c) += cache.alpha[j] * gz[c];
    }
    galpha[j] = acc;
  }
  double adot = 0.0;
  for (size_t j = 0; j < n; ++j) adot += cache.alpha[j] * galpha[j];
  double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<double> gpq(dk, 0.0);
  Mat gpk(n, dk, 0.0);
  for (size_t j = 0; j < n; ++j) {
    double dlogit = cache.alpha[j] * (galpha[j] - adot);
    for (size_t r = 0; r < dk; ++r) {
      gpq[r] += dlogit * cache.pool_k(j, r) * inv_sqrt_dk;
      gpk(j, r) = dlogit * cache.pool_q[r] * inv_sqrt_dk;
    }
  }
  ConstMatView pwq = params.view("pool.wq");
  ConstMatView pwk = params.view("pool.wk");
  MatView gpwq = gv("pool.wq"), gpwk = gv("pool.wk");
  for (size_t r = 0; r < dk; ++r)
    for (size_t c = 0; c < d; ++c) {
      gpwq(r, c) += gpq[r] * hf(sample.query_row, c);
      gh(sample.query_row, c) += pwq(r, c) * gpq[r];
    }
  for (size_t j = 0; j < n; ++j)
    for (size_t r = 0; r < dk; ++r) {
      double g = gpk(j, r);
      if (g == 0.0) continue;
      for (size_t c = 0; c < d; ++c) {
        gpwk(r, c) += g * hf(j, c);
        gh(j, c) += pwk(r, c) * g;
      }
    }

  // Transformer stack, reversed.
  for (unsigned l = cfg.layers; l-- > 0;) {
    const LayerCache& lc = cache.layers[l];
    std::string p = "layer" + std::to_string(l) + ".";
    bool drop = lc.f2_mask.rows > 0;

    Mat gh_mid = gh;  // residual branch of h_out = h_mid + dropout(f2)
    Mat gf2 = gh;
    if (drop)
      for (size_t idx = 0; idx < gf2.data.size(); ++idx) gf2.data[idx] *= lc.f2_mask.data[idx];

    Mat gf1g(n, 4 * d, 0.0);
    linear_backward(lc.f1g, params.view(p + "ffn.w2"), gf2, &gf1g, gv(p + "ffn.w2"),
                    gv(p + "ffn.b2"));
    Mat gf1 = gf1g;
    for (size_t idx = 0; idx < gf1.data.size(); ++idx) gf1.data[idx] *= gelu_grad(lc.f1.data[idx]);
    Mat gu2(n, d, 0.0);
    linear_backward(lc.u2, params.view(p + "ffn.w1"), gf1, &gu2, gv(p + "ffn.w1"),
                    gv(p + "ffn.b1"));
    layer_norm_backward(lc.h_mid, lc.mu2, lc.rs2, params.view(p + "ln2.gamma"), gu2, gh_mid,
                        gv(p + "ln2.gamma"), gv(p + "ln2.beta"));

    Mat gh_in = gh_mid;  // residual branch of h_mid = h_in + attn_out
    Mat gconcat(n, d, 0.0);
    linear_backward(lc.concat, params.view(p + "attn.wo"), gh_mid, &gconcat, gv(p + "attn.wo"),
                    gv(p + "attn.bo"));

    Mat gq(n, d, 0.0), gk(n, d, 0.0), gvv(n, d, 0.0);
    double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    for (unsigned head = 0; head < cfg.heads; ++head) {
      size_t off = head * dh;
      const Mat& a = lc.attn[head];
      const Mat* mask = drop ? &lc.attn_mask[head] : nullptr;

      Mat gad(n, n, 0.0);
      for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) {
          double acc = 0.0;
          for (size_t t = 0; t < dh; ++t) acc += gconcat(i, off + t) * lc.v(j, off + t);
          gad(i, j) = acc;
          double w = mask ? a(i, j) * (*mask)(i, j) : a(i, j);
          if (w != 0.0)
            for (size_t t = 0; t < dh; ++t) gvv(j, off + t) += w * gconcat(i, off + t);
        }

      for (size_t i = 0; i < n; ++i) {
        double dots = 0.0;
        for (size_t j = 0; j < n; ++j) {
          double ga = mask ? gad(i, j) * (*mask)(i, j) : gad(i, j);
          gad(i, j) = ga;  // reuse as gA
          dots += a(i, j) * ga;
        }
        for (size_t j = 0; j < n; ++j) {
          double gs = a(i, j) * (gad(i, j) - dots) * inv_sqrt_dh;
          if (gs == 0.0) continue;
          for (size_t t = 0; t < dh; ++t) {
            gq(i, off + t) += gs * lc.k(j, off + t);
            gk(j, off + t) += gs * lc.q(i, off + t);
          }
        }
      }
    }

    Mat gu1(n, d, 0.0);
    linear_backward(lc.u1, params.view(p + "attn.wq"), gq, &gu1, gv(p + "attn.wq"),
                    gv(p + "attn.bq"));
    linear_backward(lc.u1, params.view(p + "attn.wk"), gk, &gu1, gv(p + "attn.wk"),
                    gv(p + "attn.bk"));
    linear_backward(lc.u1, params.view(p + "attn.wv"), gvv, &gu1, gv(p + "attn.wv"),
                    gv(p + "attn.bv"));
    layer_norm_backward(lc.h_in, lc.mu1, lc.rs1, params.view(p + "ln1.gamma"), gu1, gh_in,
                        gv(p + "ln1.gamma"), gv(p + "ln1.beta"));
    gh = std::move(gh_in);
  }

  // Token MLP.
  Mat gz1(n, d, 0.0);
  linear_backward(cache.z1, params.view("token_mlp.w2"), gh, &gz1, gv("token_mlp.w2"),
                  gv("token_mlp.b2"));
  Mat ga1 = gz1;
  for (size_t idx = 0; idx < ga1.data.size(); ++idx) ga1.data[idx] *= gelu_grad(cache.a1.data[idx]);
  linear_backward(sample.input, params.view("token_mlp.w1"), ga1, nullptr, gv("token_mlp.w1"),
                  gv("token_mlp.b1"));
}

}  // namespace

void batch_backward(std::span<const EncodedSample> samples, const ModelParams& params,
                    const std::vector<SampleCache>& caches, const Mat& g_batch,
                    std::vector<double>& grad) {
  require(samples.size() == caches.size(), "cache count mismatch");
  require(grad.size() == params.values.size(), "gradient buffer size mismatch");
  const size_t b = samples.size(), c = params.cfg.codebook_size;

  std::vector<double> usage_grad(c, 0.0);
  for (size_t e = 0; e < c; ++e) {
    double mean = 0.0;
    for (size_t r = 0; r < b; ++r) mean += g_batch(r, e);
    mean /= static_cast<double>(b);
    usage_grad[e] =
        params.cfg.lambda_usage * (std::log(mean * static_cast<double>(c)) + 1.0) / static_cast<double>(b);
  }
  for (size_t idx = 0; idx < b; ++idx)
    sample_backward(samples[idx], params, caches[idx], usage_grad, grad);
}

void adam_step(ModelParams& params, const std::vector<double>& grad, AdamState& state, double lr,
               double l2) {
  if (state.m.empty()) {
    state.m.assign(params.values.size(), 0.0);
    state.v.assign(params.values.size(), 0.0);
  }
  require(grad.size() == params.values.size(), "gradient size mismatch");
  state.t += 1;
  double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.t));

  for (const auto& e : params.entries) {
    double decay = e.decay ? l2 : 0.0;
    for (size_t j = e.offset; j < e.offset + e.rows * e.cols; ++j) {
      double g = grad[j] + decay * params.values[j];
      state.m[j] = kAdamBeta1 * state.m[j] + (1.0 - kAdamBeta1) * g;
      state.v[j] = kAdamBeta2 * state.v[j] + (1.0 - kAdamBeta2) * g * g;
      double mhat = state.m[j] / bc1;
      double vhat = state.v[j] / bc2;
      params.values[j] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
    }
  }
}

TrainResult train_model(const ItemGraph& g, const ModalityStore& store, const ModalityMask& mask,
                        const ModelConfig& cfg_in, const RetrievalConfig& rcfg, unsigned threads,
                        std::vector<EncodedSample>* prebuilt_samples) {
  ModelConfig cfg = cfg_in;
  cfg.modality_dims.clear();
  for (size_t m = 0; m < store.n_modalities(); ++m)
    cfg.modality_dims.push_back(static_cast<unsigned>(store.dim(static_cast<uint32_t>(m))));
  cfg.validate();

  // Pool: one sample per observed modality of every item that observes >= 2.
  std::vector<std::pair<uint32_t, uint32_t>> refs;
  for (uint32_t i = 0; i < mask.n_items; ++i) {
    auto obs = mask.observed_modalities(i);
    if (obs.size() < 2) continue;
    for (uint32_t m : obs) refs.emplace_back(i, m);
  }
  require(!refs.empty(), "empty training pool");

  std::vector<EncodedSample> built;
  std::vector<EncodedSample>* samples = &built;
  if (prebuilt_samples && !prebuilt_samples->empty()) {
    require(prebuilt_samples->size() == refs.size(), "prebuilt sample count mismatch");
    samples = prebuilt_samples;
  } else {
    built.resize(refs.size());
    parallel_for(refs.size(), threads, [&](size_t idx) {
      auto [item, hidden] = refs[idx];
      ModalityMask hidden_mask = mask.with_hidden(item, hidden);
      EncodedSample s = encode_query(g, store, hidden_mask, item, rcfg, cfg.pe_k);
      s.hidden_modality = static_cast<int>(hidden);
      auto truth = store.feature(item, hidden);
      s.target.assign(truth.begin(), truth.end());
      built[idx] = std::move(s);
    });
    if (prebuilt_samples) *prebuilt_samples = built;
  }

  // Validation split.
  std::vector<size_t> order(samples->size());
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng = derive_stream(cfg.seed, "split");
  split_rng.shuffle(order);
  size_t n_val = 0;
  if (samples->size() >= 2 && cfg.val_fraction > 0.0) {
    n_val = static_cast<size_t>(std::llround(cfg.val_fraction * static_cast<double>(samples->size())));
    n_val = std::clamp<size_t>(n_val, 1, samples->size() - 1);
  }
  std::vector<size_t> val_idx(order.begin(), order.begin() + n_val);
  std::vector<size_t> train_idx(order.begin() + n_val, order.end());

  TrainResult result;
  result.params = build_params(cfg);
  init_params(result.params, cfg.seed);
  result.n_train = train_idx.size();
  result.n_val = val_idx.size();

  AdamState adam;
  std::vector<double> grad(result.params.values.size(), 0.0);
  std::vector<SampleCache> caches;
  std::vector<EncodedSample> scratch;

  double best_val = std::numeric_limits<double>::infinity();
  std::vector<double> best_values;
  unsigned since_best = 0;

  for (unsigned epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng order_rng = derive_stream(cfg.seed, "order", epoch);
    order_rng.shuffle(train_idx);
    Rng gumbel_rng = derive_stream(cfg.seed, "gumbel", epoch);
    Rng dropout_rng = derive_stream(cfg.seed, "dropout", epoch);

    ForwardOptions train_opts;
    train_opts.training = true;
    train_opts.use_dropout = cfg.dropout > 0.0;
    train_opts.gumbel_rng = &gumbel_rng;
    train_opts.dropout_rng = &dropout_rng;

    double recon_sum = 0.0, usage_sum = 0.0, load_sum = 0.0;
    for (size_t start = 0; start < train_idx.size(); start += cfg.batch) {
      size_t stop = std::min(train_idx.size(), start + cfg.batch);
      scratch.clear();
      for (size_t k = start; k < stop; ++k) scratch.push_back((*samples)[train_idx[k]]);

      BatchResult fr = batch_forward(scratch, result.params, train_opts, nullptr, &caches);
      std::fill(grad.begin(), grad.end(), 0.0);
      batch_backward(scratch, result.params, caches, fr.g_batch, grad);
      adam_step(result.params, grad, adam, cfg.learning_rate, cfg.l2);

      double bsz = static_cast<double>(stop - start);
      recon_sum += fr.loss.recon;
      usage_sum += fr.loss.usage * bsz;
      load_sum += fr.loss.load * bsz;
    }

    EpochLog log;
    log.epoch = epoch;
    double n_tr = static_cast<double>(train_idx.size());
    log.recon = recon_sum / n_tr;
    log.usage = usage_sum / n_tr;
    log.load = load_sum / n_tr;
    log.total = log.recon + cfg.lambda_usage * log.usage + cfg.lambda_load * log.load;

    if (!val_idx.empty()) {
      ForwardOptions val_opts;  // inference mode: no noise, no dropout
      double val_sum = 0.0;
      for (size_t start = 0; start < val_idx.size(); start += cfg.batch) {
        size_t stop = std::min(val_idx.size(), start + cfg.batch);
        scratch.clear();
        for (size_t k = start; k < stop; ++k) scratch.push_back((*samples)[val_idx[k]]);
        val_sum += batch_forward(scratch, result.params, val_opts, nullptr, nullptr).loss.recon;
      }
      log.val_recon = val_sum / static_cast<double>(val_idx.size());

      if (log.val_recon < best_val) {
        best_val = log.val_recon;
        best_values = result.params.values;
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        result.log.push_back(log);
        break;
      }
    }
    result.log.push_back(log);
  }

  if (!best_values.empty()) result.params.values = std::move(best_values);
  return result;
}

CompletionResult complete_item(const ItemGraph& g, const ModalityStore& store,
                               const ModalityMask& mask, uint32_t i, const ModelParams& params,
                               const RetrievalConfig& rcfg) {
  auto observed = mask.observed_modalities(i);
  require(!observed.empty(), "no observed modality");
  auto missing = mask.missing_modalities(i);
  require(!missing.empty(), "nothing to complete");

  EncodedSample s = encode_query(g, store, mask, i, rcfg, params.cfg.pe_k);
  SampleCache cache;
  forward_sample(s, params, ForwardOptions{}, cache);

  CompletionResult out;
  out.item = i;
  for (uint32_t m : missing)
    out.completed.emplace_back(m, decode(cache.routing.q_mix, m, params, nullptr));
  return out;
}

void save_params(const ModelParams& params, const std::string& path) {
  nlohmann::json manifest;
  const ModelConfig& c = params.cfg;
  manifest["version"] = 1;
  manifest["config"] = {{"d", c.d},
                        {"pe_k", c.pe_k},
                        {"layers", c.layers},
                        {"heads", c.heads},
                        {"codebook_size", c.codebook_size},
                        {"top_p", c.top_p},
                        {"tau", c.tau},
                        {"noise_scale", c.noise_scale},
                        {"dropout", c.dropout},
                        {"lambda_usage", c.lambda_usage},
                        {"lambda_load", c.lambda_load},
                        {"learning_rate", c.learning_rate},
                        {"l2", c.l2},
                        {"batch", c.batch},
                        {"epochs", c.epochs},
                        {"val_fraction", c.val_fraction},
                        {"patience", c.patience},
                        {"seed", c.seed},
                        {"modality_dims", c.modality_dims}};
  auto& entries = manifest["entries"] = nlohmann::json::array();
  for (const auto& e : params.entries)
    entries.push_back({{"name", e.name}, {"rows", e.rows}, {"cols", e.cols}});
  std::string text = manifest.dump();

  std::ofstream os(path, std::ios::binary);
  require(os.good(), "cannot open " + path + " for writing");
  os.write("GMP1", 4);
  write_u32(os, 1);
  write_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (double v : params.values) write_f32(os, static_cast<float>(v));
  require(os.good(), "write failed: " + path);
}

ModelParams load_params(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  require(is.good() && std::string_view(magic, 4) == "GMP1", "bad checkpoint magic: " + path);
  require(read_u32(is) == 1, "unsupported checkpoint version: " + path);
  uint64_t len = read_u64(is);
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  require(is.good(), "truncated checkpoint manifest: " + path);

  nlohmann::json manifest = nlohmann::json::parse(text);
  const auto& jc = manifest.at("config");
  ModelConfig cfg;
  cfg.d = jc.at("d");
  cfg.pe_k = jc.at("pe_k");
  cfg.layers = jc.at("layers");
  cfg.heads = jc.at("heads");
  cfg.codebook_size = jc.at("codebook_size");
  cfg.top_p = jc.at("top_p");
  cfg.tau = jc.at("tau");
  cfg.noise_scale = jc.at("noise_scale");
  cfg.dropout = jc.at("dropout");
  cfg.lambda_usage = jc.at("lambda_usage");
  cfg.lambda_load = jc.at("lambda_load");
  cfg.learning_rate = jc.at("learning_rate");
  cfg.l2 = jc.at("l2");
  cfg.batch = jc.at("batch");
  cfg.epochs = jc.at("epochs");
  cfg.val_fraction = jc.at("val_fraction");
  cfg.patience = jc.at("patience");
  cfg.seed = jc.at("seed");
  cfg.modality_dims = jc.at("modality_dims").get<std::vector<unsigned>>();

  ModelParams params = build_params(cfg);
  const auto& je = manifest.at("entries");
  require(je.size() == params.entries.size(), "checkpoint entry count mismatch: " + path);
  for (size_t i = 0; i < params.entries.size(); ++i) {
    require(je[i].at("name") == params.entries[i].name &&
                je[i].at("rows") == params.entries[i].rows &&
                je[i].at("cols") == params.entries[i].cols,
            "checkpoint entry mismatch at " + params.entries[i].name);
  }
  for (double& v : params.values) v = read_f32(is);
  require(is.good(), "truncated checkpoint blob: " + path);
  return params;
}

}  // namespace gremc
