// SPDX-License-Identifier: Apache-2.0
//
// Acceptance battery. Each numbered check prints exactly one PASS/FAIL line
// with the measured numbers; the process exit code is the failure count.
// Usage: acceptance [N] runs criterion N only, no argument runs all nine.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "gremc/eval.hpp"
#include "gremc/model.hpp"
#include "gremc/pipeline.hpp"
#include "gremc/retrieval.hpp"
#include "gremc/spectral.hpp"
#include "test_util.hpp"

using namespace gremc;
using namespace gremc::testutil;
using nlohmann::json;

namespace {

double now_s() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

struct Outcome {
  bool ok = true;
  std::string detail;

  void check(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
  void note(const std::string& s) {
    if (!detail.empty()) detail += "; ";
    detail += s;
  }
};

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, v);
  return buf;
}

// --- 1. masking audit: n=7050, M=2, rate=0.4 ------------------------------

Outcome criterion1() {
  Outcome out;
  double t0 = now_s();
  for (uint64_t seed : {1ull, 42ull, 20260823ull}) {
    ModalityMask m = apply_masking(7050, 2, 0.4, seed);
    size_t full = 0, missing_one = 0;
    size_t hidden_m[2] = {0, 0};
    for (uint32_t i = 0; i < 7050; ++i) {
      size_t obs = m.observed_count(i);
      if (obs == 2) full++;
      if (obs == 1) missing_one++;
      for (uint32_t mm = 0; mm < 2; ++mm)
        if (!m.is_observed(i, mm)) hidden_m[mm]++;
    }
    out.check(full == 1410, "full=" + std::to_string(full) + " at seed " + std::to_string(seed));
    out.check(missing_one == 5640, "missing-one=" + std::to_string(missing_one));
    for (size_t hm : {hidden_m[0], hidden_m[1]}) {
      out.check(std::abs(static_cast<double>(hm) - 2820.0) <= 0.05 * 2820.0,
                "per-modality count " + std::to_string(hm) + " outside 2820 +-5%");
    }
  }
  double dt = now_s() - t0;
  out.check(dt < 1.0, "took " + fmt("%.3f", dt) + " s");
  out.note("3 seeds, 1410/5640 split, " + fmt("%.3f", dt) + " s");
  return out;
}

// --- 2. connecting-subgraph oracle ----------------------------------------

Outcome criterion2() {
  Outcome out;
  double t0 = now_s();
  Rng rng(0xACCE55ull);
  size_t trees = 0;
  for (int trial = 0; trial < 500; ++trial) {
    uint32_t n = 2 + static_cast<uint32_t>(rng.below(11));  // n <= 12
    bool as_tree = trial % 2 == 0;
    ItemGraph g = as_tree ? random_tree(rng, n) : random_connected_graph(rng, n, 0.2);
    size_t n_anchors = 1 + rng.below(std::min<uint64_t>(3, n));
    std::vector<uint32_t> ids(n);
    std::iota(ids.begin(), ids.end(), 0u);
    rng.shuffle(ids);
    std::vector<uint32_t> anchors(ids.begin(), ids.begin() + n_anchors);

    Subgraph s = anchor_connecting_subgraph(g, anchors);
    bool connected = is_connected_subset(g, s.nodes);
    bool has_anchors = true;
    for (uint32_t a : anchors)
      has_anchors = has_anchors && std::binary_search(s.nodes.begin(), s.nodes.end(), a);
    out.check(connected, "disconnected output at trial " + std::to_string(trial));
    out.check(has_anchors, "anchor missing at trial " + std::to_string(trial));
    if (as_tree) {
      trees++;
      out.check(s.nodes == tree_path_union(g, anchors),
                "tree Steiner mismatch at trial " + std::to_string(trial));
    }
    if (!out.ok) break;
  }
  double dt = now_s() - t0;
  out.check(dt < 10.0, "took " + fmt("%.3f", dt) + " s");
  out.note("500 graphs (" + std::to_string(trees) + " trees), " + fmt("%.3f", dt) + " s");
  return out;
}

// --- 3. greedy expansion properties ---------------------------------------

Outcome criterion3() {
  Outcome out;
  double t0 = now_s();
  Rng rng(0xBEEFull);
  for (int trial = 0; trial < 500; ++trial) {
    uint32_t n = 3 + static_cast<uint32_t>(rng.below(8));  // n <= 10 for the exhaustive oracle
    ItemGraph g = random_connected_graph(rng, n, 0.2);
    std::vector<std::vector<float>> rows;
    for (uint32_t v = 0; v < n; ++v)
      rows.push_back({static_cast<float>(rng.uniform(-1, 1)),
                      static_cast<float>(rng.uniform(-1, 1)),
                      static_cast<float>(rng.uniform(-1, 1))});
    ModalityStore store = make_store({rows});
    ModalityMask mask = ModalityMask::all_observed(n, 1);

    std::vector<uint32_t> ids(n);
    std::iota(ids.begin(), ids.end(), 0u);
    rng.shuffle(ids);
    uint32_t query = ids[0];
    size_t n_anchors = 1 + rng.below(std::min<uint64_t>(3, n - 1));
    std::vector<uint32_t> anchors(ids.begin() + 1, ids.begin() + 1 + n_anchors);

    Subgraph acs = anchor_connecting_subgraph(g, anchors);
    double phi_acs = mean_relevance(store, mask, query, acs.nodes);
    Subgraph s = modality_aware_expansion(g, store, mask, query, anchors, 10);

    out.check(s.phi >= phi_acs - 1e-12, "phi dropped below the start at trial " + std::to_string(trial));
    double best = exhaustive_best_phi(g, store, mask, query, anchors);
    out.check(s.phi <= best + 1e-9, "phi above exhaustive optimum at trial " + std::to_string(trial));

    // strict improvement per accepted move, observed through the T sweep
    if (trial < 100) {
      double prev = phi_acs;
      bool stable = false;
      for (unsigned t = 1; t <= 10; ++t) {
        double cur = modality_aware_expansion(g, store, mask, query, anchors, t).phi;
        if (stable || cur <= prev + 1e-15) {
          out.check(std::abs(cur - prev) <= 1e-12 * std::max(1.0, std::abs(prev)),
                    "phi changed after stabilizing at trial " + std::to_string(trial));
          stable = true;
        }
        prev = cur;
      }
      out.check(std::abs(modality_aware_expansion(g, store, mask, query, anchors, 10).phi - prev) <=
                    1e-12 * std::max(1.0, std::abs(prev)),
                "cap sweep mismatch at trial " + std::to_string(trial));
    }
    if (!out.ok) break;
  }
  double dt = now_s() - t0;
  out.check(dt < 60.0, "took " + fmt("%.3f", dt) + " s");
  out.note("500 instances vs exhaustive optimum, " + fmt("%.3f", dt) + " s");
  return out;
}

// --- 4. spectral checks ----------------------------------------------------

Outcome criterion4() {
  Outcome out;
  double t0 = now_s();
  Rng rng(0x5BECull);
  double worst_res = 0.0, worst_orth = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    uint32_t n = 1 + static_cast<uint32_t>(rng.below(30));
    ItemGraph g = random_graph(rng, n, 0.2);
    std::vector<uint32_t> all(n);
    std::iota(all.begin(), all.end(), 0u);
    Mat l = normalized_laplacian(induced_adjacency(g, all));
    EigenResult e = eigen_decompose_symmetric(l);
    for (size_t j = 0; j < n; ++j) {
      for (size_t r = 0; r < n; ++r) {
        double lu = 0.0;
        for (size_t c = 0; c < n; ++c) lu += l(r, c) * e.vectors(c, j);
        worst_res = std::max(worst_res, std::abs(lu - e.values[j] * e.vectors(r, j)));
      }
    }
    for (size_t a = 0; a < n; ++a)
      for (size_t b = 0; b < n; ++b) {
        double dot = 0.0;
        for (size_t r = 0; r < n; ++r) dot += e.vectors(r, a) * e.vectors(r, b);
        worst_orth = std::max(worst_orth, std::abs(dot - (a == b ? 1.0 : 0.0)));
      }
  }
  out.check(worst_res < 1e-8, "residual " + fmt("%.3e", worst_res));
  out.check(worst_orth < 1e-8, "orthogonality " + fmt("%.3e", worst_orth));

  Mat p3(3, 3);
  p3(0, 1) = p3(1, 0) = p3(1, 2) = p3(2, 1) = 1.0;
  EigenResult ep = eigen_decompose_symmetric(normalized_laplacian(p3));
  double p3_expect[3] = {0.0, 1.0, 2.0};
  for (int j = 0; j < 3; ++j)
    out.check(std::abs(ep.values[j] - p3_expect[j]) < 1e-8, "P3 eigenvalue " + std::to_string(j));

  Mat k3(3, 3);
  k3(0, 1) = k3(1, 0) = k3(1, 2) = k3(2, 1) = k3(0, 2) = k3(2, 0) = 1.0;
  EigenResult ek = eigen_decompose_symmetric(normalized_laplacian(k3));
  double k3_expect[3] = {0.0, 1.5, 1.5};
  for (int j = 0; j < 3; ++j)
    out.check(std::abs(ek.values[j] - k3_expect[j]) < 1e-8, "K3 eigenvalue " + std::to_string(j));

  double dt = now_s() - t0;
  out.check(dt < 10.0, "took " + fmt("%.3f", dt) + " s");
  out.note("200 graphs, worst residual " + fmt("%.2e", worst_res) + ", worst orthogonality " +
           fmt("%.2e", worst_orth) + ", " + fmt("%.3f", dt) + " s");
  return out;
}

// --- 5. full finite-difference gradient sweep ------------------------------

Outcome criterion5() {
  Outcome out;
  double t0 = now_s();

  ModelConfig cfg;
  cfg.d = 8;
  cfg.pe_k = 3;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.codebook_size = 6;
  cfg.top_p = 2;
  cfg.tau = 0.5;
  cfg.noise_scale = 1.0;
  cfg.dropout = 0.0;
  cfg.lambda_usage = 1.0;
  cfg.lambda_load = 1.0;
  cfg.modality_dims = {5, 4};

  Rng wrng(0xFD01ull);
  ItemGraph g = random_connected_graph(wrng, 7, 0.3);
  std::vector<std::vector<float>> m0, m1;
  for (int i = 0; i < 7; ++i) {
    std::vector<float> a, b;
    for (int j = 0; j < 5; ++j) a.push_back(static_cast<float>(wrng.uniform(-1, 1)));
    for (int j = 0; j < 4; ++j) b.push_back(static_cast<float>(wrng.uniform(-1, 1)));
    m0.push_back(a);
    m1.push_back(b);
  }
  ModalityStore store = make_store({m0, m1});
  ModalityMask mask = ModalityMask::all_observed(7, 2);

  RetrievalConfig rcfg;
  rcfg.k = 2;
  rcfg.t = 1;
  std::vector<EncodedSample> samples;
  for (uint32_t i = 0; i < 3; ++i) {
    uint32_t hide = i % 2;
    ModalityMask hidden = mask.with_hidden(i, hide);
    EncodedSample s = encode_query(g, store, hidden, i, rcfg, cfg.pe_k);
    if (s.tokens.size() > 6) continue;  // keep the stated <=6 token bound
    s.hidden_modality = static_cast<int>(hide);
    auto truth = store.feature(i, hide);
    s.target.assign(truth.begin(), truth.end());
    samples.push_back(std::move(s));
  }
  out.check(!samples.empty(), "no sample within the token bound");
  size_t max_tokens = 0;
  for (const auto& s : samples) max_tokens = std::max(max_tokens, s.tokens.size());
  out.check(max_tokens <= 6, "token bound exceeded");

  ModelParams params = build_params(cfg);
  init_params(params, 0xFD02ull);

  Rng grng = derive_stream(0xFD03ull, "gumbel", 0);
  ForwardOptions pilot;
  pilot.training = true;
  pilot.gumbel_rng = &grng;
  std::vector<SampleCache> caches;
  batch_forward(samples, params, pilot, nullptr, &caches);
  std::vector<FrozenRouting> frozen;
  for (const SampleCache& c : caches) frozen.push_back({c.routing.eps, c.routing.top_p});

  ForwardOptions fixed;
  fixed.training = true;
  std::vector<SampleCache> fcaches;
  BatchResult base = batch_forward(samples, params, fixed, &frozen, &fcaches);
  std::vector<double> grad(params.values.size(), 0.0);
  batch_backward(samples, params, fcaches, base.g_batch, grad);

  const double step = 1e-5;
  double worst_rel = 0.0;
  size_t worst_idx = 0;
  size_t checked = 0;
  for (size_t idx = 0; idx < params.values.size(); ++idx) {
    double keep = params.values[idx];
    params.values[idx] = keep + step;
    double up = batch_forward(samples, params, fixed, &frozen, nullptr).loss.total;
    params.values[idx] = keep - step;
    double dn = batch_forward(samples, params, fixed, &frozen, nullptr).loss.total;
    params.values[idx] = keep;
    double fd = (up - dn) / (2.0 * step);
    double denom = std::max({std::abs(fd), std::abs(grad[idx]), 1e-8});
    double rel = std::abs(fd - grad[idx]) / denom;
    if (rel > worst_rel) {
      worst_rel = rel;
      worst_idx = idx;
    }
    checked++;
  }
  out.check(worst_rel < 1e-4, "worst relative error " + fmt("%.3e", worst_rel) + " at flat index " +
                                  std::to_string(worst_idx));
  double dt = now_s() - t0;
  out.check(dt < 120.0, "took " + fmt("%.3f", dt) + " s");
  out.note(std::to_string(checked) + " coordinates, worst rel err " + fmt("%.2e", worst_rel) +
           ", " + fmt("%.3f", dt) + " s");
  return out;
}

// --- 6. closed-form regularizer values ------------------------------------

Outcome criterion6() {
  Outcome out;
  Mat uniform(4, 5, 0.2);
  double u0 = loss_usage(uniform);
  out.check(u0 < 1e-12, "uniform usage " + fmt("%.3e", u0));

  Mat onehot(3, 4);
  for (size_t r = 0; r < 3; ++r) onehot(r, 2) = 1.0;
  double u1 = loss_usage(onehot);
  out.check(std::abs(u1 - std::log(4.0)) < 1e-9, "one-hot usage " + fmt("%.12f", u1));

  unsigned c = 6, p = 2;
  Mat balanced(3, c);
  balanced(0, 0) = balanced(0, 1) = 1.0;
  balanced(1, 2) = balanced(1, 3) = 1.0;
  balanced(2, 4) = balanced(2, 5) = 1.0;
  double l0 = loss_load(balanced, p);
  out.check(std::abs(l0 - double(p) * p) < 1e-9, "balanced load " + fmt("%.12f", l0));

  Mat single(5, c);
  for (size_t r = 0; r < 5; ++r) single(r, 1) = single(r, 4) = 1.0;
  double l1 = loss_load(single, p);
  out.check(std::abs(l1 - double(c) * p) < 1e-9, "single-set load " + fmt("%.12f", l1));

  out.note("usage {uniform, one-hot}, load {balanced=P^2, single=C*P}");
  return out;
}

// --- 7. synthetic end-to-end ----------------------------------------------

// Reference numbers from the pinned generator/seed run recorded in
// docs (training_log.csv of `gremc train --synthetic --seed 42`); the
// acceptance thresholds below are the binding ones, the reference values
// guard against silent drift.
struct Reference7 {
  double epoch1_recon = 0.0;   // filled from the pinned run
  double final_recon = 0.0;
  double model_cosine = 0.0;
  double neighbor_cosine = 0.0;
  double retrieved_rel = 0.0;
  double neighbor_rel = 0.0;
  bool enabled = false;
};

Reference7 pinned_reference() {
  Reference7 ref;
  ref.epoch1_recon = 20.4409;
  ref.final_recon = 7.7744;
  ref.model_cosine = 0.7685;
  ref.neighbor_cosine = 0.5161;
  ref.retrieved_rel = 0.4951;
  ref.neighbor_rel = 0.2214;
  ref.enabled = true;
  return ref;
}

Outcome criterion7() {
  Outcome out;
  double t0 = now_s();

  SyntheticSpec spec;  // defaults are the pinned generator
  SyntheticData data = generate_synthetic(spec);
  ModalityMask mask = apply_masking(data.store.n_items(), data.store.n_modalities(), 0.4, 42);

  ModelConfig mc;  // library defaults, full 50 epochs
  mc.patience = mc.epochs;
  mc.seed = 42;
  RetrievalConfig rcfg;

  TrainResult tr = train_model(data.graph, data.store, mask, mc, rcfg, 1);
  double first = tr.log.front().recon;
  double last = tr.log.back().recon;
  out.check(tr.log.size() == mc.epochs, "expected the full epoch count");
  out.check(last <= 0.5 * first,
            "recon " + fmt("%.4f", last) + " vs epoch-1 " + fmt("%.4f", first));

  std::vector<uint32_t> queries;
  for (uint32_t i = 0; i < data.store.n_items(); ++i)
    if (mask.observed_count(i) == 1) queries.push_back(i);
  out.check(queries.size() >= 100, "only " + std::to_string(queries.size()) + " queries");

  std::vector<std::vector<double>> truth, pred_model, pred_neighbor, pred_zero;
  for (uint32_t q : queries) {
    CompletionResult res = complete_item(data.graph, data.store, mask, q, tr.params, rcfg);
    for (const auto& [m, vec] : res.completed) {
      auto t = data.store.feature(q, m);
      truth.emplace_back(t.begin(), t.end());
      pred_model.push_back(vec);
      pred_neighbor.push_back(
          baseline_neighbor_mean(data.graph, data.store, mask, q, m, rcfg.k_hop));
      pred_zero.push_back(baseline_zero_fill(vec.size()));
    }
  }
  CompletionMetrics m_model = completion_metrics(pred_model, truth);
  CompletionMetrics m_neighbor = completion_metrics(pred_neighbor, truth);
  CompletionMetrics m_zero = completion_metrics(pred_zero, truth);
  out.check(m_model.mean_cosine >= m_neighbor.mean_cosine + 0.05,
            "model cosine " + fmt("%.4f", m_model.mean_cosine) + " vs neighbor " +
                fmt("%.4f", m_neighbor.mean_cosine) + " + 0.05");
  out.check(m_model.mean_cosine > m_zero.mean_cosine,
            "model cosine not above zero-fill " + fmt("%.4f", m_zero.mean_cosine));

  std::vector<RelevanceRow> rel = relevance_comparison(data.graph, data.store, mask, queries, rcfg, 1);
  double nsum = 0.0, rsum = 0.0;
  size_t compared = 0;
  for (const RelevanceRow& r : rel) {
    if (r.neighbor_defined && r.retrieved_defined) {
      nsum += r.neighbor_mean;
      rsum += r.retrieved_mean;
      compared++;
    }
  }
  out.check(compared >= 100, "only " + std::to_string(compared) + " comparable queries");
  double nmean = compared ? nsum / compared : 0.0;
  double rmean = compared ? rsum / compared : 0.0;
  out.check(rmean > nmean, "retrieved relevance " + fmt("%.4f", rmean) + " not above neighborhood " +
                               fmt("%.4f", nmean));

  Reference7 ref = pinned_reference();
  if (ref.enabled) {
    auto near = [&](double got, double want, double band, const char* what) {
      out.check(std::abs(got - want) <= band * std::max(std::abs(want), 1e-6),
                std::string(what) + " drifted from the pinned run: got " + fmt("%.5f", got) +
                    ", pinned " + fmt("%.5f", want));
    };
    near(tr.log.front().recon, ref.epoch1_recon, 0.10, "epoch-1 recon");
    near(tr.log.back().recon, ref.final_recon, 0.15, "final recon");
    near(m_model.mean_cosine, ref.model_cosine, 0.05, "model cosine");
    near(m_neighbor.mean_cosine, ref.neighbor_cosine, 0.05, "neighbor cosine");
    near(rmean, ref.retrieved_rel, 0.05, "retrieved relevance");
    near(nmean, ref.neighbor_rel, 0.05, "neighborhood relevance");
  }

  double dt = now_s() - t0;
  out.check(dt < 600.0, "took " + fmt("%.1f", dt) + " s");
  out.note("recon " + fmt("%.4f", first) + "->" + fmt("%.4f", last) + ", cosine model " +
           fmt("%.4f", m_model.mean_cosine) + " neighbor " + fmt("%.4f", m_neighbor.mean_cosine) +
           " zero " + fmt("%.4f", m_zero.mean_cosine) + ", relevance retrieved " +
           fmt("%.4f", rmean) + " vs neighborhood " + fmt("%.4f", nmean) + " over " +
           std::to_string(compared) + " queries, " + fmt("%.1f", dt) + " s");
  return out;
}

// --- 8. byte determinism of every artifact-writing command -----------------

Outcome criterion8() {
  Outcome out;
  namespace fs = std::filesystem;
  std::string dir = temp_dir("gremc_acc_det");

  RunConfig cfg;
  cfg.out_dir = dir;
  cfg.synthetic = true;
  cfg.seed = 42;
  cfg.model.epochs = 3;
  cfg.model.patience = 3;
  cfg.sample = 60;

  auto snapshot = [&](const std::vector<std::string>& names) {
    std::vector<std::pair<std::string, std::string>> snap;
    for (const std::string& n : names) snap.emplace_back(n, slurp(dir + "/" + n));
    return snap;
  };
  auto strip_timings = [](const std::string& text) {
    json j = json::parse(text);
    j.erase("timings");
    return j.dump(2);
  };
  auto compare = [&](const char* cmd, const std::vector<std::pair<std::string, std::string>>& snap) {
    for (const auto& [name, before] : snap) {
      std::string after = slurp(dir + "/" + name);
      if (name == "report.json") {
        if (strip_timings(after) != strip_timings(before))
          out.check(false, std::string(cmd) + ": " + name + " differs beyond timings");
      } else if (after != before) {
        out.check(false, std::string(cmd) + ": " + name + " differs");
      }
    }
  };

  cmd_mask(cfg);
  auto mask_snap = snapshot({"mask.csv", "manifest_mask.json"});
  cmd_mask(cfg);
  compare("mask", mask_snap);

  cmd_retrieve(cfg);
  auto retr_snap = snapshot({"retrieve.csv", "manifest_retrieve.json"});
  cmd_retrieve(cfg);
  compare("retrieve", retr_snap);

  cmd_train(cfg);
  auto train_snap = snapshot({"model.gmp1", "training_log.csv", "manifest_train.json"});
  cmd_train(cfg);
  compare("train", train_snap);

  cmd_complete(cfg);
  std::vector<std::string> completion_files = {"completions_index.csv", "manifest_complete.json"};
  for (unsigned m = 0; m < 2; ++m) {
    std::string n = "completions_m" + std::to_string(m) + ".gmc1";
    if (fs::exists(dir + "/" + n)) completion_files.push_back(n);
  }
  auto comp_snap = snapshot(completion_files);
  cmd_complete(cfg);
  compare("complete", comp_snap);

  cmd_evaluate(cfg);
  auto eval_snap = snapshot({"report.json", "relevance_detail.csv", "manifest_evaluate.json"});
  cmd_evaluate(cfg);
  compare("evaluate", eval_snap);

  out.note("mask/retrieve/train/complete/evaluate re-runs byte-identical (timings excluded)");
  return out;
}

// --- 9. retrieval scaling on the 10k-node world ----------------------------

Outcome criterion9() {
  Outcome out;
  std::string dir = temp_dir("gremc_acc_bench");
  RunConfig cfg;
  cfg.out_dir = dir;
  cfg.seed = 42;
  cfg.threads = 1;
  cmd_bench(cfg);

  json bench = json::parse(slurp(dir + "/bench.json"));
  size_t nodes = bench.at("nodes");
  size_t queries = bench.at("queries");
  double seconds = bench.at("seconds");
  out.check(nodes == 10000, "nodes=" + std::to_string(nodes));
  out.check(queries == 1000, "queries=" + std::to_string(queries));
  out.check(bench.at("k") == 10 && bench.at("t") == 10, "unexpected K/T");
  out.check(seconds < 60.0, "retrieval took " + fmt("%.2f", seconds) + " s");
  out.note("1000 queries on " + std::to_string(nodes) + " nodes in " + fmt("%.2f", seconds) +
           " s single-threaded");
  return out;
}

const char* kTitles[9] = {
    "masking audit (7050 items, M=2, rate 0.4)",
    "anchor-connecting subgraph vs tree Steiner oracle",
    "greedy expansion monotone and bounded by the exhaustive optimum",
    "Laplacian eigensolver residuals and closed forms",
    "finite-difference sweep over every parameter",
    "closed-form usage/load regularizer values",
    "synthetic end-to-end training, completion, and relevance",
    "byte-determinism of artifact-writing commands",
    "retrieval scaling: 1000 queries on 10k nodes",
};

}  // namespace

int main(int argc, char** argv) {
  std::function<Outcome()> checks[9] = {criterion1, criterion2, criterion3, criterion4,
                                        criterion5, criterion6, criterion7, criterion8,
                                        criterion9};
  int lo = 0, hi = 8;
  if (argc > 1) {
    int n = std::atoi(argv[1]);
    if (n < 1 || n > 9) {
      std::fprintf(stderr, "usage: %s [1-9]\n", argv[0]);
      return 2;
    }
    lo = hi = n - 1;
  }
  int failures = 0;
  for (int i = lo; i <= hi; ++i) {
    Outcome out;
    try {
      out = checks[i]();
    } catch (const std::exception& e) {
      out.ok = false;
      out.detail = std::string("exception: ") + e.what();
    }
    if (!out.ok) failures++;
    std::printf("%s  criterion %d: %s [%s]\n", out.ok ? "PASS" : "FAIL", i + 1, kTitles[i],
                out.detail.c_str());
    std::fflush(stdout);
  }
  return failures;
}
