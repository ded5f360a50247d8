// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gremc/common.hpp"
#include "gremc/graph.hpp"
#include "gremc/modality.hpp"
#include "gremc/retrieval.hpp"
#include "gremc/rng.hpp"

namespace gremc {

/// Model and training scalars. Defaults are the desk-scale configuration the
/// synthetic pipeline trains in minutes; configs/paper_baby.json carries the
/// full-scale grid values.
struct ModelConfig {
  unsigned d = 32;             // hidden width
  unsigned pe_k = 8;           // positional encoding dimension
  unsigned layers = 2;         // transformer depth
  unsigned heads = 4;          // attention heads; d % heads == 0
  unsigned codebook_size = 10; // routing entries C
  unsigned top_p = 4;          // selected entries P
  double tau = 1.0;            // routing temperature
  double noise_scale = 1.0;    // multiplies the Gumbel draw; 0 disables noise
  double dropout = 0.0;        // on attention weights and FFN output, training only
  double lambda_usage = 1.0;
  double lambda_load = 1.0;
  double learning_rate = 5e-4;
  double l2 = 1e-5;            // coupled weight decay on weight matrices only
  unsigned batch = 4;          // gradient accumulation window
  unsigned epochs = 50;
  double val_fraction = 0.1;
  unsigned patience = 10;      // early-stop window on validation recon
  uint64_t seed = 42;
  std::vector<unsigned> modality_dims;

  unsigned head_dim() const { return d / heads; }
  unsigned input_dim() const;
  void validate() const;
};

enum class ParamInit { kUniformFanIn, kZero, kOne, kCodebook };

struct ParamEntry {
  std::string name;
  size_t rows = 0, cols = 0, offset = 0;
  bool decay = false;  // L2 applies to matrices, not bias/norm vectors
  ParamInit init = ParamInit::kZero;
};

/// Every learnable tensor in one flat buffer with a named registry. The flat
/// layout makes the optimizer, checkpointing, and finite-difference probing
/// uniform over all parameters.
struct ModelParams {
  ModelConfig cfg;
  std::vector<ParamEntry> entries;
  std::vector<double> values;

  size_t entry_index(std::string_view name) const;
  MatView view(size_t idx);
  ConstMatView view(size_t idx) const;
  MatView view(std::string_view name);
  ConstMatView view(std::string_view name) const;
};

ModelParams build_params(const ModelConfig& cfg);

/// Fills parameters from the "init" stream of seed: uniform(+-1/sqrt(fan_in))
/// weights, zero biases, unit gains, normal/sqrt(d) codebook. Draw order
/// follows the registry, so layouts and streams are stable across runs.
void init_params(ModelParams& params, uint64_t seed);

/// One query's token set ready for the encoder: retrieval output plus the
/// query row, with the parameter-independent input matrix (zero-filled
/// unobserved modality slots, then the positional encoding) baked in.
struct EncodedSample {
  uint32_t item = 0;
  int hidden_modality = -1;       // training target slot; -1 for inference
  std::vector<uint32_t> tokens;   // subgraph nodes ascending; query appended if absent
  size_t query_row = 0;
  Mat input;                      // |tokens| x (sum of modality dims + pe_k)
  std::vector<double> target;     // ground truth for hidden_modality
};

EncodedSample encode_query(const ItemGraph& g, const ModalityStore& store,
                           const ModalityMask& mask, uint32_t i, const RetrievalConfig& rcfg,
                           unsigned pe_k);

struct RoutingState {
  std::vector<double> logits;   // W z before noise and temperature
  std::vector<double> eps;      // applied noise, zero at inference
  std::vector<double> g;        // softmax((logits + eps) / tau)
  std::vector<uint32_t> top_p;  // selected entries: descending g, ties by lower id
  std::vector<double> q_mix;    // sum of g_e * c_e over top_p, not renormalized
};

/// Frozen stochastic choices for finite-difference probing: the objective is
/// only differentiable with the Gumbel draw and the top-P selection held
/// fixed across perturbed evaluations.
struct FrozenRouting {
  std::vector<double> eps;
  std::vector<uint32_t> top_p;
};

struct ForwardOptions {
  bool training = false;     // enables Gumbel noise in routing
  bool use_dropout = false;  // honored only when training
  Rng* gumbel_rng = nullptr;
  Rng* dropout_rng = nullptr;
  const std::vector<double>* forced_eps = nullptr;
  const std::vector<uint32_t>* forced_top_p = nullptr;
};

struct LayerCache {
  Mat h_in, u1;
  std::vector<double> mu1, rs1;
  Mat q, k, v;
  std::vector<Mat> attn;       // per head, post-softmax
  std::vector<Mat> attn_mask;  // dropout scale per head; empty when off
  Mat concat, attn_out, h_mid, u2;
  std::vector<double> mu2, rs2;
  Mat f1, f1g, f2, f2_mask;
  Mat h_out;
};

struct SampleCache {
  Mat a1, z1, h0;
  std::vector<LayerCache> layers;
  Mat h_final;
  std::vector<double> pool_q;
  Mat pool_k;
  std::vector<double> pool_logits, alpha, z;
  RoutingState routing;
  std::vector<double> dec_a, dec_g, xhat;
};

/// Token embedding: two-layer MLP over the baked input rows.
Mat embed_tokens(const EncodedSample& sample, const ModelParams& params,
                 SampleCache* cache = nullptr);

/// Pre-norm transformer stack with full self-attention over all tokens. With
/// every block parameter zero the output equals the input exactly (the
/// residual path is the identity; no final layer norm is applied).
Mat transformer_forward(const Mat& h0, const ModelParams& params,
                        const ForwardOptions& opts = {}, SampleCache* cache = nullptr);

/// Attention pooling of token states into one query vector: learned d -> d_k
/// query/key projections, softmax over scaled dot products, weighted sum of
/// the raw token states.
std::vector<double> attention_pool(const Mat& h_final, size_t query_row,
                                   const ModelParams& params, SampleCache* cache = nullptr);

RoutingState route_codebook(std::span<const double> z, const ModelParams& params,
                            const ForwardOptions& opts = {});

std::vector<double> decode(std::span<const double> q_mix, unsigned m, const ModelParams& params,
                           SampleCache* cache = nullptr);

/// Full forward for one sample. Decodes sample.hidden_modality when set;
/// otherwise stops after routing (cache carries everything for decode calls).
std::vector<double> forward_sample(const EncodedSample& sample, const ModelParams& params,
                                   const ForwardOptions& opts, SampleCache& cache);

/// KL(mean routing || uniform); rows must lie on the simplex.
double loss_usage(const Mat& g_batch);

/// C * sum_e (mean_i ghat_{i,e})^2 over binary top-P indicator rows.
double loss_load(const Mat& g_hat_batch, unsigned p);

struct LossBreakdown {
  double recon = 0, usage = 0, load = 0, total = 0;
};

struct BatchResult {
  LossBreakdown loss;
  Mat g_batch;      // soft routing per sample
  Mat g_hat_batch;  // top-P indicators per sample
};

/// Sequential forward over a batch; per-sample frozen routing overrides the
/// stochastic draws when given (finite-difference harness).
BatchResult batch_forward(std::span<const EncodedSample> samples, const ModelParams& params,
                          const ForwardOptions& opts,
                          const std::vector<FrozenRouting>* frozen = nullptr,
                          std::vector<SampleCache>* caches = nullptr);

/// Analytic gradient of recon + lambda_u * usage + lambda_l * load for the
/// batch, accumulated into grad (flat, sized like params.values). Routing
/// gradients flow through g at the selected entries and through the selected
/// codebook rows; the selection itself and the noise draw are constants, so
/// the load term contributes no gradient.
void batch_backward(std::span<const EncodedSample> samples, const ModelParams& params,
                    const std::vector<SampleCache>& caches, const Mat& g_batch,
                    std::vector<double>& grad);

struct AdamState {
  std::vector<double> m, v;
  uint64_t t = 0;
};

void adam_step(ModelParams& params, const std::vector<double>& grad, AdamState& state,
               double lr, double l2);

struct EpochLog {
  unsigned epoch = 0;
  double recon = 0, usage = 0, load = 0, total = 0, val_recon = 0;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochLog> log;
  size_t n_train = 0, n_val = 0;
};

/// Self-supervised training: every item with >= 2 observed modalities yields
/// one sample per observed modality, hiding that modality and reconstructing
/// it from the remaining ones. threads parallelizes only the retrieval and
/// encoding precompute; the optimization loop itself is sequential so runs
/// are bit-reproducible.
TrainResult train_model(const ItemGraph& g, const ModalityStore& store, const ModalityMask& mask,
                        const ModelConfig& cfg, const RetrievalConfig& rcfg, unsigned threads = 1,
                        std::vector<EncodedSample>* prebuilt_samples = nullptr);

struct CompletionResult {
  uint32_t item = 0;
  std::vector<std::pair<unsigned, std::vector<double>>> completed;  // (modality, vector)
};

/// Inference for one item with at least one observed and one missing
/// modality: retrieval, encoding, deterministic routing, one decode per
/// missing modality.
CompletionResult complete_item(const ItemGraph& g, const ModalityStore& store,
                               const ModalityMask& mask, uint32_t i, const ModelParams& params,
                               const RetrievalConfig& rcfg);

// Checkpoint: magic "GMP1", u32 version=1, u64 manifest length, JSON manifest
// (config + entry shapes), then f32 blobs in registry order.
void save_params(const ModelParams& params, const std::string& path);
ModelParams load_params(const std::string& path);

}  // namespace gremc
