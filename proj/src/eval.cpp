// SPDX-License-Identifier: Apache-2.0

#include "gremc/eval.hpp"

#include <algorithm>
#include <cmath>

#include "gremc/rng.hpp"

namespace gremc {

void SyntheticSpec::validate() const {
  require(n_clusters >= 1, "need at least one cluster");
  require(items_per_cluster >= 1, "need at least one item per cluster");
  require(dims.size() >= 2, "need at least two modalities");
  for (unsigned d : dims) require(d >= 1, "modality dims must be positive");
  require(intra_corr >= 0.0 && intra_corr <= 1.0, "correlation must lie in [0,1]");
  require(cross_noise_sd >= 0.0, "noise sd must be nonnegative");
  require(p_intra >= 0.0 && p_intra <= 1.0 && p_inter >= 0.0 && p_inter <= 1.0,
          "edge probabilities must lie in [0,1]");
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng = derive_stream(spec.seed, "synth");
  const unsigned n = spec.n_items();
  const unsigned base = static_cast<unsigned>(spec.dims.size()) - 1;
  const unsigned base_dim = spec.dims[base];

  SyntheticData out;
  out.cluster.resize(n);
  for (unsigned i = 0; i < n; ++i) out.cluster[i] = i / spec.items_per_cluster;

  // Cluster centers for the base modality.
  Mat centers(spec.n_clusters, base_dim);
  for (double& v : centers.data) v = rng.normal();

  // One fixed linear map per derived modality, drawn before item features so
  // the stream layout is stable.
  std::vector<Mat> maps(base);
  for (unsigned m = 0; m < base; ++m) {
    maps[m] = Mat(spec.dims[m], base_dim);
    for (double& v : maps[m].data) v = rng.normal() / std::sqrt(static_cast<double>(base_dim));
  }

  Mat base_feat(n, base_dim);
  double w_center = std::sqrt(spec.intra_corr);
  double w_noise = std::sqrt(1.0 - spec.intra_corr);
  for (unsigned i = 0; i < n; ++i)
    for (unsigned j = 0; j < base_dim; ++j)
      base_feat(i, j) = w_center * centers(out.cluster[i], j) + w_noise * rng.normal();

  out.store.modalities.resize(spec.dims.size());
  for (unsigned m = 0; m < spec.dims.size(); ++m) {
    FeatureMatrix& f = out.store.modalities[m];
    f.modality = m;
    f.rows = n;
    f.dim = spec.dims[m];
    f.data.resize(static_cast<size_t>(n) * f.dim);
  }
  for (unsigned i = 0; i < n; ++i) {
    for (unsigned m = 0; m < base; ++m) {
      auto row = out.store.modalities[m].row(i);
      for (unsigned r = 0; r < spec.dims[m]; ++r) {
        double acc = 0.0;
        for (unsigned j = 0; j < base_dim; ++j) acc += maps[m](r, j) * base_feat(i, j);
        row[r] = static_cast<float>(acc + spec.cross_noise_sd * rng.normal());
      }
    }
    auto brow = out.store.modalities[base].row(i);
    for (unsigned j = 0; j < base_dim; ++j) brow[j] = static_cast<float>(base_feat(i, j));
  }

  std::vector<std::pair<uint32_t, uint32_t>> edges;
  for (unsigned i = 0; i < n; ++i)
    for (unsigned j = i + 1; j < n; ++j) {
      double p = out.cluster[i] == out.cluster[j] ? spec.p_intra : spec.p_inter;
      if (rng.uniform01() < p) edges.emplace_back(i, j);
    }
  out.graph = graph_from_edges(n, edges);
  out.store.validate();
  return out;
}

std::vector<RelevanceRow> relevance_comparison(const ItemGraph& g, const ModalityStore& store,
                                               const ModalityMask& mask,
                                               std::span<const uint32_t> queries,
                                               const RetrievalConfig& rcfg, unsigned threads) {
  std::vector<RelevanceRow> rows(queries.size());
  parallel_for(queries.size(), threads, [&](size_t idx) {
    uint32_t i = queries[idx];
    auto missing = mask.missing_modalities(i);
    require(!missing.empty(), "query " + std::to_string(i) + " has no held-out modality");
    unsigned m = missing[0];
    auto truth = store.feature(i, m);

    RelevanceRow row;
    row.query = i;
    row.modality = m;

    auto mean_over = [&](std::span<const uint32_t> nodes, size_t& counted) {
      double sum = 0.0;
      counted = 0;
      for (uint32_t v : nodes) {
        if (v == i || !mask.is_observed(v, m)) continue;
        sum += cosine(store.feature(v, m), truth);
        ++counted;
      }
      return counted ? sum / static_cast<double>(counted) : 0.0;
    };

    std::vector<uint32_t> hood = k_hop_neighborhood(g, i, rcfg.k_hop);
    row.neighbor_mean = mean_over(hood, row.n_neighbors);
    row.neighbor_defined = row.n_neighbors > 0;

    RetrievalOutcome outcome = retrieve_subgraph(g, store, mask, i, rcfg);
    row.retrieved_mean = mean_over(outcome.subgraph.nodes, row.n_retrieved);
    row.retrieved_defined = row.n_retrieved > 0;
    rows[idx] = row;
  });
  return rows;
}

CompletionMetrics completion_metrics(const std::vector<std::vector<double>>& pred,
                                     const std::vector<std::vector<double>>& truth) {
  require(pred.size() == truth.size(), "prediction/truth count mismatch");
  require(!pred.empty(), "no completed slots");
  CompletionMetrics m;
  size_t slots = 0;
  double se = 0.0, cos_sum = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    require(pred[i].size() == truth[i].size(), "prediction/truth shape mismatch");
    for (size_t j = 0; j < pred[i].size(); ++j) {
      double diff = pred[i][j] - truth[i][j];
      se += diff * diff;
    }
    slots += pred[i].size();
    cos_sum += cosine(std::span<const double>(pred[i]), std::span<const double>(truth[i]));
  }
  m.mse = se / static_cast<double>(slots);
  m.mean_cosine = cos_sum / static_cast<double>(pred.size());
  m.count = pred.size();
  return m;
}

std::vector<double> baseline_zero_fill(size_t dim) { return std::vector<double>(dim, 0.0); }

std::vector<double> baseline_neighbor_mean(const ItemGraph& g, const ModalityStore& store,
                                           const ModalityMask& mask, uint32_t i, unsigned m,
                                           unsigned k_hop) {
  std::vector<double> acc(store.dim(m), 0.0);
  size_t counted = 0;
  for (uint32_t v : k_hop_neighborhood(g, i, k_hop)) {
    if (!mask.is_observed(v, m)) continue;
    auto feat = store.feature(v, m);
    for (size_t j = 0; j < acc.size(); ++j) acc[j] += feat[j];
    ++counted;
  }
  if (counted)
    for (double& v : acc) v /= static_cast<double>(counted);
  return acc;
}

}  // namespace gremc
