// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gremc/graph.hpp"
#include "gremc/modality.hpp"
#include "gremc/retrieval.hpp"

namespace gremc {

/// Planted-cluster generator standing in for real multimodal data. Modality 1
/// is cluster-correlated; modality 0 is a fixed linear map of modality 1 plus
/// noise, so a hidden modality is predictable from semantically near items.
/// Edge structure is intentionally weakly aligned with the clusters: the graph
/// neighborhood alone is a poor predictor, which is what retrieval must beat.
struct SyntheticSpec {
  unsigned n_clusters = 8;
  unsigned items_per_cluster = 75;
  std::vector<unsigned> dims = {32, 16};  // modality 0 mapped, modality 1 base
  double intra_corr = 0.9;                // same-cluster feature correlation
  double cross_noise_sd = 0.1;            // noise on the cross-modal map
  double p_intra = 0.05;                  // same-cluster edge probability
  double p_inter = 0.01;                  // cross-cluster edge probability
  uint64_t seed = 7;

  unsigned n_items() const { return n_clusters * items_per_cluster; }
  void validate() const;
};

struct SyntheticData {
  ItemGraph graph;
  ModalityStore store;  // full features; these are the ground truth
  std::vector<uint32_t> cluster;
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

/// One row of the neighborhood-vs-retrieval comparison. Means are cosines
/// against the query's held-out feature of its designated missing modality;
/// nodes not observing that modality are skipped. A strategy yielding no
/// eligible node reports its mean as undefined.
struct RelevanceRow {
  uint32_t query = 0;
  unsigned modality = 0;
  double neighbor_mean = 0.0;
  bool neighbor_defined = false;
  double retrieved_mean = 0.0;
  bool retrieved_defined = false;
  size_t n_neighbors = 0;
  size_t n_retrieved = 0;
};

/// Every query must have a masked modality whose ground truth lives in store.
std::vector<RelevanceRow> relevance_comparison(const ItemGraph& g, const ModalityStore& store,
                                               const ModalityMask& mask,
                                               std::span<const uint32_t> queries,
                                               const RetrievalConfig& rcfg, unsigned threads = 1);

struct CompletionMetrics {
  double mse = 0.0;          // over all completed slots
  double mean_cosine = 0.0;  // per completed vector
  size_t count = 0;
};

CompletionMetrics completion_metrics(const std::vector<std::vector<double>>& pred,
                                     const std::vector<std::vector<double>>& truth);

std::vector<double> baseline_zero_fill(size_t dim);

/// Mean of the K_N-hop neighbors' modality-m features, skipping nodes where m
/// is unobserved; zero vector when no neighbor qualifies.
std::vector<double> baseline_neighbor_mean(const ItemGraph& g, const ModalityStore& store,
                                           const ModalityMask& mask, uint32_t i, unsigned m,
                                           unsigned k_hop);

struct StageTimings {
  double retrieval = 0.0;
  double completion = 0.0;
  double evaluation = 0.0;
  double total() const { return retrieval + completion + evaluation; }
};

}  // namespace gremc
