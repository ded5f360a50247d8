// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gremc/graph.hpp"
#include "gremc/modality.hpp"

namespace gremc {

/// Exact nearest-neighbor result for one query and one modality. Anchors are
/// ordered by descending cosine, ties broken by lower node id; the query never
/// appears in its own anchor set.
struct AnchorSet {
  uint32_t query = 0;
  int modality = -1;  // -1 when anchors were merged across several observed modalities
  std::vector<uint32_t> anchors;
  std::vector<double> scores;
};

/// Connected node set produced by subgraph retrieval. `nodes` is the sorted
/// union; `components` partitions it by graph component when the anchors span
/// several (the connected flag is false in that case). `phi` is the arithmetic
/// mean of per-node relevance, with sentinel values entering as-is.
struct Subgraph {
  std::vector<uint32_t> nodes;
  std::vector<std::vector<uint32_t>> components;
  std::vector<uint32_t> anchors;
  bool contains_anchors = true;
  bool connected = true;
  int query_component = -1;
  double phi = 0.0;
};

struct RetrievalConfig {
  unsigned k = 10;          // anchors per query
  unsigned t = 10;          // expansion iteration cap
  unsigned k_hop = 2;       // neighborhood radius for baselines/evaluation
  int anchor_modality = -1; // force a single modality; -1 = automatic
  unsigned max_anchors = 64;
};

/// Brute-force top-K cosine search over nodes observing modality m.
AnchorSet retrieve_anchors(const ModalityStore& store, const ModalityMask& mask, uint32_t i,
                           uint32_t m, unsigned k);

/// Anchor selection for a query with possibly several observed modalities:
/// a forced modality is used as-is; a single observed modality likewise; with
/// several, top-ceil(K/|obs|) per modality are merged and capped at K by score.
AnchorSet retrieve_anchors_auto(const ModalityStore& store, const ModalityMask& mask, uint32_t i,
                                unsigned k, int forced_modality = -1);

/// Connects the anchors through shortest paths found by multi-source BFS with
/// per-seed reachability bitmasks: the first popped node reached by every wave
/// becomes the root, and each anchor is traced back to it through a BFS tree
/// re-rooted there. Anchor sets spanning several graph components are handled
/// per component and the union returned.
Subgraph anchor_connecting_subgraph(const ItemGraph& g, std::span<const uint32_t> anchors);

/// Greedy refinement of the connecting subgraph: up to t rounds, either absorb
/// the boundary neighbor or drop the non-anchor, non-bridging member that most
/// improves the mean relevance to the query; stop when neither move helps.
/// Components are refined independently.
Subgraph modality_aware_expansion(const ItemGraph& g, const ModalityStore& store,
                                  const ModalityMask& mask, uint32_t i,
                                  std::span<const uint32_t> anchors, unsigned t);

struct RetrievalOutcome {
  AnchorSet anchors;
  Subgraph subgraph;
};

/// Full per-query retrieval: anchor search, connect, expand.
RetrievalOutcome retrieve_subgraph(const ItemGraph& g, const ModalityStore& store,
                                   const ModalityMask& mask, uint32_t i,
                                   const RetrievalConfig& cfg);

}  // namespace gremc
