// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gremc/common.hpp"

namespace gremc {

/// User-item interactions after id densification and (user,item) deduplication.
/// user_ids / item_ids map dense index -> external id for reproducible joins
/// with feature files.
struct InteractionLog {
  std::vector<std::pair<uint32_t, uint32_t>> entries;  // (user, item), dense ids
  uint32_t n_users = 0;
  uint32_t n_items = 0;
  std::vector<uint64_t> user_ids;
  std::vector<uint64_t> item_ids;
};

/// Loads a two-column TSV (`user_id<TAB>item_id`, no header). Malformed lines
/// raise with the 1-based line number.
InteractionLog load_interactions_tsv(const std::string& path);

/// Undirected simple item graph in compressed offset/target form. Neighbor
/// lists are sorted ascending and duplicate-free; immutable once built.
struct ItemGraph {
  uint64_t n = 0;
  uint64_t edge_count = 0;              // undirected edges
  std::vector<uint64_t> offsets;        // n + 1
  std::vector<uint32_t> targets;        // 2 * edge_count entries

  std::span<const uint32_t> neighbors(uint32_t v) const {
    return {targets.data() + offsets[v], targets.data() + offsets[v + 1]};
  }
  uint64_t degree(uint32_t v) const { return offsets[v + 1] - offsets[v]; }
  bool has_edge(uint32_t a, uint32_t b) const;
};

/// Items become adjacent iff they share at least one common user. Users whose
/// item list exceeds max_items_per_user are dropped: a user of degree d induces
/// O(d^2) item edges, and a handful of power users would otherwise dominate the
/// projection.
ItemGraph project_item_graph(const InteractionLog& log, size_t max_items_per_user = 512);

/// Builds the graph directly from an undirected edge list (self-loops and
/// duplicates are discarded). Used by the synthetic generator and tests.
ItemGraph graph_from_edges(uint32_t n, const std::vector<std::pair<uint32_t, uint32_t>>& edges);

/// Nodes at BFS distance in [1, k] from v; v itself excluded. Sorted ascending.
std::vector<uint32_t> k_hop_neighborhood(const ItemGraph& g, uint32_t v, unsigned k);

/// True iff the subgraph induced on S is connected. S must be non-empty.
bool is_connected_subset(const ItemGraph& g, std::span<const uint32_t> s);

/// |S| x |S| dense 0/1 adjacency of the induced subgraph, in the order given.
/// S must be duplicate-free.
Mat induced_adjacency(const ItemGraph& g, std::span<const uint32_t> s);

// Binary cache: magic "GGR1", u32 version=1, u64 n, u64 directed entry count,
// u64 offsets[n+1], u32 targets[...]; all little-endian.
void save_graph(const ItemGraph& g, const std::string& path);
ItemGraph load_graph(const std::string& path);

/// Connected-component labels over the whole graph, in [0, count).
struct ComponentLabels {
  std::vector<uint32_t> label;
  uint32_t count = 0;
};
ComponentLabels connected_components(const ItemGraph& g);

}  // namespace gremc
