// SPDX-License-Identifier: Apache-2.0

#include "gremc/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <unordered_map>

namespace gremc {

namespace {

constexpr uint32_t kUnset = UINT32_MAX;

struct Candidate {
  double score;
  uint32_t id;
};

bool better(const Candidate& a, const Candidate& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

/// Multi-source BFS with seed-reachability bitmasks over one graph component.
/// Masks merge on every arrival, not only at equidistant meeting nodes: the
/// literal equal-distance merge never produces a root when anchor separation
/// is odd, while reachability flooding always does for co-component seeds.
/// The first node popped with a full mask (a 1-center of the seeds, which on
/// trees lies inside their Steiner tree) becomes the root.
std::vector<uint32_t> connect_in_component(const ItemGraph& g, std::span<const uint32_t> seeds) {
  if (seeds.size() == 1) return {seeds[0]};

  std::vector<uint32_t> dist(g.n, kUnset);
  std::vector<uint64_t> mask(g.n, 0);
  uint64_t full_mask = (seeds.size() == 64) ? ~0ull : ((1ull << seeds.size()) - 1);

  std::queue<uint32_t> q;
  for (size_t idx = 0; idx < seeds.size(); ++idx) {
    uint32_t s = seeds[idx];
    dist[s] = 0;
    mask[s] |= 1ull << idx;
    q.push(s);
  }

  int64_t root = -1;
  while (!q.empty()) {
    uint32_t u = q.front();
    q.pop();
    if (mask[u] == full_mask) {
      root = u;
      break;
    }
    for (uint32_t w : g.neighbors(u)) {
      bool first = dist[w] == kUnset;
      if (first) dist[w] = dist[u] + 1;
      uint64_t merged = mask[w] | mask[u];
      if (merged != mask[w] || first) {
        mask[w] = merged;
        q.push(w);
      }
    }
  }
  require(root >= 0, "no node reachable from all seeds in component");

  // BFS tree re-rooted at the collision node, then each seed walks its parent
  // chain: the union of those shortest paths is the connecting subgraph.
  std::vector<uint32_t> parent(g.n, kUnset);
  std::vector<uint8_t> visited(g.n, 0);
  std::queue<uint32_t> b;
  b.push(static_cast<uint32_t>(root));
  visited[root] = 1;
  while (!b.empty()) {
    uint32_t u = b.front();
    b.pop();
    for (uint32_t w : g.neighbors(u)) {
      if (visited[w]) continue;
      visited[w] = 1;
      parent[w] = u;
      b.push(w);
    }
  }

  std::vector<uint32_t> out;
  std::vector<uint8_t> in_out(g.n, 0);
  for (uint32_t s : seeds) {
    uint32_t x = s;
    while (true) {
      if (!in_out[x]) {
        in_out[x] = 1;
        out.push_back(x);
      }
      if (x == static_cast<uint32_t>(root)) break;
      x = parent[x];
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Groups node ids by connected component, flooding only the components that
/// actually contain one of the given sources. Returns (label per source,
/// number of labels).
std::pair<std::vector<uint32_t>, uint32_t> label_components(const ItemGraph& g,
                                                           std::span<const uint32_t> sources,
                                                           std::vector<uint32_t>& node_label) {
  node_label.assign(g.n, kUnset);
  uint32_t next = 0;
  std::vector<uint32_t> stack;
  for (uint32_t s : sources) {
    if (node_label[s] != kUnset) continue;
    uint32_t id = next++;
    node_label[s] = id;
    stack.push_back(s);
    while (!stack.empty()) {
      uint32_t u = stack.back();
      stack.pop_back();
      for (uint32_t w : g.neighbors(u)) {
        if (node_label[w] == kUnset) {
          node_label[w] = id;
          stack.push_back(w);
        }
      }
    }
  }
  std::vector<uint32_t> labels(sources.size());
  for (size_t i = 0; i < sources.size(); ++i) labels[i] = node_label[sources[i]];
  return {labels, next};
}

}  // namespace

AnchorSet retrieve_anchors(const ModalityStore& store, const ModalityMask& mask, uint32_t i,
                           uint32_t m, unsigned k) {
  require(m < mask.n_modalities, "modality out of range");
  require(mask.is_observed(i, m), "modality not observed at query");
  require(k >= 1, "k must be positive");

  auto query = store.feature(i, m);
  std::vector<Candidate> cands;
  cands.reserve(mask.n_items);
  for (uint32_t j = 0; j < mask.n_items; ++j) {
    if (j == i || !mask.is_observed(j, m)) continue;
    cands.push_back({cosine(query, store.feature(j, m)), j});
  }
  size_t keep = std::min<size_t>(k, cands.size());
  std::partial_sort(cands.begin(), cands.begin() + keep, cands.end(), better);

  AnchorSet out;
  out.query = i;
  out.modality = static_cast<int>(m);
  for (size_t a = 0; a < keep; ++a) {
    out.anchors.push_back(cands[a].id);
    out.scores.push_back(cands[a].score);
  }
  return out;
}

AnchorSet retrieve_anchors_auto(const ModalityStore& store, const ModalityMask& mask, uint32_t i,
                                unsigned k, int forced_modality) {
  auto observed = mask.observed_modalities(i);
  require(!observed.empty(), "no observed modality at query");
  if (forced_modality >= 0)
    return retrieve_anchors(store, mask, i, static_cast<uint32_t>(forced_modality), k);
  if (observed.size() == 1) return retrieve_anchors(store, mask, i, observed[0], k);

  unsigned per = (k + static_cast<unsigned>(observed.size()) - 1) / static_cast<unsigned>(observed.size());
  std::unordered_map<uint32_t, double> best;
  for (uint32_t m : observed) {
    AnchorSet part = retrieve_anchors(store, mask, i, m, per);
    for (size_t a = 0; a < part.anchors.size(); ++a) {
      auto [it, fresh] = best.emplace(part.anchors[a], part.scores[a]);
      if (!fresh) it->second = std::max(it->second, part.scores[a]);
    }
  }
  std::vector<Candidate> merged;
  merged.reserve(best.size());
  for (auto [id, score] : best) merged.push_back({score, id});
  std::sort(merged.begin(), merged.end(), better);
  if (merged.size() > k) merged.resize(k);

  AnchorSet out;
  out.query = i;
  out.modality = -1;
  for (const auto& c : merged) {
    out.anchors.push_back(c.id);
    out.scores.push_back(c.score);
  }
  return out;
}

Subgraph anchor_connecting_subgraph(const ItemGraph& g, std::span<const uint32_t> anchors) {
  require(!anchors.empty(), "empty anchors");
  require(anchors.size() <= 64, "anchor count exceeds reachability bitmask width");

  std::vector<uint32_t> seeds(anchors.begin(), anchors.end());
  std::sort(seeds.begin(), seeds.end());
  seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());
  for (uint32_t s : seeds) require(s < g.n, "anchor out of range");

  std::vector<uint32_t> node_label;
  auto [seed_labels, n_groups] = label_components(g, seeds, node_label);

  Subgraph sub;
  sub.anchors = seeds;
  sub.connected = (n_groups == 1);
  for (uint32_t group = 0; group < n_groups; ++group) {
    std::vector<uint32_t> group_seeds;
    for (size_t a = 0; a < seeds.size(); ++a)
      if (seed_labels[a] == group) group_seeds.push_back(seeds[a]);
    sub.components.push_back(connect_in_component(g, group_seeds));
  }
  for (const auto& comp : sub.components)
    sub.nodes.insert(sub.nodes.end(), comp.begin(), comp.end());
  std::sort(sub.nodes.begin(), sub.nodes.end());
  return sub;
}

Subgraph modality_aware_expansion(const ItemGraph& g, const ModalityStore& store,
                                  const ModalityMask& mask, uint32_t i,
                                  std::span<const uint32_t> anchors, unsigned t) {
  Subgraph sub = anchor_connecting_subgraph(g, anchors);

  // Relevance memo; only subgraph members and boundary candidates are scored.
  std::vector<double> r_cache(g.n, std::numeric_limits<double>::quiet_NaN());
  auto rel = [&](uint32_t v) {
    if (std::isnan(r_cache[v])) r_cache[v] = relevance(store, mask, i, v);
    return r_cache[v];
  };
  auto mean_of = [&](const std::vector<uint32_t>& s) {
    double sum = 0.0;
    for (uint32_t v : s) sum += rel(v);
    return sum / static_cast<double>(s.size());
  };

  std::vector<uint8_t> is_anchor(g.n, 0);
  for (uint32_t a : sub.anchors) is_anchor[a] = 1;

  const double neg_infinity = -std::numeric_limits<double>::infinity();
  for (auto& members : sub.components) {
    double mu = mean_of(members);
    for (unsigned iter = 0; iter < t; ++iter) {
      auto n = static_cast<double>(members.size());

      // Best boundary addition. Sentinel-relevance nodes are never absorbed;
      // the query itself only joins at encoding time.
      std::vector<uint32_t> boundary;
      for (uint32_t u : members) {
        for (uint32_t w : g.neighbors(u)) {
          if (w == i || std::binary_search(members.begin(), members.end(), w)) continue;
          boundary.push_back(w);
        }
      }
      std::sort(boundary.begin(), boundary.end());
      boundary.erase(std::unique(boundary.begin(), boundary.end()), boundary.end());
      double delta_add = neg_infinity;
      uint32_t add_node = kUnset;
      for (uint32_t c : boundary) {
        double rc = rel(c);
        if (is_neg_inf(rc)) continue;
        double delta = (n * mu + rc) / (n + 1.0) - mu;
        if (delta > delta_add) {
          delta_add = delta;
          add_node = c;
        }
      }

      // Best removal among non-anchor members whose loss keeps the component
      // connected.
      double delta_rem = neg_infinity;
      uint32_t rem_node = kUnset;
      if (members.size() >= 2) {
        std::vector<uint32_t> rest;
        rest.reserve(members.size() - 1);
        for (uint32_t u : members) {
          if (is_anchor[u]) continue;
          rest.clear();
          for (uint32_t v : members)
            if (v != u) rest.push_back(v);
          if (!is_connected_subset(g, rest)) continue;
          double delta = (n * mu - rel(u)) / (n - 1.0) - mu;
          if (delta > delta_rem) {
            delta_rem = delta;
            rem_node = u;
          }
        }
      }

      if (std::max(delta_add, delta_rem) <= 0.0) break;
      std::vector<uint32_t> updated = members;
      if (delta_add >= delta_rem) {
        updated.insert(std::lower_bound(updated.begin(), updated.end(), add_node), add_node);
      } else {
        updated.erase(std::lower_bound(updated.begin(), updated.end(), rem_node));
      }
      double mu_next = mean_of(updated);
      if (!(mu_next > mu)) break;  // guards accumulated rounding; delta > 0 already held
      members = std::move(updated);
      mu = mu_next;
    }
  }

  sub.nodes.clear();
  for (const auto& comp : sub.components) sub.nodes.insert(sub.nodes.end(), comp.begin(), comp.end());
  std::sort(sub.nodes.begin(), sub.nodes.end());
  sub.phi = mean_of(sub.nodes);
  return sub;
}

RetrievalOutcome retrieve_subgraph(const ItemGraph& g, const ModalityStore& store,
                                   const ModalityMask& mask, uint32_t i,
                                   const RetrievalConfig& cfg) {
  require(cfg.k <= cfg.max_anchors && cfg.max_anchors <= 64, "anchor budget exceeds bitmask width");
  RetrievalOutcome out;
  out.anchors = retrieve_anchors_auto(store, mask, i, cfg.k, cfg.anchor_modality);
  require(!out.anchors.anchors.empty(), "no anchor candidates for query " + std::to_string(i));
  out.subgraph = modality_aware_expansion(g, store, mask, i, out.anchors.anchors, cfg.t);

  // Component-of-query marker for downstream diagnostics.
  std::vector<uint32_t> node_label;
  std::vector<uint32_t> probes = out.subgraph.anchors;
  probes.push_back(i);
  label_components(g, probes, node_label);
  out.subgraph.query_component = -1;
  for (size_t c = 0; c < out.subgraph.components.size(); ++c) {
    if (node_label[out.subgraph.components[c][0]] == node_label[i]) {
      out.subgraph.query_component = static_cast<int>(c);
      break;
    }
  }
  return out;
}

}  // namespace gremc
