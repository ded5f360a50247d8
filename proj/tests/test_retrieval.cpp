// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include <algorithm>
#include <numeric>

#include "gremc/retrieval.hpp"
#include "test_util.hpp"

using namespace gremc;
using namespace gremc::testutil;

namespace {

// Single-modality world where node v's relevance to the query is dialed in
// directly: query feature (1,0), node feature unit2(r).
struct RelevanceWorld {
  ModalityStore store;
  ModalityMask mask;
};

RelevanceWorld world_with(const std::vector<double>& r_by_node) {
  std::vector<std::vector<float>> rows;
  for (double r : r_by_node) rows.push_back(unit2(r));
  RelevanceWorld w;
  w.store = make_store({rows});
  w.mask = ModalityMask::all_observed(r_by_node.size(), 1);
  return w;
}

}  // namespace

TEST_CASE("anchor search is exact brute-force top-K") {
  // query 0; candidates 1,2,3 with cosines 0.9, 0.5, 0.7
  RelevanceWorld w = world_with({1.0, 0.9, 0.5, 0.7});
  AnchorSet a = retrieve_anchors(w.store, w.mask, 0, 0, 2);
  CHECK(a.anchors == std::vector<uint32_t>{1, 3});
  CHECK(a.scores[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(a.scores[1] == doctest::Approx(0.7).epsilon(1e-6));
  CHECK(a.query == 0);
  CHECK(a.modality == 0);

  // K beyond the candidate pool saturates, sorted by similarity
  AnchorSet all = retrieve_anchors(w.store, w.mask, 0, 0, 10);
  CHECK(all.anchors == std::vector<uint32_t>{1, 3, 2});

  // equal similarity: lower id first
  RelevanceWorld tie = world_with({1.0, 0.5, 0.5});
  AnchorSet t = retrieve_anchors(tie.store, tie.mask, 0, 0, 2);
  CHECK(t.anchors == std::vector<uint32_t>{1, 2});

  // query must observe the search modality
  RelevanceWorld bad = world_with({1.0, 0.5});
  bad.mask.set_observed(0, 0, false);
  CHECK_THROWS(retrieve_anchors(bad.store, bad.mask, 0, 0, 1));
}

TEST_CASE("anchor search equals full-sort oracle on random features") {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    size_t n = 4 + rng.below(40);
    std::vector<std::vector<float>> rows;
    for (size_t i = 0; i < n; ++i)
      rows.push_back({static_cast<float>(rng.uniform(-1, 1)), static_cast<float>(rng.uniform(-1, 1)),
                      static_cast<float>(rng.uniform(-1, 1))});
    ModalityStore store = make_store({rows});
    ModalityMask mask = ModalityMask::all_observed(n, 1);
    unsigned k = 1 + static_cast<unsigned>(rng.below(6));
    AnchorSet got = retrieve_anchors(store, mask, 0, 0, k);

    std::vector<std::pair<double, uint32_t>> cand;  // (-score, id) ascending = ranking
    for (uint32_t v = 1; v < n; ++v)
      cand.emplace_back(-cosine(store.feature(0, 0), store.feature(v, 0)), v);
    std::sort(cand.begin(), cand.end());
    std::vector<uint32_t> expect;
    for (size_t j = 0; j < cand.size() && j < k; ++j) expect.push_back(cand[j].second);
    CHECK(got.anchors == expect);
  }
}

TEST_CASE("multi-modality anchor merge") {
  // Query 0 observes both modalities; per-modality quota is ceil(K/2).
  // m0 favors {1, 2}; m1 favors {3, 1}.
  ModalityStore store = make_store({
      {{1, 0}, unit2(0.9), unit2(0.8), unit2(0.1), unit2(0.0)},
      {{1, 0}, unit2(0.7), unit2(0.0), unit2(0.95), unit2(0.1)},
  });
  ModalityMask mask = ModalityMask::all_observed(5, 2);
  AnchorSet a = retrieve_anchors_auto(store, mask, 0, 3, -1);
  CHECK(a.modality == -1);
  // per-modality top-2: m0 {1:.9, 2:.8}, m1 {3:.95, 1:.7}; node 1 deduped at 0.9
  CHECK(a.anchors == std::vector<uint32_t>{3, 1, 2});

  // forcing a modality bypasses the merge
  AnchorSet f = retrieve_anchors_auto(store, mask, 0, 2, 1);
  CHECK(f.modality == 1);
  CHECK(f.anchors == std::vector<uint32_t>{3, 1});

  // single observed modality behaves like retrieve_anchors
  ModalityMask one = mask;
  one.set_observed(0, 1, false);
  AnchorSet s = retrieve_anchors_auto(store, one, 0, 2, -1);
  CHECK(s.modality == 0);
  CHECK(s.anchors == std::vector<uint32_t>{1, 2});
}

TEST_CASE("connecting subgraph on paths, stars, and singletons") {
  ItemGraph path = graph_from_edges(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}});
  Subgraph s = anchor_connecting_subgraph(path, std::vector<uint32_t>{0, 4});
  CHECK(s.nodes == std::vector<uint32_t>{0, 1, 2, 3, 4});
  CHECK(s.connected);
  CHECK(s.contains_anchors);

  Subgraph single = anchor_connecting_subgraph(path, std::vector<uint32_t>{3});
  CHECK(single.nodes == std::vector<uint32_t>{3});

  ItemGraph star = graph_from_edges(5, {{0, 1}, {0, 2}, {0, 3}, {0, 4}});
  Subgraph hub = anchor_connecting_subgraph(star, std::vector<uint32_t>{1, 2});
  CHECK(hub.nodes == std::vector<uint32_t>{0, 1, 2});

  CHECK_THROWS(anchor_connecting_subgraph(path, std::vector<uint32_t>{}));
}

TEST_CASE("connecting subgraph spanning graph components") {
  ItemGraph g = graph_from_edges(6, {{0, 1}, {1, 2}, {3, 4}, {4, 5}});
  Subgraph s = anchor_connecting_subgraph(g, std::vector<uint32_t>{0, 2, 3, 5});
  CHECK(s.nodes == std::vector<uint32_t>{0, 1, 2, 3, 4, 5});
  CHECK_FALSE(s.connected);
  CHECK(s.contains_anchors);
  CHECK(s.components.size() == 2);
}

TEST_CASE("connecting subgraph equals Steiner tree on random trees") {
  Rng rng(512);
  for (int trial = 0; trial < 120; ++trial) {
    uint32_t n = 2 + static_cast<uint32_t>(rng.below(11));
    ItemGraph tree = random_tree(rng, n);
    size_t n_anchors = 1 + rng.below(std::min<uint64_t>(3, n));
    std::vector<uint32_t> ids(n);
    std::iota(ids.begin(), ids.end(), 0u);
    rng.shuffle(ids);
    std::vector<uint32_t> anchors(ids.begin(), ids.begin() + n_anchors);
    Subgraph s = anchor_connecting_subgraph(tree, anchors);
    CHECK(s.nodes == tree_path_union(tree, anchors));
    CHECK(is_connected_subset(tree, s.nodes));
  }
}

TEST_CASE("connecting subgraph stays connected and anchor-complete on random graphs") {
  Rng rng(513);
  for (int trial = 0; trial < 120; ++trial) {
    uint32_t n = 2 + static_cast<uint32_t>(rng.below(11));
    ItemGraph g = random_connected_graph(rng, n, 0.15);
    size_t n_anchors = 1 + rng.below(std::min<uint64_t>(3, n));
    std::vector<uint32_t> ids(n);
    std::iota(ids.begin(), ids.end(), 0u);
    rng.shuffle(ids);
    std::vector<uint32_t> anchors(ids.begin(), ids.begin() + n_anchors);
    Subgraph s = anchor_connecting_subgraph(g, anchors);
    CHECK(is_connected_subset(g, s.nodes));
    for (uint32_t a : anchors)
      CHECK(std::binary_search(s.nodes.begin(), s.nodes.end(), a));
  }
}

TEST_CASE("anchor cap at 64") {
  std::vector<std::pair<uint32_t, uint32_t>> edges;
  for (uint32_t v = 0; v + 1 < 70; ++v) edges.emplace_back(v, v + 1);
  ItemGraph g = graph_from_edges(70, edges);
  std::vector<uint32_t> anchors(65);
  std::iota(anchors.begin(), anchors.end(), 0u);
  CHECK_THROWS(anchor_connecting_subgraph(g, anchors));
  anchors.resize(64);
  CHECK_NOTHROW(anchor_connecting_subgraph(g, anchors));
}

TEST_CASE("greedy expansion follows the hand trace") {
  // nodes: 0=a, 1=b, 2=c, 3=d; query is node 4, not in the graph's edge set.
  ItemGraph g = graph_from_edges(5, {{0, 1}, {1, 2}, {1, 3}});
  RelevanceWorld w = world_with({0.8, 0.2, 0.6, 0.9, 1.0});

  Subgraph acs = anchor_connecting_subgraph(g, std::vector<uint32_t>{0, 2});
  CHECK(acs.nodes == std::vector<uint32_t>{0, 1, 2});
  CHECK(mean_relevance(w.store, w.mask, 4, acs.nodes) == doctest::Approx(0.5333333).epsilon(1e-5));

  Subgraph s = modality_aware_expansion(g, w.store, w.mask, 4, std::vector<uint32_t>{0, 2}, 10);
  CHECK(s.nodes == std::vector<uint32_t>{0, 1, 2, 3});
  CHECK(s.phi == doctest::Approx(0.625).epsilon(1e-6));
}

TEST_CASE("expansion is a no-op under uniform relevance and T=0") {
  ItemGraph g = graph_from_edges(5, {{0, 1}, {1, 2}, {1, 3}, {3, 4}});
  RelevanceWorld w = world_with({0.5, 0.5, 0.5, 0.5, 0.5});
  Subgraph acs = anchor_connecting_subgraph(g, std::vector<uint32_t>{0, 2});
  Subgraph same = modality_aware_expansion(g, w.store, w.mask, 0, std::vector<uint32_t>{0, 2}, 10);
  CHECK(same.nodes == acs.nodes);

  RelevanceWorld rich = world_with({0.8, 0.2, 0.6, 0.9, 1.0});
  Subgraph frozen = modality_aware_expansion(g, rich.store, rich.mask, 4, std::vector<uint32_t>{0, 2}, 0);
  CHECK(frozen.nodes == acs.nodes);
}

TEST_CASE("sentinel-relevance nodes are never added") {
  // Node 3 shares no modality with the query (4) and sits on the boundary.
  ItemGraph g = graph_from_edges(5, {{0, 1}, {1, 2}, {1, 3}});
  ModalityStore store = make_store({
      {unit2(0.8), unit2(0.2), unit2(0.6), unit2(0.99), {1, 0}},
      {{0, 1}, {0, 1}, {0, 1}, {0, 1}, {0, 1}},
  });
  ModalityMask mask = ModalityMask::all_observed(5, 2);
  mask.set_observed(3, 0, false);  // node 3: only modality 1
  mask.set_observed(4, 1, false);  // query: only modality 0
  Subgraph s = modality_aware_expansion(g, store, mask, 4, std::vector<uint32_t>{0, 2}, 10);
  CHECK_FALSE(std::binary_search(s.nodes.begin(), s.nodes.end(), 3u));
}

TEST_CASE("expansion keeps anchors, keeps connectivity, never beats the exhaustive optimum") {
  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    uint32_t n = 3 + static_cast<uint32_t>(rng.below(8));  // n <= 10
    ItemGraph g = random_connected_graph(rng, n, 0.2);
    std::vector<std::vector<float>> rows;
    for (uint32_t v = 0; v < n; ++v)
      rows.push_back({static_cast<float>(rng.uniform(-1, 1)), static_cast<float>(rng.uniform(-1, 1)),
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

    CHECK(is_connected_subset(g, s.nodes));
    for (uint32_t a : anchors) CHECK(std::binary_search(s.nodes.begin(), s.nodes.end(), a));
    CHECK(s.phi >= phi_acs - 1e-12);
    CHECK(s.phi == doctest::Approx(mean_relevance(store, mask, query, s.nodes)).epsilon(1e-12));
    double best = exhaustive_best_phi(g, store, mask, query, anchors);
    CHECK(s.phi <= best + 1e-9);

    // phi as a function of the iteration cap: strictly increasing until it
    // stabilizes, constant afterwards
    double prev = phi_acs;
    bool stable = false;
    for (unsigned t = 1; t <= 10; ++t) {
      double cur = modality_aware_expansion(g, store, mask, query, anchors, t).phi;
      if (stable) {
        CHECK(cur == doctest::Approx(prev).epsilon(1e-12));
      } else if (cur <= prev + 1e-15) {
        stable = true;
        CHECK(cur == doctest::Approx(prev).epsilon(1e-12));
      } else {
        CHECK(cur > prev);
      }
      prev = cur;
    }
  }
}

TEST_CASE("full retrieval pipeline smoke") {
  // Two planted groups; query 0's features sit in group A = {0,1,2,3}.
  ItemGraph g = graph_from_edges(8, {{1, 2}, {2, 3}, {1, 3}, {4, 5}, {5, 6}, {6, 7}, {0, 1}});
  std::vector<std::vector<float>> rows;
  for (int v = 0; v < 4; ++v) rows.push_back(unit2(0.95));
  for (int v = 4; v < 8; ++v) rows.push_back(unit2(-0.5));
  rows[0] = {1, 0};
  ModalityStore store = make_store({rows});
  ModalityMask mask = ModalityMask::all_observed(8, 1);

  RetrievalConfig cfg;
  cfg.k = 3;
  cfg.t = 5;
  RetrievalOutcome out = retrieve_subgraph(g, store, mask, 0, cfg);
  CHECK(out.anchors.anchors.size() == 3);
  CHECK(is_connected_subset(g, out.subgraph.nodes));
  CHECK(out.subgraph.contains_anchors);
  CHECK(out.subgraph.query_component == 0);
  for (uint32_t v : out.subgraph.nodes) CHECK(v <= 3);

  // query in a different graph component than its anchors
  ItemGraph split = graph_from_edges(5, {{0, 1}, {1, 2}, {3, 4}});
  std::vector<std::vector<float>> srows = {unit2(0.9), unit2(0.8), unit2(0.7), {1, 0}, unit2(0.6)};
  ModalityStore sstore = make_store({srows});
  ModalityMask smask = ModalityMask::all_observed(5, 1);
  RetrievalConfig scfg;
  scfg.k = 2;
  RetrievalOutcome sep = retrieve_subgraph(split, sstore, smask, 3, scfg);
  CHECK(sep.subgraph.query_component == -1);
}
