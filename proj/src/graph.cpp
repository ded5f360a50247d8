// SPDX-License-Identifier: Apache-2.0

#include "gremc/graph.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>
#include <queue>
#include <unordered_map>
#include <unordered_set>

namespace gremc {

namespace {

uint64_t parse_id(std::string_view field, size_t line_no, const char* what) {
  uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    fail("malformed " + std::string(what) + " at line " + std::to_string(line_no));
  }
  return value;
}

ItemGraph build_csr(uint32_t n, std::vector<std::vector<uint32_t>>& adj) {
  ItemGraph g;
  g.n = n;
  g.offsets.assign(n + 1, 0);
  uint64_t total = 0;
  for (uint32_t v = 0; v < n; ++v) {
    auto& list = adj[v];
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
    total += list.size();
  }
  g.targets.reserve(total);
  for (uint32_t v = 0; v < n; ++v) {
    g.offsets[v + 1] = g.offsets[v] + adj[v].size();
    g.targets.insert(g.targets.end(), adj[v].begin(), adj[v].end());
    adj[v].clear();
    adj[v].shrink_to_fit();
  }
  g.edge_count = total / 2;
  return g;
}

}  // namespace

InteractionLog load_interactions_tsv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "cannot open interactions file: " + path);

  InteractionLog log;
  std::unordered_map<uint64_t, uint32_t> user_index, item_index;
  std::unordered_set<uint64_t> seen_pairs;

  std::string line;
  size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos) fail("missing tab separator at line " + std::to_string(line_no));
    uint64_t raw_user = parse_id(std::string_view(line).substr(0, tab), line_no, "user id");
    uint64_t raw_item = parse_id(std::string_view(line).substr(tab + 1), line_no, "item id");

    auto intern = [&](std::unordered_map<uint64_t, uint32_t>& index, std::vector<uint64_t>& ids,
                      uint64_t raw) {
      auto it = index.find(raw);
      if (it != index.end()) return it->second;
      if (ids.size() >= std::numeric_limits<uint32_t>::max()) fail("id space overflows 32-bit index");
      auto dense = static_cast<uint32_t>(ids.size());
      index.emplace(raw, dense);
      ids.push_back(raw);
      return dense;
    };
    uint32_t u = intern(user_index, log.user_ids, raw_user);
    uint32_t i = intern(item_index, log.item_ids, raw_item);
    uint64_t key = (static_cast<uint64_t>(u) << 32) | i;
    if (seen_pairs.insert(key).second) log.entries.emplace_back(u, i);
  }
  log.n_users = static_cast<uint32_t>(log.user_ids.size());
  log.n_items = static_cast<uint32_t>(log.item_ids.size());
  return log;
}

bool ItemGraph::has_edge(uint32_t a, uint32_t b) const {
  auto nb = neighbors(a);
  return std::binary_search(nb.begin(), nb.end(), b);
}

ItemGraph project_item_graph(const InteractionLog& log, size_t max_items_per_user) {
  require(!log.entries.empty(), "no interactions");

  std::vector<std::vector<uint32_t>> per_user(log.n_users);
  for (auto [u, i] : log.entries) per_user[u].push_back(i);

  std::vector<std::vector<uint32_t>> adj(log.n_items);
  for (auto& items : per_user) {
    if (items.size() < 2 || items.size() > max_items_per_user) continue;
    std::sort(items.begin(), items.end());
    for (size_t a = 0; a < items.size(); ++a) {
      for (size_t b = a + 1; b < items.size(); ++b) {
        adj[items[a]].push_back(items[b]);
        adj[items[b]].push_back(items[a]);
      }
    }
  }
  return build_csr(log.n_items, adj);
}

ItemGraph graph_from_edges(uint32_t n, const std::vector<std::pair<uint32_t, uint32_t>>& edges) {
  std::vector<std::vector<uint32_t>> adj(n);
  for (auto [a, b] : edges) {
    require(a < n && b < n, "edge endpoint out of range");
    if (a == b) continue;
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  return build_csr(n, adj);
}

std::vector<uint32_t> k_hop_neighborhood(const ItemGraph& g, uint32_t v, unsigned k) {
  require(v < g.n, "node out of range");
  std::vector<uint32_t> result;
  if (k == 0) return result;

  std::vector<int32_t> dist(g.n, -1);
  std::queue<uint32_t> q;
  dist[v] = 0;
  q.push(v);
  while (!q.empty()) {
    uint32_t u = q.front();
    q.pop();
    if (static_cast<unsigned>(dist[u]) >= k) continue;
    for (uint32_t w : g.neighbors(u)) {
      if (dist[w] >= 0) continue;
      dist[w] = dist[u] + 1;
      result.push_back(w);
      q.push(w);
    }
  }
  std::sort(result.begin(), result.end());
  return result;
}

bool is_connected_subset(const ItemGraph& g, std::span<const uint32_t> s) {
  require(!s.empty(), "empty subset");
  if (s.size() == 1) return true;

  std::unordered_set<uint32_t> members(s.begin(), s.end());
  std::unordered_set<uint32_t> visited;
  std::vector<uint32_t> stack{s[0]};
  visited.insert(s[0]);
  while (!stack.empty()) {
    uint32_t u = stack.back();
    stack.pop_back();
    for (uint32_t w : g.neighbors(u)) {
      if (!members.count(w) || visited.count(w)) continue;
      visited.insert(w);
      stack.push_back(w);
    }
  }
  return visited.size() == members.size();
}

Mat induced_adjacency(const ItemGraph& g, std::span<const uint32_t> s) {
  std::unordered_map<uint32_t, size_t> pos;
  pos.reserve(s.size());
  for (size_t i = 0; i < s.size(); ++i) {
    require(s[i] < g.n, "node out of range");
    bool fresh = pos.emplace(s[i], i).second;
    require(fresh, "duplicate node in subset");
  }
  Mat m(s.size(), s.size(), 0.0);
  for (size_t i = 0; i < s.size(); ++i) {
    for (uint32_t w : g.neighbors(s[i])) {
      auto it = pos.find(w);
      if (it != pos.end()) m(i, it->second) = 1.0;
    }
  }
  return m;
}

void save_graph(const ItemGraph& g, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "cannot open graph cache for writing: " + path);
  os.write("GGR1", 4);
  write_u32(os, 1);
  write_u64(os, g.n);
  write_u64(os, g.targets.size());
  for (uint64_t off : g.offsets) write_u64(os, off);
  for (uint32_t t : g.targets) write_u32(os, t);
  require(os.good(), "graph cache write failed: " + path);
}

ItemGraph load_graph(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "cannot open graph cache: " + path);
  char magic[4];
  is.read(magic, 4);
  require(is.good() && std::memcmp(magic, "GGR1", 4) == 0, "bad graph cache magic: " + path);
  uint32_t version = read_u32(is);
  require(version == 1, "unsupported graph cache version");
  ItemGraph g;
  g.n = read_u64(is);
  uint64_t entries = read_u64(is);
  g.offsets.resize(g.n + 1);
  for (auto& off : g.offsets) off = read_u64(is);
  require(g.offsets[g.n] == entries, "inconsistent graph cache offsets");
  g.targets.resize(entries);
  for (auto& t : g.targets) t = read_u32(is);
  g.edge_count = entries / 2;
  return g;
}

ComponentLabels connected_components(const ItemGraph& g) {
  ComponentLabels out;
  out.label.assign(g.n, UINT32_MAX);
  std::vector<uint32_t> stack;
  for (uint32_t v = 0; v < g.n; ++v) {
    if (out.label[v] != UINT32_MAX) continue;
    uint32_t id = out.count++;
    out.label[v] = id;
    stack.push_back(v);
    while (!stack.empty()) {
      uint32_t u = stack.back();
      stack.pop_back();
      for (uint32_t w : g.neighbors(u)) {
        if (out.label[w] == UINT32_MAX) {
          out.label[w] = id;
          stack.push_back(w);
        }
      }
    }
  }
  return out;
}

}  // namespace gremc
