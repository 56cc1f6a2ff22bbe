#pragma once

// Independent graph oracles shared by the graph tests and the acceptance run.

#include <algorithm>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dlk/graphnet.hpp"
#include "dlk/random.hpp"

namespace dlk::test {

inline std::string node(std::size_t i) { return std::to_string(i); }

inline DirectedGraph graph_of(std::size_t nodes, const std::vector<std::pair<std::size_t, std::size_t>>& arcs) {
  DirectedGraph g;
  for (std::size_t i = 0; i < nodes; ++i) g.add_node(node(i));
  for (std::size_t k = 0; k < arcs.size(); ++k) g.add_arc("e" + std::to_string(k), node(arcs[k].first), node(arcs[k].second));
  return g;
}

// Counts arc maps f₁ : arcs(Cₙ) → arcs(G) whose induced node map commutes with
// source and target. Every node of Cₙ is the source of an arc, so f₁ fixes f₀.
inline std::uint64_t enumerate_cycle_morphisms(const DirectedGraph& g, std::size_t n) {
  const auto& arcs = g.arcs();
  if (arcs.empty()) return 0;
  std::vector<std::size_t> src, dst;
  for (const Arc& a : arcs) {
    src.push_back(g.node_index(a.source));
    dst.push_back(g.node_index(a.target));
  }
  constexpr std::size_t unset = static_cast<std::size_t>(-1);
  std::vector<std::size_t> pick(n, 0), f0(n);
  std::uint64_t count = 0;
  while (true) {
    std::fill(f0.begin(), f0.end(), unset);
    bool ok = true;
    for (std::size_t i = 0; i < n && ok; ++i) {
      const std::size_t a = pick[i];
      for (const auto& [from, to] : {std::pair{i, src[a]}, std::pair{(i + 1) % n, dst[a]}}) {
        if (f0[from] == unset) {
          f0[from] = to;
        } else if (f0[from] != to) {
          ok = false;
        }
      }
    }
    if (ok) ++count;
    std::size_t k = 0;
    while (k < n && ++pick[k] == arcs.size()) pick[k++] = 0;
    if (k == n) break;
  }
  return count;
}

inline bool dfs_has_cycle(const DirectedGraph& g) {
  const auto adj = g.adjacency();
  const std::size_t n = adj.size();
  std::vector<int> colour(n, 0);
  std::function<bool(std::size_t)> visit = [&](std::size_t u) {
    colour[u] = 1;
    for (std::size_t v = 0; v < n; ++v) {
      if (adj[u][v] == 0) continue;
      if (colour[v] == 1) return true;
      if (colour[v] == 0 && visit(v)) return true;
    }
    colour[u] = 2;
    return false;
  };
  for (std::size_t u = 0; u < n; ++u)
    if (colour[u] == 0 && visit(u)) return true;
  return false;
}

inline DirectedGraph random_digraph(Rng& rng, std::size_t max_nodes) {
  const std::size_t n = 1 + rng.index(max_nodes);
  const double p = rng.uniform(0.0, 3.0 / static_cast<double>(n));
  DirectedGraph g;
  for (std::size_t i = 0; i < n; ++i) g.add_node(node(i));
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (rng.bernoulli(i == j ? p / 4 : p)) g.add_arc("e" + std::to_string(k++), node(i), node(j));
  return g;
}

/// Every digraph on 1..4 nodes with at most 6 arcs, parallel arcs and loops
/// included, arcs taken as multisets over the ordered node pairs.
inline void for_each_small_digraph(const std::function<void(const DirectedGraph&)>& visit) {
  for (std::size_t nodes = 1; nodes <= 4; ++nodes) {
    std::vector<std::pair<std::size_t, std::size_t>> slots;
    for (std::size_t i = 0; i < nodes; ++i)
      for (std::size_t j = 0; j < nodes; ++j) slots.emplace_back(i, j);
    std::vector<std::pair<std::size_t, std::size_t>> arcs;
    std::function<void(std::size_t)> grow = [&](std::size_t first) {
      visit(graph_of(nodes, arcs));
      if (arcs.size() == 6) return;
      for (std::size_t s = first; s < slots.size(); ++s) {
        arcs.push_back(slots[s]);
        grow(s);
        arcs.pop_back();
      }
    };
    grow(0);
  }
}

}  // namespace dlk::test
