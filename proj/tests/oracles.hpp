// Test-only oracles kept independent of the library code paths they check:
// central finite differences for gradients, dense power iteration for
// PageRank, brute-force counting for ranking metrics, and reachability-based
// cycle checks.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "rca/autodiff.hpp"
#include "rca/graph.hpp"

namespace oracles {

/// Central finite differences of rebuild() w.r.t. every element of every
/// parameter. rebuild() must construct the graph afresh from the parameters'
/// current data and return the scalar loss.
inline std::vector<std::vector<double>> finite_difference_grads(
    const std::vector<rca::ad::Value>& params,
    const std::function<double()>& rebuild, double h = 1e-5) {
  std::vector<std::vector<double>> grads;
  grads.reserve(params.size());
  for (const auto& p : params) {
    std::vector<double> g(p->data.numel());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double saved = p->data[i];
      p->data[i] = saved + h;
      const double up = rebuild();
      p->data[i] = saved - h;
      const double down = rebuild();
      p->data[i] = saved;
      g[i] = (up - down) / (2.0 * h);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

inline double max_relative_error(const std::vector<rca::ad::Value>& params,
                                 const std::vector<std::vector<double>>& fd) {
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < fd[p].size(); ++i) {
      const double a = params[p]->grad[i];
      const double f = fd[p][i];
      const double denom = std::max(1e-6, std::abs(a) + std::abs(f));
      worst = std::max(worst, std::abs(a - f) / denom);
    }
  }
  return worst;
}

/// Dense personalized PageRank by explicit matrix power iteration, with
/// dangling mass redistributed to the personalization vector.
inline std::vector<double> dense_pagerank(const rca::CausalGraph& g,
                                          const std::vector<double>& p, double damping,
                                          double tol = 1e-13,
                                          std::size_t max_iter = 100000) {
  const std::size_t n = g.size();
  std::vector<std::vector<double>> walk(n, std::vector<double>(n, 0.0));
  std::vector<std::size_t> outdeg(n, 0);
  for (const auto& e : g.edges) ++outdeg[e.src];
  for (const auto& e : g.edges) {
    walk[e.dst][e.src] = 1.0 / static_cast<double>(outdeg[e.src]);
  }
  std::vector<double> x(p);
  std::vector<double> next(n, 0.0);
  for (std::size_t it = 0; it < max_iter; ++it) {
    double dangling = 0.0;
    for (std::size_t u = 0; u < n; ++u)
      if (outdeg[u] == 0) dangling += x[u];
    for (std::size_t v = 0; v < n; ++v) {
      double acc = 0.0;
      for (std::size_t u = 0; u < n; ++u) acc += walk[v][u] * x[u];
      next[v] = (1.0 - damping) * p[v] + damping * (acc + dangling * p[v]);
    }
    double res = 0.0;
    for (std::size_t v = 0; v < n; ++v) res += std::abs(next[v] - x[v]);
    x = next;
    if (res < tol) break;
  }
  double sum = 0.0;
  for (double v : x) sum += v;
  for (double& v : x) v /= sum;
  return x;
}

/// True when edge (src, dst) lies on some cycle: dst must reach src.
inline bool edge_on_cycle(const rca::CausalGraph& g, std::size_t src, std::size_t dst) {
  const auto adj = g.out_adjacency();
  std::vector<bool> seen(g.size(), false);
  std::vector<std::size_t> stack{dst};
  seen[dst] = true;
  while (!stack.empty()) {
    const std::size_t v = stack.back();
    stack.pop_back();
    if (v == src) return true;
    for (std::size_t u : adj[v]) {
      if (!seen[u]) {
        seen[u] = true;
        stack.push_back(u);
      }
    }
  }
  return false;
}

/// DFS-based cycle detection, independent of the library's Kahn ordering.
inline bool has_cycle(const rca::CausalGraph& g) {
  const auto adj = g.out_adjacency();
  std::vector<int> state(g.size(), 0);  // 0 new, 1 on path, 2 done
  for (std::size_t root = 0; root < g.size(); ++root) {
    if (state[root] != 0) continue;
    std::vector<std::pair<std::size_t, std::size_t>> stack{{root, 0}};
    state[root] = 1;
    while (!stack.empty()) {
      auto& [v, idx] = stack.back();
      if (idx < adj[v].size()) {
        const std::size_t u = adj[v][idx++];
        if (state[u] == 1) return true;
        if (state[u] == 0) {
          state[u] = 1;
          stack.emplace_back(u, 0);
        }
      } else {
        state[v] = 2;
        stack.pop_back();
      }
    }
  }
  return false;
}

/// Brute-force hit ratio: literal definition, separate from the library.
inline double counted_hr(const std::vector<std::vector<std::string>>& rankings,
                         const std::vector<std::string>& truths, std::size_t k) {
  std::size_t hits = 0;
  for (std::size_t c = 0; c < rankings.size(); ++c) {
    for (std::size_t i = 0; i < rankings[c].size() && i < k; ++i) {
      if (rankings[c][i] == truths[c]) {
        ++hits;
        break;
      }
    }
  }
  return rankings.empty() ? 0.0
                          : static_cast<double>(hits) / static_cast<double>(rankings.size());
}

inline double counted_mrr(const std::vector<std::vector<std::string>>& rankings,
                          const std::vector<std::string>& truths) {
  double acc = 0.0;
  for (std::size_t c = 0; c < rankings.size(); ++c) {
    double rr = 0.0;
    for (std::size_t i = 0; i < rankings[c].size(); ++i) {
      if (rankings[c][i] == truths[c]) {
        rr = 1.0 / static_cast<double>(i + 1);
        break;
      }
    }
    acc += rr;
  }
  return rankings.empty() ? 0.0 : acc / static_cast<double>(rankings.size());
}

/// BFS distances with SIZE_MAX for unreachable nodes.
inline std::vector<std::size_t> bfs_hops(const rca::CausalGraph& g, std::size_t from) {
  const auto adj = g.out_adjacency();
  std::vector<std::size_t> dist(g.size(), static_cast<std::size_t>(-1));
  std::vector<std::size_t> queue{from};
  dist[from] = 0;
  for (std::size_t qi = 0; qi < queue.size(); ++qi) {
    const std::size_t v = queue[qi];
    for (std::size_t u : adj[v]) {
      if (dist[u] == static_cast<std::size_t>(-1)) {
        dist[u] = dist[v] + 1;
        queue.push_back(u);
      }
    }
  }
  return dist;
}

}  // namespace oracles
