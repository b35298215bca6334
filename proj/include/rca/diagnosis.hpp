#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rca/graph.hpp"

namespace rca {

/// Every edge u -> v becomes v -> u; the node set is unchanged.
inline CausalGraph reverse_graph(const CausalGraph& g) {
  CausalGraph r;
  r.nodes = g.nodes;
  for (const auto& e : g.edges) r.add_edge(e.dst, e.src, e.similarity);
  r.sort_edges();
  return r;
}

/// Nodes with zero out-degree in the given (already reversed) graph.
inline std::vector<std::size_t> dangling_nodes(const CausalGraph& g) {
  const auto deg = g.out_degree();
  std::vector<std::size_t> out;
  for (std::size_t v = 0; v < g.size(); ++v)
    if (deg[v] == 0) out.push_back(v);
  return out;
}

/// Per-node restart weights: weight_dangling for dangling nodes and
/// weight_normal for the rest, normalized to sum 1.
struct PersonalizationVector {
  std::vector<double> weight;

  static PersonalizationVector uniform(std::size_t n) {
    PersonalizationVector p;
    p.weight.assign(n, 1.0 / static_cast<double>(n));
    return p;
  }

  static PersonalizationVector for_graph(const CausalGraph& g, double weight_dangling,
                                         double weight_normal) {
    if (weight_dangling <= 0.0 || weight_normal <= 0.0) {
      throw std::invalid_argument("personalization weights must be positive");
    }
    PersonalizationVector p;
    p.weight.assign(g.size(), weight_normal);
    for (std::size_t v : dangling_nodes(g)) p.weight[v] = weight_dangling;
    p.normalize();
    return p;
  }

  void normalize() {
    double sum = 0.0;
    for (double w : weight) sum += w;
    if (sum <= 0.0) throw std::invalid_argument("personalization sums to zero");
    for (double& w : weight) w /= sum;
  }
};

/// Power iteration for score = (1-damping) * p + damping * (walk + dangling
/// mass redistributed to p), run on the graph as given (callers pass the
/// reversed graph). Converges when the L1 residual drops below tol.
inline std::vector<double> personalized_pagerank(const CausalGraph& g,
                                                 const PersonalizationVector& p,
                                                 double damping, double tol = 1e-9,
                                                 std::size_t max_iter = 1000) {
  const std::size_t n = g.size();
  if (n == 0) return {};
  if (damping <= 0.0 || damping >= 1.0) {
    throw std::invalid_argument("pagerank: damping must lie in (0, 1)");
  }
  if (p.weight.size() != n) {
    throw std::invalid_argument("pagerank: personalization size mismatch");
  }

  const auto adj = g.out_adjacency();
  const auto deg = g.out_degree();
  std::vector<double> score(p.weight);
  std::vector<double> next(n, 0.0);

  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    double dangling_mass = 0.0;
    for (std::size_t v = 0; v < n; ++v)
      if (deg[v] == 0) dangling_mass += score[v];
    for (std::size_t v = 0; v < n; ++v) {
      next[v] = (1.0 - damping) * p.weight[v] + damping * dangling_mass * p.weight[v];
    }
    for (std::size_t u = 0; u < n; ++u) {
      if (deg[u] == 0) continue;
      const double share = damping * score[u] / static_cast<double>(deg[u]);
      for (std::size_t v : adj[u]) next[v] += share;
    }
    double residual = 0.0;
    for (std::size_t v = 0; v < n; ++v) residual += std::abs(next[v] - score[v]);
    score.swap(next);
    if (residual < tol) {
      double sum = 0.0;
      for (double s : score) sum += s;
      for (double& s : score) s /= sum;
      return score;
    }
  }
  throw std::runtime_error("pagerank: no convergence after " + std::to_string(max_iter) +
                           " iterations");
}

/// Hop count from the trigger to every node along the graph's edges (callers
/// pass the reversed graph). Unreachable nodes and the trigger itself get 0.
inline std::vector<std::size_t> access_distance(const CausalGraph& g,
                                                std::size_t trigger) {
  if (trigger >= g.size()) throw std::invalid_argument("access_distance: bad trigger");
  const auto adj = g.out_adjacency();
  std::vector<std::size_t> dist(g.size(), 0);
  std::vector<bool> seen(g.size(), false);
  std::vector<std::size_t> queue{trigger};
  seen[trigger] = true;
  for (std::size_t qi = 0; qi < queue.size(); ++qi) {
    const std::size_t v = queue[qi];
    for (std::size_t u : adj[v]) {
      if (seen[u]) continue;
      seen[u] = true;
      dist[u] = dist[v] + 1;
      queue.push_back(u);
    }
  }
  return dist;
}

struct DiagnosisConfig {
  double damping = 0.85;
  double weight_dangling = 1.0;
  double weight_normal = 0.5;
  bool include_trigger = false;
  double tol = 1e-9;
  std::size_t max_iter = 1000;
};

struct RankedCause {
  std::string node;
  double score = 0.0;
  std::size_t ad = 0;
};

/// Candidates ordered by PageRank score (ties resolved by larger access
/// distance, then name). Scores of the underlying vector sum to 1.
struct RootCauseRanking {
  std::string trigger;
  std::vector<RankedCause> items;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["trigger"] = trigger;
    auto arr = nlohmann::json::array();
    for (const auto& it : items) {
      arr.push_back({{"node", it.node}, {"score", it.score}, {"ad", it.ad}});
    }
    j["ranking"] = std::move(arr);
    return j;
  }
};

/// Full diagnosis: reverse the causal graph, run PageRank with dangling-node
/// emphasis, break ties by access distance from the trigger, return top-k.
inline RootCauseRanking rank_root_causes(const CausalGraph& g, const std::string& trigger,
                                         std::size_t k, const DiagnosisConfig& cfg = {}) {
  if (k < 1) throw std::invalid_argument("rank_root_causes: k must be >= 1");
  const std::size_t trigger_idx = g.index_of(trigger);

  const CausalGraph rev = reverse_graph(g);
  const auto p = PersonalizationVector::for_graph(rev, cfg.weight_dangling,
                                                  cfg.weight_normal);
  const auto scores = personalized_pagerank(rev, p, cfg.damping, cfg.tol, cfg.max_iter);
  const auto dist = access_distance(rev, trigger_idx);

  struct Entry {
    std::int64_t score_key;  // score rounded to 1e-9 for tie grouping
    double score;
    std::size_t ad;
    std::size_t node;
  };
  std::vector<Entry> entries;
  entries.reserve(g.size());
  for (std::size_t v = 0; v < g.size(); ++v) {
    if (!cfg.include_trigger && v == trigger_idx) continue;
    entries.push_back(
        {static_cast<std::int64_t>(std::llround(scores[v] * 1e9)), scores[v], dist[v], v});
  }
  std::sort(entries.begin(), entries.end(), [&](const Entry& a, const Entry& b) {
    if (a.score_key != b.score_key) return a.score_key > b.score_key;
    if (a.ad != b.ad) return a.ad > b.ad;
    return g.nodes[a.node] < g.nodes[b.node];
  });

  RootCauseRanking out;
  out.trigger = trigger;
  const std::size_t take = std::min(k, entries.size());
  out.items.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    out.items.push_back({g.nodes[entries[i].node], entries[i].score, entries[i].ad});
  }
  return out;
}

}  // namespace rca
