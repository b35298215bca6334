#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rca/graph.hpp"
#include "rca/rng.hpp"
#include "rca/series.hpp"

namespace rca {

/// Ground-truth DAG of a synthetic case. Edges point cause -> effect.
struct Dag {
  std::size_t n = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;

  std::vector<std::vector<std::size_t>> parents() const {
    std::vector<std::vector<std::size_t>> p(n);
    for (const auto& [u, v] : edges) p[v].push_back(u);
    for (auto& row : p) std::sort(row.begin(), row.end());
    return p;
  }

  std::vector<std::vector<std::size_t>> children() const {
    std::vector<std::vector<std::size_t>> c(n);
    for (const auto& [u, v] : edges) c[u].push_back(v);
    for (auto& row : c) std::sort(row.begin(), row.end());
    return c;
  }

  bool weakly_connected() const {
    if (n == 0) return false;
    std::vector<std::vector<std::size_t>> und(n);
    for (const auto& [u, v] : edges) {
      und[u].push_back(v);
      und[v].push_back(u);
    }
    std::vector<bool> seen(n, false);
    std::vector<std::size_t> queue{0};
    seen[0] = true;
    for (std::size_t qi = 0; qi < queue.size(); ++qi) {
      for (std::size_t u : und[queue[qi]]) {
        if (!seen[u]) {
          seen[u] = true;
          queue.push_back(u);
        }
      }
    }
    return std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
  }
};

/// Random DAG: draw a uniformly random topological permutation and connect
/// each forward pair independently with the given density. Redrawn until
/// weakly connected, so no node is entirely isolated.
inline Dag generate_dag(std::size_t n, double density, std::mt19937_64& rng) {
  if (n < 2) throw std::invalid_argument("generate_dag: need n >= 2");
  if (density <= 0.0 || density > 1.0) {
    throw std::invalid_argument("generate_dag: density must lie in (0, 1]");
  }
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (int attempt = 0; attempt < 10000; ++attempt) {
    Dag d;
    d.n = n;
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (coin(rng) < density) d.edges.emplace_back(perm[i], perm[j]);
      }
    }
    std::sort(d.edges.begin(), d.edges.end());
    if (d.weakly_connected()) return d;
  }
  throw std::runtime_error("generate_dag: could not draw a connected DAG");
}

/// Conditional probability table of one node given the previous-step states
/// of its conditioning set (the node itself plus its DAG parents, capped).
struct Cpt {
  std::vector<std::size_t> cond;  // node ids, self first
  std::size_t cardinality = 4;
  std::vector<double> table;  // rows x cardinality, row-major

  std::size_t rows() const { return table.size() / cardinality; }

  std::size_t row_index(const std::vector<std::size_t>& states) const {
    std::size_t idx = 0;
    for (std::size_t c : cond) idx = idx * cardinality + states[c];
    return idx;
  }
};

struct GenOptions {
  std::size_t cardinality = 4;
  double dirichlet_alpha = 0.35;  // < 1 gives peaked rows, i.e. strong links
  double jitter_sigma = 0.01;
  double min_fault_tv = 0.3;  // regenerated table must shift at least this much
  std::size_t parent_cap = 5; // conditioning set bound keeps tables tractable
};

namespace detail {

inline std::vector<double> dirichlet_row(std::size_t k, double alpha,
                                         std::mt19937_64& rng) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> row(k);
  double sum = 0.0;
  for (double& v : row) {
    v = gamma(rng);
    if (v < 1e-12) v = 1e-12;
    sum += v;
  }
  for (double& v : row) v /= sum;
  return row;
}

inline Cpt make_cpt(std::size_t node, const std::vector<std::size_t>& parents,
                    const GenOptions& opts, std::mt19937_64& rng) {
  Cpt cpt;
  cpt.cardinality = opts.cardinality;
  cpt.cond.push_back(node);
  for (std::size_t p : parents) {
    if (cpt.cond.size() > opts.parent_cap) break;
    cpt.cond.push_back(p);
  }
  std::size_t rows = 1;
  for (std::size_t i = 0; i < cpt.cond.size(); ++i) rows *= opts.cardinality;
  cpt.table.reserve(rows * opts.cardinality);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = dirichlet_row(opts.cardinality, opts.dirichlet_alpha, rng);
    cpt.table.insert(cpt.table.end(), row.begin(), row.end());
  }
  return cpt;
}

/// Mean total-variation distance between matching rows.
inline double cpt_distance(const Cpt& a, const Cpt& b) {
  double acc = 0.0;
  const std::size_t rows = a.rows();
  for (std::size_t r = 0; r < rows; ++r) {
    double tv = 0.0;
    for (std::size_t c = 0; c < a.cardinality; ++c) {
      tv += std::abs(a.table[r * a.cardinality + c] - b.table[r * a.cardinality + c]);
    }
    acc += 0.5 * tv;
  }
  return acc / static_cast<double>(rows);
}

}  // namespace detail

/// Lag-1 dynamic model: each node's state at t is drawn from its CPT indexed
/// by the previous step's states of the conditioning set.
struct SynthModel {
  Dag dag;
  std::vector<Cpt> cpts;
  std::size_t cardinality = 4;

  std::vector<std::vector<std::size_t>> sample_states(
      std::size_t t_len, std::mt19937_64& rng,
      const std::vector<std::size_t>* initial = nullptr) const {
    const std::size_t n = dag.n;
    std::vector<std::vector<std::size_t>> states(n, std::vector<std::size_t>(t_len));
    std::uniform_int_distribution<std::size_t> uni(0, cardinality - 1);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::vector<std::size_t> prev(n);
    if (initial) {
      prev = *initial;
    } else {
      for (std::size_t v = 0; v < n; ++v) prev[v] = uni(rng);
    }
    for (std::size_t v = 0; v < n; ++v) states[v][0] = prev[v];

    for (std::size_t t = 1; t < t_len; ++t) {
      for (std::size_t v = 0; v < n; ++v) {
        const Cpt& cpt = cpts[v];
        const std::size_t row = cpt.row_index(prev);
        const double* probs = cpt.table.data() + row * cardinality;
        double u = coin(rng);
        std::size_t state = cardinality - 1;
        for (std::size_t c = 0; c < cardinality; ++c) {
          if (u < probs[c]) {
            state = c;
            break;
          }
          u -= probs[c];
        }
        states[v][t] = state;
      }
      for (std::size_t v = 0; v < n; ++v) prev[v] = states[v][t];
    }
    return states;
  }
};

/// One benchmark unit: ground truth DAG and tables, the injected fault, and
/// the emitted series (normal segment followed by the anomalous segment).
struct SynthCase {
  Dag dag;
  SynthModel normal_model;
  Cpt anomalous_cpt;
  std::size_t root_cause = 0;
  std::size_t normal_len = 0;
  std::uint64_t seed = 0;
  SeriesMatrix series;

  std::string root_cause_name() const { return series.names.at(root_cause); }
};

inline std::string synth_node_name(std::size_t v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "x%02zu", v);
  return buf;
}

/// Builds CPTs for the DAG, picks a root cause uniformly, regenerates its
/// table (rejecting regenerations that barely move the distribution), samples
/// the normal segment then the anomalous continuation, and emits the states
/// as reals with small jitter.
inline SynthCase sample_case(const Dag& dag, std::size_t t_len, double anomaly_fraction,
                             std::uint64_t seed, const GenOptions& opts = {}) {
  if (t_len < 100) throw std::invalid_argument("sample_case: need T >= 100");
  if (anomaly_fraction < 0.0 || anomaly_fraction >= 1.0) {
    throw std::invalid_argument("sample_case: anomaly fraction must lie in [0, 1)");
  }
  auto rng = make_rng(derive_seed(seed, "synth-case"));

  SynthCase sc;
  sc.dag = dag;
  sc.seed = seed;
  sc.normal_model.dag = dag;
  sc.normal_model.cardinality = opts.cardinality;
  const auto parents = dag.parents();
  for (std::size_t v = 0; v < dag.n; ++v) {
    sc.normal_model.cpts.push_back(detail::make_cpt(v, parents[v], opts, rng));
  }

  std::uniform_int_distribution<std::size_t> pick(0, dag.n - 1);
  sc.root_cause = pick(rng);
  const Cpt& old_cpt = sc.normal_model.cpts[sc.root_cause];
  sc.anomalous_cpt = old_cpt;
  for (int tries = 0; tries < 64; ++tries) {
    Cpt candidate = detail::make_cpt(sc.root_cause, parents[sc.root_cause], opts, rng);
    sc.anomalous_cpt = candidate;
    if (detail::cpt_distance(old_cpt, candidate) >= opts.min_fault_tv) break;
  }

  const std::size_t anomalous_len =
      static_cast<std::size_t>(std::llround(anomaly_fraction * static_cast<double>(t_len)));
  sc.normal_len = t_len - anomalous_len;

  auto states = sc.normal_model.sample_states(sc.normal_len, rng);
  if (anomalous_len > 0) {
    SynthModel faulty = sc.normal_model;
    faulty.cpts[sc.root_cause] = sc.anomalous_cpt;
    std::vector<std::size_t> last(dag.n);
    for (std::size_t v = 0; v < dag.n; ++v) last[v] = states[v].back();
    const auto tail = faulty.sample_states(anomalous_len, rng, &last);
    for (std::size_t v = 0; v < dag.n; ++v) {
      states[v].insert(states[v].end(), tail[v].begin(), tail[v].end());
    }
  }

  std::normal_distribution<double> jitter(0.0, opts.jitter_sigma);
  sc.series.names.resize(dag.n);
  sc.series.values.resize(dag.n);
  for (std::size_t v = 0; v < dag.n; ++v) {
    sc.series.names[v] = synth_node_name(v);
    sc.series.values[v].resize(t_len);
    for (std::size_t t = 0; t < t_len; ++t) {
      sc.series.values[v][t] = static_cast<double>(states[v][t]) + jitter(rng);
    }
  }
  return sc;
}

/// Robust z-score trigger detection: per-series median/MAD statistics from
/// the normal range, scanned over the anomalous remainder. The trigger is the
/// series that first exceeds 3.0, ties broken by the largest peak score; if
/// nothing exceeds the threshold the largest peak wins.
inline std::string detect_trigger(const SeriesMatrix& m, IndexRange normal_range) {
  if (normal_range.length() == 0 || normal_range.last > m.t()) {
    throw std::invalid_argument("detect_trigger: bad normal range");
  }
  constexpr double kThreshold = 3.0;
  constexpr double kMadScale = 1.4826;

  const auto median_of = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };

  const std::size_t scan_begin = normal_range.last;  // 0-based first anomalous index
  std::size_t best_first = m.t() + 1;
  double best_peak = -1.0;
  std::size_t best_series = 0;
  bool any_exceed = false;

  for (std::size_t i = 0; i < m.n(); ++i) {
    std::vector<double> ref(m.values[i].begin() + (normal_range.first - 1),
                            m.values[i].begin() + normal_range.last);
    const double med = median_of(ref);
    for (double& v : ref) v = std::abs(v - med);
    const double mad = median_of(std::move(ref));
    const double denom = std::max(kMadScale * mad, 1e-9);

    std::size_t first_exceed = m.t() + 1;
    double peak = 0.0;
    for (std::size_t t = scan_begin; t < m.t(); ++t) {
      const double z = std::abs(m.values[i][t] - med) / denom;
      peak = std::max(peak, z);
      if (z > kThreshold && first_exceed > m.t()) first_exceed = t;
    }
    const bool exceeds = first_exceed <= m.t();
    const bool better =
        exceeds
            ? (!any_exceed || first_exceed < best_first ||
               (first_exceed == best_first && peak > best_peak))
            : (!any_exceed && peak > best_peak);
    if (better) {
      best_first = exceeds ? first_exceed : best_first;
      best_peak = peak;
      best_series = i;
      any_exceed = any_exceed || exceeds;
    }
  }
  return m.names[best_series];
}

inline nlohmann::json case_truth_json(const SynthCase& sc) {
  nlohmann::json j;
  j["root_cause"] = sc.root_cause_name();
  j["normal_len"] = sc.normal_len;
  j["seed"] = sc.seed;
  j["nodes"] = sc.series.names;
  auto edges = nlohmann::json::array();
  for (const auto& [u, v] : sc.dag.edges) {
    edges.push_back({{"source", sc.series.names[u]}, {"target", sc.series.names[v]}});
  }
  j["dag"] = std::move(edges);
  return j;
}

}  // namespace rca
