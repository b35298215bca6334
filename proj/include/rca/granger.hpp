#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rca/autodiff.hpp"
#include "rca/encoder.hpp"
#include "rca/graph.hpp"
#include "rca/optim.hpp"
#include "rca/parallel.hpp"
#include "rca/rng.hpp"
#include "rca/series.hpp"

namespace rca {

/// Sample Pearson correlation; 0 when either input is constant.
inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
  if (x.size() < 2) throw std::invalid_argument("pearson: need length >= 2");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

/// N x N attention scores. theta holds the unconstrained parameters; the
/// scores alpha_ij = sigmoid(theta_ij) lie in [0, 1] by construction, with
/// entry (i, j) scaling series i's contribution to forecasting series j.
/// Column j is owned by forecaster j during training.
struct CausalAttentionMatrix {
  std::vector<std::string> names;
  Tensor theta;  // {N, N}

  std::size_t size() const { return names.size(); }

  double alpha_at(std::size_t i, std::size_t j) const {
    return 1.0 / (1.0 + std::exp(-theta.at(i, j)));
  }

  Tensor alpha() const {
    Tensor a(theta.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) a[i] = 1.0 / (1.0 + std::exp(-theta[i]));
    return a;
  }

  nlohmann::json to_json() const {
    const Tensor a = alpha();
    nlohmann::json j;
    j["names"] = names;
    const std::size_t n = names.size();
    auto rows = nlohmann::json::array();
    auto traw = nlohmann::json::array();
    for (std::size_t i = 0; i < n; ++i) {
      rows.push_back(std::vector<double>(a.data() + i * n, a.data() + (i + 1) * n));
      traw.push_back(std::vector<double>(theta.data() + i * n, theta.data() + (i + 1) * n));
    }
    j["alpha"] = std::move(rows);
    j["theta"] = std::move(traw);
    return j;
  }

  static CausalAttentionMatrix from_json(const nlohmann::json& j) {
    CausalAttentionMatrix m;
    m.names = j.at("names").get<std::vector<std::string>>();
    const std::size_t n = m.names.size();
    m.theta = Tensor({n, n});
    const auto rows = j.at("theta");
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = rows.at(i).get<std::vector<double>>();
      for (std::size_t k = 0; k < n; ++k) m.theta.at(i, k) = row.at(k);
    }
    return m;
  }
};

/// One forecaster: the backbone embedding (trend/remainder rows of w_embed)
/// plus an output head over all N*w masked-and-encoded inputs, and the
/// attention column this forecaster owns.
struct Forecaster {
  Tensor w_embed;  // {2, d}: row 0 trend map, row 1 remainder map
  Tensor b_embed;  // {d}
  Tensor w_head;   // {N*w*d, 1}
  Tensor b_head;   // {1}
  Tensor theta;    // {1, N} column owned by this forecaster
};

struct ForecasterBank {
  std::vector<std::string> names;
  std::vector<Forecaster> nets;
  std::size_t window = 0;
  std::size_t dim = 0;
  std::size_t kernel = 0;
};

struct DiscoveryConfig {
  std::size_t window = 32;
  std::size_t epochs = 50;
  double lr = 0.001;
  std::size_t batch = 128;
  std::size_t dim = 64;
  std::size_t kernel = 25;
  double theta_init_std = 0.01;
  std::uint64_t seed = 42;
  unsigned threads = 1;
};

namespace detail {

/// Trend and remainder of every history window, decomposed once. Row s holds
/// the N*w values of sample s in series-major order.
struct DecomposedWindows {
  Tensor trend;  // {S, N*w}
  Tensor rem;    // {S, N*w}
};

inline DecomposedWindows decompose_windows(const WindowBatch& wb, std::size_t kernel) {
  const std::size_t s = wb.samples();
  const std::size_t n = wb.series();
  const std::size_t w = wb.window;
  DecomposedWindows dw{Tensor({s, n * w}), Tensor({s, n * w})};
  for (std::size_t k = 0; k < s; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      const double* win = wb.inputs.data() + (k * n + i) * w;
      const Decomposition d = decompose(std::span<const double>(win, w), kernel);
      double* td = dw.trend.data() + k * n * w + i * w;
      double* rd = dw.rem.data() + k * n * w + i * w;
      std::copy(d.trend.begin(), d.trend.end(), td);
      std::copy(d.remainder.begin(), d.remainder.end(), rd);
    }
  }
  return dw;
}

/// 0/1 matrix {N, N*w} that repeats each attention score across its series
/// window: alpha_w = alpha @ expand.
inline Tensor attention_expand_matrix(std::size_t n, std::size_t w) {
  Tensor e({n, n * w});
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t t = 0; t < w; ++t) e.at(j, j * w + t) = 1.0;
  return e;
}

/// Prediction head shared by training and evaluation: mask the decomposed
/// windows with the expanded attention row, embed per timestamp, then apply
/// the scalar head. trend/rem are {B, N*w}; returns {B, 1}.
inline ad::Value forecast_graph(const ad::Value& alpha_w, const ad::Value& w_embed,
                                const ad::Value& b_embed, const ad::Value& w_head,
                                const ad::Value& b_head, const ad::Value& trend,
                                const ad::Value& rem, std::size_t batch, std::size_t nw,
                                std::size_t dim) {
  auto mt = ad::mul_rows(trend, alpha_w);
  auto mr = ad::mul_rows(rem, alpha_w);
  auto st = ad::stack_cols(mt, mr);                       // {B*N*w, 2}
  auto reps = ad::linear(st, w_embed, b_embed);           // {B*N*w, d}
  auto flat = ad::reshape(reps, {batch, nw * dim});       // view
  return ad::linear(flat, w_head, b_head);                // {B, 1}
}

inline Tensor gather_rows(const Tensor& src, const std::vector<std::size_t>& idx,
                          std::size_t begin, std::size_t end) {
  const std::size_t c = src.cols();
  Tensor out({end - begin, c});
  for (std::size_t r = begin; r < end; ++r) {
    const double* s = src.data() + idx[r] * c;
    std::copy(s, s + c, out.data() + (r - begin) * c);
  }
  return out;
}

}  // namespace detail

/// Jointly trains N independent forecasters and their attention columns by
/// minimizing mean squared one-step error. When a pretrained encoder is
/// given, its weights initialize every forecaster's backbone.
inline std::pair<ForecasterBank, CausalAttentionMatrix> train_discovery(
    const SeriesMatrix& m, const BackboneEncoder* encoder_init,
    const DiscoveryConfig& cfg) {
  if (m.t() <= cfg.window) {
    throw std::invalid_argument("discovery: need T > window");
  }
  if (encoder_init && encoder_init->dim != cfg.dim) {
    throw std::invalid_argument("discovery: pretrained encoder dim " +
                                std::to_string(encoder_init->dim) +
                                " does not match configured dim " + std::to_string(cfg.dim));
  }
  const std::size_t n = m.n();
  const std::size_t w = cfg.window;
  const std::size_t d = cfg.dim;
  const std::size_t nw = n * w;

  const WindowBatch wb = sliding_windows(m, w);
  const detail::DecomposedWindows dw = detail::decompose_windows(wb, cfg.kernel);
  const Tensor expand = detail::attention_expand_matrix(n, w);
  const std::size_t samples = wb.samples();

  ForecasterBank bank;
  bank.names = m.names;
  bank.nets.resize(n);
  bank.window = w;
  bank.dim = d;
  bank.kernel = cfg.kernel;

  CausalAttentionMatrix attn;
  attn.names = m.names;
  attn.theta = Tensor({n, n});

  parallel_for(n, cfg.threads, [&](std::size_t i) {
    auto rng = make_rng(derive_seed(cfg.seed, "discovery", i));
    std::normal_distribution<double> theta_dist(0.0, cfg.theta_init_std);
    std::normal_distribution<double> embed_dist(0.0, 1.0);
    std::normal_distribution<double> head_dist(0.0,
                                               1.0 / std::sqrt(static_cast<double>(nw * d)));

    Forecaster& f = bank.nets[i];
    f.w_embed = Tensor({2, d});
    f.b_embed = Tensor({d});
    f.w_head = Tensor({nw * d, 1});
    f.b_head = Tensor({1});
    f.theta = Tensor({1, n});
    if (encoder_init) {
      for (std::size_t k = 0; k < d; ++k) {
        f.w_embed.at(0, k) = encoder_init->w_trend[k];
        f.w_embed.at(1, k) = encoder_init->w_remainder[k];
        f.b_embed[k] = encoder_init->bias[k];
      }
    } else {
      for (std::size_t k = 0; k < 2 * d; ++k) f.w_embed[k] = embed_dist(rng);
    }
    for (std::size_t k = 0; k < nw * d; ++k) f.w_head[k] = head_dist(rng);
    for (std::size_t k = 0; k < n; ++k) f.theta[k] = theta_dist(rng);

    const std::string tag = "f" + std::to_string(i);
    auto w_embed = ad::parameter(f.w_embed, tag + ".w_embed");
    auto b_embed = ad::parameter(f.b_embed, tag + ".b_embed");
    auto w_head = ad::parameter(f.w_head, tag + ".w_head");
    auto b_head = ad::parameter(f.b_head, tag + ".b_head");
    auto theta = ad::parameter(f.theta, tag + ".theta");
    ad::Adam opt({w_embed, b_embed, w_head, b_head, theta}, cfg.lr);

    auto expand_c = ad::constant(expand);
    std::vector<std::size_t> order(samples);
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t start = 0; start < samples; start += cfg.batch) {
        const std::size_t stop = std::min(start + cfg.batch, samples);
        const std::size_t b = stop - start;

        auto trend_c = ad::constant(detail::gather_rows(dw.trend, order, start, stop));
        auto rem_c = ad::constant(detail::gather_rows(dw.rem, order, start, stop));
        Tensor target({b, 1});
        for (std::size_t r = start; r < stop; ++r) {
          target[r - start] = wb.targets.at(order[r], i);
        }

        auto alpha = ad::sigmoid(theta);
        auto alpha_w = ad::linear(alpha, expand_c);
        auto pred = detail::forecast_graph(alpha_w, w_embed, b_embed, w_head, b_head,
                                           trend_c, rem_c, b, nw, d);
        auto loss = ad::mse(pred, ad::constant(target));
        if (!std::isfinite(loss->data[0])) {
          throw std::runtime_error("discovery: non-finite loss at epoch " +
                                   std::to_string(epoch) + " for forecaster " +
                                   std::to_string(i));
        }
        opt.zero_grad();
        ad::backward(loss);
        opt.step();
      }
    }
    for (std::size_t j = 0; j < n; ++j) attn.theta.at(j, i) = f.theta[j];
  });

  return {std::move(bank), std::move(attn)};
}

/// One-step predictions for every sample and target series under a given
/// attention matrix: forecaster i sees every series window scaled by
/// alpha[., i]. Returns {S, N}.
inline Tensor masked_forecast(const ForecasterBank& bank, const Tensor& alpha,
                              const WindowBatch& wb) {
  const std::size_t n = bank.names.size();
  const std::size_t w = bank.window;
  const std::size_t d = bank.dim;
  const std::size_t nw = n * w;
  if (wb.window != w || wb.series() != n) {
    throw std::invalid_argument("masked_forecast: window batch does not match bank");
  }
  if (alpha.rank() != 2 || alpha.dim(0) != n || alpha.dim(1) != n) {
    throw std::invalid_argument("masked_forecast: alpha must be N x N");
  }

  const detail::DecomposedWindows dw = detail::decompose_windows(wb, bank.kernel);
  const Tensor expand = detail::attention_expand_matrix(n, w);
  const std::size_t samples = wb.samples();
  Tensor out({samples, n});

  std::vector<std::size_t> order(samples);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t chunk = 256;

  for (std::size_t i = 0; i < n; ++i) {
    const Forecaster& f = bank.nets[i];
    Tensor col({1, n});
    for (std::size_t j = 0; j < n; ++j) col[j] = alpha.at(j, i);
    auto alpha_w = ad::linear(ad::constant(col), ad::constant(expand));
    auto w_embed = ad::constant(f.w_embed);
    auto b_embed = ad::constant(f.b_embed);
    auto w_head = ad::constant(f.w_head);
    auto b_head = ad::constant(f.b_head);
    for (std::size_t start = 0; start < samples; start += chunk) {
      const std::size_t stop = std::min(start + chunk, samples);
      auto trend_c = ad::constant(detail::gather_rows(dw.trend, order, start, stop));
      auto rem_c = ad::constant(detail::gather_rows(dw.rem, order, start, stop));
      auto pred = detail::forecast_graph(alpha_w, w_embed, b_embed, w_head, b_head,
                                         trend_c, rem_c, stop - start, nw, d);
      for (std::size_t r = start; r < stop; ++r) out.at(r, i) = pred->data[r - start];
    }
  }
  return out;
}

/// Raw causal graph: edge i -> j iff alpha_ij > threshold, excluding
/// self-loops. The inequality is strict.
inline CausalGraph threshold_graph(const CausalAttentionMatrix& attn, double threshold) {
  if (threshold < 0.0 || threshold > 1.0) {
    throw std::invalid_argument("threshold_graph: H must lie in [0, 1]");
  }
  CausalGraph g;
  g.nodes = attn.names;
  const std::size_t n = attn.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j && attn.alpha_at(i, j) > threshold) g.add_edge(i, j);
    }
  }
  g.sort_edges();
  return g;
}

/// Fills each edge's similarity with the Pearson correlation of its endpoint
/// series.
inline void annotate_similarity(CausalGraph& g, const SeriesMatrix& m) {
  for (auto& e : g.edges) {
    e.similarity = pearson(m.row(m.index_of(g.nodes[e.src])),
                           m.row(m.index_of(g.nodes[e.dst])));
  }
}

/// Repeatedly removes the cycle-participating edge with the lowest absolute
/// Pearson correlation until the graph is acyclic. Edges on no cycle are
/// never touched. Removed edges are appended to `removed` when given.
inline CausalGraph prune_to_dag(CausalGraph g, const SeriesMatrix& m,
                                std::vector<CausalGraph::Edge>* removed = nullptr) {
  annotate_similarity(g, m);
  g.sort_edges();
  for (;;) {
    const auto comp = strongly_connected_components(g);
    // comp sizes; an edge is on a cycle iff both ends share a component of
    // size > 1 (self-loops are rejected at insert).
    std::vector<std::size_t> comp_size(g.size(), 0);
    for (std::size_t v = 0; v < g.size(); ++v) ++comp_size[comp[v]];
    std::ptrdiff_t victim = -1;
    for (std::size_t k = 0; k < g.edges.size(); ++k) {
      const auto& e = g.edges[k];
      if (comp[e.src] != comp[e.dst] || comp_size[comp[e.src]] < 2) continue;
      if (victim < 0 ||
          std::abs(e.similarity) < std::abs(g.edges[victim].similarity)) {
        victim = static_cast<std::ptrdiff_t>(k);
      }
    }
    if (victim < 0) break;
    if (removed) removed->push_back(g.edges[victim]);
    g.edges.erase(g.edges.begin() + victim);
  }
  return g;
}

}  // namespace rca
