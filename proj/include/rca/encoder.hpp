#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rca/autodiff.hpp"
#include "rca/checkpoint.hpp"
#include "rca/optim.hpp"
#include "rca/rng.hpp"
#include "rca/series.hpp"
#include "rca/tensor.hpp"

namespace rca {

struct Decomposition {
  std::vector<double> trend;
  std::vector<double> remainder;
};

namespace detail {

/// Largest odd window not exceeding the segment length.
inline std::size_t effective_kernel(std::size_t k, std::size_t len) {
  std::size_t ke = std::min(k, len);
  if (ke % 2 == 0) --ke;
  return ke == 0 ? 1 : ke;
}

}  // namespace detail

/// Splits a segment into a centered moving-average trend (edge replication
/// padding, window k) and the remainder. trend + remainder reconstructs the
/// segment exactly. k must be odd and >= 3; it is clipped for short segments.
inline Decomposition decompose(std::span<const double> segment, std::size_t k) {
  if (k < 3 || k % 2 == 0) {
    throw std::invalid_argument("decompose: kernel must be odd and >= 3");
  }
  const std::size_t len = segment.size();
  if (len == 0) throw std::invalid_argument("decompose: empty segment");
  const std::size_t ke = detail::effective_kernel(k, len);
  const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(ke / 2);

  Decomposition d;
  d.trend.resize(len);
  d.remainder.resize(len);
  // prefix sums over the edge-replicated extension
  std::vector<double> prefix(len + 1, 0.0);
  for (std::size_t i = 0; i < len; ++i) prefix[i + 1] = prefix[i] + segment[i];
  const auto range_sum = [&](std::ptrdiff_t lo, std::ptrdiff_t hi) {
    // inclusive window [lo, hi] with clamped indices
    double acc = 0.0;
    if (lo < 0) {
      acc += segment[0] * static_cast<double>(-lo);
      lo = 0;
    }
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(len);
    if (hi >= n) {
      acc += segment[len - 1] * static_cast<double>(hi - n + 1);
      hi = n - 1;
    }
    acc += prefix[static_cast<std::size_t>(hi) + 1] - prefix[static_cast<std::size_t>(lo)];
    return acc;
  };
  for (std::size_t t = 0; t < len; ++t) {
    const std::ptrdiff_t ti = static_cast<std::ptrdiff_t>(t);
    d.trend[t] = range_sum(ti - h, ti + h) / static_cast<double>(ke);
    d.remainder[t] = segment[t] - d.trend[t];
  }
  return d;
}

/// Channel-independent backbone: one linear map for the trend component and
/// one for the remainder, applied per timestamp, emitting a dim-wide
/// representation for every position of the input segment.
struct BackboneEncoder {
  std::size_t kernel = 25;
  std::size_t dim = 64;
  Tensor w_trend;     // {1, dim}
  Tensor w_remainder; // {1, dim}
  Tensor bias;        // {dim}

  static BackboneEncoder init(std::size_t dim, std::size_t kernel, std::mt19937_64& rng) {
    BackboneEncoder e;
    e.kernel = kernel;
    e.dim = dim;
    e.w_trend = Tensor({1, dim});
    e.w_remainder = Tensor({1, dim});
    e.bias = Tensor({dim});
    std::normal_distribution<double> dist(0.0, 1.0);
    for (std::size_t i = 0; i < dim; ++i) {
      e.w_trend[i] = dist(rng);
      e.w_remainder[i] = dist(rng);
    }
    return e;
  }

  /// Per-timestamp representations of a segment: {len, dim}.
  Tensor encode(std::span<const double> segment) const {
    if (segment.empty()) throw std::invalid_argument("encode: empty segment");
    const Decomposition dc = decompose(segment, kernel);
    const std::size_t len = segment.size();
    Tensor out({len, dim});
    for (std::size_t t = 0; t < len; ++t) {
      double* row = out.data() + t * dim;
      for (std::size_t j = 0; j < dim; ++j) {
        row[j] = w_trend[j] * dc.trend[t] + w_remainder[j] * dc.remainder[t] + bias[j];
      }
    }
    return out;
  }
};

/// Two linear maps d->d around a pointwise sigmoid.
struct Projector {
  Tensor w1, b1, w2, b2;

  static Projector init(std::size_t dim, std::mt19937_64& rng) {
    Projector p;
    p.w1 = Tensor({dim, dim});
    p.w2 = Tensor({dim, dim});
    p.b1 = Tensor({dim});
    p.b2 = Tensor({dim});
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
    for (std::size_t i = 0; i < dim * dim; ++i) {
      p.w1[i] = dist(rng);
      p.w2[i] = dist(rng);
    }
    return p;
  }
};

struct PretrainModel {
  BackboneEncoder encoder;
  Projector projector;
};

struct PretrainConfig {
  std::size_t epochs = 50;
  std::size_t batch = 128;
  double lr = 0.001;
  std::size_t crops_per_series = 4;
  std::size_t dim = 64;
  std::size_t kernel = 25;
  std::size_t max_crop_len = 128;
};

/// Epoch-wise mean contrastive loss, plus overlap cosine alignment measured
/// at initialization and after training on a fixed probe set.
struct PretrainTrace {
  std::vector<double> epoch_loss;
  double initial_alignment = 0.0;
  double final_alignment = 0.0;
};

/// Aligned per-timestamp representations for one crop pair: z-side is
/// projector(encoder(.)), p-side is the raw encoder output, both restricted
/// to the overlap region.
struct CropPairReprs {
  Tensor z1, p1, z2, p2;  // each {overlap_len, dim}
};

/// Symmetric negative-pair-free objective: the mean per-timestamp cosine of
/// each z against the other crop's (gradient-stopped) p side, negated and
/// halved. Lies in [-1, 1].
inline double contrastive_loss(const CropPairReprs& r) {
  const auto mean_cos = [](const Tensor& a, const Tensor& b) {
    auto ca = ad::constant(a);
    auto cb = ad::constant(b);
    return ad::mean(ad::cosine_rows(ca, cb))->data[0];
  };
  if (r.z1.rows() == 0) throw std::invalid_argument("contrastive_loss: empty overlap");
  return -0.5 * (mean_cos(r.z1, r.p2) + mean_cos(r.p1, r.z2));
}

namespace detail {

struct PairConstants {
  Tensor t1, r1, t2, r2;  // {overlap_len, 1} each
};

/// Decomposes both crops over their full extent, then keeps the overlap
/// positions. Contexts differ between the two views, which is the point.
inline PairConstants prepare_pair(const std::vector<double>& series, const CropPair& c,
                                  std::size_t kernel) {
  const std::size_t len1 = c.b1 - c.a1 + 1;
  const std::size_t len2 = c.b2 - c.a2 + 1;
  const std::span<const double> s1(series.data() + (c.a1 - 1), len1);
  const std::span<const double> s2(series.data() + (c.a2 - 1), len2);
  const Decomposition d1 = decompose(s1, kernel);
  const Decomposition d2 = decompose(s2, kernel);
  const std::size_t ov = c.overlap_len();
  const std::size_t off1 = c.a2 - c.a1;  // overlap start inside segment 1
  PairConstants pc;
  pc.t1 = Tensor({ov, 1});
  pc.r1 = Tensor({ov, 1});
  pc.t2 = Tensor({ov, 1});
  pc.r2 = Tensor({ov, 1});
  for (std::size_t t = 0; t < ov; ++t) {
    pc.t1[t] = d1.trend[off1 + t];
    pc.r1[t] = d1.remainder[off1 + t];
    pc.t2[t] = d2.trend[t];
    pc.r2[t] = d2.remainder[t];
  }
  return pc;
}

struct PretrainParams {
  ad::Value wt, wr, bias, pw1, pb1, pw2, pb2;

  std::vector<ad::Value> all() const { return {wt, wr, bias, pw1, pb1, pw2, pb2}; }
};

inline ad::Value encode_graph(const PretrainParams& p, const Tensor& trend,
                              const Tensor& rem) {
  auto ct = ad::constant(trend);
  auto cr = ad::constant(rem);
  return ad::add(ad::linear(ct, p.wt, p.bias), ad::linear(cr, p.wr));
}

inline ad::Value project_graph(const PretrainParams& p, const ad::Value& f) {
  return ad::linear(ad::sigmoid(ad::linear(f, p.pw1, p.pb1)), p.pw2, p.pb2);
}

inline ad::Value pair_loss_graph(const PretrainParams& p, const PairConstants& pc) {
  auto f1 = encode_graph(p, pc.t1, pc.r1);
  auto f2 = encode_graph(p, pc.t2, pc.r2);
  auto z1 = project_graph(p, f1);
  auto z2 = project_graph(p, f2);
  auto lhs = ad::mean(ad::cosine_rows(z1, ad::stopgrad(f2)));
  auto rhs = ad::mean(ad::cosine_rows(ad::stopgrad(f1), z2));
  return ad::scale(ad::add(lhs, rhs), -0.5);
}

/// Mean cosine between the raw encoder outputs of the two views at identical
/// timestamps, over a list of prepared pairs.
inline double overlap_alignment(const BackboneEncoder& enc,
                                const std::vector<PairConstants>& pairs) {
  double acc = 0.0;
  std::size_t count = 0;
  for (const auto& pc : pairs) {
    const std::size_t ov = pc.t1.dim(0);
    for (std::size_t t = 0; t < ov; ++t) {
      double dot = 0.0, na = 0.0, nb = 0.0;
      for (std::size_t j = 0; j < enc.dim; ++j) {
        const double a =
            enc.w_trend[j] * pc.t1[t] + enc.w_remainder[j] * pc.r1[t] + enc.bias[j];
        const double b =
            enc.w_trend[j] * pc.t2[t] + enc.w_remainder[j] * pc.r2[t] + enc.bias[j];
        dot += a * b;
        na += a * a;
        nb += b * b;
      }
      if (na > 1e-24 && nb > 1e-24) {
        acc += dot / (std::sqrt(na) * std::sqrt(nb));
        ++count;
      }
    }
  }
  return count == 0 ? 0.0 : acc / static_cast<double>(count);
}

}  // namespace detail

/// Trains the backbone with identical-timestamp positive pairs only; there is
/// no repulsion term anywhere in the objective. Returns the trained model.
inline PretrainModel pretrain_model(const SeriesMatrix& m, const PretrainConfig& cfg,
                                    std::uint64_t seed, PretrainTrace* trace = nullptr) {
  if (m.t() < 2) throw std::invalid_argument("pretrain: need T >= 2");
  if (cfg.dim == 0 || cfg.batch == 0 || cfg.crops_per_series == 0 || cfg.lr <= 0) {
    throw std::invalid_argument("pretrain: config values must be positive");
  }
  auto rng = make_rng(derive_seed(seed, "pretrain"));

  PretrainModel model;
  model.encoder = BackboneEncoder::init(cfg.dim, cfg.kernel, rng);
  model.projector = Projector::init(cfg.dim, rng);

  detail::PretrainParams params{
      ad::parameter(model.encoder.w_trend, "encoder.w_trend"),
      ad::parameter(model.encoder.w_remainder, "encoder.w_remainder"),
      ad::parameter(model.encoder.bias, "encoder.bias"),
      ad::parameter(model.projector.w1, "projector.w1"),
      ad::parameter(model.projector.b1, "projector.b1"),
      ad::parameter(model.projector.w2, "projector.w2"),
      ad::parameter(model.projector.b2, "projector.b2")};
  ad::Adam opt(params.all(), cfg.lr);

  // Fixed probe pairs for the alignment trace.
  std::vector<detail::PairConstants> probe;
  if (trace) {
    auto probe_rng = make_rng(derive_seed(seed, "pretrain-probe"));
    for (std::size_t i = 0; i < m.n(); ++i) {
      const CropPair c = random_crop_bounded(m.t(), cfg.max_crop_len, probe_rng);
      probe.push_back(detail::prepare_pair(m.values[i], c, cfg.kernel));
    }
    trace->initial_alignment = detail::overlap_alignment(model.encoder, probe);
  }

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<detail::PairConstants> pairs;
    pairs.reserve(m.n() * cfg.crops_per_series);
    for (std::size_t i = 0; i < m.n(); ++i) {
      for (std::size_t c = 0; c < cfg.crops_per_series; ++c) {
        const CropPair crop = random_crop_bounded(m.t(), cfg.max_crop_len, rng);
        pairs.push_back(detail::prepare_pair(m.values[i], crop, cfg.kernel));
      }
    }
    std::shuffle(pairs.begin(), pairs.end(), rng);

    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < pairs.size(); start += cfg.batch) {
      const std::size_t stop = std::min(start + cfg.batch, pairs.size());
      std::vector<ad::Value> losses;
      losses.reserve(stop - start);
      for (std::size_t p = start; p < stop; ++p) {
        losses.push_back(detail::pair_loss_graph(params, pairs[p]));
      }
      auto loss = ad::mean_of(std::move(losses));
      epoch_loss += loss->data[0];
      ++batches;
      opt.zero_grad();
      ad::backward(loss);
      opt.step();
    }
    if (trace) trace->epoch_loss.push_back(epoch_loss / static_cast<double>(batches));
  }

  if (trace) trace->final_alignment = detail::overlap_alignment(model.encoder, probe);
  return model;
}

inline BackboneEncoder pretrain(const SeriesMatrix& m, const PretrainConfig& cfg,
                                std::uint64_t seed, PretrainTrace* trace = nullptr) {
  return pretrain_model(m, cfg, seed, trace).encoder;
}

inline nlohmann::json encoder_checkpoint_json(const PretrainModel& model,
                                              const nlohmann::json& extra_meta = {}) {
  nlohmann::json meta = extra_meta.is_null() ? nlohmann::json::object() : extra_meta;
  meta["kernel"] = model.encoder.kernel;
  meta["dim"] = model.encoder.dim;
  return checkpoint_to_json(
      {{"encoder.w_trend", model.encoder.w_trend},
       {"encoder.w_remainder", model.encoder.w_remainder},
       {"encoder.bias", model.encoder.bias},
       {"projector.w1", model.projector.w1},
       {"projector.b1", model.projector.b1},
       {"projector.w2", model.projector.w2},
       {"projector.b2", model.projector.b2}},
      meta);
}

inline PretrainModel encoder_from_checkpoint(const Checkpoint& ck) {
  PretrainModel model;
  model.encoder.kernel = ck.meta.at("kernel").get<std::size_t>();
  model.encoder.dim = ck.meta.at("dim").get<std::size_t>();
  model.encoder.w_trend = ck.params.at("encoder.w_trend");
  model.encoder.w_remainder = ck.params.at("encoder.w_remainder");
  model.encoder.bias = ck.params.at("encoder.bias");
  model.projector.w1 = ck.params.at("projector.w1");
  model.projector.b1 = ck.params.at("projector.b1");
  model.projector.w2 = ck.params.at("projector.w2");
  model.projector.b2 = ck.params.at("projector.b2");
  return model;
}

}  // namespace rca
