#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rca/tensor.hpp"

namespace rca {

/// N named KPI series over T shared timestamps. Row i holds names[i].
/// Immutable by convention once built; all values are finite.
struct SeriesMatrix {
  std::vector<std::string> names;
  std::vector<std::vector<double>> values;  // N rows, each of length T

  std::size_t n() const { return names.size(); }
  std::size_t t() const { return values.empty() ? 0 : values[0].size(); }

  const std::vector<double>& row(std::size_t i) const { return values.at(i); }

  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return i;
    throw std::invalid_argument("SeriesMatrix: unknown series '" + name + "'");
  }
};

struct IngestOptions {
  enum class Missing { kError, kForwardFill };
  Missing missing = Missing::kForwardFill;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    // trim surrounding whitespace
    const auto begin = cell.find_first_not_of(" \t\r");
    const auto end = cell.find_last_not_of(" \t\r");
    cells.push_back(begin == std::string::npos ? "" : cell.substr(begin, end - begin + 1));
  }
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

inline bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

}  // namespace detail

/// Reads a CSV whose header row names the series and whose data rows are one
/// timestamp each. Cells that are empty or not finite numbers count as
/// missing and are forward-filled (or rejected, per options).
inline SeriesMatrix ingest_csv(std::istream& in, const IngestOptions& opts = {}) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("ingest: empty input");
  SeriesMatrix m;
  m.names = detail::split_csv_line(line);
  if (m.names.size() < 2) {
    throw std::runtime_error("ingest: need at least 2 series, got " +
                             std::to_string(m.names.size()));
  }
  {
    std::set<std::string> uniq(m.names.begin(), m.names.end());
    if (uniq.size() != m.names.size()) {
      throw std::runtime_error("ingest: duplicate series name in header");
    }
  }
  const std::size_t n = m.names.size();
  m.values.assign(n, {});

  std::size_t row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != n) {
      throw std::runtime_error("ingest: row " + std::to_string(row_no) + " has " +
                               std::to_string(cells.size()) + " cells, expected " +
                               std::to_string(n));
    }
    for (std::size_t i = 0; i < n; ++i) {
      double v;
      if (detail::parse_double(cells[i], v)) {
        m.values[i].push_back(v);
      } else if (opts.missing == IngestOptions::Missing::kForwardFill &&
                 !m.values[i].empty()) {
        m.values[i].push_back(m.values[i].back());
      } else if (opts.missing == IngestOptions::Missing::kForwardFill) {
        throw std::runtime_error("ingest: series '" + m.names[i] +
                                 "' starts with a missing value (row " +
                                 std::to_string(row_no) + "); cannot forward-fill");
      } else {
        throw std::runtime_error("ingest: non-numeric cell for series '" + m.names[i] +
                                 "' at row " + std::to_string(row_no));
      }
    }
  }
  if (m.t() < 2) throw std::runtime_error("ingest: need at least 2 timestamps");
  return m;
}

inline SeriesMatrix ingest_csv(const std::string& path, const IngestOptions& opts = {}) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("ingest: cannot open " + path);
  return ingest_csv(in, opts);
}

inline nlohmann::json series_to_json(const SeriesMatrix& m) {
  nlohmann::json j;
  j["names"] = m.names;
  j["values"] = m.values;
  return j;
}

inline SeriesMatrix series_from_json(const nlohmann::json& j) {
  SeriesMatrix m;
  m.names = j.at("names").get<std::vector<std::string>>();
  m.values = j.at("values").get<std::vector<std::vector<double>>>();
  if (m.names.size() != m.values.size()) {
    throw std::runtime_error("series json: names/values size mismatch");
  }
  return m;
}

/// 1-based inclusive timestamp range, mirroring the index convention used by
/// the crop bounds below.
struct IndexRange {
  std::size_t first = 1;
  std::size_t last = 0;

  std::size_t length() const { return last >= first ? last - first + 1 : 0; }
};

/// Per-series mean and standard deviation over a reference range. The stored
/// deviation is floored at 1e-8 so normalization never divides by zero.
struct NormalizationStats {
  std::vector<double> mean;
  std::vector<double> stddev;

  static constexpr double kStdFloor = 1e-8;
};

inline NormalizationStats compute_stats(const SeriesMatrix& m, IndexRange ref) {
  if (ref.length() == 0 || ref.first < 1 || ref.last > m.t()) {
    throw std::invalid_argument("normalize: empty or out-of-range reference range");
  }
  NormalizationStats st;
  st.mean.resize(m.n());
  st.stddev.resize(m.n());
  const std::size_t len = ref.length();
  for (std::size_t i = 0; i < m.n(); ++i) {
    double mu = 0.0;
    for (std::size_t t = ref.first - 1; t < ref.last; ++t) mu += m.values[i][t];
    mu /= static_cast<double>(len);
    double var = 0.0;
    for (std::size_t t = ref.first - 1; t < ref.last; ++t) {
      const double d = m.values[i][t] - mu;
      var += d * d;
    }
    var /= static_cast<double>(len);  // population variance
    st.mean[i] = mu;
    st.stddev[i] = std::max(std::sqrt(var), NormalizationStats::kStdFloor);
  }
  return st;
}

/// Z-scores every series with stats from the reference range.
inline std::pair<SeriesMatrix, NormalizationStats> normalize(const SeriesMatrix& m,
                                                             IndexRange ref) {
  NormalizationStats st = compute_stats(m, ref);
  SeriesMatrix out;
  out.names = m.names;
  out.values.resize(m.n());
  for (std::size_t i = 0; i < m.n(); ++i) {
    out.values[i].resize(m.t());
    for (std::size_t t = 0; t < m.t(); ++t) {
      out.values[i][t] = (m.values[i][t] - st.mean[i]) / st.stddev[i];
    }
  }
  return {std::move(out), std::move(st)};
}

/// Two overlapping segments y1=[a1,b1], y2=[a2,b2] with 1-based inclusive
/// bounds satisfying 0 < a1 <= a2 <= b1 <= b2 <= T. The overlap [a2,b1] is
/// never empty.
struct CropPair {
  std::size_t a1 = 0, a2 = 0, b1 = 0, b2 = 0;

  bool valid(std::size_t t_len) const {
    return a1 >= 1 && a1 <= a2 && a2 <= b1 && b1 <= b2 && b2 <= t_len;
  }
  std::size_t overlap_len() const { return b1 - a2 + 1; }
};

/// Draws a crop pair by sorting four uniform indices; every admissible tuple
/// has positive probability.
inline CropPair random_crop(std::size_t t_len, std::mt19937_64& rng) {
  if (t_len < 2) throw std::invalid_argument("random_crop: need T >= 2");
  std::uniform_int_distribution<std::size_t> dist(1, t_len);
  std::size_t v[4] = {dist(rng), dist(rng), dist(rng), dist(rng)};
  std::sort(v, v + 4);
  return CropPair{v[0], v[1], v[2], v[3]};
}

/// Like random_crop but confined to a random anchor window of at most
/// max_len timestamps; bounds still refer to the full series.
inline CropPair random_crop_bounded(std::size_t t_len, std::size_t max_len,
                                    std::mt19937_64& rng) {
  if (max_len < 2) max_len = 2;
  if (t_len <= max_len) return random_crop(t_len, rng);
  std::uniform_int_distribution<std::size_t> anchor(0, t_len - max_len);
  const std::size_t off = anchor(rng);
  CropPair c = random_crop(max_len, rng);
  c.a1 += off;
  c.a2 += off;
  c.b1 += off;
  c.b2 += off;
  return c;
}

/// History windows plus next-step targets: inputs {S, N, w}, targets {S, N}.
/// Sample s pairs window x^{t-w..t-1} with target x^t for t = w+1+s.
struct WindowBatch {
  Tensor inputs;
  Tensor targets;
  std::size_t window = 0;

  std::size_t samples() const { return inputs.empty() ? 0 : inputs.dim(0); }
  std::size_t series() const { return inputs.empty() ? 0 : inputs.dim(1); }
};

inline WindowBatch sliding_windows(const SeriesMatrix& m, std::size_t w) {
  if (w == 0) throw std::invalid_argument("sliding_windows: window must be positive");
  if (m.t() <= w) {
    throw std::invalid_argument("sliding_windows: need T > w (T=" + std::to_string(m.t()) +
                                ", w=" + std::to_string(w) + ")");
  }
  const std::size_t s = m.t() - w;
  const std::size_t n = m.n();
  WindowBatch b;
  b.window = w;
  b.inputs = Tensor({s, n, w});
  b.targets = Tensor({s, n});
  double* in = b.inputs.data();
  double* tg = b.targets.data();
  for (std::size_t k = 0; k < s; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      const double* src = m.values[i].data() + k;
      double* dst = in + (k * n + i) * w;
      std::copy(src, src + w, dst);
      tg[k * n + i] = m.values[i][k + w];
    }
  }
  return b;
}

}  // namespace rca
