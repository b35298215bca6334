#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace rca {

/// Fraction of cases whose truth appears in the top k of its ranking.
inline double hr_at_k(const std::vector<std::vector<std::string>>& rankings,
                      const std::vector<std::string>& truths, std::size_t k) {
  if (k < 1) throw std::invalid_argument("hr_at_k: k must be >= 1");
  if (rankings.size() != truths.size()) {
    throw std::invalid_argument("hr_at_k: rankings/truths length mismatch");
  }
  if (rankings.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t c = 0; c < rankings.size(); ++c) {
    const auto& r = rankings[c];
    const std::size_t stop = std::min(k, r.size());
    for (std::size_t i = 0; i < stop; ++i) {
      if (r[i] == truths[c]) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(rankings.size());
}

/// Mean reciprocal rank of the truth; a truth absent from its ranking
/// contributes 0.
inline double mrr(const std::vector<std::vector<std::string>>& rankings,
                  const std::vector<std::string>& truths) {
  if (rankings.size() != truths.size()) {
    throw std::invalid_argument("mrr: rankings/truths length mismatch");
  }
  if (rankings.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t c = 0; c < rankings.size(); ++c) {
    const auto& r = rankings[c];
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (r[i] == truths[c]) {
        acc += 1.0 / static_cast<double>(i + 1);
        break;
      }
    }
  }
  return acc / static_cast<double>(rankings.size());
}

}  // namespace rca
