#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>

namespace gsvie {

/// Pairwise (cascade) summation with a fixed split rule, so the result
/// depends only on the values and their order.
inline double pairwise_sum(std::span<const double> v) {
  constexpr std::size_t kLeaf = 16;
  if (v.size() <= kLeaf) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

struct SampleMoments {
  double mean = 0.0;
  double std_error = 0.0;
};

/// Sample mean and standard error of the mean.
///
/// The mean is clamped into [min, max] of the samples. Rounding is monotone,
/// so the clamped mean is monotone in the data and reproduces a constant
/// sample exactly.
inline SampleMoments sample_moments(std::span<const double> v) {
  SampleMoments m;
  if (v.empty()) return m;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  m.mean = std::clamp(pairwise_sum(v) / n, *lo, *hi);
  if (v.size() > 1 && *lo != *hi) {
    double ss = 0.0;
    for (double x : v) {
      const double d = x - m.mean;
      ss += d * d;
    }
    m.std_error = std::sqrt(ss / (n - 1.0) / n);
  }
  return m;
}

}  // namespace gsvie
