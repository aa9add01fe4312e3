#pragma once

#include <cstddef>

namespace spate::detail {

// Four interleaved partial sums, combined as (s0 + s1) + (s2 + s3).
inline double dot(const double* a, const double* b, std::size_t n) noexcept {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    s0 += a[k] * b[k];
    s1 += a[k + 1] * b[k + 1];
    s2 += a[k + 2] * b[k + 2];
    s3 += a[k + 3] * b[k + 3];
  }
  for (; k < n; ++k) s0 += a[k] * b[k];
  return (s0 + s1) + (s2 + s3);
}

inline double squared_distance(const double* a, const double* b, std::size_t n) noexcept {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    const double d0 = a[k] - b[k];
    const double d1 = a[k + 1] - b[k + 1];
    const double d2 = a[k + 2] - b[k + 2];
    const double d3 = a[k + 3] - b[k + 3];
    s0 += d0 * d0;
    s1 += d1 * d1;
    s2 += d2 * d2;
    s3 += d3 * d3;
  }
  for (; k < n; ++k) {
    const double d = a[k] - b[k];
    s0 += d * d;
  }
  return (s0 + s1) + (s2 + s3);
}

}  // namespace spate::detail
