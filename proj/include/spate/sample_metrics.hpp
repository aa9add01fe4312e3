#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "spate/causal_ot.hpp"
#include "spate/tensor.hpp"

namespace spate {

/// n equal-length sample vectors (flattened sequences).
class SampleSet {
 public:
  SampleSet(std::size_t count, std::size_t dimension, std::vector<double> values);
  static SampleSet from_batch(const SpatioTemporalBatch& batch);

  std::size_t size() const noexcept { return count_; }
  std::size_t dimension() const noexcept { return dimension_; }
  std::span<const double> operator[](std::size_t i) const {
    return std::span<const double>(values_).subspan(i * dimension_, dimension_);
  }

 private:
  std::size_t count_;
  std::size_t dimension_;
  std::vector<double> values_;
};

double euclidean_distance(std::span<const double> a, std::span<const double> b);

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method
/// with row/column potentials, O(n^3)). Returns assignment[row] = column.
std::vector<std::size_t> solve_assignment(const Matrix& cost);

/// Earth mover's distance: the SUM (not the mean) of Euclidean distances under
/// the best bijection P -> S.
double emd(const SampleSet& p, const SampleSet& s);

/// exp(-||u - v||^2 / (2 sigma^2)).
double rbf_kernel(std::span<const double> u, std::span<const double> v, double bandwidth);

/// Median pairwise Euclidean distance over the pooled set P u S.
double median_heuristic_bandwidth(const SampleSet& p, const SampleSet& s);

/// Squared MMD: within-set sums skip i == j and are scaled by 1/(n(n-1)); the
/// cross sum covers all n^2 pairs with weight 2/n^2. Can be negative.
double mmd_squared(const SampleSet& p, const SampleSet& s, double bandwidth);

/// 1-NN classifier two-sample test. The pool is P (label 1) then S (label 0);
/// a seeded Fisher-Yates shuffle (index drawn as next() % (i + 1)) orders it,
/// the first floor(N/2) positions train and the rest test. Nearest-neighbor
/// ties go to the lowest training position. Returns test accuracy.
double knn_c2st(const SampleSet& p, const SampleSet& s, std::uint64_t seed);

}  // namespace spate
