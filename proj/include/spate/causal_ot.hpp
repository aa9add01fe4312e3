#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "spate/tensor.hpp"

namespace spate {

/// Dense row-major matrix. As a cost matrix, rows index the first (data)
/// batch and columns the second (generated) batch.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  std::span<const double> data() const noexcept { return data_; }
  double mean() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

using CostMatrix = Matrix;

struct SinkhornConfig {
  /// Entropic regularizer, in cost units.
  double epsilon = 0.8;
  /// Sinkhorn sweeps (one row and one column scaling each).
  std::size_t iterations = 100;
  /// Stop early once the marginal error is <= tolerance; 0 runs every sweep.
  double tolerance = 0.0;

  void validate() const;
};

struct SinkhornResult {
  Matrix plan;
  /// E^pi[c] - eps * H(pi), H(pi) = -sum pi log pi, at the final plan.
  double value = 0.0;
  double transport_cost = 0.0;
  double entropy = 0.0;
  /// Largest absolute deviation of a row or column sum from 1/m.
  double marginal_error = 0.0;
  std::size_t iterations = 0;
};

/// Entropic OT between two uniform empirical measures of equal size. Runs in
/// log-stabilized scaling form: Gibbs kernels are rebuilt around the running
/// dual potentials whenever the scaling vectors leave a safe range, and a
/// half-sweep whose kernel sums underflow is redone as an exact log-sum-exp
/// update.
SinkhornResult sinkhorn(const CostMatrix& cost, const SinkhornConfig& config);

/// (1/m) * min over permutations s of sum_i C(i, s(i)); m <= 8.
double exact_ot_bruteforce(const CostMatrix& cost);

/// Squared Euclidean distance summed over every element of two sequences.
double base_cost(std::span<const double> x, std::span<const double> y);

/// Discriminator outputs for one sequence: h (J x (T-1)) and M (J x T).
struct DiscriminatorEvals {
  std::size_t outputs = 0;
  std::size_t time = 0;
  std::vector<double> h;
  std::vector<double> m;

  DiscriminatorEvals() = default;
  DiscriminatorEvals(std::size_t outputs, std::size_t time)
      : outputs(outputs), time(time), h(outputs * (time - 1), 0.0), m(outputs * time, 0.0) {}

  double h_at(std::size_t j, std::size_t t) const { return h[j * (time - 1) + t]; }
  double& h_at(std::size_t j, std::size_t t) { return h[j * (time - 1) + t]; }
  double m_at(std::size_t j, std::size_t t) const { return m[j * time + t]; }
  double& m_at(std::size_t j, std::size_t t) { return m[j * time + t]; }
};

/// sum_j sum_{t<T-1} h_t^j(y) * (M_{t+1}^j(x) - M_t^j(x)).
double causal_term(const DiscriminatorEvals& x_evals, const DiscriminatorEvals& y_evals);

/// c(x, y) plus the causal term, M read from x's evals and h from y's.
double causal_cost(std::span<const double> x, std::span<const double> y,
                   const DiscriminatorEvals& x_evals, const DiscriminatorEvals& y_evals);

CostMatrix base_cost_matrix(const SpatioTemporalBatch& rows, const SpatioTemporalBatch& cols);
CostMatrix causal_cost_matrix(const SpatioTemporalBatch& rows, const SpatioTemporalBatch& cols,
                              std::span<const DiscriminatorEvals> row_evals,
                              std::span<const DiscriminatorEvals> col_evals);
/// Adds the causal term to an already computed base cost matrix.
CostMatrix add_causal_terms(const CostMatrix& base, std::span<const DiscriminatorEvals> row_evals,
                            std::span<const DiscriminatorEvals> col_evals);

/// Batch-level martingale penalty
///   (1/(mT)) sum_j sum_{t<T-1} | sum_d (M_{t+1}^j - M_t^j) / (sqrt(Var[M^j]) + eta) |
/// with Var the population variance over all m*T values of M^j.
double martingale_penalty(std::span<const DiscriminatorEvals> batch_evals, double eta);

struct MixedDivergence {
  double value = 0.0;
  /// W(a, b), W(a', b'), W(a, a'), W(b, b').
  double terms[4] = {0.0, 0.0, 0.0, 0.0};
  double max_marginal_error = 0.0;
  std::size_t iterations = 0;
};

/// W(a,b) + W(a',b') - W(a,a') - W(b,b') from the four cost matrices.
MixedDivergence mixed_sinkhorn_from_costs(const CostMatrix& c_ab, const CostMatrix& c_ab2,
                                          const CostMatrix& c_aa2, const CostMatrix& c_bb2,
                                          const SinkhornConfig& config);

/// Mixed divergence with the base cost; a, a2 are data and b, b2 generated.
MixedDivergence mixed_sinkhorn_divergence(const SpatioTemporalBatch& a, const SpatioTemporalBatch& b,
                                          const SpatioTemporalBatch& a2,
                                          const SpatioTemporalBatch& b2,
                                          const SinkhornConfig& config);

/// Batch-wise discriminator outputs, one entry per item of each batch.
struct BatchEvals {
  std::span<const DiscriminatorEvals> a, b, a2, b2;
};

/// Mixed divergence with the causal cost.
MixedDivergence mixed_sinkhorn_divergence(const SpatioTemporalBatch& a, const SpatioTemporalBatch& b,
                                          const SpatioTemporalBatch& a2,
                                          const SpatioTemporalBatch& b2, const BatchEvals& evals,
                                          const SinkhornConfig& config);

}  // namespace spate
