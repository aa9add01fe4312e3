#include "spate/causal_ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "dot.hpp"
#include "spate/error.hpp"

namespace spate {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) throw ShapeError("matrix data does not match shape");
}

double Matrix::mean() const {
  if (data_.empty()) return 0.0;
  return std::accumulate(data_.begin(), data_.end(), 0.0) / static_cast<double>(data_.size());
}

void SinkhornConfig::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ValidationError("epsilon must be > 0");
  if (iterations < 1) throw ValidationError("Sinkhorn needs at least one iteration");
  if (!(tolerance >= 0.0)) throw ValidationError("tolerance must be >= 0");
}

namespace {

// Scalings outside [1/kScaleLimit, kScaleLimit] are folded into the potentials.
constexpr double kScaleLimit = 1e100;
// Kernel sums below this are treated as underflowed.
constexpr double kSumFloor = 1e-200;

class StabilizedSinkhorn {
 public:
  StabilizedSinkhorn(const CostMatrix& cost, double epsilon)
      : cost_(cost),
        m_(cost.rows()),
        eps_(epsilon),
        target_(1.0 / static_cast<double>(m_)),
        log_target_(-std::log(static_cast<double>(m_))),
        f_(m_, 0.0),
        g_(m_, 0.0),
        u_(m_, 1.0),
        v_(m_, 1.0),
        kernel_(m_ * m_),
        sums_(m_) {
    rebuild();
  }

  void row_sweep() {
    const double* k = kernel_.data();
    bool healthy = true;
    for (std::size_t i = 0; i < m_; ++i) {
      const double s = detail::dot(k + i * m_, v_.data(), m_);
      sums_[i] = s;
      healthy = healthy && healthy_sum(s);
    }
    if (!healthy) {
      exact_row_update();
      return;
    }
    for (std::size_t i = 0; i < m_; ++i) {
      u_[i] = target_ / sums_[i];
      out_of_range_ = out_of_range_ || out_of_range(u_[i]);
    }
  }

  void col_sweep() {
    const double* k = kernel_.data();
    double* sums = sums_.data();
    for (std::size_t j = 0; j < m_; ++j) sums[j] = k[j] * u_[0];
    for (std::size_t i = 1; i < m_; ++i) {
      const double ui = u_[i];
      const double* row = k + i * m_;
      for (std::size_t j = 0; j < m_; ++j) sums[j] += row[j] * ui;
    }
    bool healthy = true;
    for (std::size_t j = 0; j < m_; ++j) healthy = healthy && healthy_sum(sums[j]);
    if (!healthy) {
      exact_col_update();
      return;
    }
    for (std::size_t j = 0; j < m_; ++j) {
      v_[j] = target_ / sums[j];
      out_of_range_ = out_of_range_ || out_of_range(v_[j]);
    }
  }

  void stabilize() {
    if (out_of_range_) absorb();
  }

  double marginal_error() const {
    double worst = 0.0;
    std::vector<double> cols(m_, 0.0);
    for (std::size_t i = 0; i < m_; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < m_; ++j) {
        const double p = u_[i] * kernel_[i * m_ + j] * v_[j];
        row += p;
        cols[j] += p;
      }
      worst = std::max(worst, std::abs(row - target_));
    }
    for (const double c : cols) worst = std::max(worst, std::abs(c - target_));
    return worst;
  }

  SinkhornResult finish(std::size_t iterations) {
    absorb();
    SinkhornResult result;
    result.iterations = iterations;
    result.plan = Matrix(m_, m_, kernel_);
    double transport = 0.0;
    double plogp = 0.0;
    for (std::size_t i = 0; i < m_; ++i) {
      for (std::size_t j = 0; j < m_; ++j) {
        const double p = kernel_[i * m_ + j];
        const double log_p = (f_[i] + g_[j] - cost_(i, j)) / eps_;
        transport += p * cost_(i, j);
        if (p > 0.0) plogp += p * log_p;
      }
    }
    result.transport_cost = transport;
    result.entropy = -plogp;
    result.value = transport + eps_ * plogp;
    result.marginal_error = marginal_error();
    if (!std::isfinite(result.value) || !std::isfinite(result.marginal_error)) {
      throw NumericalError("Sinkhorn produced a non-finite value");
    }
    return result;
  }

 private:
  // NaN fails both comparisons.
  static bool healthy_sum(double s) {
    return s > kSumFloor && s <= std::numeric_limits<double>::max();
  }
  static bool out_of_range(double s) { return s > kScaleLimit || s < 1.0 / kScaleLimit; }

  void rebuild() {
    for (std::size_t i = 0; i < m_; ++i) {
      for (std::size_t j = 0; j < m_; ++j) {
        kernel_[i * m_ + j] = std::exp((f_[i] + g_[j] - cost_(i, j)) / eps_);
      }
    }
  }

  void absorb() {
    out_of_range_ = false;
    for (std::size_t i = 0; i < m_; ++i) {
      f_[i] += eps_ * std::log(u_[i]);
      u_[i] = 1.0;
    }
    for (std::size_t j = 0; j < m_; ++j) {
      g_[j] += eps_ * std::log(v_[j]);
      v_[j] = 1.0;
    }
    rebuild();
  }

  // f_i = eps * (log a - LSE_j (g_j - C_ij) / eps)
  void exact_row_update() {
    out_of_range_ = false;
    for (std::size_t j = 0; j < m_; ++j) {
      g_[j] += eps_ * std::log(v_[j]);
      v_[j] = 1.0;
    }
    for (std::size_t i = 0; i < m_; ++i) {
      double top = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < m_; ++j) top = std::max(top, (g_[j] - cost_(i, j)) / eps_);
      double s = 0.0;
      for (std::size_t j = 0; j < m_; ++j) s += std::exp((g_[j] - cost_(i, j)) / eps_ - top);
      f_[i] = eps_ * (log_target_ - top - std::log(s));
      u_[i] = 1.0;
    }
    rebuild();
  }

  void exact_col_update() {
    out_of_range_ = false;
    for (std::size_t i = 0; i < m_; ++i) {
      f_[i] += eps_ * std::log(u_[i]);
      u_[i] = 1.0;
    }
    for (std::size_t j = 0; j < m_; ++j) {
      double top = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < m_; ++i) top = std::max(top, (f_[i] - cost_(i, j)) / eps_);
      double s = 0.0;
      for (std::size_t i = 0; i < m_; ++i) s += std::exp((f_[i] - cost_(i, j)) / eps_ - top);
      g_[j] = eps_ * (log_target_ - top - std::log(s));
      v_[j] = 1.0;
    }
    rebuild();
  }

  const CostMatrix& cost_;
  std::size_t m_;
  double eps_;
  double target_;
  double log_target_;
  std::vector<double> f_, g_, u_, v_, kernel_, sums_;
  bool out_of_range_ = false;
};

}  // namespace

SinkhornResult sinkhorn(const CostMatrix& cost, const SinkhornConfig& config) {
  config.validate();
  if (cost.rows() != cost.cols() || cost.rows() == 0) {
    throw ShapeError("Sinkhorn needs a non-empty square cost matrix");
  }
  for (const double c : cost.data()) {
    if (!std::isfinite(c)) throw NumericalError("cost matrix has a non-finite entry");
  }
  StabilizedSinkhorn solver(cost, config.epsilon);
  std::size_t done = 0;
  while (done < config.iterations) {
    solver.row_sweep();
    solver.col_sweep();
    solver.stabilize();
    ++done;
    if (config.tolerance > 0.0 && solver.marginal_error() <= config.tolerance) break;
  }
  return solver.finish(done);
}

double exact_ot_bruteforce(const CostMatrix& cost) {
  const std::size_t m = cost.rows();
  if (cost.cols() != m || m == 0) throw ShapeError("brute-force OT needs a square cost matrix");
  if (m > 8) throw ValidationError("brute-force OT refuses m > 8");
  std::vector<std::size_t> perm(m);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) total += cost(i, perm[i]);
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(m);
}

double base_cost(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("base cost needs sequences of equal size");
  return detail::squared_distance(x.data(), y.data(), x.size());
}

double causal_term(const DiscriminatorEvals& x_evals, const DiscriminatorEvals& y_evals) {
  if (x_evals.outputs != y_evals.outputs || x_evals.time != y_evals.time) {
    throw ShapeError("discriminator evals disagree on J or T");
  }
  double total = 0.0;
  for (std::size_t j = 0; j < x_evals.outputs; ++j) {
    for (std::size_t t = 0; t + 1 < x_evals.time; ++t) {
      total += y_evals.h_at(j, t) * (x_evals.m_at(j, t + 1) - x_evals.m_at(j, t));
    }
  }
  return total;
}

double causal_cost(std::span<const double> x, std::span<const double> y,
                   const DiscriminatorEvals& x_evals, const DiscriminatorEvals& y_evals) {
  return base_cost(x, y) + causal_term(x_evals, y_evals);
}

CostMatrix base_cost_matrix(const SpatioTemporalBatch& rows, const SpatioTemporalBatch& cols) {
  if (rows.dims().sequence_size() != cols.dims().sequence_size()) {
    throw ShapeError("cost matrix needs batches with equal sequence shapes");
  }
  CostMatrix c(rows.dims().batch, cols.dims().batch);
  for (std::size_t i = 0; i < c.rows(); ++i) {
    for (std::size_t j = 0; j < c.cols(); ++j) c(i, j) = base_cost(rows.sequence(i), cols.sequence(j));
  }
  return c;
}

CostMatrix add_causal_terms(const CostMatrix& base, std::span<const DiscriminatorEvals> row_evals,
                            std::span<const DiscriminatorEvals> col_evals) {
  if (row_evals.size() != base.rows() || col_evals.size() != base.cols()) {
    throw ShapeError("one discriminator eval per batch item is required");
  }
  CostMatrix c = base;
  for (std::size_t i = 0; i < c.rows(); ++i) {
    for (std::size_t j = 0; j < c.cols(); ++j) c(i, j) += causal_term(row_evals[i], col_evals[j]);
  }
  return c;
}

CostMatrix causal_cost_matrix(const SpatioTemporalBatch& rows, const SpatioTemporalBatch& cols,
                              std::span<const DiscriminatorEvals> row_evals,
                              std::span<const DiscriminatorEvals> col_evals) {
  return add_causal_terms(base_cost_matrix(rows, cols), row_evals, col_evals);
}

double martingale_penalty(std::span<const DiscriminatorEvals> evals, double eta) {
  if (!(eta > 0.0)) throw ValidationError("eta must be > 0");
  if (evals.empty()) throw ValidationError("martingale penalty needs a non-empty batch");
  const std::size_t outputs = evals.front().outputs;
  const std::size_t time = evals.front().time;
  for (const auto& e : evals) {
    if (e.outputs != outputs || e.time != time) throw ShapeError("inconsistent discriminator evals");
  }
  const auto count = static_cast<double>(evals.size() * time);
  double penalty = 0.0;
  for (std::size_t j = 0; j < outputs; ++j) {
    double mean = 0.0;
    for (const auto& e : evals) {
      for (std::size_t t = 0; t < time; ++t) mean += e.m_at(j, t);
    }
    mean /= count;
    double var = 0.0;
    for (const auto& e : evals) {
      for (std::size_t t = 0; t < time; ++t) {
        const double d = e.m_at(j, t) - mean;
        var += d * d;
      }
    }
    var /= count;
    const double scale = std::sqrt(var) + eta;
    for (std::size_t t = 0; t + 1 < time; ++t) {
      double increment = 0.0;
      for (const auto& e : evals) increment += (e.m_at(j, t + 1) - e.m_at(j, t)) / scale;
      penalty += std::abs(increment);
    }
  }
  return penalty / count;
}

MixedDivergence mixed_sinkhorn_from_costs(const CostMatrix& c_ab, const CostMatrix& c_ab2,
                                          const CostMatrix& c_aa2, const CostMatrix& c_bb2,
                                          const SinkhornConfig& config) {
  MixedDivergence out;
  const CostMatrix* costs[4] = {&c_ab, &c_ab2, &c_aa2, &c_bb2};
  for (int k = 0; k < 4; ++k) {
    const SinkhornResult r = sinkhorn(*costs[k], config);
    out.terms[k] = r.value;
    out.max_marginal_error = std::max(out.max_marginal_error, r.marginal_error);
    out.iterations = std::max(out.iterations, r.iterations);
  }
  out.value = out.terms[0] + out.terms[1] - out.terms[2] - out.terms[3];
  return out;
}

namespace {

void check_quadruple(const SpatioTemporalBatch& a, const SpatioTemporalBatch& b,
                     const SpatioTemporalBatch& a2, const SpatioTemporalBatch& b2) {
  if (!(a.dims() == b.dims() && a.dims() == a2.dims() && a.dims() == b2.dims())) {
    throw ShapeError("mixed divergence needs four batches with identical dims");
  }
}

}  // namespace

MixedDivergence mixed_sinkhorn_divergence(const SpatioTemporalBatch& a, const SpatioTemporalBatch& b,
                                          const SpatioTemporalBatch& a2,
                                          const SpatioTemporalBatch& b2,
                                          const SinkhornConfig& config) {
  check_quadruple(a, b, a2, b2);
  return mixed_sinkhorn_from_costs(base_cost_matrix(a, b), base_cost_matrix(a2, b2),
                                   base_cost_matrix(a, a2), base_cost_matrix(b, b2), config);
}

MixedDivergence mixed_sinkhorn_divergence(const SpatioTemporalBatch& a, const SpatioTemporalBatch& b,
                                          const SpatioTemporalBatch& a2,
                                          const SpatioTemporalBatch& b2, const BatchEvals& evals,
                                          const SinkhornConfig& config) {
  check_quadruple(a, b, a2, b2);
  return mixed_sinkhorn_from_costs(causal_cost_matrix(a, b, evals.a, evals.b),
                                   causal_cost_matrix(a2, b2, evals.a2, evals.b2),
                                   causal_cost_matrix(a, a2, evals.a, evals.a2),
                                   causal_cost_matrix(b, b2, evals.b, evals.b2), config);
}

}  // namespace spate
