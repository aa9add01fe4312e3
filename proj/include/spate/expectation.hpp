#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "spate/tensor.hpp"

namespace spate {

/// Space-time expectation families: Kulldorff (k), kernel-weighted (kw), and
/// kernel-weighted over strictly earlier frames (ksw).
enum class ExpectationVariant { k, kw, ksw };

std::string_view to_string(ExpectationVariant variant);
ExpectationVariant parse_expectation_variant(std::string_view text);

struct ExpectationConfig {
  ExpectationVariant variant = ExpectationVariant::ksw;
  /// Exponential kernel lengthscale, in time steps.
  double lengthscale = 20.0;
  /// Ratios whose denominator has magnitude <= this raise DegenerateError.
  double denominator_guard = 1e-12;

  void validate() const;
};

/// b_{tt'} = exp(-|t - t'| / l).
double temporal_kernel(double t, double t_prime, double lengthscale);

/// Expected values mu_it for every item of a single-channel batch.
struct ExpectationField {
  std::size_t batch = 0;
  std::size_t time = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;
  /// Per time step; false where the variant defines no expectation (ksw, t = 0).
  std::vector<bool> valid;

  double at(std::size_t b, std::size_t t, std::size_t h, std::size_t w) const {
    return values[((b * time + t) * height + h) * width + w];
  }
};

/// mu for one sequence stored as T frames of n pixels. Writes T*n values into
/// `mu`. Under ksw, frame 0 is filled with the data itself so its residual is 0.
void expectation_into(std::span<const double> sequence, std::size_t time, std::size_t pixels,
                      const ExpectationConfig& config, std::span<double> mu);

ExpectationField compute_expectation(const SpatioTemporalBatch& batch, const ExpectationConfig& config);
ExpectationField expectation_k(const SpatioTemporalBatch& batch, double denominator_guard = 1e-12);
ExpectationField expectation_kw(const SpatioTemporalBatch& batch, double lengthscale,
                                double denominator_guard = 1e-12);
ExpectationField expectation_ksw(const SpatioTemporalBatch& batch, double lengthscale,
                                 double denominator_guard = 1e-12);

}  // namespace spate
