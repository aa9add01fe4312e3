#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "spate/expectation.hpp"
#include "spate/tensor.hpp"
#include "spate/weights.hpp"

namespace spate {

/// Which residual the statistic is built on: per-frame mean (local Moran's I)
/// or one of the space-time expectations.
enum class StatisticKind { moran, k, kw, ksw };

std::string_view to_string(StatisticKind kind);
StatisticKind parse_statistic_kind(std::string_view text);

/// Per-pixel, per-frame statistic values for a single-channel batch.
struct SpateField {
  std::size_t batch = 0;
  std::size_t time = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;
  StatisticKind kind = StatisticKind::ksw;
  double lengthscale = 0.0;
  Scheme scheme = Scheme::queen;

  double at(std::size_t b, std::size_t t, std::size_t h, std::size_t w) const {
    return values[((b * time + t) * height + h) * width + w];
  }
  /// The field as a (B, T, 1, H, W) batch.
  SpatioTemporalBatch as_batch() const;
};

/// Local Moran form applied to one frame of residuals z:
///   out_i = (n_i - 1) * z_i / sum_j z_j^2 * sum_{j in N(i)} z_j
/// with the square sum taken over every pixel of the frame. A frame whose
/// square sum is below `guard` yields zeros.
void moran_from_residuals(std::span<const double> residuals, const WeightMatrix& weights,
                          double guard, std::span<double> out);

/// Statistic for one sequence of T frames (n = H*W pixels each). `kind`
/// overrides config.variant; config supplies lengthscale and guard.
void statistic_into(std::span<const double> sequence, std::size_t time, const WeightMatrix& weights,
                    StatisticKind kind, const ExpectationConfig& config, std::span<double> out);

/// Per-frame local Moran's I with residuals taken against each frame's mean.
SpateField local_morans_i(const SpatioTemporalBatch& batch, const WeightMatrix& weights,
                          double guard = 1e-12);

/// SPATE with residuals against the configured space-time expectation.
SpateField spate(const SpatioTemporalBatch& batch, const WeightMatrix& weights,
                 const ExpectationConfig& config);

SpateField compute_statistic(const SpatioTemporalBatch& batch, const WeightMatrix& weights,
                             StatisticKind kind, const ExpectationConfig& config);

/// Channel 0 = data, channel 1 = statistic.
SpatioTemporalBatch concat_embedding(const SpatioTemporalBatch& batch, const SpateField& field);

StatisticKind to_statistic_kind(ExpectationVariant variant);

}  // namespace spate
