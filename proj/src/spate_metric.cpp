#include "spate/spate_metric.hpp"

#include <algorithm>
#include <string>

#include "spate/error.hpp"

namespace spate {

std::string_view to_string(StatisticKind kind) {
  switch (kind) {
    case StatisticKind::moran:
      return "moran";
    case StatisticKind::k:
      return "k";
    case StatisticKind::kw:
      return "kw";
    case StatisticKind::ksw:
      return "ksw";
  }
  return "?";
}

StatisticKind parse_statistic_kind(std::string_view text) {
  if (text == "moran") return StatisticKind::moran;
  return to_statistic_kind(parse_expectation_variant(text));
}

StatisticKind to_statistic_kind(ExpectationVariant variant) {
  switch (variant) {
    case ExpectationVariant::k:
      return StatisticKind::k;
    case ExpectationVariant::kw:
      return StatisticKind::kw;
    case ExpectationVariant::ksw:
      return StatisticKind::ksw;
  }
  return StatisticKind::ksw;
}

SpatioTemporalBatch SpateField::as_batch() const {
  return SpatioTemporalBatch(Dims{batch, time, 1, height, width}, values);
}

void moran_from_residuals(std::span<const double> z, const WeightMatrix& weights, double guard,
                          std::span<double> out) {
  const std::size_t n = weights.size();
  double square_sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) square_sum += z[j] * z[j];
  if (square_sum < guard) {
    std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(n), 0.0);
    return;
  }
  for (std::size_t i = 0; i < n; ++i) {
    double lag = 0.0;
    for (const std::uint32_t j : weights.neighbors(i)) lag += z[j];
    const auto ni = static_cast<double>(weights.neighbor_count(i));
    out[i] = (ni - 1.0) * z[i] / square_sum * lag;
  }
}

void statistic_into(std::span<const double> x, std::size_t time, const WeightMatrix& weights,
                    StatisticKind kind, const ExpectationConfig& config, std::span<double> out) {
  const std::size_t n = weights.size();
  if (x.size() != time * n || out.size() != time * n) {
    throw ShapeError("sequence does not match weight grid " + std::to_string(weights.height()) +
                     "x" + std::to_string(weights.width()));
  }
  std::vector<double> residual(time * n);
  if (kind == StatisticKind::moran) {
    for (std::size_t t = 0; t < time; ++t) {
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) mean += x[t * n + i];
      mean /= static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) residual[t * n + i] = x[t * n + i] - mean;
    }
  } else {
    ExpectationConfig cfg = config;
    cfg.variant = kind == StatisticKind::k    ? ExpectationVariant::k
                  : kind == StatisticKind::kw ? ExpectationVariant::kw
                                              : ExpectationVariant::ksw;
    expectation_into(x, time, n, cfg, residual);
    for (std::size_t i = 0; i < time * n; ++i) residual[i] = x[i] - residual[i];
  }
  for (std::size_t t = 0; t < time; ++t) {
    moran_from_residuals(std::span<const double>(residual).subspan(t * n, n), weights,
                         config.denominator_guard, out.subspan(t * n, n));
  }
  if (kind == StatisticKind::ksw) {
    // z_{i0} is exactly zero by construction; make the convention explicit.
    std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(n), 0.0);
  }
}

SpateField compute_statistic(const SpatioTemporalBatch& batch, const WeightMatrix& weights,
                             StatisticKind kind, const ExpectationConfig& config) {
  const Dims& d = batch.dims();
  if (d.channels != 1) throw ShapeError("statistic needs a single-channel batch");
  if (d.height != weights.height() || d.width != weights.width()) {
    throw ShapeError("weight grid " + std::to_string(weights.height()) + "x" +
                     std::to_string(weights.width()) + " does not match frames " +
                     std::to_string(d.height) + "x" + std::to_string(d.width));
  }
  SpateField field;
  field.batch = d.batch;
  field.time = d.time;
  field.height = d.height;
  field.width = d.width;
  field.values.resize(d.size());
  field.kind = kind;
  field.lengthscale = kind == StatisticKind::moran ? 0.0 : config.lengthscale;
  field.scheme = weights.scheme();
  for (std::size_t b = 0; b < d.batch; ++b) {
    statistic_into(batch.sequence(b), d.time, weights, kind, config,
                   std::span<double>(field.values).subspan(b * d.sequence_size(), d.sequence_size()));
  }
  return field;
}

SpateField local_morans_i(const SpatioTemporalBatch& batch, const WeightMatrix& weights,
                          double guard) {
  ExpectationConfig cfg;
  cfg.denominator_guard = guard;
  return compute_statistic(batch, weights, StatisticKind::moran, cfg);
}

SpateField spate(const SpatioTemporalBatch& batch, const WeightMatrix& weights,
                 const ExpectationConfig& config) {
  return compute_statistic(batch, weights, to_statistic_kind(config.variant), config);
}

SpatioTemporalBatch concat_embedding(const SpatioTemporalBatch& batch, const SpateField& field) {
  const Dims& d = batch.dims();
  if (d.channels != 1 || field.batch != d.batch || field.time != d.time ||
      field.height != d.height || field.width != d.width) {
    throw ShapeError("embedding shape does not match data");
  }
  Dims out_dims = d;
  out_dims.channels = 2;
  std::vector<double> out;
  out.reserve(out_dims.size());
  const std::size_t n = d.pixels();
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t t = 0; t < d.time; ++t) {
      const auto data = batch.frame(b, t, 0);
      out.insert(out.end(), data.begin(), data.end());
      const auto stat = field.values.begin() + static_cast<std::ptrdiff_t>((b * d.time + t) * n);
      out.insert(out.end(), stat, stat + static_cast<std::ptrdiff_t>(n));
    }
  }
  return SpatioTemporalBatch(out_dims, std::move(out));
}

}  // namespace spate
