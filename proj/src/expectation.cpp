#include "spate/expectation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "spate/error.hpp"

namespace spate {

std::string_view to_string(ExpectationVariant variant) {
  switch (variant) {
    case ExpectationVariant::k:
      return "k";
    case ExpectationVariant::kw:
      return "kw";
    case ExpectationVariant::ksw:
      return "ksw";
  }
  return "?";
}

ExpectationVariant parse_expectation_variant(std::string_view text) {
  if (text == "k") return ExpectationVariant::k;
  if (text == "kw") return ExpectationVariant::kw;
  if (text == "ksw") return ExpectationVariant::ksw;
  throw ValidationError("unknown expectation variant '" + std::string(text) + "'");
}

void ExpectationConfig::validate() const {
  if (!(lengthscale > 0.0) || !std::isfinite(lengthscale)) {
    throw ValidationError("lengthscale must be positive and finite");
  }
  if (!(denominator_guard > 0.0)) throw ValidationError("denominator guard must be positive");
}

double temporal_kernel(double t, double t_prime, double lengthscale) {
  return std::exp(-std::abs(t - t_prime) / lengthscale);
}

namespace {

void check_denominator(double value, double guard, std::size_t t) {
  if (!(std::abs(value) > guard)) {
    throw DegenerateError("expectation denominator " + std::to_string(value) + " at t=" +
                          std::to_string(t) + " is within the guard band");
  }
}

}  // namespace

void expectation_into(std::span<const double> x, std::size_t time, std::size_t pixels,
                      const ExpectationConfig& config, std::span<double> mu) {
  config.validate();
  if (x.size() != time * pixels || mu.size() != time * pixels) {
    throw ShapeError("expectation buffers do not match T*n");
  }
  if (config.variant == ExpectationVariant::ksw && time < 2) {
    throw ValidationError("ksw expectation needs at least two time steps");
  }

  // Frame totals sum_j x_jt.
  std::vector<double> frame_total(time, 0.0);
  for (std::size_t t = 0; t < time; ++t) {
    double s = 0.0;
    for (std::size_t i = 0; i < pixels; ++i) s += x[t * pixels + i];
    frame_total[t] = s;
  }

  if (config.variant == ExpectationVariant::k) {
    std::vector<double> pixel_total(pixels, 0.0);
    for (std::size_t t = 0; t < time; ++t) {
      for (std::size_t i = 0; i < pixels; ++i) pixel_total[i] += x[t * pixels + i];
    }
    double grand = 0.0;
    for (std::size_t t = 0; t < time; ++t) grand += frame_total[t];
    check_denominator(grand, config.denominator_guard, 0);
    for (std::size_t t = 0; t < time; ++t) {
      for (std::size_t i = 0; i < pixels; ++i) {
        mu[t * pixels + i] = frame_total[t] * pixel_total[i] / grand;
      }
    }
    return;
  }

  const bool sequential = config.variant == ExpectationVariant::ksw;
  std::vector<double> kernel(time * time);
  for (std::size_t t = 0; t < time; ++t) {
    for (std::size_t s = 0; s < time; ++s) {
      kernel[t * time + s] =
          temporal_kernel(static_cast<double>(t), static_cast<double>(s), config.lengthscale);
    }
  }

  std::vector<double> weighted(pixels);
  for (std::size_t t = 0; t < time; ++t) {
    if (sequential && t == 0) {
      for (std::size_t i = 0; i < pixels; ++i) mu[i] = x[i];
      continue;
    }
    const std::size_t horizon = sequential ? t : time;
    double denominator = 0.0;
    std::fill(weighted.begin(), weighted.end(), 0.0);
    for (std::size_t s = 0; s < horizon; ++s) {
      const double b = kernel[t * time + s];
      denominator += b * frame_total[s];
      for (std::size_t i = 0; i < pixels; ++i) weighted[i] += b * x[s * pixels + i];
    }
    check_denominator(denominator, config.denominator_guard, t);
    for (std::size_t i = 0; i < pixels; ++i) {
      mu[t * pixels + i] = frame_total[t] * weighted[i] / denominator;
    }
  }
}

ExpectationField compute_expectation(const SpatioTemporalBatch& batch,
                                     const ExpectationConfig& config) {
  const Dims& d = batch.dims();
  if (d.channels != 1) throw ShapeError("expectations need a single-channel batch");
  ExpectationField field;
  field.batch = d.batch;
  field.time = d.time;
  field.height = d.height;
  field.width = d.width;
  field.values.resize(d.size());
  field.valid.assign(d.time, true);
  if (config.variant == ExpectationVariant::ksw && d.time > 0) field.valid[0] = false;
  for (std::size_t b = 0; b < d.batch; ++b) {
    expectation_into(batch.sequence(b), d.time, d.pixels(), config,
                     std::span<double>(field.values).subspan(b * d.sequence_size(), d.sequence_size()));
  }
  return field;
}

ExpectationField expectation_k(const SpatioTemporalBatch& batch, double denominator_guard) {
  return compute_expectation(batch, {ExpectationVariant::k, 1.0, denominator_guard});
}

ExpectationField expectation_kw(const SpatioTemporalBatch& batch, double lengthscale,
                                double denominator_guard) {
  return compute_expectation(batch, {ExpectationVariant::kw, lengthscale, denominator_guard});
}

ExpectationField expectation_ksw(const SpatioTemporalBatch& batch, double lengthscale,
                                 double denominator_guard) {
  return compute_expectation(batch, {ExpectationVariant::ksw, lengthscale, denominator_guard});
}

}  // namespace spate
