#include "spate/sim.hpp"

#include <cmath>
#include <numbers>
#include <vector>

#include "spate/error.hpp"
#include "spate/rng.hpp"

namespace spate {

void SimConfig::validate() const {
  validate_dims(dims());
  if (!(rho >= 0.0 && rho < 1.0)) throw ValidationError("rho must lie in [0, 1)");
  if (!std::isfinite(amplitude)) throw ValidationError("amplitude must be finite");
}

void box_blur_periodic(std::span<const double> in, std::size_t height, std::size_t width,
                       std::size_t radius, std::span<double> out) {
  const auto h = static_cast<long>(height);
  const auto w = static_cast<long>(width);
  const auto r = static_cast<long>(radius);
  const auto wrap = [](long v, long n) { return ((v % n) + n) % n; };
  // Separable: rows first, then columns.
  std::vector<double> tmp(height * width, 0.0);
  for (long i = 0; i < h; ++i) {
    for (long j = 0; j < w; ++j) {
      double s = 0.0;
      for (long d = -r; d <= r; ++d) s += in[static_cast<std::size_t>(i * w + wrap(j + d, w))];
      tmp[static_cast<std::size_t>(i * w + j)] = s;
    }
  }
  const double norm = 1.0 / static_cast<double>((2 * r + 1) * (2 * r + 1));
  for (long i = 0; i < h; ++i) {
    for (long j = 0; j < w; ++j) {
      double s = 0.0;
      for (long d = -r; d <= r; ++d) s += tmp[static_cast<std::size_t>(wrap(i + d, h) * w + j)];
      out[static_cast<std::size_t>(i * w + j)] = s * norm;
    }
  }
}

namespace {

void unit_smooth_field(NormalStream& normals, std::size_t height, std::size_t width,
                       std::size_t radius, std::vector<double>& noise, std::vector<double>& out) {
  for (double& x : noise) x = normals.next();
  box_blur_periodic(noise, height, width, radius, out);
  const auto scale = static_cast<double>(2 * radius + 1);
  for (double& x : out) x *= scale;
}

// sum over images p in [-2, 2] of exp(-(x - c + p n)^2 / (2 sigma^2))
double periodized_gaussian(double x, double center, double period, double sigma) {
  double s = 0.0;
  for (int p = -2; p <= 2; ++p) {
    const double d = x - center + p * period;
    s += std::exp(-(d * d) / (2.0 * sigma * sigma));
  }
  return s;
}

}  // namespace

SpatioTemporalBatch gen_pseudo_lgcp(const SimConfig& config) {
  config.validate();
  const Dims d = config.dims();
  const std::size_t n = d.pixels();
  std::vector<double> values(d.size());
  std::vector<double> noise(n), smooth(n), latent(n);
  const double innovation = std::sqrt(1.0 - config.rho * config.rho);
  for (std::size_t b = 0; b < d.batch; ++b) {
    NormalStream normals(derive_seed(config.seed, b));
    for (std::size_t t = 0; t < d.time; ++t) {
      unit_smooth_field(normals, d.height, d.width, config.radius, noise, smooth);
      for (std::size_t i = 0; i < n; ++i) {
        latent[i] = t == 0 ? config.amplitude * smooth[i]
                           : config.rho * latent[i] + innovation * config.amplitude * smooth[i];
        values[(b * d.time + t) * n + i] = std::exp(latent[i]);
      }
    }
  }
  return SpatioTemporalBatch(d, std::move(values));
}

SpatioTemporalBatch gen_moving_blobs(const SimConfig& config, Velocity velocity,
                                     const BlobLayout& layout) {
  config.validate();
  const Dims d = config.dims();
  const auto height = static_cast<double>(d.height);
  const auto width = static_cast<double>(d.width);
  const double sigma = static_cast<double>(config.radius > 0 ? config.radius : 1);
  std::vector<double> values(d.size(), 0.0);
  std::vector<double> row_factor(d.height), col_factor(d.width);

  for (std::size_t b = 0; b < d.batch; ++b) {
    SplitMix64 rng(derive_seed(config.seed, b));
    for (std::size_t k = 0; k < layout.count; ++k) {
      const double cy = layout.anchor_y ? *layout.anchor_y + rng.uniform(-layout.jitter, layout.jitter)
                                        : rng.uniform(0.0, height);
      const double cx = layout.anchor_x ? *layout.anchor_x + rng.uniform(-layout.jitter, layout.jitter)
                                        : rng.uniform(0.0, width);
      const double peak = config.amplitude * rng.uniform(0.5, 1.0);
      for (std::size_t t = 0; t < d.time; ++t) {
        const double ty = std::fmod(cy + velocity.dy * static_cast<double>(t), height);
        const double tx = std::fmod(cx + velocity.dx * static_cast<double>(t), width);
        for (std::size_t i = 0; i < d.height; ++i) {
          row_factor[i] = periodized_gaussian(static_cast<double>(i), ty, height, sigma);
        }
        for (std::size_t j = 0; j < d.width; ++j) {
          col_factor[j] = periodized_gaussian(static_cast<double>(j), tx, width, sigma);
        }
        double* frame = values.data() + (b * d.time + t) * d.pixels();
        for (std::size_t i = 0; i < d.height; ++i) {
          for (std::size_t j = 0; j < d.width; ++j) {
            frame[i * d.width + j] += peak * row_factor[i] * col_factor[j];
          }
        }
      }
    }
  }
  return SpatioTemporalBatch(d, std::move(values));
}

SpatioTemporalBatch gen_static_dynamic(const SimConfig& config, const WaveOptions& wave) {
  config.validate();
  const Dims d = config.dims();
  const std::size_t period = wave.period == 0 ? d.time : wave.period;
  if (period < 2) throw ValidationError("wave period must be at least two steps");
  const std::size_t n = d.pixels();

  std::vector<double> noise(n), smooth(n);
  NormalStream mask_normals(derive_seed(~config.seed, 0));
  for (double& x : noise) x = mask_normals.next();
  box_blur_periodic(noise, d.height, d.width, config.radius, smooth);
  std::vector<double> mask(n);
  for (std::size_t i = 0; i < n; ++i) mask[i] = smooth[i] > 0.0 ? 1.0 : 0.0;

  std::vector<double> values(d.size());
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t b = 0; b < d.batch; ++b) {
    SplitMix64 rng(derive_seed(config.seed, b));
    const double phase = two_pi * rng.next_double();
    for (std::size_t t = 0; t < d.time; ++t) {
      const double time_phase = two_pi * static_cast<double>(t % period) / static_cast<double>(period);
      for (std::size_t i = 0; i < d.height; ++i) {
        for (std::size_t j = 0; j < d.width; ++j) {
          const double space_phase = two_pi * static_cast<double>(wave.wavenumber * j) /
                                     static_cast<double>(d.width);
          values[(b * d.time + t) * n + i * d.width + j] =
              mask[i * d.width + j] +
              config.amplitude * std::sin(space_phase - time_phase + phase);
        }
      }
    }
  }
  return SpatioTemporalBatch(d, std::move(values));
}

}  // namespace spate
