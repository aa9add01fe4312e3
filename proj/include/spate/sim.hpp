#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>

#include "spate/tensor.hpp"

namespace spate {

/// Shared knobs for the synthetic generators. Every generator is a pure
/// function of (config, options): item b draws from the sub-stream
/// derive_seed(seed, b) unless noted otherwise.
struct SimConfig {
  std::size_t batch = 1;
  std::size_t time = 10;
  std::size_t height = 16;
  std::size_t width = 16;
  /// Box-filter radius (lgcp, weather) or Gaussian bump width (blobs), in pixels.
  std::size_t radius = 2;
  /// Lag-one autoregressive coefficient of the latent field, in [0, 1).
  double rho = 0.5;
  double amplitude = 1.0;
  std::uint64_t seed = 0;

  Dims dims() const { return Dims{batch, time, 1, height, width}; }
  void validate() const;
};

/// Normalized box blur with periodic boundaries over an H x W field.
void box_blur_periodic(std::span<const double> in, std::size_t height, std::size_t width,
                       std::size_t radius, std::span<double> out);

/// exp(G) with G_0 = a * N_0 and G_t = rho * G_{t-1} + sqrt(1 - rho^2) * a * N_t,
/// where a = amplitude and N_t is white noise box-blurred and rescaled by
/// (2r + 1) so each pixel has unit variance. Noise is drawn row-major per frame
/// from a Box-Muller stream. Strictly positive.
SpatioTemporalBatch gen_pseudo_lgcp(const SimConfig& config);

struct Velocity {
  double dy = 0.0;
  double dx = 0.0;
};

struct BlobLayout {
  std::size_t count = 3;
  /// When set, bump centers are drawn uniformly in anchor +/- jitter instead of
  /// over the whole torus.
  std::optional<double> anchor_y;
  std::optional<double> anchor_x;
  double jitter = 0.0;
};

/// Gaussian bumps (width = max(radius, 1)) advected by `velocity` with periodic
/// wrap. Bumps are periodized over the 5 x 5 nearest images, so frame sums are
/// invariant under translation. Per bump the stream yields center y, center x,
/// then a height factor in [0.5, 1) times amplitude.
SpatioTemporalBatch gen_moving_blobs(const SimConfig& config, Velocity velocity,
                                     const BlobLayout& layout = {});

struct WaveOptions {
  /// Temporal period in steps; 0 means one period per sequence (T).
  std::size_t period = 0;
  /// Spatial cycles across the width.
  std::size_t wavenumber = 1;
};

/// Static land/sea mask (box-blurred noise thresholded at zero, shared by
/// every item and drawn from derive_seed(~seed, 0)) plus a sinusoid traveling
/// along the width with amplitude `amplitude` and a per-item random phase.
SpatioTemporalBatch gen_static_dynamic(const SimConfig& config, const WaveOptions& wave = {});

}  // namespace spate
