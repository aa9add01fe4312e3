#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "spate/causal_ot.hpp"
#include "spate/spate_metric.hpp"
#include "spate/tensor.hpp"
#include "spate/weights.hpp"

namespace spate {

/// Sizes of the desk-scale generator and discriminator.
struct ToyDims {
  std::size_t height = 8;
  std::size_t width = 8;
  std::size_t time = 4;
  /// d_z, latent width per time step.
  std::size_t latent = 4;
  /// d_s, generator state width.
  std::size_t state = 16;
  /// Hidden width of each discriminator cell.
  std::size_t disc_state = 4;
  /// J, output width of h and M.
  std::size_t outputs = 4;

  std::size_t pixels() const noexcept { return height * width; }
  /// Discriminator input per frame: data channel plus embedding channel.
  std::size_t disc_input() const noexcept { return 2 * pixels(); }
  void validate() const;
  friend bool operator==(const ToyDims&, const ToyDims&) = default;
};

/// theta: s_0 = 0, s_t = tanh(A s_{t-1} + B z_t), frame_t = C s_t + d.
/// Flat layout [A | B | C | d], all row-major.
class GeneratorParams {
 public:
  explicit GeneratorParams(const ToyDims& dims);

  static std::size_t count(const ToyDims& dims);

  const ToyDims& dims() const noexcept { return dims_; }
  std::span<double> flat() noexcept { return values_; }
  std::span<const double> flat() const noexcept { return values_; }

  std::span<double> a() { return block(0, dims_.state * dims_.state); }
  std::span<double> b() { return block(dims_.state * dims_.state, dims_.state * dims_.latent); }
  std::span<double> c() {
    return block(dims_.state * (dims_.state + dims_.latent), dims_.pixels() * dims_.state);
  }
  std::span<double> d() { return block(count(dims_) - dims_.pixels(), dims_.pixels()); }

  friend bool operator==(const GeneratorParams&, const GeneratorParams&) = default;

 private:
  std::span<double> block(std::size_t offset, std::size_t size) {
    return std::span<double>(values_).subspan(offset, size);
  }

  ToyDims dims_;
  std::vector<double> values_;
};

/// phi = (phi_1, phi_2): two independent recurrent cells over the flattened
/// 2-channel frames. Each cell holds [W_in | W_rec | bias | R | r] with
///   s_t = tanh(W_in x_t + W_rec s_{t-1} + bias),  out_t = R s_t + r.
/// Cell 0 produces h (first T-1 steps), cell 1 produces M (all T steps).
class DiscriminatorParams {
 public:
  explicit DiscriminatorParams(const ToyDims& dims);

  static std::size_t cell_count(const ToyDims& dims);
  static std::size_t count(const ToyDims& dims) { return 2 * cell_count(dims); }

  const ToyDims& dims() const noexcept { return dims_; }
  std::span<double> flat() noexcept { return values_; }
  std::span<const double> flat() const noexcept { return values_; }
  std::span<double> h_cell() { return std::span<double>(values_).first(cell_count(dims_)); }
  std::span<const double> h_cell() const {
    return std::span<const double>(values_).first(cell_count(dims_));
  }
  std::span<double> m_cell() { return std::span<double>(values_).last(cell_count(dims_)); }
  std::span<const double> m_cell() const {
    return std::span<const double>(values_).last(cell_count(dims_));
  }

  friend bool operator==(const DiscriminatorParams&, const DiscriminatorParams&) = default;

 private:
  ToyDims dims_;
  std::vector<double> values_;
};

/// Runs the generator on latents laid out as T rows of d_z values; writes T*H*W.
void generator_forward(const GeneratorParams& theta, std::span<const double> latent,
                       std::span<double> out);

/// Generates one C=1 item per latent block (T*d_z values each).
SpatioTemporalBatch generate_batch(const GeneratorParams& theta, std::span<const double> latents,
                                   std::size_t count);

/// Output of one discriminator cell for `steps` leading frames of a sequence
/// of (2*H*W)-sized frames; writes J*steps values, output-major.
void discriminator_cell_forward(std::span<const double> cell, const ToyDims& dims,
                                std::span<const double> sequence, std::size_t steps,
                                std::span<double> out);

/// h and M for one embedded (2-channel) sequence.
DiscriminatorEvals discriminator_forward(const DiscriminatorParams& phi,
                                         std::span<const double> sequence);

struct TrainConfig {
  /// m, the mini-batch size.
  std::size_t batch_size = 4;
  double epsilon = 0.8;
  std::size_t sinkhorn_iterations = 100;
  /// Requested lengthscale; clamped to T when T is shorter.
  double lengthscale = 20.0;
  double lambda = 1.5;
  double eta = 1e-5;
  double learning_rate = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double adam_epsilon = 1e-8;
  std::size_t iterations = 500;
  std::uint64_t seed = 0;
  StatisticKind embedding = StatisticKind::ksw;
  Scheme scheme = Scheme::queen;
  double fd_step = 1e-4;
  /// Parameters start uniform in [-init_scale, init_scale].
  double init_scale = 0.1;
  /// Worker threads for finite-difference probes. Results do not depend on it.
  std::size_t threads = 1;
  ToyDims model;

  void validate() const;
};

/// min(lengthscale, T); warns on stderr when clamping.
double effective_lengthscale(const TrainConfig& config, std::size_t time, bool warn = false);

struct ObjectiveParts {
  double divergence = 0.0;
  /// p_M(real) + p_M(real').
  double penalty = 0.0;
  /// divergence - lambda * penalty.
  double total = 0.0;
};

/// Full objective for two real C=1 mini-batches of size m and 2m latent blocks
/// (first m generate the fake batch, the next m its primed copy).
ObjectiveParts spate_gan_objective(const SpatioTemporalBatch& real, const SpatioTemporalBatch& real2,
                                   const GeneratorParams& theta, const DiscriminatorParams& phi,
                                   std::span<const double> latents, const TrainConfig& config);

using ScalarFunction = std::function<double(std::span<const double>)>;

/// Central differences (f(p + h e_i) - f(p - h e_i)) / (2h) per coordinate,
/// assembled in coordinate order. With threads > 1, `f` must be safe to call
/// concurrently.
std::vector<double> fd_gradient(const ScalarFunction& f, std::span<const double> params,
                                double step, std::size_t threads = 1);

struct AdamMoments {
  std::vector<double> first;
  std::vector<double> second;

  explicit AdamMoments(std::size_t n = 0) : first(n, 0.0), second(n, 0.0) {}
  friend bool operator==(const AdamMoments&, const AdamMoments&) = default;
};

/// One bias-corrected Adam descent step; `step` counts from 1.
void adam_step(std::span<double> params, std::span<const double> grad, AdamMoments& moments,
               std::size_t step, double learning_rate, double beta1, double beta2,
               double epsilon = 1e-8);

/// Loss and gradient of one half-iteration of the training loop.
struct PhaseGradient {
  double loss = 0.0;
  std::vector<double> gradient;
  /// Probe evaluations that added the martingale penalty into the loss.
  std::size_t penalty_reads = 0;
  std::size_t evaluations = 0;
};

/// Gradient over phi of the full objective (divergence minus penalty).
PhaseGradient discriminator_phase(const SpatioTemporalBatch& real, const SpatioTemporalBatch& real2,
                                  const GeneratorParams& theta, const DiscriminatorParams& phi,
                                  std::span<const double> latents, const TrainConfig& config);

/// Gradient over theta of the divergence alone.
PhaseGradient generator_phase(const SpatioTemporalBatch& real, const SpatioTemporalBatch& real2,
                              const GeneratorParams& theta, const DiscriminatorParams& phi,
                              std::span<const double> latents, const TrainConfig& config);

struct LossRecord {
  std::size_t iteration = 0;
  double phi_loss = 0.0;
  double theta_loss = 0.0;
};

struct TrainState {
  GeneratorParams theta;
  DiscriminatorParams phi;
  AdamMoments theta_moments;
  AdamMoments phi_moments;
  std::size_t step = 0;
  std::vector<LossRecord> history;
  std::size_t penalty_reads_phi = 0;
  std::size_t penalty_reads_theta = 0;
  /// Data item indices drawn per iteration, both real mini-batches back to back.
  std::vector<std::vector<std::size_t>> sampled_indices;

  explicit TrainState(const ToyDims& dims);
};

/// Model dims with height, width and time taken from a data batch.
ToyDims dims_for_data(const TrainConfig& config, const Dims& data);

/// theta then phi, uniform in [-init_scale, init_scale] from SplitMix64(seed).
TrainState initial_state(const ToyDims& dims, const TrainConfig& config);

/// Per-iteration progress callback (iteration index, record).
using TrainObserver = std::function<void(const LossRecord&)>;

/// Alternating discriminator ascent / generator descent on the C=1 data batch.
TrainState train(const TrainConfig& config, const SpatioTemporalBatch& data,
                 const TrainObserver& observer = {});

/// `count` generator samples from latents drawn with derive_seed(seed, 3).
SpatioTemporalBatch sample_generator(const GeneratorParams& theta, std::size_t count,
                                     std::uint64_t seed);

/// generator.stgk, discriminator.stgk (flat parameters as (1,1,1,1,N) batches)
/// and manifest.txt with one key=value per line.
void save_checkpoint(const std::filesystem::path& dir, const TrainState& state,
                     const TrainConfig& config);

struct Checkpoint {
  ToyDims dims;
  std::size_t step = 0;
  std::uint64_t seed = 0;
  std::vector<double> theta;
  std::vector<double> phi;
};

Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// iteration,phi_loss,theta_loss with %.17g values.
void write_history_csv(const std::filesystem::path& path, std::span<const LossRecord> history);

}  // namespace spate
