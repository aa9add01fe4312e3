#include "spate/toy_train.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>

#include "dot.hpp"
#include "spate/error.hpp"
#include "spate/rng.hpp"

namespace spate {

void ToyDims::validate() const {
  if (height == 0 || width == 0 || time < 2 || latent == 0 || state == 0 || disc_state == 0 ||
      outputs == 0) {
    throw ValidationError("toy model dims must be positive with T >= 2");
  }
  if (height * width < 2) throw ValidationError("toy grid needs at least two pixels");
}

GeneratorParams::GeneratorParams(const ToyDims& dims) : dims_(dims), values_(count(dims), 0.0) {}

std::size_t GeneratorParams::count(const ToyDims& d) {
  return d.state * d.state + d.state * d.latent + d.pixels() * d.state + d.pixels();
}

DiscriminatorParams::DiscriminatorParams(const ToyDims& dims)
    : dims_(dims), values_(count(dims), 0.0) {}

std::size_t DiscriminatorParams::cell_count(const ToyDims& d) {
  return d.disc_state * d.disc_input() + d.disc_state * d.disc_state + d.disc_state +
         d.outputs * d.disc_state + d.outputs;
}

namespace {

struct GeneratorLayout {
  std::size_t ds, dz, n;
  std::size_t off_b, off_c, off_d;

  explicit GeneratorLayout(const ToyDims& d)
      : ds(d.state),
        dz(d.latent),
        n(d.pixels()),
        off_b(ds * ds),
        off_c(off_b + ds * dz),
        off_d(off_c + n * ds) {}
};

// Fills all T states (T*d_s) and frames (T*H*W) for one latent block.
void run_generator(const ToyDims& d, const double* p, const double* z, double* states,
                   double* frames) {
  const GeneratorLayout g(d);
  const std::vector<double> zero(g.ds, 0.0);
  for (std::size_t t = 0; t < d.time; ++t) {
    const double* prev = t == 0 ? zero.data() : states + (t - 1) * g.ds;
    double* state = states + t * g.ds;
    for (std::size_t r = 0; r < g.ds; ++r) {
      state[r] = std::tanh(detail::dot(p + r * g.ds, prev, g.ds) +
                           detail::dot(p + g.off_b + r * g.dz, z + t * g.dz, g.dz));
    }
    for (std::size_t i = 0; i < g.n; ++i) {
      frames[t * g.n + i] = p[g.off_d + i] + detail::dot(p + g.off_c + i * g.ds, state, g.ds);
    }
  }
}

// Recomputes pixel i of every frame from cached states.
void readout_pixel(const ToyDims& d, const double* p, const double* states, std::size_t i,
                   double* frames) {
  const GeneratorLayout g(d);
  for (std::size_t t = 0; t < d.time; ++t) {
    frames[t * g.n + i] = p[g.off_d + i] + detail::dot(p + g.off_c + i * g.ds, states + t * g.ds, g.ds);
  }
}

struct CellLayout {
  std::size_t in, hs, outputs;
  std::size_t off_rec, off_bias, off_read, off_read_bias;

  explicit CellLayout(const ToyDims& d)
      : in(d.disc_input()),
        hs(d.disc_state),
        outputs(d.outputs),
        off_rec(hs * in),
        off_bias(off_rec + hs * hs),
        off_read(off_bias + hs),
        off_read_bias(off_read + outputs * hs) {}

  // Input-projection row touched by parameter k, or hs when none is.
  std::size_t projection_row(std::size_t k) const {
    if (k < off_rec) return k / in;
    if (k >= off_bias && k < off_read) return k - off_bias;
    return hs;
  }
};

// proj[t*hs + r] = bias_r + <W_in row r, x_t>
void cell_projection_row(const double* cell, const CellLayout& c, const double* seq,
                         std::size_t steps, std::size_t r, double* proj) {
  for (std::size_t t = 0; t < steps; ++t) {
    proj[t * c.hs + r] = cell[c.off_bias + r] + detail::dot(cell + r * c.in, seq + t * c.in, c.in);
  }
}

void cell_projection(const double* cell, const CellLayout& c, const double* seq,
                     std::size_t steps, double* proj) {
  for (std::size_t r = 0; r < c.hs; ++r) cell_projection_row(cell, c, seq, steps, r, proj);
}

void cell_recurrence(const double* cell, const CellLayout& c, const double* proj,
                     std::size_t steps, double* out) {
  double state[64];
  double next[64];
  std::vector<double> heap;
  double* s = state;
  double* nx = next;
  if (c.hs > 64) {
    heap.assign(2 * c.hs, 0.0);
    s = heap.data();
    nx = heap.data() + c.hs;
  }
  std::fill(s, s + c.hs, 0.0);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t r = 0; r < c.hs; ++r) {
      nx[r] = std::tanh(proj[t * c.hs + r] + detail::dot(cell + c.off_rec + r * c.hs, s, c.hs));
    }
    std::swap(s, nx);
    for (std::size_t j = 0; j < c.outputs; ++j) {
      out[j * steps + t] = cell[c.off_read_bias + j] + detail::dot(cell + c.off_read + j * c.hs, s, c.hs);
    }
  }
}

}  // namespace

void generator_forward(const GeneratorParams& theta, std::span<const double> latent,
                       std::span<double> out) {
  const ToyDims& d = theta.dims();
  if (latent.size() != d.time * d.latent || out.size() != d.time * d.pixels()) {
    throw ShapeError("generator buffers do not match (T, d_z) / (T, H*W)");
  }
  std::vector<double> states(d.time * d.state);
  run_generator(d, theta.flat().data(), latent.data(), states.data(), out.data());
}

SpatioTemporalBatch generate_batch(const GeneratorParams& theta, std::span<const double> latents,
                                   std::size_t count) {
  const ToyDims& d = theta.dims();
  const std::size_t block = d.time * d.latent;
  if (latents.size() != count * block) throw ShapeError("latent count does not match batch");
  const Dims out_dims{count, d.time, 1, d.height, d.width};
  std::vector<double> values(out_dims.size());
  for (std::size_t b = 0; b < count; ++b) {
    generator_forward(theta, latents.subspan(b * block, block),
                      std::span<double>(values).subspan(b * out_dims.sequence_size(),
                                                        out_dims.sequence_size()));
  }
  return SpatioTemporalBatch(out_dims, std::move(values));
}

void discriminator_cell_forward(std::span<const double> cell, const ToyDims& d,
                                std::span<const double> sequence, std::size_t steps,
                                std::span<double> out) {
  const CellLayout c(d);
  if (cell.size() != DiscriminatorParams::cell_count(d) || sequence.size() < steps * c.in ||
      out.size() != c.outputs * steps) {
    throw ShapeError("discriminator cell buffers do not match dims");
  }
  std::vector<double> proj(steps * c.hs);
  cell_projection(cell.data(), c, sequence.data(), steps, proj.data());
  cell_recurrence(cell.data(), c, proj.data(), steps, out.data());
}

DiscriminatorEvals discriminator_forward(const DiscriminatorParams& phi,
                                         std::span<const double> sequence) {
  const ToyDims& d = phi.dims();
  if (sequence.size() != d.time * d.disc_input()) {
    throw ShapeError("discriminator input must be T frames of 2*H*W values");
  }
  DiscriminatorEvals evals(d.outputs, d.time);
  discriminator_cell_forward(phi.h_cell(), d, sequence, d.time - 1, evals.h);
  discriminator_cell_forward(phi.m_cell(), d, sequence, d.time, evals.m);
  return evals;
}

void TrainConfig::validate() const {
  model.validate();
  if (batch_size < 1) throw ValidationError("batch size must be >= 1");
  if (!(epsilon > 0.0)) throw ValidationError("epsilon must be > 0");
  if (sinkhorn_iterations < 1) throw ValidationError("Sinkhorn iterations must be >= 1");
  if (!(lengthscale > 0.0)) throw ValidationError("lengthscale must be > 0");
  if (!(lambda >= 0.0)) throw ValidationError("lambda must be >= 0");
  if (!(eta > 0.0)) throw ValidationError("eta must be > 0");
  if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw ValidationError("Adam betas must lie in [0, 1)");
  }
  if (!(fd_step > 0.0)) throw ValidationError("finite-difference step must be > 0");
  if (threads < 1) throw ValidationError("threads must be >= 1");
}

double effective_lengthscale(const TrainConfig& config, std::size_t time, bool warn) {
  const auto limit = static_cast<double>(time);
  if (config.lengthscale > limit) {
    if (warn) {
      std::clog << "warning: lengthscale " << config.lengthscale << " exceeds T=" << time
                << ", clamping to " << limit << "\n";
    }
    return limit;
  }
  return config.lengthscale;
}

namespace {

// Sequences stored back to back, each T frames of [data | statistic].
struct Embedded {
  std::size_t count = 0;
  std::size_t sequence_size = 0;
  std::vector<double> values;

  std::span<const double> item(std::size_t i) const {
    return std::span<const double>(values).subspan(i * sequence_size, sequence_size);
  }
};

struct Setup {
  ToyDims dims;
  WeightMatrix weights;
  StatisticKind kind;
  ExpectationConfig expectation;
  SinkhornConfig sinkhorn;
  double lambda;
  double eta;

  Setup(const TrainConfig& config, const ToyDims& d)
      : dims(d),
        weights(build_grid_weights(d.height, d.width, config.scheme)),
        kind(config.embedding),
        lambda(config.lambda),
        eta(config.eta) {
    expectation.lengthscale = effective_lengthscale(config, d.time);
    sinkhorn.epsilon = config.epsilon;
    sinkhorn.iterations = config.sinkhorn_iterations;
  }
};

Embedded embed(const Setup& setup, std::span<const double> raw, std::size_t count) {
  const ToyDims& d = setup.dims;
  const std::size_t n = d.pixels();
  Embedded e;
  e.count = count;
  e.sequence_size = d.time * 2 * n;
  e.values.resize(count * e.sequence_size);
  std::vector<double> stat(d.time * n);
  for (std::size_t b = 0; b < count; ++b) {
    const auto seq = raw.subspan(b * d.time * n, d.time * n);
    statistic_into(seq, d.time, setup.weights, setup.kind, setup.expectation, stat);
    double* out = e.values.data() + b * e.sequence_size;
    for (std::size_t t = 0; t < d.time; ++t) {
      std::copy_n(seq.data() + t * n, n, out + t * 2 * n);
      std::copy_n(stat.data() + t * n, n, out + t * 2 * n + n);
    }
  }
  return e;
}

Embedded embed_batch(const Setup& setup, const SpatioTemporalBatch& batch) {
  const Dims& d = batch.dims();
  if (d.channels != 1 || d.time != setup.dims.time || d.height != setup.dims.height ||
      d.width != setup.dims.width) {
    throw ShapeError("real batch (" + to_string(d) + ") does not match the model dims");
  }
  return embed(setup, batch.values(), d.batch);
}

Embedded embed_generated(const Setup& setup, const GeneratorParams& theta,
                         std::span<const double> latents, std::size_t count) {
  const ToyDims& d = setup.dims;
  std::vector<double> raw(count * d.time * d.pixels());
  const std::size_t block = d.time * d.latent;
  for (std::size_t b = 0; b < count; ++b) {
    generator_forward(theta, latents.subspan(b * block, block),
                      std::span<double>(raw).subspan(b * d.time * d.pixels(), d.time * d.pixels()));
  }
  return embed(setup, raw, count);
}

using EvalList = std::vector<DiscriminatorEvals>;

EvalList evaluate_all(const DiscriminatorParams& phi, const Embedded& e) {
  EvalList out;
  out.reserve(e.count);
  for (std::size_t i = 0; i < e.count; ++i) out.push_back(discriminator_forward(phi, e.item(i)));
  return out;
}

Matrix base_costs(const Embedded& rows, const Embedded& cols) {
  Matrix c(rows.count, cols.count);
  for (std::size_t i = 0; i < rows.count; ++i) {
    for (std::size_t j = 0; j < cols.count; ++j) c(i, j) = base_cost(rows.item(i), cols.item(j));
  }
  return c;
}

double entropic_value(const Matrix& base, const EvalList& rows, const EvalList& cols,
                      const SinkhornConfig& config) {
  return sinkhorn(add_causal_terms(base, rows, cols), config).value;
}

// Everything the objective needs once the four embedded batches are fixed.
struct Quadruple {
  Embedded x, x2, y, y2;
  Matrix c_xy, c_x2y2, c_xx2, c_yy2;
  EvalList ex, ex2, ey, ey2;

  Quadruple(Embedded x_, Embedded x2_, Embedded y_, Embedded y2_, const DiscriminatorParams& phi)
      : x(std::move(x_)), x2(std::move(x2_)), y(std::move(y_)), y2(std::move(y2_)) {
    c_xy = base_costs(x, y);
    c_x2y2 = base_costs(x2, y2);
    c_xx2 = base_costs(x, x2);
    c_yy2 = base_costs(y, y2);
    ex = evaluate_all(phi, x);
    ex2 = evaluate_all(phi, x2);
    ey = evaluate_all(phi, y);
    ey2 = evaluate_all(phi, y2);
  }
};

double mixed_value(const Quadruple& q, const EvalList& ex, const EvalList& ex2, const EvalList& ey,
                   const EvalList& ey2, const SinkhornConfig& config) {
  const double w_xy = entropic_value(q.c_xy, ex, ey, config);
  const double w_x2y2 = entropic_value(q.c_x2y2, ex2, ey2, config);
  const double w_xx2 = entropic_value(q.c_xx2, ex, ex2, config);
  const double w_yy2 = entropic_value(q.c_yy2, ey, ey2, config);
  return w_xy + w_x2y2 - w_xx2 - w_yy2;
}

double penalty_of(const Setup& setup, const EvalList& ex, const EvalList& ex2) {
  return martingale_penalty(ex, setup.eta) + martingale_penalty(ex2, setup.eta);
}

void check_latents(const ToyDims& d, std::span<const double> latents, std::size_t m) {
  if (latents.size() != 2 * m * d.time * d.latent) {
    throw ShapeError("objective needs 2m latent blocks of T*d_z values");
  }
}

void check_real_pair(const SpatioTemporalBatch& real, const SpatioTemporalBatch& real2) {
  if (!(real.dims() == real2.dims())) throw ShapeError("real mini-batches differ in shape");
}

}  // namespace

ObjectiveParts spate_gan_objective(const SpatioTemporalBatch& real, const SpatioTemporalBatch& real2,
                                   const GeneratorParams& theta, const DiscriminatorParams& phi,
                                   std::span<const double> latents, const TrainConfig& config) {
  check_real_pair(real, real2);
  const std::size_t m = real.dims().batch;
  const Setup setup(config, theta.dims());
  check_latents(setup.dims, latents, m);
  const std::size_t half = m * setup.dims.time * setup.dims.latent;
  const Quadruple q(embed_batch(setup, real), embed_batch(setup, real2),
                    embed_generated(setup, theta, latents.first(half), m),
                    embed_generated(setup, theta, latents.subspan(half), m), phi);
  ObjectiveParts parts;
  parts.divergence = mixed_value(q, q.ex, q.ex2, q.ey, q.ey2, setup.sinkhorn);
  parts.penalty = penalty_of(setup, q.ex, q.ex2);
  parts.total = parts.divergence - setup.lambda * parts.penalty;
  return parts;
}

namespace {

// f receives the perturbed parameters and the index of the perturbed coordinate.
using ProbeFunction = std::function<double(std::span<const double>, std::size_t)>;

std::vector<double> fd_indexed(const ProbeFunction& f, std::span<const double> params, double step,
                               std::size_t threads) {
  if (!(step > 0.0)) throw ValidationError("finite-difference step must be > 0");
  const std::size_t n = params.size();
  std::vector<double> grad(n, 0.0);
  std::atomic<bool> failed{false};
  std::atomic<std::size_t> failed_at{0};

  const auto work = [&](std::size_t begin, std::size_t end) {
    std::vector<double> probe(params.begin(), params.end());
    for (std::size_t i = begin; i < end && !failed.load(); ++i) {
      const double original = probe[i];
      probe[i] = original + step;
      const double up = f(probe, i);
      probe[i] = original - step;
      const double down = f(probe, i);
      probe[i] = original;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        failed_at.store(i);
        failed.store(true);
        return;
      }
      grad[i] = (up - down) / (2.0 * step);
    }
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, n));
  if (workers == 1) {
    work(0, n);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = w * chunk;
      const std::size_t end = std::min(n, begin + chunk);
      if (begin < end) pool.emplace_back(work, begin, end);
    }
    for (auto& t : pool) t.join();
  }
  if (failed.load()) {
    throw NumericalError("non-finite objective while probing coordinate " +
                         std::to_string(failed_at.load()));
  }
  return grad;
}

// Input projections of one cell for every sequence of an embedded batch.
std::vector<double> projections(std::span<const double> cell, const CellLayout& c,
                                const Embedded& e, std::size_t steps) {
  std::vector<double> proj(e.count * steps * c.hs);
  for (std::size_t i = 0; i < e.count; ++i) {
    cell_projection(cell.data(), c, e.item(i).data(), steps, proj.data() + i * steps * c.hs);
  }
  return proj;
}

// Re-runs one cell over a batch from cached projections, refreshing the row
// touched by coordinate k. Writes h (steps = T-1) or M (steps = T).
void rerun_cell(std::span<const double> cell, const CellLayout& c, const Embedded& e,
                const std::vector<double>& cached, std::size_t steps, std::size_t k, bool h_cell,
                EvalList& evals) {
  const std::size_t row = c.projection_row(k);
  std::vector<double> proj(steps * c.hs);
  for (std::size_t i = 0; i < e.count; ++i) {
    std::copy_n(cached.data() + i * steps * c.hs, steps * c.hs, proj.data());
    if (row < c.hs) cell_projection_row(cell.data(), c, e.item(i).data(), steps, row, proj.data());
    cell_recurrence(cell.data(), c, proj.data(), steps, h_cell ? evals[i].h.data() : evals[i].m.data());
  }
}

}  // namespace

std::vector<double> fd_gradient(const ScalarFunction& f, std::span<const double> params,
                                double step, std::size_t threads) {
  return fd_indexed([&f](std::span<const double> p, std::size_t) { return f(p); }, params, step,
                    threads);
}

void adam_step(std::span<double> params, std::span<const double> grad, AdamMoments& moments,
               std::size_t step, double learning_rate, double beta1, double beta2,
               double epsilon) {
  if (grad.size() != params.size() || moments.first.size() != params.size() ||
      moments.second.size() != params.size()) {
    throw ShapeError("Adam buffers disagree in size");
  }
  if (step < 1) throw ValidationError("Adam step counter starts at 1");
  const double correction1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double correction2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    moments.first[i] = beta1 * moments.first[i] + (1.0 - beta1) * grad[i];
    moments.second[i] = beta2 * moments.second[i] + (1.0 - beta2) * grad[i] * grad[i];
    const double m_hat = moments.first[i] / correction1;
    const double v_hat = moments.second[i] / correction2;
    params[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + epsilon);
  }
}

PhaseGradient discriminator_phase(const SpatioTemporalBatch& real, const SpatioTemporalBatch& real2,
                                  const GeneratorParams& theta, const DiscriminatorParams& phi,
                                  std::span<const double> latents, const TrainConfig& config) {
  check_real_pair(real, real2);
  const std::size_t m = real.dims().batch;
  const Setup setup(config, theta.dims());
  check_latents(setup.dims, latents, m);
  const std::size_t half = m * setup.dims.time * setup.dims.latent;
  const Quadruple q(embed_batch(setup, real), embed_batch(setup, real2),
                    embed_generated(setup, theta, latents.first(half), m),
                    embed_generated(setup, theta, latents.subspan(half), m), phi);
  const double cached_penalty = penalty_of(setup, q.ex, q.ex2);
  const CellLayout layout(setup.dims);
  const std::size_t steps_h = setup.dims.time - 1;
  const std::size_t steps_m = setup.dims.time;
  const std::array<const Embedded*, 4> batches{&q.x, &q.x2, &q.y, &q.y2};
  const std::array<const EvalList*, 4> base_evals{&q.ex, &q.ex2, &q.ey, &q.ey2};
  std::array<std::vector<double>, 4> proj_h, proj_m;
  for (std::size_t b = 0; b < 4; ++b) {
    proj_h[b] = projections(phi.h_cell(), layout, *batches[b], steps_h);
    proj_m[b] = projections(phi.m_cell(), layout, *batches[b], steps_m);
  }
  std::atomic<std::size_t> penalty_reads{0};
  std::atomic<std::size_t> evaluations{0};

  const auto probe = [&](std::span<const double> cell, std::size_t k, bool h_cell) {
    std::array<EvalList, 4> evals;
    for (std::size_t b = 0; b < 4; ++b) {
      evals[b] = *base_evals[b];
      rerun_cell(cell, layout, *batches[b], h_cell ? proj_h[b] : proj_m[b],
                 h_cell ? steps_h : steps_m, k, h_cell, evals[b]);
    }
    ++evaluations;
    ++penalty_reads;
    // Only M enters the penalty, so h probes reuse it.
    const double penalty = h_cell ? cached_penalty : penalty_of(setup, evals[0], evals[1]);
    return mixed_value(q, evals[0], evals[1], evals[2], evals[3], setup.sinkhorn) -
           setup.lambda * penalty;
  };

  PhaseGradient out;
  out.loss = mixed_value(q, q.ex, q.ex2, q.ey, q.ey2, setup.sinkhorn) - setup.lambda * cached_penalty;
  ++penalty_reads;
  ++evaluations;
  out.gradient = fd_indexed(
      [&](std::span<const double> cell, std::size_t k) { return probe(cell, k, true); },
      phi.h_cell(), config.fd_step, config.threads);
  const auto grad_m = fd_indexed(
      [&](std::span<const double> cell, std::size_t k) { return probe(cell, k, false); },
      phi.m_cell(), config.fd_step, config.threads);
  out.gradient.insert(out.gradient.end(), grad_m.begin(), grad_m.end());
  out.penalty_reads = penalty_reads.load();
  out.evaluations = evaluations.load();
  return out;
}

PhaseGradient generator_phase(const SpatioTemporalBatch& real, const SpatioTemporalBatch& real2,
                              const GeneratorParams& theta, const DiscriminatorParams& phi,
                              std::span<const double> latents, const TrainConfig& config) {
  check_real_pair(real, real2);
  const std::size_t m = real.dims().batch;
  const Setup setup(config, theta.dims());
  check_latents(setup.dims, latents, m);
  const ToyDims& d = setup.dims;
  const GeneratorLayout layout(d);
  const std::size_t block = d.time * d.latent;
  const std::size_t frames = d.time * d.pixels();
  const std::size_t states = d.time * d.state;
  const Embedded x = embed_batch(setup, real);
  const Embedded x2 = embed_batch(setup, real2);
  const EvalList ex = evaluate_all(phi, x);
  const EvalList ex2 = evaluate_all(phi, x2);
  // Both real batches are fixed during this phase, so W(x, x') is too.
  const double w_xx2 = entropic_value(base_costs(x, x2), ex, ex2, setup.sinkhorn);

  std::vector<double> base_states(2 * m * states);
  std::vector<double> base_raw(2 * m * frames);
  for (std::size_t b = 0; b < 2 * m; ++b) {
    run_generator(d, theta.flat().data(), latents.data() + b * block, base_states.data() + b * states,
                  base_raw.data() + b * frames);
  }
  std::atomic<std::size_t> evaluations{0};

  const auto divergence_of = [&](std::span<const double> raw_span) {
    const Embedded y = embed(setup, raw_span.first(m * frames), m);
    const Embedded y2 = embed(setup, raw_span.subspan(m * frames), m);
    const EvalList ey = evaluate_all(phi, y);
    const EvalList ey2 = evaluate_all(phi, y2);
    const double w_xy = entropic_value(base_costs(x, y), ex, ey, setup.sinkhorn);
    const double w_x2y2 = entropic_value(base_costs(x2, y2), ex2, ey2, setup.sinkhorn);
    const double w_yy2 = entropic_value(base_costs(y, y2), ey, ey2, setup.sinkhorn);
    ++evaluations;
    return w_xy + w_x2y2 - w_xx2 - w_yy2;
  };

  const ProbeFunction probe = [&](std::span<const double> p, std::size_t k) {
    std::vector<double> raw = base_raw;
    if (k < layout.off_c) {
      std::vector<double> scratch(states);
      for (std::size_t b = 0; b < 2 * m; ++b) {
        run_generator(d, p.data(), latents.data() + b * block, scratch.data(), raw.data() + b * frames);
      }
    } else {
      // C and d only reach the readout of one pixel.
      const std::size_t pixel = k < layout.off_d ? (k - layout.off_c) / layout.ds : k - layout.off_d;
      for (std::size_t b = 0; b < 2 * m; ++b) {
        readout_pixel(d, p.data(), base_states.data() + b * states, pixel, raw.data() + b * frames);
      }
    }
    return divergence_of(raw);
  };

  PhaseGradient out;
  out.loss = divergence_of(base_raw);
  out.gradient = fd_indexed(probe, theta.flat(), config.fd_step, config.threads);
  out.evaluations = evaluations.load();
  return out;
}

TrainState::TrainState(const ToyDims& dims)
    : theta(dims),
      phi(dims),
      theta_moments(GeneratorParams::count(dims)),
      phi_moments(DiscriminatorParams::count(dims)) {}

ToyDims dims_for_data(const TrainConfig& config, const Dims& data) {
  ToyDims d = config.model;
  d.height = data.height;
  d.width = data.width;
  d.time = data.time;
  return d;
}

TrainState initial_state(const ToyDims& dims, const TrainConfig& config) {
  dims.validate();
  TrainState state(dims);
  SplitMix64 rng(config.seed);
  for (double& p : state.theta.flat()) p = rng.uniform(-config.init_scale, config.init_scale);
  for (double& p : state.phi.flat()) p = rng.uniform(-config.init_scale, config.init_scale);
  return state;
}

namespace {

std::vector<double> draw_latents(NormalStream& normals, std::size_t count) {
  std::vector<double> z(count);
  for (double& v : z) v = normals.next();
  return z;
}

}  // namespace

TrainState train(const TrainConfig& config, const SpatioTemporalBatch& data,
                 const TrainObserver& observer) {
  config.validate();
  const Dims& dd = data.dims();
  if (dd.channels != 1) throw ShapeError("training data must be single-channel");
  const std::size_t m = config.batch_size;
  if (dd.batch < 2 * m) {
    throw ValidationError("training needs at least 2m = " + std::to_string(2 * m) +
                          " data items, got " + std::to_string(dd.batch));
  }
  const ToyDims dims = dims_for_data(config, dd);
  effective_lengthscale(config, dims.time, true);
  TrainState state = initial_state(dims, config);

  SplitMix64 sampler(derive_seed(config.seed, 1));
  NormalStream normals(derive_seed(config.seed, 2));
  const std::size_t latent_count = 2 * m * dims.time * dims.latent;
  std::vector<std::size_t> pool(dd.batch);

  for (std::size_t it = 0; it < config.iterations; ++it) {
    std::iota(pool.begin(), pool.end(), 0);
    for (std::size_t k = 0; k < 2 * m; ++k) {
      std::swap(pool[k], pool[k + sampler.below(dd.batch - k)]);
    }
    const std::vector<std::size_t> picked(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(2 * m));
    state.sampled_indices.push_back(picked);
    const auto real = data.select_items(std::span(picked).first(m));
    const auto real2 = data.select_items(std::span(picked).subspan(m));

    const auto z_phi = draw_latents(normals, latent_count);
    PhaseGradient phi_phase = discriminator_phase(real, real2, state.theta, state.phi, z_phi, config);
    state.penalty_reads_phi += phi_phase.penalty_reads;
    if (!std::isfinite(phi_phase.loss)) {
      throw NumericalError("non-finite discriminator loss at iteration " + std::to_string(it));
    }
    ++state.step;
    // Ascent on phi is descent on the negated gradient.
    for (double& g : phi_phase.gradient) g = -g;
    adam_step(state.phi.flat(), phi_phase.gradient, state.phi_moments, state.step,
              config.learning_rate, config.beta1, config.beta2, config.adam_epsilon);

    const auto z_theta = draw_latents(normals, latent_count);
    PhaseGradient theta_phase =
        generator_phase(real, real2, state.theta, state.phi, z_theta, config);
    state.penalty_reads_theta += theta_phase.penalty_reads;
    if (!std::isfinite(theta_phase.loss)) {
      throw NumericalError("non-finite generator loss at iteration " + std::to_string(it));
    }
    adam_step(state.theta.flat(), theta_phase.gradient, state.theta_moments, state.step,
              config.learning_rate, config.beta1, config.beta2, config.adam_epsilon);

    state.history.push_back({it, phi_phase.loss, theta_phase.loss});
    if (observer) observer(state.history.back());
  }
  return state;
}

SpatioTemporalBatch sample_generator(const GeneratorParams& theta, std::size_t count,
                                     std::uint64_t seed) {
  const ToyDims& d = theta.dims();
  NormalStream normals(derive_seed(seed, 3));
  const auto z = draw_latents(normals, count * d.time * d.latent);
  return generate_batch(theta, z, count);
}

namespace {

SpatioTemporalBatch wrap_params(std::span<const double> flat) {
  return SpatioTemporalBatch(Dims{1, 1, 1, 1, flat.size()},
                             std::vector<double>(flat.begin(), flat.end()));
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const TrainState& state,
                     const TrainConfig& config) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_stgk(wrap_params(state.theta.flat()), dir / "generator.stgk");
  write_stgk(wrap_params(state.phi.flat()), dir / "discriminator.stgk");

  const ToyDims& d = state.theta.dims();
  std::ostringstream os;
  os << "format=spate-toy-checkpoint-1\n"
     << "height=" << d.height << "\nwidth=" << d.width << "\ntime=" << d.time
     << "\nlatent=" << d.latent << "\nstate=" << d.state << "\ndisc_state=" << d.disc_state
     << "\noutputs=" << d.outputs << "\nstep=" << state.step << "\nseed=" << config.seed
     << "\nembedding=" << to_string(config.embedding) << "\nscheme=" << to_string(config.scheme)
     << "\nlengthscale=" << format_double(effective_lengthscale(config, d.time))
     << "\nepsilon=" << format_double(config.epsilon)
     << "\nsinkhorn_iterations=" << config.sinkhorn_iterations
     << "\nlambda=" << format_double(config.lambda) << "\neta=" << format_double(config.eta)
     << "\nlearning_rate=" << format_double(config.learning_rate)
     << "\nbeta1=" << format_double(config.beta1) << "\nbeta2=" << format_double(config.beta2)
     << "\nbatch_size=" << config.batch_size << "\n";
  const std::string text = os.str();
  write_file_bytes(dir / "manifest.txt",
                   std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const auto bytes = read_file_bytes(dir / "manifest.txt");
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  if (kv["format"] != "spate-toy-checkpoint-1") throw FormatError("not a toy checkpoint manifest");
  const auto num = [&](const char* key) -> std::uint64_t {
    const auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(std::string("manifest lacks ") + key);
    std::uint64_t v = 0;
    const auto* end = it->second.data() + it->second.size();
    const auto [ptr, err] = std::from_chars(it->second.data(), end, v);
    if (err != std::errc() || ptr != end) throw FormatError(std::string("bad manifest value for ") + key);
    return v;
  };
  Checkpoint ck;
  ck.dims.height = num("height");
  ck.dims.width = num("width");
  ck.dims.time = num("time");
  ck.dims.latent = num("latent");
  ck.dims.state = num("state");
  ck.dims.disc_state = num("disc_state");
  ck.dims.outputs = num("outputs");
  ck.step = num("step");
  ck.seed = num("seed");
  const auto theta = read_stgk(dir / "generator.stgk");
  const auto phi = read_stgk(dir / "discriminator.stgk");
  ck.theta.assign(theta.values().begin(), theta.values().end());
  ck.phi.assign(phi.values().begin(), phi.values().end());
  if (ck.theta.size() != GeneratorParams::count(ck.dims) ||
      ck.phi.size() != DiscriminatorParams::count(ck.dims)) {
    throw FormatError("checkpoint parameter counts do not match manifest dims");
  }
  return ck;
}

void write_history_csv(const std::filesystem::path& path, std::span<const LossRecord> history) {
  std::string text = "iteration,phi_loss,theta_loss\n";
  for (const auto& r : history) {
    text += std::to_string(r.iteration) + "," + format_double(r.phi_loss) + "," +
            format_double(r.theta_loss) + "\n";
  }
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace spate
