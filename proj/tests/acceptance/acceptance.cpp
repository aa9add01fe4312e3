// One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "oracles.hpp"
#include "spate/causal_ot.hpp"
#include "spate/expectation.hpp"
#include "spate/sample_metrics.hpp"
#include "spate/sim.hpp"
#include "spate/spate_metric.hpp"
#include "spate/toy_train.hpp"
#include "support.hpp"

using namespace spate;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t k = v.size() / 2;
  return v.size() % 2 ? v[k] : 0.5 * (v[k - 1] + v[k]);
}

struct Outcome {
  bool pass;
  std::string detail;
};

std::string format(const char* fmt, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, fmt, a, b, c);
  return buf;
}

SpatioTemporalBatch positive_batch(Dims d, std::uint64_t seed) {
  return testing::random_batch(d, seed, 0.5, 2.0);
}

const char* kind_name(StatisticKind k) {
  switch (k) {
    case StatisticKind::moran: return "moran";
    case StatisticKind::k: return "k";
    case StatisticKind::kw: return "kw";
    case StatisticKind::ksw: return "ksw";
  }
  return "";
}

Outcome spate_oracle() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  const Dims shapes[2] = {Dims{2, 4, 1, 3, 3}, Dims{2, 3, 1, 2, 2}};
  for (std::uint64_t s = 0; s < 200; ++s) {
    for (const Dims& d : shapes) {
      const auto x = positive_batch(d, 1000 + s);
      const double l = 0.5 + static_cast<double>(s % 7);
      for (const auto scheme : {Scheme::rook, Scheme::queen}) {
        const auto w = build_grid_weights(d.height, d.width, scheme);
        for (const auto kind : {StatisticKind::moran, StatisticKind::k, StatisticKind::kw, StatisticKind::ksw}) {
          ExpectationConfig ec;
          ec.lengthscale = l;
          const auto got = compute_statistic(x, w, kind, ec).values;
          const auto want = oracle::statistic(x, kind_name(kind), l, scheme == Scheme::queen);
          worst = std::max(worst, testing::max_rel_diff(got, want, 1e-12));
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-10 && secs < 5.0, format("max rel diff %.3g over 400 batches, %.2f s", worst, secs)};
}

Outcome kulldorff_margins() {
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const Dims d{2, 2 + s % 6, 1, 2 + s % 4, 3 + s % 3};
    const auto x = positive_batch(d, 2000 + s);
    const auto mu = expectation_k(x);
    const std::size_t n = d.pixels();
    for (std::size_t b = 0; b < d.batch; ++b) {
      for (std::size_t t = 0; t < d.time; ++t) {
        double sm = 0.0, sx = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          sm += mu.values[(b * d.time + t) * n + i];
          sx += x.frame(b, t, 0)[i];
        }
        worst = std::max(worst, testing::rel_diff(sm, sx));
      }
      for (std::size_t i = 0; i < n; ++i) {
        double sm = 0.0, sx = 0.0;
        for (std::size_t t = 0; t < d.time; ++t) {
          sm += mu.values[(b * d.time + t) * n + i];
          sx += x.frame(b, t, 0)[i];
        }
        worst = std::max(worst, testing::rel_diff(sm, sx));
      }
    }
  }
  return {worst <= 1e-9, format("max rel margin error %.3g", worst)};
}

Outcome kernel_limit() {
  double gap = 0.0, stat_gap = 0.0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const Dims d{2, 3 + s % 5, 1, 3, 4};
    const auto x = positive_batch(d, 3000 + s);
    const double l = 1e6 * static_cast<double>(d.time);
    const auto k = expectation_k(x).values;
    const auto kw = expectation_kw(x, l).values;
    for (std::size_t i = 0; i < k.size(); ++i) gap = std::max(gap, std::abs(k[i] - kw[i]));
    const auto w = build_grid_weights(d.height, d.width, Scheme::queen);
    ExpectationConfig ec;
    ec.lengthscale = l;
    const auto sk = compute_statistic(x, w, StatisticKind::k, ec).values;
    const auto skw = compute_statistic(x, w, StatisticKind::kw, ec).values;
    for (std::size_t i = 0; i < sk.size(); ++i) stat_gap = std::max(stat_gap, std::abs(sk[i] - skw[i]));
  }
  return {gap < 1e-6 && stat_gap < 1e-6,
          format("max |mu_kw - mu_k| %.3g, max |SPATE_kw - SPATE_k| %.3g", gap, stat_gap)};
}

Outcome ksw_convergence() {
  const auto t0 = Clock::now();
  SimConfig c;
  c.batch = 20;
  c.time = 10;
  c.height = 16;
  c.width = 16;
  c.seed = 4;
  const auto x = gen_pseudo_lgcp(c);
  const auto w = build_grid_weights(16, 16, Scheme::queen);
  ExpectationConfig ec;
  const auto ksw = compute_statistic(x, w, StatisticKind::ksw, ec);
  const auto kw = compute_statistic(x, w, StatisticKind::kw, ec);
  const auto mean_gap = [&](std::size_t t) {
    double s = 0.0;
    for (std::size_t b = 0; b < 20; ++b)
      for (std::size_t i = 0; i < 16; ++i)
        for (std::size_t j = 0; j < 16; ++j) s += std::abs(ksw.at(b, t, i, j) - kw.at(b, t, i, j));
    return s / (20.0 * 256.0);
  };
  const double g1 = mean_gap(1), g9 = mean_gap(9);
  const double secs = seconds_since(t0);
  return {g9 < g1 && secs < 10.0, format("mean gap t=1 %.4g, t=9 %.4g, %.2f s", g1, g9, secs)};
}

Outcome entropic_bracketing() {
  double worst_low = 1e300, worst_high = -1e300;
  bool ok = true;
  SplitMix64 rng(5000);
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t m = 2 + static_cast<std::size_t>(inst % 5);
    CostMatrix c(m, m);
    std::vector<double> flat(m * m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) flat[i * m + j] = c(i, j) = rng.uniform(0.0, 10.0);
    SinkhornConfig sc;
    sc.epsilon = 1e-2 * c.mean();
    sc.iterations = 2000;
    const double w_eps = sinkhorn(c, sc).value;
    const double w = oracle::permutation_ot(flat, m);
    const double lower = w - 2.0 * sc.epsilon * std::log(static_cast<double>(m));
    ok = ok && lower <= w_eps && w_eps <= w + 1e-8;
    worst_low = std::min(worst_low, w_eps - lower);
    worst_high = std::max(worst_high, w_eps - w);
  }
  return {ok, format("min(W_eps - lower) %.3g, max(W_eps - W) %.3g", worst_low, worst_high)};
}

Outcome mixed_divergence() {
  const auto z = testing::random_batch(Dims{4, 3, 1, 4, 4}, 6000);
  const double same = mixed_sinkhorn_divergence(z, z, z, z, SinkhornConfig{}).value;

  SimConfig cfg;
  cfg.batch = 8;
  cfg.time = 4;
  cfg.height = 16;
  cfg.width = 16;
  const auto draw = [&](std::uint64_t seed, double center) {
    SimConfig c = cfg;
    c.seed = seed;
    BlobLayout layout;
    layout.count = 1;
    layout.anchor_y = 8.0;
    layout.anchor_x = center;
    layout.jitter = 1.0;
    return gen_moving_blobs(c, Velocity{0.0, 0.0}, layout);
  };
  std::vector<double> medians;
  for (const double shift : {1.0, 2.0, 4.0}) {
    std::vector<double> values;
    for (std::uint64_t s = 0; s < 10; ++s) {
      const std::uint64_t base = 100 * s;
      values.push_back(mixed_sinkhorn_divergence(draw(base + 1, 4.0), draw(base + 2, 4.0 + shift),
                                                 draw(base + 3, 4.0), draw(base + 4, 4.0 + shift),
                                                 SinkhornConfig{})
                           .value);
    }
    medians.push_back(median(values));
  }
  const bool ok = same == 0.0 && medians[0] < medians[1] && medians[1] < medians[2];
  return {ok, format("identical %.3g; medians %.4g < %.4g", same, medians[0], medians[1]) +
                  format(" < %.4g", medians[2])};
}

Outcome emd_enumeration() {
  double worst = 0.0;
  SplitMix64 rng(7000);
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t n = 1 + static_cast<std::size_t>(inst % 6);
    const std::size_t dim = 1 + static_cast<std::size_t>(inst % 4);
    std::vector<double> a(n * dim), b(n * dim);
    for (double& v : a) v = rng.uniform(-3, 3);
    for (double& v : b) v = rng.uniform(-3, 3);
    const SampleSet p(n, dim, a), s(n, dim, b);
    std::vector<double> cost(n * n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double sq = 0.0;
        for (std::size_t k = 0; k < dim; ++k) sq += (a[i * dim + k] - b[j * dim + k]) * (a[i * dim + k] - b[j * dim + k]);
        cost[i * n + j] = std::sqrt(sq);
      }
    const double want = oracle::permutation_ot(cost, n) * static_cast<double>(n);
    worst = std::max(worst, testing::rel_diff(emd(p, s), want));
  }
  return {worst <= 1e-10, format("max rel diff %.3g", worst)};
}

Outcome mmd_hand_case() {
  const std::vector<double> ab{0.3, -1.2, 1.1, 0.4};
  const SampleSet p(2, 2, ab), s(2, 2, ab);
  const double bw = 0.9;
  const double d2 = 0.8 * 0.8 + 1.6 * 1.6;
  const double kappa = std::exp(-d2 / (2 * bw * bw));
  const double got = mmd_squared(p, s, bw);
  const double err = std::abs(got - (kappa - 1.0));
  return {err <= 1e-12, format("MMD^2 %.15g vs kappa-1 %.15g", got, kappa - 1.0)};
}

Outcome c2st_calibration() {
  const std::size_t n = 200, dim = 4;
  double sum = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    NormalStream g(derive_seed(8000, s));
    std::vector<double> a(n * dim), b(n * dim);
    for (double& v : a) v = g.next();
    for (double& v : b) v = g.next();
    sum += knn_c2st(SampleSet(n, dim, a), SampleSet(n, dim, b), s);
  }
  const double null_mean = sum / 20.0;
  NormalStream g(8100);
  std::vector<double> a(n * dim), b(n * dim);
  for (double& v : a) v = g.next();
  for (double& v : b) v = 20.0 + g.next();
  const double separated = knn_c2st(SampleSet(n, dim, a), SampleSet(n, dim, b), 1);
  return {null_mean >= 0.4 && null_mean <= 0.6 && separated == 1.0,
          format("null mean %.4f, separated %.4f", null_mean, separated)};
}

Outcome causality() {
  const ToyDims d;
  DiscriminatorParams phi(d);
  SplitMix64 rng(9000);
  for (double& v : phi.flat()) v = rng.uniform(-0.1, 0.1);
  const auto w = build_grid_weights(d.height, d.width, Scheme::queen);
  ExpectationConfig ec;
  ec.lengthscale = 4.0;
  const std::size_t n = d.pixels();
  std::size_t violations = 0, checks = 0;
  for (std::uint64_t trial = 0; trial < 5; ++trial) {
    const auto x = positive_batch(Dims{1, d.time, 1, d.height, d.width}, 9100 + trial);
    const auto emb = [&](const SpatioTemporalBatch& raw) {
      std::vector<double> stat(d.time * n);
      statistic_into(raw.values(), d.time, w, StatisticKind::ksw, ec, stat);
      std::vector<double> seq(d.time * 2 * n);
      for (std::size_t t = 0; t < d.time; ++t) {
        std::copy_n(raw.values().data() + t * n, n, seq.begin() + static_cast<long>(t * 2 * n));
        std::copy_n(stat.data() + t * n, n, seq.begin() + static_cast<long>(t * 2 * n + n));
      }
      return std::make_pair(stat, seq);
    };
    const auto [stat0, seq0] = emb(x);
    const auto ev0 = discriminator_forward(phi, seq0);
    for (std::size_t t = 0; t + 1 < d.time; ++t) {
      // Perturb every frame after t, both raw data and directly on the embedded input.
      auto y = x;
      for (std::size_t s = t + 1; s < d.time; ++s)
        for (std::size_t i = 0; i < n; ++i) y.mutable_values()[s * n + i] *= 1.0 + rng.uniform(0.1, 0.9);
      const auto [stat1, seq1] = emb(y);
      for (std::size_t k = 0; k < (t + 1) * n; ++k) {
        ++checks;
        violations += stat1[k] != stat0[k];
      }
      auto seq2 = seq0;
      for (std::size_t k = (t + 1) * 2 * n; k < seq2.size(); ++k) seq2[k] += rng.uniform(-1, 1);
      for (const std::vector<double>* seq : std::array<const std::vector<double>*, 2>{&seq1, &seq2}) {
        const auto ev = discriminator_forward(phi, *seq);
        for (std::size_t j = 0; j < d.outputs; ++j) {
          for (std::size_t s = 0; s <= t; ++s) {
            checks += 2;
            violations += ev.m_at(j, s) != ev0.m_at(j, s);
            violations += ev.h_at(j, s) != ev0.h_at(j, s);
          }
        }
      }
    }
  }
  return {violations == 0 && checks > 0,
          format("%.0f changed of %.0f outputs indexed <= t", static_cast<double>(violations),
                 static_cast<double>(checks))};
}

Outcome fd_consistency() {
  const ToyDims d;
  TrainConfig cfg;
  SimConfig sc;
  sc.batch = 8;
  sc.time = d.time;
  sc.height = d.height;
  sc.width = d.width;
  sc.radius = 1;
  sc.seed = 11;
  const auto data = gen_moving_blobs(sc, Velocity{1.0, 1.0});
  const std::vector<std::size_t> first{0, 1, 2, 3}, second{4, 5, 6, 7};
  const auto real = data.select_items(first), real2 = data.select_items(second);
  const auto state = initial_state(d, cfg);
  std::vector<double> z(2 * 4 * d.time * d.latent);
  NormalStream g(12);
  for (double& v : z) v = g.next();

  const auto rel_gap = [](const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      num += (a[i] - b[i]) * (a[i] - b[i]);
      den += a[i] * a[i];
    }
    return std::sqrt(num / den);
  };
  TrainConfig half = cfg;
  half.fd_step = cfg.fd_step / 2;
  const double phi_gap =
      rel_gap(discriminator_phase(real, real2, state.theta, state.phi, z, cfg).gradient,
              discriminator_phase(real, real2, state.theta, state.phi, z, half).gradient);
  const double theta_gap =
      rel_gap(generator_phase(real, real2, state.theta, state.phi, z, cfg).gradient,
              generator_phase(real, real2, state.theta, state.phi, z, half).gradient);
  return {phi_gap < 1e-3 && theta_gap < 1e-3,
          format("relative gradient gap phi %.3g, theta %.3g", phi_gap, theta_gap)};
}

Outcome training_progress() {
  const auto t0 = Clock::now();
  std::vector<double> ratios;
  std::string detail = "ratios";
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SimConfig sc;
    sc.batch = 64;
    sc.time = 4;
    sc.height = 8;
    sc.width = 8;
    sc.radius = 1;
    sc.seed = 100 + seed;
    const auto data = gen_moving_blobs(sc, Velocity{1.0, 1.0});
    TrainConfig cfg;
    cfg.iterations = 500;
    cfg.seed = seed;
    const auto state = train(cfg, data);
    const double r = state.history.back().theta_loss / state.history.front().theta_loss;
    ratios.push_back(r);
    detail += format(" %.3f", r);
  }
  const double med = median(ratios);
  const double secs = seconds_since(t0);
  return {med <= 0.5 && secs < 900.0, detail + format("; median %.3f, %.0f s", med, secs)};
}

Outcome sinkhorn_scaling() {
  const auto time_at = [](std::size_t m) {
    const Dims dims{m, 4, 2, 8, 8};
    const auto a = testing::random_batch(dims, 10000 + m), b = testing::random_batch(dims, 20000 + m);
    std::vector<DiscriminatorEvals> ea(m, DiscriminatorEvals(4, 4)), eb(m, DiscriminatorEvals(4, 4));
    SplitMix64 rng(m);
    for (auto* list : {&ea, &eb})
      for (auto& e : *list) {
        for (double& v : e.h) v = rng.uniform(-1, 1);
        for (double& v : e.m) v = rng.uniform(-1, 1);
      }
    std::vector<double> samples;
    double sink = 0.0;
    for (int rep = 0; rep < 15; ++rep) {
      const auto t0 = Clock::now();
      for (int k = 0; k < 20; ++k) {
        const auto c = causal_cost_matrix(a, b, ea, eb);
        sink += sinkhorn(c, SinkhornConfig{}).value;
      }
      samples.push_back(seconds_since(t0));
    }
    if (!std::isfinite(sink)) samples.assign(1, 0.0);
    return median(samples);
  };
  time_at(16);
  const double t32 = time_at(32), t64 = time_at(64);
  const double r = t64 / t32;
  return {r >= 3.0 && r <= 6.0, format("t(32) %.4g s, t(64) %.4g s, ratio %.3f", t32, t64, r)};
}

std::string slurp(const std::filesystem::path& p) {
  const auto b = read_file_bytes(p);
  return {b.begin(), b.end()};
}

Outcome cli_determinism() {
  testing::TempDir root("acceptance-cli");
  // Each run of the full command list goes to its own directory; the
  // concatenated stdout and artifact bytes must agree across runs.
  const auto session = [&](const std::string& tag, const std::string& threads, bool& ok) {
    const auto dir = root.path() / tag;
    std::filesystem::create_directories(dir);
    const auto p = [&](const std::string& name) { return (dir / name).string(); };
    const std::vector<std::vector<std::string>> commands{
        {"simulate", "--kind", "lgcp", "--dims", "8,4,8,8", "--seed", "3", "--out", p("lgcp.stgk")},
        {"simulate", "--kind", "blobs", "--dims", "8,4,8,8", "--seed", "3", "--radius", "1", "--out", p("blobs.stgk")},
        {"simulate", "--kind", "weather", "--dims", "8,4,8,8", "--seed", "3", "--out", p("weather.stgk")},
        {"spate", "--in", p("lgcp.stgk"), "--out", p("ksw.stgk")},
        {"spate", "--in", p("lgcp.stgk"), "--out", p("kw.stgk"), "--variant", "kw", "--concat"},
        {"spate", "--in", p("blobs.stgk"), "--out", p("moran.stgk"), "--variant", "moran", "--scheme", "rook"},
        {"evaluate", "--real", p("lgcp.stgk"), "--fake", p("weather.stgk"), "--seed", "2", "--out", p("eval.csv")},
        {"sinkhorn", "--a", p("lgcp.stgk"), "--b", p("blobs.stgk"), "--out", p("sk.csv")},
        {"sinkhorn", "--a", p("lgcp.stgk"), "--b", p("blobs.stgk"), "--mixed", p("weather.stgk"), p("lgcp.stgk"),
         "--out", p("mixed.csv")},
        {"train-toy", "--data", p("blobs.stgk"), "--iters", "3", "--seed", "5", "--threads", threads,
         "--out-dir", p("run")},
        {"sweep-lengthscale", "--data", p("blobs.stgk"), "--iters", "2", "--seed", "5", "--threads", threads,
         "--values", "1,2", "--out", p("sweep.csv")},
    };
    std::string log;
    for (const auto& cmd : commands) {
      std::ostringstream out, err;
      const int code = cli::run(cmd, out, err);
      ok = ok && code == 0;
      log += std::to_string(code) + out.str();
    }
    for (const char* name : {"lgcp.stgk", "blobs.stgk", "weather.stgk", "ksw.stgk", "kw.stgk", "moran.stgk",
                             "eval.csv", "sk.csv", "mixed.csv", "sweep.csv", "run/generator.stgk",
                             "run/discriminator.stgk", "run/manifest.txt", "run/history.csv",
                             "run/samples.stgk", "run/samples.pgm"}) {
      log += slurp(dir / name);
    }
    // Paths differ per directory; strip them before comparing.
    for (std::size_t at; (at = log.find(dir.string())) != std::string::npos;) log.erase(at, dir.string().size());
    return log;
  };
  bool ok = true;
  const auto a = session("a", "1", ok);
  const auto b = session("b", "1", ok);
  const auto c = session("c", "4", ok);
  const bool same = a == b && a == c;
  return {ok && same, format("%.0f bytes compared per session; runs agree: %.0f, threads agree: %.0f",
                             static_cast<double>(a.size()), a == b, a == c)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"SPATE oracle equivalence", spate_oracle},
      {"Kulldorff expectation margins", kulldorff_margins},
      {"kw to k kernel limit", kernel_limit},
      {"ksw to kw convergence over time", ksw_convergence},
      {"entropic OT bracketing", entropic_bracketing},
      {"mixed Sinkhorn divergence", mixed_divergence},
      {"EMD assignment vs enumeration", emd_enumeration},
      {"MMD hand case", mmd_hand_case},
      {"1-NN C2ST calibration", c2st_calibration},
      {"causality of discriminator and ksw embedding", causality},
      {"finite-difference step halving", fd_consistency},
      {"training progress", training_progress},
      {"Sinkhorn cost scaling", sinkhorn_scaling},
      {"CLI determinism", cli_determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
