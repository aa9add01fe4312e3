#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <sstream>

#include "spate/causal_ot.hpp"
#include "spate/error.hpp"
#include "spate/expectation.hpp"
#include "spate/sample_metrics.hpp"
#include "spate/sim.hpp"
#include "spate/spate_metric.hpp"
#include "spate/tensor.hpp"
#include "spate/toy_train.hpp"
#include "spate/weights.hpp"

namespace spate::cli {

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(text);
  while (std::getline(in, cur, sep)) parts.push_back(cur);
  if (!text.empty() && text.back() == sep) parts.emplace_back();
  return parts;
}

double parse_number(const std::string& token, const char* what) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (token.empty() || end != token.c_str() + token.size() || errno == ERANGE || !std::isfinite(v)) {
    throw ValidationError(std::string("cannot parse ") + what + " value '" + token + "'");
  }
  return v;
}

std::size_t parse_count(const std::string& token, const char* what) {
  const double v = parse_number(token, what);
  if (v < 0 || v != std::floor(v) || v > 4294967295.0) {
    throw ValidationError(std::string(what) + " must be a non-negative integer, got '" + token + "'");
  }
  return static_cast<std::size_t>(v);
}

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> values;
  for (const auto& part : split(text, ',')) values.push_back(parse_number(part, what));
  return values;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

// Writes `text` to `path` when given, else to `out`.
void emit(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << text;
  } else {
    write_text(path, text);
  }
}

std::uint64_t save_batch(const SpatioTemporalBatch& batch, const std::filesystem::path& path) {
  const auto bytes = encode_stgk(batch);
  write_file_bytes(path, bytes);
  return fnv1a64(bytes);
}

// --- simulate -------------------------------------------------------------

struct SimulateArgs {
  std::string kind;
  std::string dims;
  std::uint64_t seed = 0;
  std::string out;
  std::size_t radius = 2;
  double rho = 0.5;
  double amplitude = 1.0;
  std::string velocity = "1,1";
  std::size_t blobs = 3;
  std::size_t period = 0;
  std::size_t wavenumber = 1;
};

void simulate(const SimulateArgs& a, std::ostream& out) {
  const auto parts = split(a.dims, ',');
  if (parts.size() != 4) throw ValidationError("--dims expects B,T,H,W");
  SimConfig cfg;
  cfg.batch = parse_count(parts[0], "batch");
  cfg.time = parse_count(parts[1], "time");
  cfg.height = parse_count(parts[2], "height");
  cfg.width = parse_count(parts[3], "width");
  cfg.radius = a.radius;
  cfg.rho = a.rho;
  cfg.amplitude = a.amplitude;
  cfg.seed = a.seed;
  cfg.validate();

  std::optional<SpatioTemporalBatch> batch;
  if (a.kind == "lgcp") {
    batch = gen_pseudo_lgcp(cfg);
  } else if (a.kind == "blobs") {
    const auto v = parse_list(a.velocity, "velocity");
    if (v.size() != 2) throw ValidationError("--velocity expects dy,dx");
    BlobLayout layout;
    layout.count = a.blobs;
    batch = gen_moving_blobs(cfg, Velocity{v[0], v[1]}, layout);
  } else if (a.kind == "weather") {
    batch = gen_static_dynamic(cfg, WaveOptions{a.period, a.wavenumber});
  } else {
    throw ValidationError("unknown --kind '" + a.kind + "'");
  }
  const std::uint64_t sum = save_batch(*batch, a.out);
  out << "dims " << batch->dims().batch << "," << batch->dims().time << "," << batch->dims().channels
      << "," << batch->dims().height << "," << batch->dims().width << "\n";
  out << "checksum " << hex64(sum) << "\n";
}

// --- spate ----------------------------------------------------------------

struct SpateArgs {
  std::string in;
  std::string out;
  std::string variant = "ksw";
  double lengthscale = 20.0;
  std::string scheme = "queen";
  bool concat = false;
};

void spate_cmd(const SpateArgs& a, std::ostream& out) {
  const StatisticKind kind = parse_statistic_kind(a.variant);
  const auto batch = read_stgk(a.in);
  const Dims& d = batch.dims();
  const WeightMatrix weights = build_grid_weights(d.height, d.width, parse_scheme(a.scheme));
  ExpectationConfig cfg;
  cfg.lengthscale = a.lengthscale;
  const SpateField field = compute_statistic(batch, weights, kind, cfg);
  const SpatioTemporalBatch result = a.concat ? concat_embedding(batch, field) : field.as_batch();
  const std::uint64_t sum = save_batch(result, a.out);
  out << "dims " << to_string(result.dims()) << "\n";
  out << "checksum " << hex64(sum) << "\n";
}

// --- evaluate -------------------------------------------------------------

struct EvaluateArgs {
  std::string real;
  std::string fake;
  std::string metric = "all";
  std::uint64_t seed = 0;
  double bandwidth = 0.0;
  std::string out;
};

constexpr const char* kLowerBetter = "lower is better";
constexpr const char* kHalfBetter = "closer to 0.5 is better";

struct MetricRow {
  std::string name;
  double value;
};

std::vector<MetricRow> evaluate_metrics(const SpatioTemporalBatch& real,
                                        const SpatioTemporalBatch& fake, const std::string& metric,
                                        std::uint64_t seed, double bandwidth) {
  if (metric != "all" && metric != "emd" && metric != "mmd" && metric != "knn") {
    throw ValidationError("unknown --metric '" + metric + "'");
  }
  if (real.dims().batch != fake.dims().batch) {
    throw ValidationError("real and fake sample counts differ (" + std::to_string(real.dims().batch) +
                          " vs " + std::to_string(fake.dims().batch) + ")");
  }
  if (real.dims().sequence_size() != fake.dims().sequence_size()) {
    throw ShapeError("real and fake samples differ in size");
  }
  const SampleSet p = SampleSet::from_batch(real);
  const SampleSet s = SampleSet::from_batch(fake);
  std::vector<MetricRow> rows;
  if (metric == "all" || metric == "emd") rows.push_back({"emd", emd(p, s)});
  if (metric == "all" || metric == "mmd") {
    const double bw = bandwidth > 0.0 ? bandwidth : median_heuristic_bandwidth(p, s);
    rows.push_back({"mmd", mmd_squared(p, s, bw)});
  }
  if (metric == "all" || metric == "knn") rows.push_back({"knn", knn_c2st(p, s, seed)});
  return rows;
}

void evaluate(const EvaluateArgs& a, std::ostream& out) {
  const auto real = read_stgk(a.real);
  const auto fake = read_stgk(a.fake);
  std::string csv = "metric,value,n,seed,legend\n";
  for (const auto& row : evaluate_metrics(real, fake, a.metric, a.seed, a.bandwidth)) {
    csv += row.name + "," + fmt(row.value) + "," + std::to_string(real.dims().batch) + "," +
           std::to_string(a.seed) + "," + (row.name == "knn" ? kHalfBetter : kLowerBetter) + "\n";
  }
  emit(csv, a.out, out);
}

// --- sinkhorn -------------------------------------------------------------

struct SinkhornArgs {
  std::string a;
  std::string b;
  double epsilon = 0.8;
  std::size_t iters = 100;
  std::vector<std::string> mixed;
  std::string out;
};

void sinkhorn_cmd(const SinkhornArgs& a, std::ostream& out) {
  SinkhornConfig cfg;
  cfg.epsilon = a.epsilon;
  cfg.iterations = a.iters;
  cfg.validate();
  const auto xa = read_stgk(a.a);
  const auto xb = read_stgk(a.b);
  const auto check = [](const SpatioTemporalBatch& u, const SpatioTemporalBatch& v) {
    if (u.dims().batch != v.dims().batch) {
      throw ValidationError("batch sizes differ (" + std::to_string(u.dims().batch) + " vs " +
                            std::to_string(v.dims().batch) + ")");
    }
  };
  check(xa, xb);
  std::string csv = "name,value,marginal_error,iterations\n";
  const auto row = [&](const std::string& name, double value, double err, std::size_t it) {
    csv += name + "," + fmt(value) + "," + fmt(err) + "," + std::to_string(it) + "\n";
  };
  if (a.mixed.empty()) {
    const auto r = sinkhorn(base_cost_matrix(xa, xb), cfg);
    row("sinkhorn", r.value, r.marginal_error, r.iterations);
  } else {
    if (a.mixed.size() != 2) throw ValidationError("--mixed expects two files");
    const auto xa2 = read_stgk(a.mixed[0]);
    const auto xb2 = read_stgk(a.mixed[1]);
    check(xa, xa2);
    check(xa, xb2);
    const CostMatrix costs[4] = {base_cost_matrix(xa, xb), base_cost_matrix(xa2, xb2),
                                 base_cost_matrix(xa, xa2), base_cost_matrix(xb, xb2)};
    const char* names[4] = {"w_ab", "w_a2b2", "w_aa2", "w_bb2"};
    for (int k = 0; k < 4; ++k) {
      const auto r = sinkhorn(costs[k], cfg);
      row(names[k], r.value, r.marginal_error, r.iterations);
    }
    const auto mixed = mixed_sinkhorn_from_costs(costs[0], costs[1], costs[2], costs[3], cfg);
    row("mixed", mixed.value, mixed.max_marginal_error, mixed.iterations);
  }
  emit(csv, a.out, out);
}

// --- train-toy ------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string variant = "ksw";
  std::size_t iters = 500;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::size_t threads = 1;
  std::size_t batch_size = 4;
  double lengthscale = 20.0;
  double learning_rate = 1e-4;
  std::size_t strip = 8;
};

TrainConfig train_config(const TrainArgs& a) {
  TrainConfig cfg;
  cfg.embedding = parse_statistic_kind(a.variant);
  cfg.iterations = a.iters;
  cfg.seed = a.seed;
  cfg.threads = a.threads;
  cfg.batch_size = a.batch_size;
  cfg.lengthscale = a.lengthscale;
  cfg.learning_rate = a.learning_rate;
  cfg.validate();
  return cfg;
}

// Rows are samples, columns are time steps; one gray scale for the whole strip.
std::vector<std::uint8_t> sample_strip(const SpatioTemporalBatch& samples, std::size_t rows) {
  const Dims& d = samples.dims();
  rows = std::min(rows, d.batch);
  const std::size_t height = rows * d.height;
  const std::size_t width = d.time * d.width;
  std::vector<double> canvas(height * width);
  for (std::size_t b = 0; b < rows; ++b) {
    for (std::size_t t = 0; t < d.time; ++t) {
      const auto frame = samples.frame(b, t, 0);
      for (std::size_t y = 0; y < d.height; ++y) {
        for (std::size_t x = 0; x < d.width; ++x) {
          canvas[(b * d.height + y) * width + t * d.width + x] = frame[y * d.width + x];
        }
      }
    }
  }
  return encode_pgm_image(height, width, scale_to_gray(canvas));
}

struct TrainOutcome {
  TrainState state;
  SpatioTemporalBatch samples;
};

TrainOutcome train_and_sample(const TrainConfig& cfg, const SpatioTemporalBatch& data) {
  TrainState state = train(cfg, data);
  SpatioTemporalBatch samples = sample_generator(state.theta, data.dims().batch, cfg.seed);
  return {std::move(state), std::move(samples)};
}

void train_toy(const TrainArgs& a, std::ostream& out) {
  const TrainConfig cfg = train_config(a);
  const auto data = read_stgk(a.data);
  TrainOutcome result = train_and_sample(cfg, data);
  const std::filesystem::path dir(a.out_dir);
  save_checkpoint(dir, result.state, cfg);
  write_history_csv(dir / "history.csv", result.state.history);
  save_batch(result.samples, dir / "samples.stgk");
  write_file_bytes(dir / "samples.pgm", sample_strip(result.samples, a.strip));
  out << "iterations " << result.state.history.size() << "\n";
  if (!result.state.history.empty()) {
    out << "final_theta_loss " << fmt(result.state.history.back().theta_loss) << "\n";
    out << "final_phi_loss " << fmt(result.state.history.back().phi_loss) << "\n";
  }
}

// --- sweep-lengthscale ----------------------------------------------------

struct SweepArgs {
  TrainArgs train;
  std::string values = "1,10,20,30,50";
  std::string out;
};

void sweep(const SweepArgs& a, std::ostream& out) {
  const auto values = parse_list(a.values, "lengthscale");
  std::set<double> seen;
  for (const double l : values) {
    if (!(l > 0.0)) throw ValidationError("lengthscales must be > 0, got " + fmt(l));
    if (!seen.insert(l).second) throw ValidationError("duplicate lengthscale " + fmt(l));
  }
  const auto data = read_stgk(a.train.data);
  std::string csv = "lengthscale,emd,mmd,knn\n";
  for (const double l : values) {
    TrainArgs ta = a.train;
    ta.lengthscale = l;
    const TrainConfig cfg = train_config(ta);
    const TrainOutcome result = train_and_sample(cfg, data);
    const auto rows = evaluate_metrics(data, result.samples, "all", cfg.seed, 0.0);
    csv += fmt(l) + "," + fmt(rows[0].value) + "," + fmt(rows[1].value) + "," + fmt(rows[2].value) + "\n";
  }
  emit(csv, a.out, out);
}

void add_train_options(CLI::App* cmd, TrainArgs& t) {
  cmd->add_option("--data", t.data, "Training data (.stgk, C=1)")->required();
  cmd->add_option("--variant", t.variant, "Embedding: k, kw, ksw or moran")->capture_default_str();
  cmd->add_option("--iters", t.iters, "Training iterations")->capture_default_str();
  cmd->add_option("--seed", t.seed, "Seed for init, batches and latents")->capture_default_str();
  cmd->add_option("--threads", t.threads, "Threads for gradient probes")->capture_default_str();
  cmd->add_option("--batch-size", t.batch_size, "Mini-batch size m")->capture_default_str();
  cmd->add_option("--lr", t.learning_rate, "Adam learning rate")->capture_default_str();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spatio-temporal autocorrelation, causal OT and toy SPATE-GAN tools", "spate"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Write a synthetic batch");
  c_sim->add_option("--kind", sim.kind, "lgcp, blobs or weather")->required();
  c_sim->add_option("--dims", sim.dims, "B,T,H,W")->required();
  c_sim->add_option("--seed", sim.seed)->capture_default_str();
  c_sim->add_option("--out", sim.out, "Output .stgk")->required();
  c_sim->add_option("--radius", sim.radius, "Blur radius or blob width")->capture_default_str();
  c_sim->add_option("--rho", sim.rho, "Temporal AR coefficient (lgcp)")->capture_default_str();
  c_sim->add_option("--amplitude", sim.amplitude)->capture_default_str();
  c_sim->add_option("--velocity", sim.velocity, "dy,dx per step (blobs)")->capture_default_str();
  c_sim->add_option("--blobs", sim.blobs, "Bumps per item (blobs)")->capture_default_str();
  c_sim->add_option("--period", sim.period, "Wave period, 0 = T (weather)")->capture_default_str();
  c_sim->add_option("--wavenumber", sim.wavenumber, "Wave cycles across the width (weather)")
      ->capture_default_str();

  SpateArgs sp;
  auto* c_spate = app.add_subcommand("spate", "Compute Moran's I or SPATE fields");
  c_spate->add_option("--in", sp.in, "Input .stgk (C=1)")->required();
  c_spate->add_option("--out", sp.out, "Output .stgk")->required();
  c_spate->add_option("--variant", sp.variant, "k, kw, ksw or moran")->capture_default_str();
  c_spate->add_option("--lengthscale", sp.lengthscale)->capture_default_str();
  c_spate->add_option("--scheme", sp.scheme, "rook or queen")->capture_default_str();
  c_spate->add_flag("--concat", sp.concat, "Write [data, field] as a C=2 batch");

  EvaluateArgs ev;
  auto* c_eval = app.add_subcommand("evaluate", "EMD, MMD and 1-NN accuracy between two files");
  c_eval->add_option("--real", ev.real)->required();
  c_eval->add_option("--fake", ev.fake)->required();
  c_eval->add_option("--metric", ev.metric, "emd, mmd, knn or all")->capture_default_str();
  c_eval->add_option("--seed", ev.seed, "Split seed for knn")->capture_default_str();
  c_eval->add_option("--bandwidth", ev.bandwidth, "RBF bandwidth, 0 = median heuristic")
      ->capture_default_str();
  c_eval->add_option("--out", ev.out, "CSV path (default stdout)");

  SinkhornArgs sk;
  auto* c_sk = app.add_subcommand("sinkhorn", "Entropic OT between two batches");
  c_sk->add_option("--a", sk.a)->required();
  c_sk->add_option("--b", sk.b)->required();
  c_sk->add_option("--epsilon", sk.epsilon)->capture_default_str();
  c_sk->add_option("--iters", sk.iters)->capture_default_str();
  c_sk->add_option("--mixed", sk.mixed, "a2 b2 for the mixed divergence")->expected(2);
  c_sk->add_option("--out", sk.out, "CSV path (default stdout)");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train-toy", "Train the toy SPATE-GAN");
  add_train_options(c_train, tr);
  c_train->add_option("--lengthscale", tr.lengthscale)->capture_default_str();
  c_train->add_option("--out-dir", tr.out_dir)->required();
  c_train->add_option("--strip", tr.strip, "Samples in samples.pgm")->capture_default_str();

  SweepArgs sw;
  auto* c_sweep = app.add_subcommand("sweep-lengthscale", "Train and evaluate per lengthscale");
  add_train_options(c_sweep, sw.train);
  c_sweep->add_option("--values", sw.values, "Comma-separated lengthscales")->capture_default_str();
  c_sweep->add_option("--out", sw.out, "CSV path (default stdout)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (c_sim->parsed()) simulate(sim, out);
    else if (c_spate->parsed()) spate_cmd(sp, out);
    else if (c_eval->parsed()) evaluate(ev, out);
    else if (c_sk->parsed()) sinkhorn_cmd(sk, out);
    else if (c_train->parsed()) train_toy(tr, out);
    else if (c_sweep->parsed()) sweep(sw, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace spate::cli
