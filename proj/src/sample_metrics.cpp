#include "spate/sample_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "spate/error.hpp"
#include "spate/rng.hpp"

namespace spate {

SampleSet::SampleSet(std::size_t count, std::size_t dimension, std::vector<double> values)
    : count_(count), dimension_(dimension), values_(std::move(values)) {
  if (dimension_ == 0) throw ValidationError("samples must have positive dimension");
  if (values_.size() != count_ * dimension_) throw ShapeError("sample values do not match n*dim");
}

SampleSet SampleSet::from_batch(const SpatioTemporalBatch& batch) {
  const auto v = batch.values();
  return SampleSet(batch.dims().batch, batch.dims().sequence_size(),
                   std::vector<double>(v.begin(), v.end()));
}

double euclidean_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return std::sqrt(s);
}

std::vector<std::size_t> solve_assignment(const Matrix& cost) {
  const std::size_t n = cost.rows();
  if (cost.cols() != n) throw ShapeError("assignment needs a square matrix");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-based potentials; column 0 is a virtual source.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> row_of(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    row_of[0] = i;
    std::size_t j0 = 0;
    std::vector<double> min_to(n + 1, kInf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = row_of[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double reduced = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (reduced < min_to[j]) {
          min_to[j] = reduced;
          way[j] = j0;
        }
        if (min_to[j] < delta) {
          delta = min_to[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[row_of[j]] += delta;
          v[j] -= delta;
        } else {
          min_to[j] -= delta;
        }
      }
      j0 = j1;
    } while (row_of[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      row_of[j0] = row_of[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> assignment(n);
  for (std::size_t j = 1; j <= n; ++j) assignment[row_of[j] - 1] = j - 1;
  return assignment;
}

namespace {

void check_pair(const SampleSet& p, const SampleSet& s) {
  if (p.size() != s.size()) {
    throw ValidationError("sample sets differ in size: " + std::to_string(p.size()) + " vs " +
                          std::to_string(s.size()));
  }
  if (p.dimension() != s.dimension()) throw ShapeError("sample sets differ in dimension");
}

}  // namespace

double emd(const SampleSet& p, const SampleSet& s) {
  check_pair(p, s);
  const std::size_t n = p.size();
  Matrix dist(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) dist(i, j) = euclidean_distance(p[i], s[j]);
  }
  const auto assignment = solve_assignment(dist);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += dist(i, assignment[i]);
  return total;
}

double rbf_kernel(std::span<const double> u, std::span<const double> v, double bandwidth) {
  const double d = euclidean_distance(u, v);
  return std::exp(-(d * d) / (2.0 * bandwidth * bandwidth));
}

double median_heuristic_bandwidth(const SampleSet& p, const SampleSet& s) {
  if (p.dimension() != s.dimension()) throw ShapeError("sample sets differ in dimension");
  const std::size_t n = p.size() + s.size();
  const auto item = [&](std::size_t k) { return k < p.size() ? p[k] : s[k - p.size()]; };
  std::vector<double> distances;
  distances.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) distances.push_back(euclidean_distance(item(i), item(j)));
  }
  if (distances.empty()) throw ValidationError("bandwidth heuristic needs two samples");
  std::sort(distances.begin(), distances.end());
  const std::size_t mid = distances.size() / 2;
  const double median = distances.size() % 2 == 1 ? distances[mid]
                                                   : 0.5 * (distances[mid - 1] + distances[mid]);
  if (!(median > 0.0)) throw ValidationError("median pairwise distance is zero");
  return median;
}

double mmd_squared(const SampleSet& p, const SampleSet& s, double bandwidth) {
  check_pair(p, s);
  const std::size_t n = p.size();
  if (n < 2) throw ValidationError("MMD needs at least two samples per set");
  if (!(bandwidth > 0.0)) throw ValidationError("bandwidth must be > 0");
  double within_p = 0.0;
  double within_s = 0.0;
  double cross = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      cross += rbf_kernel(p[i], s[j], bandwidth);
      if (i == j) continue;
      within_p += rbf_kernel(p[i], p[j], bandwidth);
      within_s += rbf_kernel(s[i], s[j], bandwidth);
    }
  }
  const auto nd = static_cast<double>(n);
  return within_p / (nd * (nd - 1.0)) + within_s / (nd * (nd - 1.0)) - 2.0 * cross / (nd * nd);
}

double knn_c2st(const SampleSet& p, const SampleSet& s, std::uint64_t seed) {
  check_pair(p, s);
  if (p.size() < 4) throw ValidationError("C2ST needs at least four samples per set");
  const std::size_t pooled = p.size() + s.size();
  const auto item = [&](std::size_t k) { return k < p.size() ? p[k] : s[k - p.size()]; };
  const auto label = [&](std::size_t k) { return k < p.size() ? 1 : 0; };

  std::vector<std::size_t> order(pooled);
  std::iota(order.begin(), order.end(), 0);
  SplitMix64 rng(seed);
  for (std::size_t i = pooled - 1; i > 0; --i) {
    std::swap(order[i], order[rng.below(i + 1)]);
  }
  const std::size_t train = pooled / 2;
  std::size_t correct = 0;
  for (std::size_t q = train; q < pooled; ++q) {
    const auto query = item(order[q]);
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_pos = 0;
    for (std::size_t k = 0; k < train; ++k) {
      const double d = euclidean_distance(query, item(order[k]));
      if (d < best) {
        best = d;
        best_pos = k;
      }
    }
    if (label(order[best_pos]) == label(order[q])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(pooled - train);
}

}  // namespace spate
