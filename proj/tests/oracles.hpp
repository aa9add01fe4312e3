#pragma once

// Direct, loop-level re-derivations of the library formulas. They share no
// code with the library beyond the batch container.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "spate/tensor.hpp"

namespace oracle {

inline bool neighbor(std::size_t w, std::size_t i, std::size_t j, bool queen) {
  if (i == j) return false;
  const long dy = std::labs(static_cast<long>(i / w) - static_cast<long>(j / w));
  const long dx = std::labs(static_cast<long>(i % w) - static_cast<long>(j % w));
  return queen ? (dy <= 1 && dx <= 1) : dy + dx == 1;
}

// Expectation of item b, frame t, pixel i by explicit triple sums.
// kind: "k", "kw", "ksw".
inline double expectation(const spate::SpatioTemporalBatch& x, std::size_t b, std::size_t t,
                          std::size_t i, const std::string& kind, double l) {
  const auto& d = x.dims();
  const std::size_t n = d.pixels();
  const auto v = [&](std::size_t tt, std::size_t j) { return x.at(b, tt, 0, j / d.width, j % d.width); };
  double space_t = 0.0;
  for (std::size_t j = 0; j < n; ++j) space_t += v(t, j);
  if (kind == "ksw" && t == 0) return v(0, i);
  const std::size_t horizon = kind == "ksw" ? t : d.time;
  double num = 0.0, den = 0.0;
  for (std::size_t s = 0; s < horizon; ++s) {
    const double w = kind == "k" ? 1.0 : std::exp(-std::fabs(double(t) - double(s)) / l);
    num += w * v(s, i);
    for (std::size_t j = 0; j < n; ++j) den += w * v(s, j);
  }
  return space_t * num / den;
}

// Statistic field (B*T*n values). kind: "moran", "k", "kw", "ksw".
inline std::vector<double> statistic(const spate::SpatioTemporalBatch& x, const std::string& kind,
                                     double l, bool queen) {
  const auto& d = x.dims();
  const std::size_t n = d.pixels();
  std::vector<double> out(d.batch * d.time * n, 0.0);
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t t = 0; t < d.time; ++t) {
      std::vector<double> z(n);
      double mean = 0.0;
      for (std::size_t j = 0; j < n; ++j) mean += x.at(b, t, 0, j / d.width, j % d.width) / double(n);
      for (std::size_t j = 0; j < n; ++j) {
        const double xv = x.at(b, t, 0, j / d.width, j % d.width);
        z[j] = kind == "moran" ? xv - mean : xv - expectation(x, b, t, j, kind, l);
      }
      double sq = 0.0;
      for (double zj : z) sq += zj * zj;
      if (sq < 1e-12 || (kind == "ksw" && t == 0)) continue;
      for (std::size_t i = 0; i < n; ++i) {
        double lag = 0.0;
        double ni = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          if (neighbor(d.width, i, j, queen)) {
            lag += z[j];
            ni += 1.0;
          }
        }
        out[(b * d.time + t) * n + i] = (ni - 1.0) * z[i] * lag / sq;
      }
    }
  }
  return out;
}

inline double lse(const std::vector<double>& v) {
  const double top = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - top);
  return top + std::log(s);
}

struct LogSinkhorn {
  std::vector<double> plan;
  double value = 0.0;
};

// Pure log-domain Sinkhorn on a row-major m x m cost, uniform marginals,
// row update first, starting from zero column potentials.
inline LogSinkhorn log_sinkhorn(const std::vector<double>& c, std::size_t m, double eps,
                                std::size_t iters) {
  std::vector<double> f(m, 0.0), g(m, 0.0), tmp(m);
  const double la = -std::log(double(m));
  for (std::size_t it = 0; it < iters; ++it) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) tmp[j] = (g[j] - c[i * m + j]) / eps;
      f[i] = eps * (la - lse(tmp));
    }
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t i = 0; i < m; ++i) tmp[i] = (f[i] - c[i * m + j]) / eps;
      g[j] = eps * (la - lse(tmp));
    }
  }
  LogSinkhorn r;
  r.plan.resize(m * m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double lp = (f[i] + g[j] - c[i * m + j]) / eps;
      const double p = std::exp(lp);
      r.plan[i * m + j] = p;
      r.value += p * c[i * m + j] + eps * p * lp;
    }
  }
  return r;
}

// (1/m) min over permutations of sum_i C_{i, sigma(i)}.
inline double permutation_ot(const std::vector<double>& c, std::size_t m) {
  std::vector<std::size_t> p(m);
  std::iota(p.begin(), p.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += c[i * m + p[i]];
    best = std::min(best, s);
  } while (std::next_permutation(p.begin(), p.end()));
  return best / double(m);
}

}  // namespace oracle
