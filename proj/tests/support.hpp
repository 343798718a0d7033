#pragma once
// Hand-rolled generators and small oracles shared by the test binaries.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bartrdd/data.hpp"
#include "bartrdd/rng.hpp"

namespace testing {

using bartrdd::Dataset;
using bartrdd::Matrix;
using bartrdd::Rng;

inline std::vector<double> normal_vector(Rng& rng, std::size_t n, double sd = 1.0) {
  std::vector<double> v(n);
  for (auto& e : v) e = rng.normal(0.0, sd);
  return v;
}

inline std::size_t uniform_int(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.uniform() * static_cast<double>(hi - lo + 1)) %
                  (hi - lo + 1);
}

/// Running variable spread over [-1, 1] with a few exact ties, p covariates
/// mixing continuous and binary columns, outcome with a jump at 0.
inline Dataset random_dataset(Rng& rng, std::size_t n, std::size_t p, double cutoff = 0.0) {
  std::vector<double> x(n), y(n);
  Matrix w(n, p);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = rng.uniform() * 2.0 - 1.0;
    if (rng.uniform() < 0.05) x[i] = std::round(x[i] * 20.0) / 20.0;
    for (std::size_t j = 0; j < p; ++j)
      w(i, j) = (j % 2 == 1) ? (rng.bernoulli(0.4) ? 1.0 : 0.0) : rng.normal();
    y[i] = std::sin(2 * x[i]) + (p > 0 ? 0.3 * w(i, 0) : 0.0) + (x[i] >= cutoff ? 0.4 : 0.0) +
           0.3 * rng.normal();
  }
  return Dataset(std::move(y), std::move(x), std::move(w), cutoff);
}

/// Small sampler settings for tests that only need valid draws.
inline bartrdd::SamplerConfig quick_sampler(std::uint64_t seed = 1) {
  bartrdd::SamplerConfig s;
  s.num_trees_mu = 8;
  s.num_trees_tau = 4;
  s.num_sweeps = 12;
  s.burn_in = 4;
  s.num_cutpoint_candidates = 20;
  s.seed = seed;
  return s;
}

/// Integral of f over [a, b] by adaptive Simpson, to absolute tolerance eps.
template <class F>
double adaptive_simpson(F&& f, double a, double b, double eps, int depth = 60) {
  auto simpson = [&](double lo, double hi, double flo, double fmid, double fhi) {
    return (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
  };
  struct Rec {
    static double go(F& f, double a, double b, double fa, double fm, double fb, double whole,
                     double eps, int depth, decltype(simpson)& s) {
      const double m = 0.5 * (a + b);
      const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
      const double flm = f(lm), frm = f(rm);
      const double left = s(a, m, fa, flm, fm), right = s(m, b, fm, frm, fb);
      if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * eps)
        return left + right + (left + right - whole) / 15.0;
      return go(f, a, m, fa, flm, fm, left, eps / 2, depth - 1, s) +
             go(f, m, b, fm, frm, fb, right, eps / 2, depth - 1, s);
    }
  };
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  return Rec::go(f, a, b, fa, fm, fb, simpson(a, b, fa, fm, fb), eps, depth, simpson);
}

/// Upper tail of the chi-square distribution via the regularized gamma series.
inline double chi_square_sf(double x, double k) {
  if (x <= 0) return 1.0;
  const double s = k / 2.0, z = x / 2.0;
  // lower regularized gamma P(s, z)
  double p;
  if (z < s + 1.0) {
    double term = 1.0 / s, sum = term;
    for (int n = 1; n < 10000; ++n) {
      term *= z / (s + n);
      sum += term;
      if (term < sum * 1e-15) break;
    }
    p = sum * std::exp(-z + s * std::log(z) - std::lgamma(s));
  } else {
    // continued fraction for Q(s, z)
    double b = z + 1.0 - s, c = 1e300, d = 1.0 / b, h = d;
    for (int i = 1; i < 10000; ++i) {
      const double an = -i * (i - s);
      b += 2.0;
      d = an * d + b;
      if (std::abs(d) < 1e-300) d = 1e-300;
      c = b + an / c;
      if (std::abs(c) < 1e-300) c = 1e-300;
      d = 1.0 / d;
      const double del = d * c;
      h *= del;
      if (std::abs(del - 1.0) < 1e-15) break;
    }
    return std::exp(-z + s * std::log(z) - std::lgamma(s)) * h;
  }
  return 1.0 - p;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("bartrdd_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing
