#pragma once

// Small numerical toolkit shared by the fitting code: ordinary least squares
// on a line, coefficient of determination, a Levenberg-damped Gauss-Newton
// driver and a seeded random source whose draws do not depend on the
// standard library's distribution implementations.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "melmax/error.hpp"

namespace melmax {

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_err = 0.0;
  double intercept_err = 0.0;
};

// y = intercept + slope * x. Needs at least two distinct x values.
inline LinearFit linear_least_squares(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw invalid_input("linear_least_squares: size mismatch");
  const std::size_t n = x.size();
  if (n < 2) throw invalid_input("linear_least_squares: need at least two points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw invalid_input("linear_least_squares: all x values are equal");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  if (n > 2) {
    double ssr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = y[i] - (fit.intercept + fit.slope * x[i]);
      ssr += r * r;
    }
    const double s2 = ssr / static_cast<double>(n - 2);
    fit.slope_err = std::sqrt(s2 / sxx);
    fit.intercept_err = std::sqrt(s2 * (1.0 / static_cast<double>(n) + mx * mx / sxx));
  }
  return fit;
}

// 1 - SS_res / SS_tot, clamped to [0, 1]. Perfect predictions of constant
// data count as R^2 = 1.
inline double r_squared(std::span<const double> y, std::span<const double> predicted) {
  const std::size_t n = y.size();
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(n);
  double ss_tot = 0.0, ss_res = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ss_tot += (y[i] - mean) * (y[i] - mean);
    ss_res += (y[i] - predicted[i]) * (y[i] - predicted[i]);
  }
  if (ss_tot <= 0.0) return ss_res <= 0.0 ? 1.0 : 0.0;
  return std::clamp(1.0 - ss_res / ss_tot, 0.0, 1.0);
}

struct LmOptions {
  int max_iterations = 500;
  double relative_tolerance = 1e-10;  // on the SSE change of an accepted step
};

struct LmResult {
  Eigen::VectorXd params;
  double sse = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  Eigen::MatrixXd jtj;  // J^T J at the returned parameters
};

// Levenberg-Marquardt with Marquardt diagonal scaling. `eval(p, r, J)` fills
// the residual vector r (size m) and Jacobian J (m x p.size()).
template <class Eval>
LmResult levenberg_marquardt(Eval&& eval, Eigen::VectorXd params, std::size_t m,
                             const LmOptions& opts = {}) {
  const auto np = params.size();
  Eigen::VectorXd r(static_cast<Eigen::Index>(m)), r_trial(static_cast<Eigen::Index>(m));
  Eigen::MatrixXd jac(static_cast<Eigen::Index>(m), np), jac_trial(static_cast<Eigen::Index>(m), np);
  eval(params, r, jac);
  double sse = r.squaredNorm();
  double damping = 1e-3;

  LmResult out;
  for (int it = 0; it < opts.max_iterations; ++it) {
    out.iterations = it + 1;
    if (!std::isfinite(sse)) break;
    if (sse == 0.0) {
      out.converged = true;
      break;
    }
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd grad = jac.transpose() * r;
    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd lhs = jtj;
      for (Eigen::Index i = 0; i < np; ++i) lhs(i, i) += damping * std::max(jtj(i, i), 1e-300);
      const Eigen::VectorXd step = lhs.ldlt().solve(-grad);
      const Eigen::VectorXd trial = params + step;
      eval(trial, r_trial, jac_trial);
      const double sse_trial = r_trial.squaredNorm();
      if (std::isfinite(sse_trial) && sse_trial < sse) {
        const double change = (sse - sse_trial) / sse;
        params = trial;
        r = r_trial;
        jac = jac_trial;
        sse = sse_trial;
        damping = std::max(damping * 0.1, 1e-15);
        accepted = true;
        if (change < opts.relative_tolerance) out.converged = true;
      } else {
        damping *= 10.0;
        if (damping > 1e16) {
          // No descent direction left at working precision: stationary point.
          out.converged = true;
          break;
        }
      }
    }
    if (out.converged) break;
  }
  out.params = params;
  out.sse = sse;
  out.jtj = jac.transpose() * jac;
  return out;
}

// Seeded generator with portable uniform and exponential draws. The engine
// sequence of std::mt19937_64 is fixed by the standard; the conversions to
// real numbers are done here so results match across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Unit-rate exponential.
  double exponential() { return -std::log1p(-uniform()); }
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace melmax
