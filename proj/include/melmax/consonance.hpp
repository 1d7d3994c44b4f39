#pragma once

// Sensory dissonance of complex tones with the Plomp-Levelt curve in
// Sethares' parametrisation, dissonance-vs-register curves per interval size,
// and second-order exponential decay fits to those curves.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "melmax/error.hpp"
#include "melmax/numeric.hpp"
#include "melmax/scales.hpp"

namespace melmax {

struct Partial {
  double multiple = 1.0;
  double amplitude = 1.0;
};

struct Timbre {
  std::vector<Partial> partials;

  // `count` harmonics 1..count at equal amplitude. The default timbre is a
  // fundamental plus six harmonics of the same amplitude.
  static Timbre harmonic(int count = 7, double amplitude = 1.0) {
    if (count < 1) throw invalid_input("Timbre::harmonic: need at least one partial");
    Timbre t;
    for (int k = 1; k <= count; ++k) t.partials.push_back({static_cast<double>(k), amplitude});
    return t;
  }

  static Timbre from_amplitudes(std::span<const double> amplitudes) {
    Timbre t;
    for (std::size_t k = 0; k < amplitudes.size(); ++k)
      t.partials.push_back({static_cast<double>(k + 1), amplitudes[k]});
    t.validate();
    return t;
  }

  void validate() const {
    if (partials.empty()) throw invalid_input("timbre: at least one partial required");
    if (partials.front().multiple != 1.0) throw invalid_input("timbre: first multiple must be 1");
    for (std::size_t k = 0; k < partials.size(); ++k) {
      if (!(partials[k].amplitude >= 0.0)) throw invalid_input("timbre: amplitudes must be >= 0");
      if (k > 0 && !(partials[k].multiple > partials[k - 1].multiple))
        throw invalid_input("timbre: multiples must be strictly increasing");
    }
    bool any = false;
    for (const auto& p : partials) any = any || p.amplitude > 0.0;
    if (!any) throw invalid_input("timbre: all amplitudes are zero");
  }
};

// Plomp-Levelt curve constants as fitted by Sethares.
struct KernelConstants {
  double b1 = 3.5;
  double b2 = 5.75;
  double d_star = 0.24;
  double s1 = 0.021;
  double s2 = 19.0;
};

inline double beat_frequency(double f_i, double f_j) { return std::abs(f_j - f_i); }

// a1 a2 (e^{-b1 s df} - e^{-b2 s df}), s = d* / (s1 min(f1, f2) + s2).
inline double pair_dissonance(double f1, double a1, double f2, double a2,
                              const KernelConstants& k = {}) {
  const double df = std::abs(f2 - f1);
  const double s = k.d_star / (k.s1 * std::min(f1, f2) + k.s2);
  return a1 * a2 * (std::exp(-k.b1 * s * df) - std::exp(-k.b2 * s * df));
}

namespace detail {

inline double self_dissonance(double fundamental, const Timbre& timbre, const KernelConstants& k) {
  double total = 0.0;
  const auto& ps = timbre.partials;
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (std::size_t j = i + 1; j < ps.size(); ++j)
      total += pair_dissonance(fundamental * ps[i].multiple, ps[i].amplitude,
                               fundamental * ps[j].multiple, ps[j].amplitude, k);
  return total;
}

}  // namespace detail

// Two tones with fundamentals base and base * ratio sharing one timbre:
// every cross pair of partials plus each tone's own partial pairs.
inline double complex_dissonance(double base, double ratio, const Timbre& timbre,
                                 const KernelConstants& k = {}) {
  if (!(base > 0.0) || !(ratio > 0.0)) throw invalid_input("complex_dissonance: base and ratio must be > 0");
  const double other = base * ratio;
  double total = detail::self_dissonance(base, timbre, k) + detail::self_dissonance(other, timbre, k);
  for (const auto& pa : timbre.partials)
    for (const auto& pb : timbre.partials)
      total += pair_dissonance(base * pa.multiple, pa.amplitude, other * pb.multiple, pb.amplitude, k);
  return total;
}

enum class AxisKind { FrequencyDifference, SquaredFrequencyDifference };

inline std::string_view to_string(AxisKind a) {
  return a == AxisKind::FrequencyDifference ? "frequency_difference" : "squared_frequency_difference";
}

struct CurvePoint {
  int base_index = 0;
  double x = 0.0;
  double dissonance = 0.0;
};

struct DissonanceCurve {
  int interval_size = 0;
  AxisKind axis = AxisKind::FrequencyDifference;
  std::vector<CurvePoint> points;
};

// One point per base pitch whose upper pitch (L semitones higher) stays
// inside the register. Values stay raw until normalize_curves.
inline DissonanceCurve dissonance_curve(int interval, const Register& reg, const Timbre& timbre,
                                        AxisKind axis, const KernelConstants& k = {}) {
  if (interval < 1 || interval > 12)
    throw invalid_input("dissonance_curve: interval size must lie in [1, 12], got " + std::to_string(interval));
  reg.validate();
  timbre.validate();
  if (reg.lowest_index + interval > reg.highest_index)
    throw invalid_input("dissonance_curve: register too narrow for interval " + std::to_string(interval));
  DissonanceCurve curve;
  curve.interval_size = interval;
  curve.axis = axis;
  for (int base = reg.lowest_index; base + interval <= reg.highest_index; ++base) {
    const double fi = pitch_frequency(base, reg);
    const double fj = pitch_frequency(base + interval, reg);
    CurvePoint p;
    p.base_index = base;
    p.x = axis == AxisKind::FrequencyDifference ? fj - fi : epsilon(fi, fj);
    p.dissonance = complex_dissonance(fi, fj / fi, timbre, k);
    curve.points.push_back(p);
  }
  return curve;
}

// Joint min-max normalisation across all curves.
inline std::vector<DissonanceCurve> normalize_curves(std::vector<DissonanceCurve> curves) {
  if (curves.empty()) throw invalid_input("normalize_curves: no curves");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& c : curves) {
    if (c.points.empty()) throw invalid_input("normalize_curves: empty curve");
    for (const auto& p : c.points) {
      lo = std::min(lo, p.dissonance);
      hi = std::max(hi, p.dissonance);
    }
  }
  if (!(hi > lo)) throw invalid_input("normalize_curves: all values equal");
  const double span = hi - lo;
  for (auto& c : curves)
    for (auto& p : c.points) p.dissonance = p.dissonance == hi ? 1.0 : (p.dissonance - lo) / span;
  return curves;
}

// y = y0 + A1 e^{-x/t1} + A2 e^{-x/t2}, reported with t1 <= t2.
struct SecondOrderExpFit {
  double y0 = 0.0;
  double a1 = 0.0;
  double t1 = 0.0;
  double a2 = 0.0;
  double t2 = 0.0;
  double r_squared = 0.0;
  int iterations = 0;

  double operator()(double x) const { return y0 + a1 * std::exp(-x / t1) + a2 * std::exp(-x / t2); }
};

struct SecondOrderExpOptions {
  int random_starts = 8;
  std::uint64_t seed = 0x5e7a4e5;
  int max_iterations = 500;
  double relative_tolerance = 1e-10;
};

// Damped Gauss-Newton from several (t1, t2) starting pairs: a fixed grid of
// decades across the data span plus seeded log-uniform draws. Amplitudes of
// each start come from the linear least-squares problem at fixed (t1, t2);
// time constants are optimised in log space so they stay positive.
inline SecondOrderExpFit fit_second_order_exp(std::span<const double> x, std::span<const double> y,
                                              const SecondOrderExpOptions& opts = {}) {
  if (x.size() != y.size()) throw invalid_input("fit_second_order_exp: size mismatch");
  const std::size_t m = x.size();
  if (m < 6) throw invalid_input("fit_second_order_exp: need at least 6 points");
  const auto [ymin, ymax] = std::minmax_element(y.begin(), y.end());
  if (!(*ymax > *ymin)) throw invalid_input("fit_second_order_exp: zero variance in data");
  const auto [xmin, xmax] = std::minmax_element(x.begin(), x.end());
  const double xspan = *xmax - *xmin;
  if (!(xspan > 0.0)) throw invalid_input("fit_second_order_exp: all x values equal");

  auto eval = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd& j) {
    const double t1 = std::exp(p[2]), t2 = std::exp(p[4]);
    for (std::size_t i = 0; i < m; ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      const double e1 = std::exp(-x[i] / t1), e2 = std::exp(-x[i] / t2);
      r[row] = p[0] + p[1] * e1 + p[3] * e2 - y[i];
      j(row, 0) = 1.0;
      j(row, 1) = e1;
      j(row, 2) = p[1] * e1 * x[i] / t1;
      j(row, 3) = e2;
      j(row, 4) = p[3] * e2 * x[i] / t2;
    }
  };

  auto amplitudes_for = [&](double t1, double t2) {
    Eigen::MatrixXd basis(static_cast<Eigen::Index>(m), 3);
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < m; ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      basis(row, 0) = 1.0;
      basis(row, 1) = std::exp(-x[i] / t1);
      basis(row, 2) = std::exp(-x[i] / t2);
      rhs[row] = y[i];
    }
    return Eigen::VectorXd(basis.completeOrthogonalDecomposition().solve(rhs));
  };

  std::vector<std::pair<double, double>> starts;
  for (int a = 0; a < 4; ++a)
    for (int b = a + 1; b < 5; ++b) starts.emplace_back(xspan * std::pow(10.0, -a), xspan * std::pow(10.0, -b));
  Rng rng(opts.seed);
  for (int s = 0; s < opts.random_starts; ++s) {
    const double u1 = rng.uniform(-4.0, 1.0), u2 = rng.uniform(-4.0, 1.0);
    starts.emplace_back(xspan * std::pow(10.0, u1), xspan * std::pow(10.0, u2));
  }

  LmOptions lm_opts;
  lm_opts.max_iterations = opts.max_iterations;
  lm_opts.relative_tolerance = opts.relative_tolerance;
  LmResult best;
  bool found = false;
  for (const auto& [t1, t2] : starts) {
    const Eigen::VectorXd amp = amplitudes_for(t1, t2);
    Eigen::VectorXd p0(5);
    p0 << amp[0], amp[1], std::log(t1), amp[2], std::log(t2);
    LmResult res = levenberg_marquardt(eval, p0, m, lm_opts);
    if (!res.converged || !std::isfinite(res.sse)) continue;
    if (!found || res.sse < best.sse) {
      best = std::move(res);
      found = true;
    }
  }
  if (!found)
    throw convergence_error("fit_second_order_exp: no start converged within " +
                            std::to_string(opts.max_iterations) + " iterations");

  SecondOrderExpFit fit;
  fit.y0 = best.params[0];
  fit.a1 = best.params[1];
  fit.t1 = std::exp(best.params[2]);
  fit.a2 = best.params[3];
  fit.t2 = std::exp(best.params[4]);
  if (fit.t1 > fit.t2) {
    std::swap(fit.t1, fit.t2);
    std::swap(fit.a1, fit.a2);
  }
  fit.iterations = best.iterations;
  std::vector<double> pred(m);
  for (std::size_t i = 0; i < m; ++i) pred[i] = fit(x[i]);
  fit.r_squared = r_squared(y, pred);
  return fit;
}

inline SecondOrderExpFit fit_second_order_exp(const DissonanceCurve& curve,
                                              const SecondOrderExpOptions& opts = {}) {
  std::vector<double> x, y;
  for (const auto& p : curve.points) {
    x.push_back(p.x);
    y.push_back(p.dissonance);
  }
  return fit_second_order_exp(x, y, opts);
}

}  // namespace melmax
