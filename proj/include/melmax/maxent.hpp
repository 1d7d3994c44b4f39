#pragma once

// Minimum relative entropy to the bin degeneracy q under four linear
// constraints: the two branch masses, <|eps|> and <eps>. The minimizer is
//
//   p_k = m_branch * q_k exp(-l1 |e_k| - l2 e_k) / Z_branch.
//
// Inside a branch the exponent is a single rate times |e_k|: l1 + l2 on the
// ascending side and l1 - l2 on the descending one. Matching <|eps|> and
// <eps> is then equivalent to matching each branch's mean |eps|, two
// independent monotone problems solved by safeguarded Newton.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "melmax/error.hpp"
#include "melmax/numeric.hpp"
#include "melmax/scales.hpp"
#include "melmax/stats.hpp"

namespace melmax {

struct ModelInputs {
  std::vector<double> q;        // degeneracy, aligned with eps_rep
  std::vector<double> eps_rep;  // descending bins first, then ascending
  double bin_width = 0.0;
  double mass_desc = 0.0;
  double mass_asc = 0.0;
  double target_abs = 0.0;
  double target_signed = 0.0;

  std::size_t half() const { return eps_rep.size() / 2; }

  void validate() const {
    if (eps_rep.empty() || eps_rep.size() % 2 != 0)
      throw invalid_input("model inputs: need an even, nonzero number of bins");
    if (q.size() != eps_rep.size()) throw invalid_input("model inputs: q and eps_rep are not aligned");
    for (double v : q)
      if (!(v >= 0.0)) throw invalid_input("model inputs: negative degeneracy");
    for (std::size_t k = 0; k < eps_rep.size(); ++k)
      if ((k < half() && eps_rep[k] > 0.0) || (k >= half() && eps_rep[k] < 0.0))
        throw invalid_input("model inputs: bin " + std::to_string(k) + " is on the wrong branch");
    if (!(mass_desc > 0.0) || !(mass_asc > 0.0)) throw invalid_input("model inputs: branch masses must be > 0");
    double sd = 0.0, sa = 0.0;
    for (std::size_t k = 0; k < q.size(); ++k) (k < half() ? sd : sa) += q[k];
    if (!(sd > 0.0) || !(sa > 0.0)) throw invalid_input("model inputs: a branch has no realizable transitions");
  }
};

// Targets and masses from an empirical histogram; q from the degeneracy.
inline ModelInputs model_inputs(const BranchHistogram& hist, const Degeneracy& deg) {
  if (deg.q.size() != hist.bins.size()) throw invalid_input("model_inputs: degeneracy not aligned with histogram");
  ModelInputs in;
  in.q = deg.q;
  in.bin_width = hist.bin_width;
  for (const auto& b : hist.bins) {
    in.eps_rep.push_back(b.eps_rep);
    (b.branch == Branch::Descending ? in.mass_desc : in.mass_asc) += b.p;
    in.target_abs += b.p * std::abs(b.eps_rep);
    in.target_signed += b.p * b.eps_rep;
  }
  return in;
}

namespace detail {

// Branch-local exp(-rate |e_k|) q_k / Z, shifted by the largest exponent.
inline std::vector<double> branch_weights(std::span<const double> q, std::span<const double> eps, double rate) {
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < q.size(); ++k)
    if (q[k] > 0.0) top = std::max(top, -rate * std::abs(eps[k]));
  std::vector<double> w(q.size(), 0.0);
  double z = 0.0;
  for (std::size_t k = 0; k < q.size(); ++k) {
    if (q[k] <= 0.0) continue;
    w[k] = q[k] * std::exp(-rate * std::abs(eps[k]) - top);
    z += w[k];
  }
  for (double& v : w) v /= z;
  return w;
}

struct BranchMoments {
  double mean = 0.0;
  double variance = 0.0;
};

inline BranchMoments branch_moments(std::span<const double> q, std::span<const double> eps, double rate) {
  const auto w = branch_weights(q, eps, rate);
  BranchMoments m;
  for (std::size_t k = 0; k < w.size(); ++k) m.mean += w[k] * std::abs(eps[k]);
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double d = std::abs(eps[k]) - m.mean;
    m.variance += w[k] * d * d;
  }
  return m;
}

struct RateSolve {
  double rate = 0.0;
  int iterations = 0;
};

// The rate whose branch mean |eps| equals `target`. The mean falls strictly
// from the largest to the smallest |eps| of the supported bins as the rate
// goes from -inf to +inf.
inline RateSolve solve_branch_rate(std::span<const double> q, std::span<const double> eps, double target,
                                   const char* branch, int max_iterations) {
  double lo_abs = std::numeric_limits<double>::infinity(), hi_abs = 0.0;
  for (std::size_t k = 0; k < q.size(); ++k)
    if (q[k] > 0.0) {
      lo_abs = std::min(lo_abs, std::abs(eps[k]));
      hi_abs = std::max(hi_abs, std::abs(eps[k]));
    }
  if (!(target > lo_abs && target < hi_abs))
    throw infeasible_error(std::string("solve_lagrange: ") + branch + " mean |eps| " + std::to_string(target) +
                               " outside the attainable open interval (" + std::to_string(lo_abs) + ", " +
                               std::to_string(hi_abs) + ")",
                           lo_abs, hi_abs);

  auto f = [&](double r) { return branch_moments(q, eps, r).mean - target; };
  RateSolve out;
  // bracket, in units of 1 / hi_abs
  double step = 1.0 / hi_abs;
  double a = -step, b = step;
  while (f(a) < 0.0) {
    a *= 2.0;
    if (++out.iterations > max_iterations) throw convergence_error("solve_lagrange: cannot bracket the " + std::string(branch) + " rate");
  }
  while (f(b) > 0.0) {
    b *= 2.0;
    if (++out.iterations > max_iterations) throw convergence_error("solve_lagrange: cannot bracket the " + std::string(branch) + " rate");
  }
  double r = 0.0;
  if (r < a || r > b) r = 0.5 * (a + b);
  for (;;) {
    if (++out.iterations > max_iterations)
      throw convergence_error(std::string("solve_lagrange: ") + branch + " rate did not converge");
    const auto m = branch_moments(q, eps, r);
    const double g = m.mean - target;
    if (g == 0.0) break;
    (g > 0.0 ? a : b) = r;
    double next = m.variance > 0.0 ? r + g / m.variance : 0.5 * (a + b);
    if (!(next > a && next < b)) next = 0.5 * (a + b);
    if (next == r || b - a <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(a), std::abs(b))) {
      r = next;
      break;
    }
    if (std::abs(g) <= 1e-15 * target) {
      r = next;
      break;
    }
    r = next;
  }
  out.rate = r;
  return out;
}

}  // namespace detail

inline std::vector<double> model_distribution(const ModelInputs& in, double lambda1, double lambda2) {
  in.validate();
  const std::size_t h = in.half();
  const std::span<const double> q(in.q), e(in.eps_rep);
  // descending e < 0: -l1|e| - l2 e = -(l1 - l2)|e|
  const auto wd = detail::branch_weights(q.first(h), e.first(h), lambda1 - lambda2);
  const auto wa = detail::branch_weights(q.subspan(h), e.subspan(h), lambda1 + lambda2);
  std::vector<double> p;
  p.reserve(in.q.size());
  for (double w : wd) p.push_back(in.mass_desc * w);
  for (double w : wa) p.push_back(in.mass_asc * w);
  return p;
}

struct Expectations {
  double abs = 0.0;
  double signed_ = 0.0;
};

inline Expectations model_expectations(std::span<const double> p, std::span<const double> eps) {
  if (p.size() != eps.size()) throw invalid_input("model_expectations: lists are not aligned");
  Expectations x;
  for (std::size_t k = 0; k < p.size(); ++k) {
    x.abs += p[k] * std::abs(eps[k]);
    x.signed_ += p[k] * eps[k];
  }
  return x;
}

struct ModelSolution {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  std::vector<double> p;
  double achieved_abs = 0.0;
  double achieved_signed = 0.0;
  double error_abs = 0.0;     // relative
  double error_signed = 0.0;  // relative, see signed_error_scale
  int iterations = 0;
};

// Denominator for the relative error on <eps>; a vanishing signed target is
// measured against <|eps|> instead.
inline double signed_error_scale(const ModelInputs& in) {
  return std::max(std::abs(in.target_signed), 1e-9 * std::abs(in.target_abs));
}

inline ModelSolution solve_lagrange(const ModelInputs& in, double tolerance = 0.01, int max_iterations = 400) {
  in.validate();
  if (!(tolerance > 0.0)) throw invalid_input("solve_lagrange: tolerance must be > 0");
  const std::size_t h = in.half();
  const std::span<const double> q(in.q), e(in.eps_rep);

  // branch targets: m_a A_a = (T + S) / 2, m_d A_d = (T - S) / 2
  const double part_asc = 0.5 * (in.target_abs + in.target_signed);
  const double part_desc = 0.5 * (in.target_abs - in.target_signed);
  double lo_total = 0.0, hi_total = 0.0;
  {
    auto bounds = [&](std::span<const double> qb, std::span<const double> eb, double mass) {
      double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
      for (std::size_t k = 0; k < qb.size(); ++k)
        if (qb[k] > 0.0) {
          lo = std::min(lo, std::abs(eb[k]));
          hi = std::max(hi, std::abs(eb[k]));
        }
      lo_total += mass * lo;
      hi_total += mass * hi;
    };
    bounds(q.first(h), e.first(h), in.mass_desc);
    bounds(q.subspan(h), e.subspan(h), in.mass_asc);
  }
  detail::RateSolve rd, ra;
  try {
    rd = detail::solve_branch_rate(q.first(h), e.first(h), part_desc / in.mass_desc, "descending", max_iterations);
    ra = detail::solve_branch_rate(q.subspan(h), e.subspan(h), part_asc / in.mass_asc, "ascending", max_iterations);
  } catch (const infeasible_error& err) {
    throw infeasible_error(std::string(err.what()) + "; <|eps|> attainable in (" + std::to_string(lo_total) + ", " +
                               std::to_string(hi_total) + ")",
                           lo_total, hi_total);
  }

  ModelSolution s;
  s.lambda1 = 0.5 * (ra.rate + rd.rate);
  s.lambda2 = 0.5 * (ra.rate - rd.rate);
  s.iterations = ra.iterations + rd.iterations;
  s.p = model_distribution(in, s.lambda1, s.lambda2);
  const auto x = model_expectations(s.p, in.eps_rep);
  s.achieved_abs = x.abs;
  s.achieved_signed = x.signed_;
  s.error_abs = std::abs(x.abs - in.target_abs) / std::abs(in.target_abs);
  s.error_signed = std::abs(x.signed_ - in.target_signed) / signed_error_scale(in);
  if (!(s.error_abs < tolerance) || !(s.error_signed < tolerance))
    throw convergence_error("solve_lagrange: relative errors " + std::to_string(s.error_abs) + ", " +
                            std::to_string(s.error_signed) + " exceed tolerance " + std::to_string(tolerance));
  return s;
}

enum class DisaggregationMode { Uniform, SeededRandom };

inline std::string_view to_string(DisaggregationMode m) {
  return m == DisaggregationMode::Uniform ? "uniform" : "random";
}

inline DisaggregationMode parse_disaggregation_mode(std::string_view s) {
  if (s == "uniform") return DisaggregationMode::Uniform;
  if (s == "random") return DisaggregationMode::SeededRandom;
  throw invalid_input("unknown disaggregation mode '" + std::string(s) + "' (expected uniform or random)");
}

struct WeightedTransition {
  int from_index = 0;
  int to_index = 0;
  double eps = 0.0;
  std::size_t bin = 0;
  double weight = 0.0;
};

struct TransitionDistribution {
  std::vector<WeightedTransition> transitions;  // grouped by bin; unisons once per branch
  CumulativeCurves curves;
};

// Realizable pitch pairs of `reg` per bin of the model's layout, unisons
// listed in both zero-touching bins.
inline std::vector<std::vector<WeightedTransition>> realizable_by_bin(const ModelInputs& in, const Register& reg) {
  in.validate();
  if (!(in.bin_width > 0.0)) throw invalid_input("model inputs: bin width must be > 0");
  BranchHistogram layout;
  layout.bin_width = in.bin_width;
  layout.bins_per_branch = static_cast<int>(in.half());
  std::vector<std::vector<WeightedTransition>> bins(in.eps_rep.size());
  std::vector<double> freq;
  for (int i = reg.lowest_index; i <= reg.highest_index; ++i) freq.push_back(pitch_frequency(i, reg));
  const double limit = layout.covered_span() * (1.0 + 1e-9);
  for (std::size_t i = 0; i < freq.size(); ++i)
    for (std::size_t j = 0; j < freq.size(); ++j) {
      const int a = reg.lowest_index + static_cast<int>(i), b = reg.lowest_index + static_cast<int>(j);
      if (i == j) {
        for (Branch br : {Branch::Descending, Branch::Ascending}) {
          const auto k = layout.bin_index(0.0, br);
          bins[k].push_back({a, b, 0.0, k, 0.0});
        }
        continue;
      }
      const double e = epsilon(freq[i], freq[j]);
      if (std::abs(e) > limit) throw invalid_input("disaggregate: register exceeds the model's bins");
      const auto k = layout.bin_index(e);
      bins[k].push_back({a, b, e, k, 0.0});
    }
  return bins;
}

inline TransitionDistribution disaggregate(std::span<const double> p, const ModelInputs& in, const Register& reg,
                                           DisaggregationMode mode, std::uint64_t seed = 0) {
  if (p.size() != in.eps_rep.size()) throw invalid_input("disaggregate: p not aligned with the bins");
  auto bins = realizable_by_bin(in, reg);
  Rng rng(seed);
  TransitionDistribution out;
  std::vector<WeightedValue> asc, desc;
  for (std::size_t k = 0; k < bins.size(); ++k) {
    auto& members = bins[k];
    if (p[k] < 0.0) throw invalid_input("disaggregate: negative probability");
    if (members.empty()) {
      if (p[k] > 0.0)
        throw invalid_input("disaggregate: bin " + std::to_string(k) + " has p > 0 but no realizable transitions");
      continue;
    }
    if (mode == DisaggregationMode::Uniform) {
      for (auto& m : members) m.weight = p[k] / static_cast<double>(members.size());
    } else {
      // flat Dirichlet draw
      double total = 0.0;
      for (auto& m : members) total += m.weight = rng.exponential();
      for (auto& m : members) m.weight *= p[k] / total;
    }
    for (const auto& m : members) {
      (k < in.half() ? desc : asc).push_back({m.eps, m.weight});
      out.transitions.push_back(m);
    }
  }
  out.curves = cumulative_curves(asc, desc);
  return out;
}

struct FitComparison {
  ExpFit empirical;
  ExpFit model;
  double delta_F = 0.0;  // (model - empirical) / empirical
  double delta_G = 0.0;
  bool same_order_F = false;  // within a factor of ten
  bool same_order_G = false;
};

struct ComparisonReport {
  FitComparison ascending;
  FitComparison descending;
};

namespace detail {

inline FitComparison compare_fits(const ExpFit& emp, const ExpFit& mod) {
  FitComparison c{emp, mod};
  c.delta_F = (mod.F - emp.F) / emp.F;
  c.delta_G = (mod.G - emp.G) / emp.G;
  c.same_order_F = std::abs(std::log10(mod.F / emp.F)) < 1.0;
  c.same_order_G = std::abs(std::log10(mod.G / emp.G)) < 1.0;
  return c;
}

inline std::vector<CumulativePoint> above_floor(std::span<const CumulativePoint> pts, double floor) {
  std::vector<CumulativePoint> out;
  for (const auto& p : pts)
    if (p.y >= floor) out.push_back(p);
  return out;
}

}  // namespace detail

// Exponential fits of both curve pairs over the points with y >= min_y.
inline ComparisonReport compare(const CumulativeCurves& model, const CumulativeCurves& empirical, double min_y = 1e-3) {
  ComparisonReport r;
  r.ascending = detail::compare_fits(fit_exponential(detail::above_floor(empirical.ascending, min_y)),
                                     fit_exponential(detail::above_floor(model.ascending, min_y)));
  r.descending = detail::compare_fits(fit_exponential(detail::above_floor(empirical.descending, min_y)),
                                      fit_exponential(detail::above_floor(model.descending, min_y)));
  return r;
}

}  // namespace melmax
