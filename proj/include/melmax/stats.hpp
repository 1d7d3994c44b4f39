#pragma once

// Empirical statistics of eps = f_{i+1}^2 - f_i^2 over a melodic line.
//
// Histograms are two-branched: descending bins (y, 0] and ascending bins
// [0, x), with every unison counted once in each branch's bin touching zero.
// Probabilities are counts over the number of transitions, so they sum to
// 1 + p_u. Bin counts per branch follow Sturges on that branch's count; the
// merged width is the mean of the two branch widths and both branches are
// re-binned at it, with as many bins per branch as the line's ambitus needs.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "melmax/error.hpp"
#include "melmax/ingest.hpp"
#include "melmax/numeric.hpp"
#include "melmax/scales.hpp"

namespace melmax {

inline int sturges_bin_count(std::int64_t n) {
  if (n < 1) throw invalid_input("sturges_bin_count: n must be >= 1");
  // ceil(1 + log2 n) == 1 + bit_width(n - 1) for n >= 1
  return 1 + static_cast<int>(std::bit_width(static_cast<std::uint64_t>(n - 1)));
}

enum class Branch { Descending, Ascending };

struct Bin {
  int k = 0;
  Branch branch = Branch::Ascending;
  double lower = 0.0;
  double upper = 0.0;
  double eps_rep = 0.0;  // midpoint of the edges
  std::int64_t count = 0;
  double p = 0.0;
};

struct BranchHistogram {
  double bin_width = 0.0;   // merged width used by `bins`
  double width_desc = 0.0;  // per-branch Sturges widths before merging
  double width_asc = 0.0;
  int bins_per_branch = 0;
  std::vector<Bin> bins;  // descending (most negative first), then ascending
  std::int64_t n_transitions = 0;
  std::int64_t n_unisons = 0;
  std::int64_t n_ascending = 0;
  std::int64_t n_descending = 0;

  double p_unison() const {
    return n_transitions > 0 ? static_cast<double>(n_unisons) / static_cast<double>(n_transitions) : 0.0;
  }
  std::span<const Bin> descending() const { return {bins.data(), static_cast<std::size_t>(bins_per_branch)}; }
  std::span<const Bin> ascending() const {
    return {bins.data() + bins_per_branch, static_cast<std::size_t>(bins_per_branch)};
  }
  std::vector<double> probabilities() const {
    std::vector<double> p;
    for (const auto& b : bins) p.push_back(b.p);
    return p;
  }
  std::vector<double> representatives() const {
    std::vector<double> e;
    for (const auto& b : bins) e.push_back(b.eps_rep);
    return e;
  }

  // Index into `bins` for a strictly signed eps, or for a unison on the
  // requested branch. Values past the last edge land in the last bin.
  std::size_t bin_index(double eps, Branch unison_branch = Branch::Ascending) const {
    const double mag = std::abs(eps);
    auto steps = static_cast<std::int64_t>(std::floor(mag / bin_width));
    // agree with the stored edges j * w: |eps| in [j w, (j + 1) w)
    if (mag >= static_cast<double>(steps + 1) * bin_width) ++steps;
    if (steps > 0 && mag < static_cast<double>(steps) * bin_width) --steps;
    const int j = static_cast<int>(std::min<std::int64_t>(steps, bins_per_branch - 1));
    const bool ascending = eps > 0.0 || (eps == 0.0 && unison_branch == Branch::Ascending);
    return static_cast<std::size_t>(ascending ? bins_per_branch + j : bins_per_branch - 1 - j);
  }
  double covered_span() const { return bin_width * bins_per_branch; }
};

namespace detail {

inline double ambitus_span(std::span<const Transition> ts) {
  double lo = ts.front().f_from, hi = lo;
  for (const auto& t : ts) {
    lo = std::min({lo, t.f_from, t.f_to});
    hi = std::max({hi, t.f_from, t.f_to});
  }
  return hi * hi - lo * lo;
}

}  // namespace detail

// Fills `bins` with 2 * bins_per_branch empty bins of width bin_width.
inline void layout_bins(BranchHistogram& h) {
  if (!(h.bin_width > 0.0) || h.bins_per_branch < 1) throw invalid_input("layout_bins: need a positive width and bin count");
  const int nb = h.bins_per_branch;
  const double w = h.bin_width;
  h.bins.assign(static_cast<std::size_t>(2 * nb), Bin{});
  for (int j = 0; j < nb; ++j) {
    Bin& d = h.bins[static_cast<std::size_t>(nb - 1 - j)];
    d.k = nb - 1 - j;
    d.branch = Branch::Descending;
    d.lower = -(j + 1) * w;
    d.upper = -j * w;
    Bin& a = h.bins[static_cast<std::size_t>(nb + j)];
    a.k = nb + j;
    a.branch = Branch::Ascending;
    a.lower = j * w;
    a.upper = (j + 1) * w;
  }
  for (auto& b : h.bins) b.eps_rep = 0.5 * (b.lower + b.upper);
}

// Counts transitions into an already laid-out histogram, unisons into both
// zero-touching bins, and sets p = count / n_transitions.
inline void fill_histogram(BranchHistogram& h, std::span<const Transition> ts) {
  if (ts.empty()) throw invalid_input("fill_histogram: no transitions");
  for (auto& b : h.bins) b.count = 0;
  h.n_transitions = static_cast<std::int64_t>(ts.size());
  h.n_unisons = h.n_ascending = h.n_descending = 0;
  for (const auto& t : ts) {
    if (t.kind == TransitionKind::Unison) {
      ++h.n_unisons;
      ++h.bins[h.bin_index(0.0, Branch::Ascending)].count;
      ++h.bins[h.bin_index(0.0, Branch::Descending)].count;
    } else {
      ++(t.kind == TransitionKind::Ascending ? h.n_ascending : h.n_descending);
      ++h.bins[h.bin_index(t.eps)].count;
    }
  }
  for (auto& b : h.bins) b.p = static_cast<double>(b.count) / static_cast<double>(h.n_transitions);
}

inline BranchHistogram branch_histograms(std::span<const Transition> ts) {
  BranchHistogram h;
  double max_asc = 0.0, max_desc = 0.0;
  for (const auto& t : ts) {
    if (t.kind == TransitionKind::Ascending) {
      ++h.n_ascending;
      max_asc = std::max(max_asc, t.eps);
    } else if (t.kind == TransitionKind::Descending) {
      ++h.n_descending;
      max_desc = std::max(max_desc, -t.eps);
    } else {
      ++h.n_unisons;
    }
  }
  if (h.n_ascending == 0 || h.n_descending == 0)
    throw invalid_input("branch_histograms: need both ascending and descending transitions (got " +
                        std::to_string(h.n_ascending) + " ascending, " + std::to_string(h.n_descending) +
                        " descending)");
  h.n_transitions = static_cast<std::int64_t>(ts.size());
  h.width_asc = max_asc / sturges_bin_count(h.n_ascending + h.n_unisons);
  h.width_desc = max_desc / sturges_bin_count(h.n_descending + h.n_unisons);
  h.bin_width = 0.5 * (h.width_asc + h.width_desc);
  const double span = std::max({detail::ambitus_span(ts), max_asc, max_desc});
  h.bins_per_branch = std::max(1, static_cast<int>(std::ceil(span / h.bin_width * (1.0 - 1e-12))));

  layout_bins(h);
  fill_histogram(h, ts);
  return h;
}

struct CumulativePoint {
  double x = 0.0;
  double y = 0.0;
};

// CCDF of the ascending branch (fraction of branch values >= x, x >= 0) and
// CDF of the descending branch (fraction <= x, x <= 0). Unisons belong to both.
struct CumulativeCurves {
  std::vector<CumulativePoint> ascending;   // x increasing, y decreasing
  std::vector<CumulativePoint> descending;  // x increasing, y increasing
};

struct WeightedValue {
  double eps = 0.0;
  double weight = 1.0;
};

namespace detail {

// Fraction of weight at or above each distinct value, values ascending.
// Suffix sums keep the far tail accurate.
inline std::vector<CumulativePoint> ccdf_points(std::vector<WeightedValue> vals) {
  std::stable_sort(vals.begin(), vals.end(), [](const auto& a, const auto& b) { return a.eps < b.eps; });
  std::vector<CumulativePoint> out;
  double above = 0.0;
  for (std::size_t i = vals.size(); i > 0;) {
    std::size_t j = i;
    while (j > 0 && vals[j - 1].eps == vals[i - 1].eps) above += vals[--j].weight;
    out.push_back({vals[i - 1].eps, above});
    i = j;
  }
  if (!(above > 0.0)) return {};
  std::reverse(out.begin(), out.end());
  for (auto& p : out) p.y = std::clamp(p.y / above, 0.0, 1.0);
  return out;
}

// Fraction of weight at or below each distinct value, values ascending.
inline std::vector<CumulativePoint> cdf_points(std::vector<WeightedValue> vals) {
  std::stable_sort(vals.begin(), vals.end(), [](const auto& a, const auto& b) { return a.eps < b.eps; });
  double total = 0.0;
  for (const auto& v : vals) total += v.weight;
  std::vector<CumulativePoint> out;
  if (!(total > 0.0)) return out;
  double below = 0.0;
  for (std::size_t i = 0; i < vals.size();) {
    std::size_t j = i;
    while (j < vals.size() && vals[j].eps == vals[i].eps) below += vals[j++].weight;
    out.push_back({vals[i].eps, std::clamp(below / total, 0.0, 1.0)});
    i = j;
  }
  return out;
}

inline void check_weights(std::span<const WeightedValue> values) {
  for (const auto& v : values)
    if (!(v.weight >= 0.0)) throw invalid_input("cumulative_curves: negative weight");
}

}  // namespace detail

// Values split by sign, zero going to both branches.
inline CumulativeCurves cumulative_curves(std::span<const WeightedValue> values) {
  detail::check_weights(values);
  std::vector<WeightedValue> asc, desc;
  for (const auto& v : values) {
    if (v.eps >= 0.0) asc.push_back(v);
    if (v.eps <= 0.0) desc.push_back(v);
  }
  return {detail::ccdf_points(std::move(asc)), detail::cdf_points(std::move(desc))};
}

// Branch membership given explicitly, e.g. unison shares that differ per branch.
inline CumulativeCurves cumulative_curves(std::span<const WeightedValue> ascending,
                                          std::span<const WeightedValue> descending) {
  detail::check_weights(ascending);
  detail::check_weights(descending);
  return {detail::ccdf_points({ascending.begin(), ascending.end()}),
          detail::cdf_points({descending.begin(), descending.end()})};
}

inline CumulativeCurves ccdf_cdf(std::span<const Transition> ts) {
  if (ts.empty()) throw invalid_input("ccdf_cdf: no transitions");
  std::vector<WeightedValue> values;
  values.reserve(ts.size());
  for (const auto& t : ts) values.push_back({t.eps, 1.0});
  return cumulative_curves(values);
}

// y = F e^{-x / G}
struct ExpFit {
  double F = 0.0;
  double G = 0.0;
  double r_squared = 0.0;

  double operator()(double x) const { return F * std::exp(-x / G); }
};

// Linear least squares of ln y on x; R^2 on the original scale.
inline ExpFit fit_exponential(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw invalid_input("fit_exponential: size mismatch");
  if (x.size() < 2) throw invalid_input("fit_exponential: need at least two points");
  std::vector<double> ly;
  for (double v : y) {
    if (!(v > 0.0)) throw invalid_input("fit_exponential: y values must be positive");
    ly.push_back(std::log(v));
  }
  const LinearFit lin = linear_least_squares(x, ly);
  if (!(lin.slope < 0.0)) throw invalid_input("fit_exponential: data does not decay");
  ExpFit fit{std::exp(lin.intercept), -1.0 / lin.slope, 0.0};
  std::vector<double> pred;
  for (double v : x) pred.push_back(fit(v));
  fit.r_squared = r_squared(y, pred);
  return fit;
}

inline ExpFit fit_exponential(std::span<const CumulativePoint> points) {
  std::vector<double> x, y;
  for (const auto& p : points) {
    if (p.y <= 0.0) continue;
    x.push_back(std::abs(p.x));
    y.push_back(p.y);
  }
  return fit_exponential(x, y);
}

// Exponential fit of one histogram branch over its non-empty bins, against |eps_rep|.
inline ExpFit fit_histogram_branch(const BranchHistogram& h, Branch branch) {
  std::vector<double> x, y;
  for (const auto& b : branch == Branch::Ascending ? h.ascending() : h.descending()) {
    if (b.p <= 0.0) continue;
    x.push_back(std::abs(b.eps_rep));
    y.push_back(b.p);
  }
  return fit_exponential(x, y);
}

// Share of each bin among all ordered pitch pairs of a register: the
// distribution a melodic line picking every transition equally would show.
struct Degeneracy {
  std::vector<double> q;  // aligned with the histogram bins
  std::vector<std::int64_t> counts;
  std::int64_t n_pairs = 0;  // ordered pairs, unisons once
  std::int64_t n_unisons = 0;
  Register source_register;

  double q_unison() const { return n_pairs > 0 ? static_cast<double>(n_unisons) / static_cast<double>(n_pairs) : 0.0; }
};

inline Degeneracy bin_degeneracy(const Register& reg, const BranchHistogram& hist) {
  if (reg.lowest_index > reg.highest_index) throw invalid_input("bin_degeneracy: empty register");
  Degeneracy d;
  d.source_register = reg;
  d.counts.assign(hist.bins.size(), 0);
  std::vector<double> freq;
  for (int i = reg.lowest_index; i <= reg.highest_index; ++i) freq.push_back(pitch_frequency(i, reg));
  const double limit = hist.covered_span() * (1.0 + 1e-9);
  for (std::size_t i = 0; i < freq.size(); ++i) {
    for (std::size_t j = 0; j < freq.size(); ++j) {
      ++d.n_pairs;
      if (i == j) {
        ++d.n_unisons;
        ++d.counts[hist.bin_index(0.0, Branch::Ascending)];
        ++d.counts[hist.bin_index(0.0, Branch::Descending)];
        continue;
      }
      const double e = epsilon(freq[i], freq[j]);
      if (std::abs(e) > limit)
        throw invalid_input("bin_degeneracy: register spans |eps| = " + std::to_string(std::abs(e)) +
                            " beyond the histogram's " + std::to_string(hist.covered_span()));
      ++d.counts[hist.bin_index(e)];
    }
  }
  for (auto c : d.counts) d.q.push_back(static_cast<double>(c) / static_cast<double>(d.n_pairs));
  return d;
}

// sum p_k ln(p_k / q_k), with 0 ln 0 = 0.
inline double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw invalid_input("kl_divergence: distributions are not aligned");
  double d = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] < 0.0 || q[k] < 0.0) throw invalid_input("kl_divergence: negative probability");
    if (p[k] == 0.0) continue;
    if (q[k] == 0.0) throw invalid_input("kl_divergence: p > 0 where q = 0 at bin " + std::to_string(k));
    d += p[k] * std::log(p[k] / q[k]);
  }
  return d;
}

struct Observables {
  double mass_desc = 0.0;  // p_d + p_u
  double mass_asc = 0.0;   // p_a + p_u
  double p_unison = 0.0;
  double mean_abs_eps = 0.0;
  double mean_eps = 0.0;
  std::vector<double> deltas;  // f_last^2 - f_first^2 per segment
  std::int64_t n_transitions = 0;
  double mean_abs_delta_per_transition = 0.0;  // |sum delta| / G
};

inline Observables observables(const BranchHistogram& hist, const MelodicLine& line) {
  Observables o;
  for (const auto& b : hist.descending()) o.mass_desc += b.p;
  for (const auto& b : hist.ascending()) o.mass_asc += b.p;
  for (const auto& b : hist.bins) {
    o.mean_abs_eps += b.p * std::abs(b.eps_rep);
    o.mean_eps += b.p * b.eps_rep;
  }
  o.p_unison = hist.p_unison();
  double sum = 0.0;
  for (const auto& seg : line.segments) {
    if (seg.pitches.empty()) continue;
    const double first = seg.pitches.front().frequency, last = seg.pitches.back().frequency;
    const double delta = seg.pitches.front().note_index == seg.pitches.back().note_index ? 0.0 : epsilon(first, last);
    o.deltas.push_back(delta);
    sum += delta;
    o.n_transitions += static_cast<std::int64_t>(seg.pitches.size()) - 1;
  }
  if (o.n_transitions > 0) o.mean_abs_delta_per_transition = std::abs(sum) / static_cast<double>(o.n_transitions);
  return o;
}

// Per-bin split of <|eps|> ~ a <|df|^2 / L> into an interval-size dispersion
// term and a register-location term, grouping bin members by size L.
struct BinDecomposition {
  int k = 0;
  std::int64_t members = 0;
  double variance_term = 0.0;  // <sigma^2 / L>_k
  double location_term = 0.0;  // <mean(|df|)^2 / L>_k
};

struct DecompositionReport {
  std::vector<BinDecomposition> bins;  // non-empty bins only
  double a = 0.0;
  double estimate_abs = 0.0;  // a * sum_k p_k (variance + location)
};

inline DecompositionReport bin_decomposition(std::span<const Transition> ts, const BranchHistogram& hist,
                                             const PowerLawFit& fit) {
  DecompositionReport report;
  report.a = fit.a;
  if (ts.empty()) return report;

  struct Acc {
    std::int64_t n = 0;
    double sum = 0.0;
    double sum_sq = 0.0;
  };
  // per bin: interval size -> accumulated |df|
  std::vector<std::map<int, Acc>> groups(hist.bins.size());
  std::vector<std::int64_t> members(hist.bins.size(), 0);
  for (const auto& t : ts) {
    const int size = std::abs(interval_size(t.f_from, t.f_to));
    const double df = std::abs(t.f_to - t.f_from);
    auto add = [&](std::size_t k) {
      ++members[k];
      if (size == 0) return;  // unisons contribute zero to both terms
      auto& acc = groups[k][size];
      ++acc.n;
      acc.sum += df;
      acc.sum_sq += df * df;
    };
    if (t.kind == TransitionKind::Unison) {
      add(hist.bin_index(0.0, Branch::Ascending));
      add(hist.bin_index(0.0, Branch::Descending));
    } else {
      add(hist.bin_index(t.eps));
    }
  }
  for (std::size_t k = 0; k < hist.bins.size(); ++k) {
    if (members[k] == 0) continue;
    BinDecomposition d;
    d.k = static_cast<int>(k);
    d.members = members[k];
    for (const auto& [size, acc] : groups[k]) {
      const double share = static_cast<double>(acc.n) / static_cast<double>(members[k]);
      const double mean = acc.sum / static_cast<double>(acc.n);
      const double var = std::max(0.0, acc.sum_sq / static_cast<double>(acc.n) - mean * mean);
      d.variance_term += share * var / size;
      d.location_term += share * mean * mean / size;
    }
    report.estimate_abs += hist.bins[k].p * (d.variance_term + d.location_term);
    report.bins.push_back(d);
  }
  report.estimate_abs *= fit.a;
  return report;
}

// Difference of mean total energy density of two equal-amplitude waves in a
// medium of density rho: 2 pi^2 rho T (f_j^2 - f_i^2).
inline double energy_density_difference(double f_i, double f_j, double rho = 1.2, double amplitude = 1.0) {
  if (!(rho > 0.0) || !(amplitude > 0.0)) throw invalid_input("energy_density_difference: rho and T must be > 0");
  return 2.0 * std::numbers::pi * std::numbers::pi * rho * amplitude * epsilon(f_i, f_j);
}

}  // namespace melmax
