#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "melmax/stats.hpp"
#include "test_support.hpp"

using Catch::Approx;
using namespace melmax;

namespace {

std::vector<Transition> from_indices(std::initializer_list<std::pair<int, int>> pairs) {
  std::vector<Transition> ts;
  for (auto [a, b] : pairs) ts.push_back(make_transition(a, b));
  return ts;
}

// Every ordered pair of distinct pitches in [lo, hi].
std::vector<Transition> all_pairs(int lo, int hi) {
  std::vector<Transition> ts;
  for (int i = lo; i <= hi; ++i)
    for (int j = lo; j <= hi; ++j)
      if (i != j) ts.push_back(make_transition(i, j));
  return ts;
}

}  // namespace

TEST_CASE("sturges bin count", "[stats]") {
  REQUIRE(sturges_bin_count(100) == 8);
  REQUIRE(sturges_bin_count(1) == 1);
  REQUIRE(sturges_bin_count(1024) == 11);
  REQUIRE(sturges_bin_count(2) == 2);
  REQUIRE(sturges_bin_count(1025) == 12);
  for (std::int64_t n = 1; n < 5000; n += 7)
    REQUIRE(sturges_bin_count(n) == static_cast<int>(std::ceil(1.0 + std::log2(static_cast<double>(n)) - 1e-12)));
  REQUIRE_THROWS_AS(sturges_bin_count(0), invalid_input);
}

TEST_CASE("histogram of one ascending and one descending octave", "[stats]") {
  const auto ts = from_indices({{69, 81}, {81, 69}});
  const auto h = branch_histograms(ts);
  REQUIRE(h.bins_per_branch == 1);
  REQUIRE(h.bins.size() == 2);
  REQUIRE(h.bins[0].p == 0.5);
  REQUIRE(h.bins[1].p == 0.5);
  REQUIRE(h.bin_width == Approx(580800.0));
  REQUIRE(h.bins[0].eps_rep == Approx(-290400.0));
  REQUIRE(h.bins[1].eps_rep == Approx(290400.0));
}

TEST_CASE("unisons are counted in both branches", "[stats]") {
  const auto ts = from_indices({{69, 81}, {69, 81}, {81, 69}, {70, 70}});
  const auto h = branch_histograms(ts);
  double total = 0.0, asc = 0.0, desc = 0.0;
  for (const auto& b : h.bins) total += b.p;
  for (const auto& b : h.ascending()) asc += b.p;
  for (const auto& b : h.descending()) desc += b.p;
  REQUIRE(total == Approx(1.25).epsilon(1e-15));
  REQUIRE(h.p_unison() == 0.25);
  REQUIRE(asc == Approx(0.75).epsilon(1e-15));
  REQUIRE(desc == Approx(0.5).epsilon(1e-15));
  REQUIRE(h.ascending().front().count >= 1);
  REQUIRE(h.descending().back().count >= 1);
}

TEST_CASE("single-branch data is rejected", "[stats]") {
  REQUIRE_THROWS_AS(branch_histograms(from_indices({{60, 62}, {62, 64}})), invalid_input);
  REQUIRE_THROWS_AS(branch_histograms(from_indices({{64, 62}, {62, 62}})), invalid_input);
  REQUIRE_THROWS_AS(branch_histograms(std::vector<Transition>{}), invalid_input);
}

TEST_CASE("histogram invariants on random lines", "[stats][property]") {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const auto line = testing::random_line(rng, 36, 96, 1 + static_cast<int>(rng.next() % 4), 80);
    const auto ts = transitions(line);
    bool up = false, down = false;
    for (const auto& t : ts) {
      up |= t.kind == TransitionKind::Ascending;
      down |= t.kind == TransitionKind::Descending;
    }
    if (!up || !down) continue;
    const auto h = branch_histograms(ts);
    std::int64_t counts = 0;
    for (const auto& b : h.bins) counts += b.count;
    // exact on counts: sum p = (n + n_u) / n
    REQUIRE(counts == h.n_transitions + h.n_unisons);
    double total = 0.0;
    for (const auto& b : h.bins) total += b.p;
    REQUIRE(total == Approx(1.0 + h.p_unison()).epsilon(1e-14));

    REQUIRE(h.bin_width == Approx(0.5 * (h.width_asc + h.width_desc)));
    for (const auto& t : ts) {
      if (t.kind == TransitionKind::Unison) continue;
      const auto& b = h.bins[h.bin_index(t.eps)];
      REQUIRE(t.eps >= b.lower - 1e-9 * std::abs(t.eps));
      if (t.kind == TransitionKind::Ascending && b.k != static_cast<int>(h.bins.size()) - 1)
        REQUIRE(t.eps < b.upper);
      if (t.kind == TransitionKind::Descending) {
        REQUIRE(t.eps <= b.upper);
        if (b.k != 0) REQUIRE(t.eps > b.lower);
      }
    }
    for (std::size_t k = 0; k < h.bins.size(); ++k) {
      REQUIRE(h.bins[k].k == static_cast<int>(k));
      REQUIRE(h.bins[k].eps_rep == Approx(0.5 * (h.bins[k].lower + h.bins[k].upper)));
      if (k > 0) REQUIRE(h.bins[k].lower == Approx(h.bins[k - 1].upper).margin(1e-6));
    }
  }
}

TEST_CASE("branch histogram of a symmetric Laplace sample fits an exponential", "[stats][montecarlo]") {
  // Signed eps drawn from a Laplace density and snapped to the nearest
  // realizable transition of three octaves.
  const auto pool = all_pairs(48, 84);
  std::vector<Transition> up, down;
  for (const auto& t : pool) (t.eps > 0 ? up : down).push_back(t);
  auto by_abs = [](const Transition& a, const Transition& b) { return std::abs(a.eps) < std::abs(b.eps); };
  std::sort(up.begin(), up.end(), by_abs);
  std::sort(down.begin(), down.end(), by_abs);
  const double top = std::abs(up.back().eps);
  const double s = top / 6.0;
  Rng rng(4242);
  std::vector<Transition> sample;
  while (sample.size() < 10000) {
    const auto& branch = rng.uniform() < 0.5 ? up : down;
    const double mag = s * rng.exponential();
    if (mag > top) continue;
    auto it = std::lower_bound(branch.begin(), branch.end(), mag,
                               [](const Transition& t, double m) { return std::abs(t.eps) < m; });
    if (it == branch.end() || (it != branch.begin() && mag - std::abs((it - 1)->eps) < std::abs(it->eps) - mag)) --it;
    sample.push_back(*it);
  }
  const auto h = branch_histograms(sample);
  REQUIRE(fit_histogram_branch(h, Branch::Ascending).r_squared >= 0.97);
  REQUIRE(fit_histogram_branch(h, Branch::Descending).r_squared >= 0.97);
}

TEST_CASE("ccdf and cdf", "[stats]") {
  std::vector<WeightedValue> vals{{1.0}, {2.0}, {3.0}};
  auto c = cumulative_curves(vals);
  REQUIRE(c.ascending.size() == 3);
  REQUIRE(c.ascending[0].y == 1.0);
  REQUIRE(c.ascending[1].x == 2.0);
  REQUIRE(c.ascending[1].y == Approx(2.0 / 3.0));
  REQUIRE(c.descending.empty());

  std::vector<WeightedValue> same{{5.0}, {5.0}, {5.0}};
  c = cumulative_curves(same);
  REQUIRE(c.ascending.size() == 1);
  REQUIRE(c.ascending[0].y == 1.0);

  std::vector<WeightedValue> mixed{{-3.0}, {-1.0}, {0.0}, {2.0}};
  c = cumulative_curves(mixed);
  REQUIRE(c.descending.size() == 3);
  REQUIRE(c.descending[0].x == -3.0);
  REQUIRE(c.descending[0].y == Approx(1.0 / 3.0));
  REQUIRE(c.descending.back().x == 0.0);
  REQUIRE(c.descending.back().y == 1.0);
  REQUIRE(c.ascending.front().x == 0.0);
  REQUIRE(c.ascending.front().y == 1.0);
  REQUIRE(c.ascending.back().y == 0.5);

  REQUIRE_THROWS_AS(ccdf_cdf(std::vector<Transition>{}), invalid_input);
}

TEST_CASE("ccdf and cdf are monotone and bounded", "[stats][property]") {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const auto line = testing::random_line(rng, 40, 90, 2, 60);
    const auto ts = transitions(line);
    if (ts.empty()) continue;
    const auto c = ccdf_cdf(ts);
    for (std::size_t i = 0; i < c.ascending.size(); ++i) {
      REQUIRE(c.ascending[i].y > 0.0);
      REQUIRE(c.ascending[i].y <= 1.0);
      if (i > 0) {
        REQUIRE(c.ascending[i].x > c.ascending[i - 1].x);
        REQUIRE(c.ascending[i].y < c.ascending[i - 1].y);
      }
    }
    for (std::size_t i = 0; i < c.descending.size(); ++i) {
      REQUIRE(c.descending[i].y > 0.0);
      REQUIRE(c.descending[i].y <= 1.0);
      if (i > 0) {
        REQUIRE(c.descending[i].x > c.descending[i - 1].x);
        REQUIRE(c.descending[i].y > c.descending[i - 1].y);
      }
    }
    if (!c.ascending.empty()) REQUIRE(c.ascending.front().y == 1.0);
    if (!c.descending.empty()) REQUIRE(c.descending.back().y == Approx(1.0));
  }
}

TEST_CASE("exponential fit", "[stats]") {
  std::vector<double> x{0, 1, 2, 4, 7, 11}, y;
  for (double v : x) y.push_back(2.0 * std::exp(-v / 5.0));
  auto fit = fit_exponential(x, y);
  REQUIRE(fit.F == Approx(2.0).epsilon(1e-12));
  REQUIRE(fit.G == Approx(5.0).epsilon(1e-12));
  REQUIRE(fit.r_squared == Approx(1.0).epsilon(1e-12));

  std::vector<double> x2{1.0, 3.0}, y2{0.5, 0.1};
  fit = fit_exponential(x2, y2);
  REQUIRE(fit(1.0) == Approx(0.5).epsilon(1e-12));
  REQUIRE(fit(3.0) == Approx(0.1).epsilon(1e-12));
  REQUIRE(fit.r_squared == Approx(1.0));

  std::vector<double> bad{1.0, 0.0, 0.5};
  std::vector<double> x3{0.0, 1.0, 2.0};
  REQUIRE_THROWS_AS(fit_exponential(x3, bad), invalid_input);
  std::vector<double> rising{1.0, 2.0, 4.0};
  REQUIRE_THROWS_AS(fit_exponential(x3, rising), invalid_input);
  std::vector<double> one{1.0};
  REQUIRE_THROWS_AS(fit_exponential(one, one), invalid_input);
}

TEST_CASE("exponential fit recovers a sampled decay scale", "[stats][montecarlo]") {
  Rng rng(77);
  const double scale = 2.5e4;
  std::vector<WeightedValue> vals;
  for (int i = 0; i < 20000; ++i) vals.push_back({scale * rng.exponential()});
  const auto c = cumulative_curves(vals);
  // the far tail holds only a handful of samples
  std::vector<CumulativePoint> body;
  for (const auto& p : c.ascending)
    if (p.y >= 1e-3) body.push_back(p);
  const auto fit = fit_exponential(body);
  REQUIRE(fit.G == Approx(scale).epsilon(0.05));
}

TEST_CASE("degeneracy of a three-pitch register", "[stats]") {
  // C4 D4 E4, one bin per branch covering the widest pair.
  Register reg;
  reg.lowest_index = 60;
  reg.highest_index = 64;
  const double c4 = tet_frequency(60), e4 = tet_frequency(64);
  BranchHistogram h;
  h.bin_width = e4 * e4 - c4 * c4;
  h.bins_per_branch = 1;
  layout_bins(h);
  // The register here is five semitones wide; the three-pitch case uses a
  // register holding exactly those pitches.
  Register three = reg;
  three.lowest_index = 60;
  three.highest_index = 62;
  const auto d3 = bin_degeneracy(three, h);
  // 3 pitches: 9 ordered pairs, 3 ascending + 3 unisons per branch.
  REQUIRE(d3.n_pairs == 9);
  REQUIRE(d3.counts == std::vector<std::int64_t>{6, 6});
  REQUIRE(d3.q[0] == Approx(6.0 / 9.0));
  REQUIRE(d3.q_unison() == Approx(1.0 / 3.0));

  const auto d5 = bin_degeneracy(reg, h);
  REQUIRE(d5.n_pairs == 25);
  REQUIRE(d5.counts == std::vector<std::int64_t>{15, 15});
  double total = 0.0;
  for (double q : d5.q) total += q;
  REQUIRE(total == Approx(1.0 + d5.q_unison()));
}

TEST_CASE("degeneracy matches brute-force enumeration", "[stats][property]") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto line = testing::random_line(rng, 45, 85, 3, 50);
    const auto ts = transitions(line);
    bool up = false, down = false;
    for (const auto& t : ts) {
      up |= t.kind == TransitionKind::Ascending;
      down |= t.kind == TransitionKind::Descending;
    }
    if (!up || !down) continue;
    const auto h = branch_histograms(ts);
    Register reg;
    reg.lowest_index = 127;
    reg.highest_index = 0;
    for (const auto& seg : line.segments)
      for (const auto& p : seg.pitches) {
        reg.lowest_index = std::min(reg.lowest_index, p.note_index);
        reg.highest_index = std::max(reg.highest_index, p.note_index);
      }
    const auto d = bin_degeneracy(reg, h);
    const auto again = bin_degeneracy(reg, h);
    REQUIRE(d.q == again.q);

    std::vector<std::int64_t> oracle(h.bins.size(), 0);
    for (int i = reg.lowest_index; i <= reg.highest_index; ++i)
      for (int j = reg.lowest_index; j <= reg.highest_index; ++j) {
        const double e = tet_frequency(j) * tet_frequency(j) - tet_frequency(i) * tet_frequency(i);
        if (i == j) {
          ++oracle[static_cast<std::size_t>(h.bins_per_branch - 1)];
          ++oracle[static_cast<std::size_t>(h.bins_per_branch)];
          continue;
        }
        // linear search over edges
        std::size_t k = 0;
        if (e > 0) {
          for (k = static_cast<std::size_t>(h.bins_per_branch); k + 1 < h.bins.size() && e >= h.bins[k].upper; ++k) {}
        } else {
          for (k = static_cast<std::size_t>(h.bins_per_branch - 1); k > 0 && e <= h.bins[k].lower; --k) {}
        }
        ++oracle[k];
      }
    REQUIRE(d.counts == oracle);
    const auto rq = static_cast<double>(d.n_pairs);
    REQUIRE(d.n_pairs == static_cast<std::int64_t>(reg.size()) * static_cast<std::int64_t>(reg.size()));
    for (std::size_t k = 0; k < d.q.size(); ++k) REQUIRE(d.q[k] == static_cast<double>(oracle[k]) / rq);
  }
}

TEST_CASE("degeneracy decreases with |eps| and follows a power law over three octaves", "[stats]") {
  const auto ts = all_pairs(48, 84);
  const auto h = branch_histograms(ts);
  Register reg;
  reg.lowest_index = 48;
  reg.highest_index = 84;
  const auto d = bin_degeneracy(reg, h);
  const auto nb = static_cast<std::size_t>(h.bins_per_branch);
  REQUIRE(d.q[nb] >= d.q.back());
  REQUIRE(d.q[nb - 1] >= d.q.front());
  std::vector<double> x, y;
  for (std::size_t k = nb; k < d.q.size(); ++k)
    if (d.q[k] > 0.0) {
      x.push_back(h.bins[k].eps_rep);
      y.push_back(d.q[k]);
    }
  const auto pow = fit_power_law(x, y);
  const auto ex = fit_exponential(x, y);
  REQUIRE(pow.r_squared > ex.r_squared);
}

TEST_CASE("degeneracy rejects registers wider than the bins", "[stats]") {
  const auto h = branch_histograms(from_indices({{60, 62}, {62, 60}}));
  Register reg;
  reg.lowest_index = 60;
  reg.highest_index = 72;
  REQUIRE_THROWS_AS(bin_degeneracy(reg, h), invalid_input);
}

TEST_CASE("kl divergence", "[stats]") {
  std::vector<double> p{0.9, 0.1}, q{0.5, 0.5};
  REQUIRE(kl_divergence(p, q) == Approx(0.9 * std::log(1.8) + 0.1 * std::log(0.2)));
  REQUIRE(kl_divergence(p, q) == Approx(0.368).margin(5e-4));
  REQUIRE(kl_divergence(q, q) == 0.0);
  std::vector<double> p0{1.0, 0.0}, q0{0.0, 1.0};
  REQUIRE_THROWS_AS(kl_divergence(p0, q0), invalid_input);
  REQUIRE(kl_divergence(p0, q) == Approx(std::log(2.0)));
  std::vector<double> short_q{1.0};
  REQUIRE_THROWS_AS(kl_divergence(p, short_q), invalid_input);
}

TEST_CASE("kl divergence is nonnegative and vanishes only at p = q", "[stats][property]") {
  Rng rng(1000);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.next() % 20;
    std::vector<double> p(n), q(n);
    double sp = 0.0, sq = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      p[k] = rng.exponential();
      q[k] = rng.exponential();
      sp += p[k];
      sq += q[k];
    }
    for (std::size_t k = 0; k < n; ++k) {
      p[k] /= sp;
      q[k] /= sq;
    }
    REQUIRE(kl_divergence(p, q) > 0.0);
    REQUIRE(kl_divergence(p, p) == 0.0);
  }
}

TEST_CASE("observables", "[stats]") {
  MelodicLine line;
  line.segments.push_back({{{69, 440.0}, {73, 550.0}, {69, 440.0}}});
  line.segments.push_back({{{69, 440.0}, {81, 880.0}}});
  const auto h = branch_histograms(transitions(line));
  const auto o = observables(h, line);
  REQUIRE(o.deltas.size() == 2);
  REQUIRE(o.deltas[0] == 0.0);
  REQUIRE(o.deltas[1] == 580800.0);
  REQUIRE(o.n_transitions == 3);
  REQUIRE(o.mean_abs_delta_per_transition == Approx(580800.0 / 3.0));
  REQUIRE(o.mass_asc + o.mass_desc == Approx(1.0 + o.p_unison));

  // mirror-image branches
  const auto sym = branch_histograms(from_indices({{60, 67}, {67, 60}, {55, 70}, {70, 55}}));
  MelodicLine empty;
  const auto os = observables(sym, empty);
  REQUIRE(os.mean_eps == Approx(0.0).margin(1e-9 * os.mean_abs_eps));
  REQUIRE(os.mean_abs_eps > 0.0);
}

TEST_CASE("observable invariants on random lines", "[stats][property]") {
  Rng rng(12);
  for (int trial = 0; trial < 300; ++trial) {
    const auto line = testing::random_line(rng, 30, 100, 1 + static_cast<int>(rng.next() % 5), 40);
    const auto ts = transitions(line);
    bool up = false, down = false;
    for (const auto& t : ts) {
      up |= t.kind == TransitionKind::Ascending;
      down |= t.kind == TransitionKind::Descending;
    }
    if (!up || !down) continue;
    const auto h = branch_histograms(ts);
    const auto o = observables(h, line);
    REQUIRE(std::abs(o.mean_eps) <= o.mean_abs_eps);
    REQUIRE(o.mass_asc + o.mass_desc == Approx(1.0 + o.p_unison).epsilon(1e-14));

    // telescoping: delta of a segment equals the sum of its transitions' eps
    std::size_t cursor = 0;
    double fmin = 1e300, fmax = 0.0;
    for (std::size_t v = 0; v < line.segments.size(); ++v) {
      const auto& seg = line.segments[v];
      double sum = 0.0;
      for (std::size_t i = 1; i < seg.pitches.size(); ++i) sum += ts[cursor++].eps;
      for (const auto& p : seg.pitches) {
        fmin = std::min(fmin, p.frequency);
        fmax = std::max(fmax, p.frequency);
      }
      const double direct = seg.pitches.back().frequency * seg.pitches.back().frequency -
                            seg.pitches.front().frequency * seg.pitches.front().frequency;
      REQUIRE(o.deltas[v] == Approx(direct).margin(1e-9 * fmax * fmax));
      REQUIRE(sum == Approx(direct).margin(1e-9 * fmax * fmax));
    }
    const double span = fmax * fmax - fmin * fmin;
    for (double delta : o.deltas) REQUIRE(std::abs(delta) <= span * (1 + 1e-12));
    const auto segments = static_cast<double>(line.segments.size());
    REQUIRE(o.mean_abs_delta_per_transition <= segments * span / static_cast<double>(o.n_transitions) * (1 + 1e-12));
    if (line.segments.size() == 1)
      REQUIRE(o.mean_abs_delta_per_transition <= span / static_cast<double>(o.n_transitions) * (1 + 1e-12));
  }
}

TEST_CASE("bin decomposition", "[stats]") {
  const PowerLawFit fit{34.456, 0.979, 0, 0, 1};
  REQUIRE(bin_decomposition(std::vector<Transition>{}, BranchHistogram{}, fit).bins.empty());

  // one octave up and down: each bin holds a single interval
  const auto ts = from_indices({{69, 81}, {81, 69}});
  const auto h = branch_histograms(ts);
  const auto d = bin_decomposition(ts, h, fit);
  REQUIRE(d.bins.size() == 2);
  for (const auto& b : d.bins) REQUIRE(b.variance_term == 0.0);
  const double df = 440.0;
  REQUIRE(d.estimate_abs == Approx(fit.a * df * df / 12.0).epsilon(1e-12));
  // |eps| = df^2 (r+1)/(r-1); the power law replaces (r+1)/(r-1) by a/L
  const double coefficient = 3.0;
  const double approx_error = std::abs(fit.a / 12.0 - coefficient) / coefficient;
  REQUIRE(std::abs(d.estimate_abs - 580800.0) / 580800.0 <= approx_error + 1e-12);
}

TEST_CASE("bin decomposition with one realizable transition per bin has no variance term", "[stats]") {
  const auto ts = all_pairs(60, 72);
  std::vector<double> eps;
  for (const auto& t : ts) eps.push_back(t.eps);
  std::sort(eps.begin(), eps.end());
  double gap = 1e300;
  for (std::size_t i = 1; i < eps.size(); ++i) gap = std::min(gap, eps[i] - eps[i - 1]);
  BranchHistogram h;
  h.bin_width = gap / 2.0;
  h.bins_per_branch = static_cast<int>(std::ceil(eps.back() / h.bin_width)) + 1;
  layout_bins(h);
  fill_histogram(h, ts);
  const auto d = bin_decomposition(ts, h, PowerLawFit{34.456, 1.0, 0, 0, 1});
  REQUIRE(d.bins.size() == ts.size());
  for (const auto& b : d.bins) {
    REQUIRE(b.members == 1);
    REQUIRE(b.variance_term == 0.0);
    REQUIRE(b.location_term > 0.0);
  }
}

TEST_CASE("energy density difference", "[stats]") {
  const double pi2 = std::numbers::pi * std::numbers::pi;
  REQUIRE(energy_density_difference(440.0, 440.0) == 0.0);
  REQUIRE(energy_density_difference(440.0, 880.0, 1.2, 1.0) == Approx(2.0 * pi2 * 1.2 * 580800.0));
  REQUIRE(energy_density_difference(880.0, 440.0) == -energy_density_difference(440.0, 880.0));
  REQUIRE_THROWS_AS(energy_density_difference(1.0, 2.0, 0.0), invalid_input);
}
