#pragma once

// Musical scale tables and the tonal-consonance algebra relating the sum and
// difference of two fundamentals:
//
//   f_j + f_i = c(L) (f_j - f_i),   c(L) = (r + 1) / (r - 1),   r = f_j / f_i
//
// with c(L) well described by a power law a * L^(-b) for L up to three
// octaves. The squared-frequency difference f_j^2 - f_i^2 combines both
// parameters into one signed quantity.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "melmax/error.hpp"
#include "melmax/numeric.hpp"

namespace melmax {

enum class ScaleKind { Just, Pythagorean, TwelveToneEqualTempered };

inline std::string_view to_string(ScaleKind kind) {
  switch (kind) {
    case ScaleKind::Just: return "just";
    case ScaleKind::Pythagorean: return "pythagorean";
    case ScaleKind::TwelveToneEqualTempered: return "tet";
  }
  return "unknown";
}

inline ScaleKind parse_scale_kind(std::string_view name) {
  if (name == "just") return ScaleKind::Just;
  if (name == "pythagorean") return ScaleKind::Pythagorean;
  if (name == "tet" || name == "12tet" || name == "equal") return ScaleKind::TwelveToneEqualTempered;
  throw invalid_input("unknown scale kind '" + std::string(name) + "'");
}

inline constexpr std::array<ScaleKind, 3> kAllScaleKinds = {
    ScaleKind::Just, ScaleKind::Pythagorean, ScaleKind::TwelveToneEqualTempered};

struct Ratio {
  std::int64_t num = 1;
  std::int64_t den = 1;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  friend bool operator==(const Ratio&, const Ratio&) = default;
};

// Base-octave ratios for steps 0..11 above the tonic.
inline constexpr std::array<Ratio, 12> kJustRatios = {{
    {1, 1}, {16, 15}, {9, 8}, {6, 5}, {5, 4}, {4, 3},
    {45, 32}, {3, 2}, {8, 5}, {5, 3}, {16, 9}, {15, 8},
}};

// Chain of pure fifths from E-flat to G-sharp.
inline constexpr std::array<Ratio, 12> kPythagoreanRatios = {{
    {1, 1}, {2187, 2048}, {9, 8}, {32, 27}, {81, 64}, {4, 3},
    {729, 512}, {3, 2}, {6561, 4096}, {27, 16}, {16, 9}, {243, 128},
}};

// Pitch index space follows MIDI numbering: A4 = 69.
struct Register {
  int lowest_index = 21;
  int highest_index = 108;
  double reference_frequency = 440.0;
  int reference_index = 69;
  ScaleKind tuning = ScaleKind::TwelveToneEqualTempered;

  static Register piano() { return Register{}; }

  int size() const { return highest_index - lowest_index + 1; }
  bool contains(int index) const { return index >= lowest_index && index <= highest_index; }

  void validate() const {
    if (!(lowest_index < highest_index))
      throw invalid_input("register: lowest_index must be below highest_index");
    if (!(reference_frequency > 0.0)) throw invalid_input("register: reference_frequency must be > 0");
  }
};

// 12-TET frequency: reference * 2^((index - reference_index) / 12).
inline double tet_frequency(int note_index, const Register& reg = {}) {
  return reg.reference_frequency *
         std::exp2(static_cast<double>(note_index - reg.reference_index) / 12.0);
}

// Frequency of `note_index` under the register's tuning. Just and Pythagorean
// registers are tuned from their lowest pitch, which keeps its 12-TET value.
inline double pitch_frequency(int note_index, const Register& reg) {
  if (reg.tuning == ScaleKind::TwelveToneEqualTempered) return tet_frequency(note_index, reg);
  const auto& base = reg.tuning == ScaleKind::Just ? kJustRatios : kPythagoreanRatios;
  const int steps = note_index - reg.lowest_index;
  const int octave = steps >= 0 ? steps / 12 : -((-steps + 11) / 12);
  const int step = steps - 12 * octave;
  return tet_frequency(reg.lowest_index, reg) * base[static_cast<std::size_t>(step)].value() *
         std::exp2(static_cast<double>(octave));
}

// Signed squared-frequency difference f_j^2 - f_i^2 (Hz^2).
inline double epsilon(double f_i, double f_j) { return f_j * f_j - f_i * f_i; }

// Nearest-semitone interval size, negative when descending.
inline int interval_size(double f_i, double f_j) {
  return static_cast<int>(std::lround(12.0 * std::log2(f_j / f_i)));
}

struct ScaleEntry {
  int semitones = 0;
  std::optional<Ratio> exact;  // absent for tempered scales
  double ratio = 0.0;
  double coefficient = 0.0;  // (r + 1) / (r - 1)
};

struct ScaleTable {
  ScaleKind kind = ScaleKind::TwelveToneEqualTempered;
  std::vector<ScaleEntry> entries;
};

inline ScaleTable build_scale_table(ScaleKind kind, int max_semitones = 36) {
  if (max_semitones < 1 || max_semitones > 36)
    throw invalid_input("build_scale_table: max_semitones must lie in [1, 36], got " +
                        std::to_string(max_semitones));
  ScaleTable table;
  table.kind = kind;
  table.entries.reserve(static_cast<std::size_t>(max_semitones));
  for (int size = 1; size <= max_semitones; ++size) {
    ScaleEntry e;
    e.semitones = size;
    if (kind == ScaleKind::TwelveToneEqualTempered) {
      e.ratio = std::exp2(size / 12.0);
    } else {
      const auto& base = kind == ScaleKind::Just ? kJustRatios : kPythagoreanRatios;
      Ratio r = base[static_cast<std::size_t>(size % 12)];
      r.num <<= (size / 12);
      e.exact = r;
      e.ratio = r.value();
    }
    e.coefficient = (e.ratio + 1.0) / (e.ratio - 1.0);
    table.entries.push_back(e);
  }
  return table;
}

struct PowerLawFit {
  double a = 0.0;
  double b = 0.0;
  double a_err = 0.0;
  double b_err = 0.0;
  double r_squared = 0.0;
};

// Least-squares y = a * x^(-b): log-log regression for the starting point,
// then damped Gauss-Newton on the original scale. Standard errors come from
// the residual variance and (J^T J)^-1 at the optimum.
inline PowerLawFit fit_power_law(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw invalid_input("fit_power_law: size mismatch");
  if (x.size() < 3) throw invalid_input("fit_power_law: need at least 3 points");
  std::vector<double> lx(x.size()), ly(y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw invalid_input("fit_power_law: data must be positive");
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
  }
  const LinearFit start = linear_least_squares(lx, ly);  // throws if all x equal

  const std::size_t m = x.size();
  auto eval = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd& j) {
    for (std::size_t i = 0; i < m; ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      const double pw = std::pow(x[i], -p[1]);
      r[row] = p[0] * pw - y[i];
      j(row, 0) = pw;
      j(row, 1) = -p[0] * pw * lx[i];
    }
  };
  Eigen::VectorXd p0(2);
  p0 << std::exp(start.intercept), -start.slope;
  LmOptions opts;
  opts.relative_tolerance = 1e-14;
  const LmResult lm = levenberg_marquardt(eval, p0, m, opts);

  PowerLawFit fit;
  fit.a = lm.params[0];
  fit.b = lm.params[1];
  std::vector<double> pred(m);
  for (std::size_t i = 0; i < m; ++i) pred[i] = fit.a * std::pow(x[i], -fit.b);
  fit.r_squared = r_squared(y, pred);
  if (m > 2) {
    const double s2 = lm.sse / static_cast<double>(m - 2);
    const Eigen::MatrixXd cov = lm.jtj.inverse() * s2;
    fit.a_err = std::sqrt(std::max(cov(0, 0), 0.0));
    fit.b_err = std::sqrt(std::max(cov(1, 1), 0.0));
  }
  return fit;
}

inline PowerLawFit fit_power_law(const ScaleTable& table) {
  std::vector<double> sizes, coefs;
  for (const auto& e : table.entries) {
    sizes.push_back(e.semitones);
    coefs.push_back(e.coefficient);
  }
  return fit_power_law(sizes, coefs);
}

struct PitchPair {
  int from = 0;  // i
  int to = 0;    // j
  friend bool operator==(const PitchPair&, const PitchPair&) = default;
};

// Groups every ordered pitch pair of the register by f_j^2 - f_i^2 (relative
// tolerance 1e-9) and returns the groups holding more than one pair, keyed
// by the group's smallest value. On a distinguishing tuning only the unison
// group (key 0) survives.
inline std::map<double, std::vector<PitchPair>> distinguishability_scan(const Register& reg,
                                                                        double rel_tol = 1e-9) {
  if (reg.lowest_index > reg.highest_index) throw invalid_input("distinguishability_scan: empty register");
  struct Item {
    double eps;
    PitchPair pair;
  };
  std::vector<double> freq;
  for (int i = reg.lowest_index; i <= reg.highest_index; ++i) freq.push_back(pitch_frequency(i, reg));
  std::vector<Item> items;
  items.reserve(freq.size() * freq.size());
  for (std::size_t i = 0; i < freq.size(); ++i)
    for (std::size_t j = 0; j < freq.size(); ++j)
      items.push_back({i == j ? 0.0 : epsilon(freq[i], freq[j]),
                       {reg.lowest_index + static_cast<int>(i), reg.lowest_index + static_cast<int>(j)}});
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.eps < b.eps; });

  std::map<double, std::vector<PitchPair>> groups;
  std::size_t start = 0;
  while (start < items.size()) {
    std::size_t end = start + 1;
    while (end < items.size()) {
      const double a = items[end - 1].eps, b = items[end].eps;
      const double scale = std::max(std::abs(a), std::abs(b));
      if (std::abs(b - a) > rel_tol * scale) break;
      ++end;
    }
    if (end - start > 1) {
      auto& g = groups[items[start].eps];
      for (std::size_t k = start; k < end; ++k) g.push_back(items[k].pair);
    }
    start = end;
  }
  return groups;
}

}  // namespace melmax
