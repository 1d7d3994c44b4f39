#pragma once

// Pipeline commands behind the `melmax` executable. Every command is a pure
// function of its RunConfig and input files; outputs go under config.out.
//
//   scales   scale tables and power-law fits
//   curves   normalized dissonance curves on both axes with fits
//   analyze  MIDI -> per-track statistics, including analysis.json
//   model    analysis.json -> Lagrange multipliers, model histogram/curves
//   compare  several model outputs side by side

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <future>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "melmax/consonance.hpp"
#include "melmax/error.hpp"
#include "melmax/ingest.hpp"
#include "melmax/maxent.hpp"
#include "melmax/midi.hpp"
#include "melmax/report.hpp"
#include "melmax/scales.hpp"
#include "melmax/stats.hpp"

namespace melmax::cli {

namespace fs = std::filesystem;

class usage_error : public error {
 public:
  explicit usage_error(const std::string& what) : error("usage", what) {}
};

enum class Command { Scales, Curves, Analyze, Model, Compare };

inline Command parse_command(std::string_view s) {
  if (s == "scales") return Command::Scales;
  if (s == "curves") return Command::Curves;
  if (s == "analyze") return Command::Analyze;
  if (s == "model") return Command::Model;
  if (s == "compare") return Command::Compare;
  throw usage_error("unknown command '" + std::string(s) + "'");
}

struct Formats {
  bool csv = true;
  bool json = true;
  bool svg = false;
};

inline Formats parse_formats(std::string_view list) {
  Formats f{false, false, false};
  std::size_t start = 0;
  while (start <= list.size()) {
    const auto comma = list.find(',', start);
    const auto item = list.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    if (item == "csv") f.csv = true;
    else if (item == "json") f.json = true;
    else if (item == "svg") f.svg = true;
    else throw usage_error("unknown output format '" + std::string(item) + "' (expected csv, json, svg)");
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return f;
}

inline std::pair<int, int> parse_register_bounds(std::string_view s) {
  const auto colon = s.find(':');
  if (colon == std::string_view::npos) throw usage_error("--register expects LO:HI, got '" + std::string(s) + "'");
  int lo = 0, hi = 0;
  const auto a = s.substr(0, colon), b = s.substr(colon + 1);
  if (std::from_chars(a.data(), a.data() + a.size(), lo).ec != std::errc{} ||
      std::from_chars(b.data(), b.data() + b.size(), hi).ec != std::errc{})
    throw usage_error("--register expects integer MIDI indices, got '" + std::string(s) + "'");
  if (lo < 0 || hi > 127 || lo >= hi) throw usage_error("--register needs 0 <= LO < HI <= 127");
  return {lo, hi};
}

inline std::vector<double> parse_amplitudes(std::string_view s) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto item = s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    double v = 0.0;
    const auto res = std::from_chars(item.data(), item.data() + item.size(), v);
    if (res.ec != std::errc{} || res.ptr != item.data() + item.size())
      throw usage_error("--amplitudes expects comma-separated numbers, got '" + std::string(item) + "'");
    out.push_back(v);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::vector<ScaleKind> parse_scale_list(std::string_view s) {
  std::vector<ScaleKind> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto item = s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    try {
      out.push_back(parse_scale_kind(item));
    } catch (const invalid_input& e) {
      throw usage_error(e.what());
    }
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

struct RunConfig {
  Command command = Command::Scales;
  std::vector<std::string> inputs;
  std::optional<std::string> track;  // index or name
  int partials = 7;
  std::vector<double> amplitudes;  // overrides partials when set
  std::optional<std::pair<int, int>> register_bounds;
  double tolerance = 0.01;
  std::optional<std::uint64_t> seed;
  DisaggregationMode disaggregation = DisaggregationMode::SeededRandom;
  bool bridge_rests = false;
  fs::path out = ".";
  Formats formats;
  int max_semitones = 36;
  std::vector<ScaleKind> scales{kAllScaleKinds.begin(), kAllScaleKinds.end()};

  void validate() const {
    if (!(tolerance > 0.0 && tolerance <= 0.5)) throw usage_error("--tolerance must lie in (0, 0.5]");
    if (max_semitones < 3 || max_semitones > 36) throw usage_error("--max-semitones must lie in [3, 36]");
    if (partials < 1) throw usage_error("--partials must be >= 1");
    if ((command == Command::Analyze || command == Command::Model || command == Command::Compare) && inputs.empty())
      throw usage_error("--input is required");
    if (command == Command::Model && disaggregation == DisaggregationMode::SeededRandom && !seed)
      throw usage_error("random disaggregation needs --seed or MELMAX_SEED");
    if (scales.empty()) throw usage_error("no scales selected");
  }
};

struct Failure {
  std::string input;
  std::string track;
  std::string kind;
  std::string message;
};

struct CommandResult {
  std::vector<fs::path> written;
  std::vector<Failure> failures;

  void merge(CommandResult other) {
    written.insert(written.end(), other.written.begin(), other.written.end());
    failures.insert(failures.end(), other.failures.begin(), other.failures.end());
  }
};

namespace detail {

inline std::string sanitize(std::string_view s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') ? c : '_';
  return out.empty() ? "_" : out;
}

inline void emit(CommandResult& r, const fs::path& path, const std::string& text) {
  write_text(path, text);
  r.written.push_back(path);
}

inline void emit_json(CommandResult& r, const fs::path& path, const Json& doc) {
  write_json(path, doc);
  r.written.push_back(path);
}

inline Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json to_json(const ExpFit& f) { return Json{{"F", f.F}, {"G", f.G}, {"r_squared", f.r_squared}}; }

inline Json to_json(const PowerLawFit& f) {
  return Json{{"a", f.a}, {"a_err", f.a_err}, {"b", f.b}, {"b_err", f.b_err}, {"r_squared", f.r_squared}};
}

// A fit, or {"error": ...} when the data does not allow one.
template <class Fn>
Json try_fit(Fn&& fn) {
  try {
    return to_json(fn());
  } catch (const error& e) {
    return Json{{"error", e.what()}};
  }
}

inline Json points_json(std::span<const CumulativePoint> pts) {
  Json a = Json::array();
  for (const auto& p : pts) a.push_back(Json::array({p.x, p.y}));
  return a;
}

inline std::vector<CumulativePoint> points_from_json(const Json& a) {
  std::vector<CumulativePoint> out;
  for (const auto& p : a) out.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  return out;
}

inline std::string cumulative_csv(const CumulativeCurves& c) {
  CsvTable t({"branch", "x", "y"});
  for (const auto& p : c.descending) t.row("descending", p.x, p.y);
  for (const auto& p : c.ascending) t.row("ascending", p.x, p.y);
  return t.text();
}

inline SvgPlot cumulative_svg(const std::string& title, const std::vector<std::pair<std::string, const CumulativeCurves*>>& sets) {
  SvgPlot plot(title, "|eps| (Hz^2)", "CCDF / CDF");
  plot.log_y();
  for (const auto& [name, c] : sets) {
    SvgPlot::Series asc{name + " ascending", {}, {}}, desc{name + " descending", {}, {}};
    for (const auto& p : c->ascending) {
      asc.x.push_back(p.x);
      asc.y.push_back(p.y);
    }
    for (auto it = c->descending.rbegin(); it != c->descending.rend(); ++it) {
      desc.x.push_back(-it->x);
      desc.y.push_back(it->y);
    }
    plot.add(std::move(asc));
    plot.add(std::move(desc));
  }
  return plot;
}

template <class T, class Fn>
std::vector<CommandResult> run_concurrently(const std::vector<T>& items, Fn fn) {
  std::vector<std::future<CommandResult>> futures;
  for (std::size_t i = 0; i < items.size(); ++i)
    futures.push_back(std::async(std::launch::async, [&, i] { return fn(i, items[i]); }));
  std::vector<CommandResult> results;
  for (auto& f : futures) results.push_back(f.get());
  return results;
}

}  // namespace detail

inline CommandResult cmd_scales(const RunConfig& cfg) {
  cfg.validate();
  CommandResult r;
  Json doc = json_document();
  doc["max_semitones"] = cfg.max_semitones;
  Json scales = Json::array();
  SvgPlot plot("Scale coefficient (r+1)/(r-1) against interval size", "interval size L (semitones)", "(r+1)/(r-1)");
  plot.log_y();
  for (ScaleKind kind : cfg.scales) {
    const auto table = build_scale_table(kind, cfg.max_semitones);
    const auto fit = fit_power_law(table);
    CsvTable csv({"semitones", "numerator", "denominator", "ratio", "coefficient", "fitted"});
    SvgPlot::Series series{std::string(to_string(kind)), {}, {}};
    for (const auto& e : table.entries) {
      const double fitted = fit.a * std::pow(static_cast<double>(e.semitones), -fit.b);
      if (e.exact)
        csv.row(e.semitones, e.exact->num, e.exact->den, e.ratio, e.coefficient, fitted);
      else
        csv.row(e.semitones, "", "", e.ratio, e.coefficient, fitted);
      series.x.push_back(e.semitones);
      series.y.push_back(e.coefficient);
    }
    if (cfg.formats.csv) detail::emit(r, cfg.out / ("scale_" + std::string(to_string(kind)) + ".csv"), csv.text());
    plot.add(std::move(series));
    scales.push_back(Json{{"kind", to_string(kind)}, {"rows", table.entries.size()}, {"fit", detail::to_json(fit)}});
  }
  doc["scales"] = scales;
  if (cfg.formats.json) detail::emit_json(r, cfg.out / "scales.json", doc);
  if (cfg.formats.svg) detail::emit(r, cfg.out / "scales.svg", plot.render());
  return r;
}

inline Timbre config_timbre(const RunConfig& cfg) {
  return cfg.amplitudes.empty() ? Timbre::harmonic(cfg.partials) : Timbre::from_amplitudes(cfg.amplitudes);
}

inline Register config_register(const RunConfig& cfg) {
  Register reg;
  if (cfg.register_bounds) {
    reg.lowest_index = cfg.register_bounds->first;
    reg.highest_index = cfg.register_bounds->second;
  }
  return reg;
}

inline CommandResult cmd_curves(const RunConfig& cfg) {
  cfg.validate();
  CommandResult r;
  const Timbre timbre = config_timbre(cfg);
  const Register reg = config_register(cfg);
  SecondOrderExpOptions opts;
  if (cfg.seed) opts.seed = *cfg.seed;

  Json doc = json_document();
  doc["register"] = Json{{"lowest_index", reg.lowest_index}, {"highest_index", reg.highest_index}};
  Json partials = Json::array();
  for (const auto& p : timbre.partials) partials.push_back(Json{{"multiple", p.multiple}, {"amplitude", p.amplitude}});
  doc["timbre"] = partials;
  Json axes = Json::object();
  for (AxisKind axis : {AxisKind::FrequencyDifference, AxisKind::SquaredFrequencyDifference}) {
    std::vector<DissonanceCurve> curves;
    for (int L = 1; L <= 12; ++L) curves.push_back(dissonance_curve(L, reg, timbre, axis));
    curves = normalize_curves(std::move(curves));
    const std::string name(to_string(axis));
    CsvTable csv({"interval_size", "base_index", "x", "dissonance"});
    SvgPlot plot("Normalized dissonance, " + name, axis == AxisKind::FrequencyDifference ? "f_j - f_i (Hz)" : "f_j^2 - f_i^2 (Hz^2)",
                 "dissonance");
    Json fits = Json::array();
    for (const auto& c : curves) {
      SvgPlot::Series s{"L=" + std::to_string(c.interval_size), {}, {}};
      for (const auto& p : c.points) {
        csv.row(c.interval_size, p.base_index, p.x, p.dissonance);
        s.x.push_back(p.x);
        s.y.push_back(p.dissonance);
      }
      plot.add(std::move(s));
      Json entry{{"interval_size", c.interval_size}, {"points", c.points.size()}};
      try {
        const auto f = fit_second_order_exp(c, opts);
        entry["fit"] = Json{{"y0", f.y0}, {"a1", f.a1}, {"t1", f.t1}, {"a2", f.a2}, {"t2", f.t2}, {"r_squared", f.r_squared}};
      } catch (const error& e) {
        entry["fit"] = Json{{"error", e.what()}};
      }
      fits.push_back(entry);
    }
    axes[name] = fits;
    if (cfg.formats.csv) detail::emit(r, cfg.out / ("curves_" + name + ".csv"), csv.text());
    if (cfg.formats.svg) detail::emit(r, cfg.out / ("curves_" + name + ".svg"), plot.render());
  }
  doc["axes"] = axes;
  if (cfg.formats.json) detail::emit_json(r, cfg.out / "curves.json", doc);
  return r;
}

// Statistics of one melodic line written to `dir`.
inline CommandResult analyze_line(const RunConfig& cfg, const MelodicLine& line, const std::string& source,
                                  int track_index, const fs::path& dir) {
  CommandResult r;
  const auto ts = transitions(line, cfg.bridge_rests);
  BranchHistogram hist = branch_histograms(ts);
  Register reg = line.reg;
  if (cfg.register_bounds) {
    reg.lowest_index = cfg.register_bounds->first;
    reg.highest_index = cfg.register_bounds->second;
    if (reg.lowest_index > line.reg.lowest_index || reg.highest_index < line.reg.highest_index)
      throw invalid_input("--register " + std::to_string(reg.lowest_index) + ":" + std::to_string(reg.highest_index) +
                          " does not contain the line's ambitus " + std::to_string(line.reg.lowest_index) + ":" +
                          std::to_string(line.reg.highest_index));
    // extend the bins so they reach every pair of the wider register
    const double lo = pitch_frequency(reg.lowest_index, reg), hi = pitch_frequency(reg.highest_index, reg);
    const int needed = static_cast<int>(std::ceil((hi * hi - lo * lo) / hist.bin_width * (1.0 - 1e-12)));
    if (needed > hist.bins_per_branch) {
      hist.bins_per_branch = needed;
      layout_bins(hist);
      fill_histogram(hist, ts);
    }
  }
  const Degeneracy deg = bin_degeneracy(reg, hist);
  const CumulativeCurves curves = ccdf_cdf(ts);
  const Observables obs = observables(hist, line);
  const ModelInputs inputs = model_inputs(hist, deg);
  const auto decomposition = bin_decomposition(ts, hist, fit_power_law(build_scale_table(ScaleKind::TwelveToneEqualTempered)));

  // relative entropy of the normalized distributions
  std::vector<double> pn, qn;
  for (const auto& b : hist.bins) pn.push_back(b.p / (1.0 + hist.p_unison()));
  for (double q : deg.q) qn.push_back(q / (1.0 + deg.q_unison()));

  Json doc = json_document();
  doc["source"] = Json{{"input", source}, {"track_index", track_index}, {"label", line.label}};
  doc["register"] = Json{{"lowest_index", reg.lowest_index}, {"highest_index", reg.highest_index}};
  doc["ambitus"] = Json{{"lowest_index", line.reg.lowest_index}, {"highest_index", line.reg.highest_index}};
  doc["bridge_rests"] = cfg.bridge_rests;
  doc["counts"] = Json{{"transitions", hist.n_transitions}, {"ascending", hist.n_ascending},
                       {"descending", hist.n_descending}, {"unisons", hist.n_unisons},
                       {"segments", line.segments.size()}, {"pitches", line.pitch_count()}};
  doc["histogram"] = Json{{"bin_width", hist.bin_width}, {"width_ascending", hist.width_asc},
                          {"width_descending", hist.width_desc}, {"bins_per_branch", hist.bins_per_branch}};

  std::vector<double> xa, qa;
  for (std::size_t k = static_cast<std::size_t>(hist.bins_per_branch); k < deg.q.size(); ++k)
    if (deg.q[k] > 0.0) {
      xa.push_back(hist.bins[k].eps_rep);
      qa.push_back(deg.q[k]);
    }
  doc["fits"] = Json{
      {"histogram", Json{{"ascending", detail::try_fit([&] { return fit_histogram_branch(hist, Branch::Ascending); })},
                         {"descending", detail::try_fit([&] { return fit_histogram_branch(hist, Branch::Descending); })}}},
      {"cumulative", Json{{"ascending", detail::try_fit([&] { return fit_exponential(curves.ascending); })},
                          {"descending", detail::try_fit([&] { return fit_exponential(curves.descending); })}}},
      {"degeneracy_ascending", Json{{"power_law", detail::try_fit([&] { return fit_power_law(xa, qa); })},
                                    {"exponential", detail::try_fit([&] { return fit_exponential(xa, qa); })}}}};
  try {
    doc["kl_divergence"] = kl_divergence(pn, qn);
  } catch (const error& e) {
    doc["kl_divergence"] = Json{{"error", e.what()}};
  }
  doc["observables"] = Json{{"mass_descending", obs.mass_desc},
                            {"mass_ascending", obs.mass_asc},
                            {"p_unison", obs.p_unison},
                            {"mean_abs_eps", obs.mean_abs_eps},
                            {"mean_eps", obs.mean_eps},
                            {"deltas", obs.deltas},
                            {"mean_abs_delta_per_transition", obs.mean_abs_delta_per_transition}};
  doc["decomposition"] = Json{{"a", decomposition.a}, {"estimate_mean_abs_eps", decomposition.estimate_abs}};
  doc["model_inputs"] = Json{{"bin_width", inputs.bin_width},     {"eps_rep", inputs.eps_rep},
                             {"q", inputs.q},                     {"p", hist.probabilities()},
                             {"mass_descending", inputs.mass_desc}, {"mass_ascending", inputs.mass_asc},
                             {"target_abs", inputs.target_abs},   {"target_signed", inputs.target_signed}};
  doc["cumulative"] = Json{{"ascending", detail::points_json(curves.ascending)},
                           {"descending", detail::points_json(curves.descending)}};
  detail::emit_json(r, dir / "analysis.json", doc);

  if (cfg.formats.csv) {
    CsvTable tcsv({"index", "from_index", "to_index", "f_from", "f_to", "eps", "kind"});
    for (std::size_t i = 0; i < ts.size(); ++i)
      tcsv.row(i, ts[i].from_index, ts[i].to_index, ts[i].f_from, ts[i].f_to, ts[i].eps, to_string(ts[i].kind));
    detail::emit(r, dir / "transitions.csv", tcsv.text());

    CsvTable hcsv({"k", "branch", "lower", "upper", "eps_rep", "count", "p"});
    CsvTable dcsv({"k", "branch", "eps_rep", "count", "q"});
    CsvTable ocsv({"k", "branch", "eps_rep", "p", "q"});
    for (const auto& b : hist.bins) {
      const auto k = static_cast<std::size_t>(b.k);
      const char* br = b.branch == Branch::Ascending ? "ascending" : "descending";
      hcsv.row(b.k, br, b.lower, b.upper, b.eps_rep, b.count, b.p);
      dcsv.row(b.k, br, b.eps_rep, deg.counts[k], deg.q[k]);
      ocsv.row(b.k, br, b.eps_rep, b.p, deg.q[k]);
    }
    detail::emit(r, dir / "histogram.csv", hcsv.text());
    detail::emit(r, dir / "degeneracy.csv", dcsv.text());
    detail::emit(r, dir / "overlay.csv", ocsv.text());
    detail::emit(r, dir / "cumulative.csv", detail::cumulative_csv(curves));
  }
  if (cfg.formats.svg) {
    SvgPlot plot("Empirical p and degeneracy q, " + line.label, "eps (Hz^2)", "probability");
    plot.log_y();
    SvgPlot::Series p{"p (empirical)", {}, {}}, q{"q (degeneracy)", {}, {}};
    for (const auto& b : hist.bins) {
      p.x.push_back(b.eps_rep);
      p.y.push_back(b.p);
      q.x.push_back(b.eps_rep);
      q.y.push_back(deg.q[static_cast<std::size_t>(b.k)]);
    }
    plot.add(std::move(p));
    plot.add(std::move(q));
    detail::emit(r, dir / "overlay.svg", plot.render());
    detail::emit(r, dir / "cumulative.svg", detail::cumulative_svg("CCDF / CDF, " + line.label, {{"empirical", &curves}}).render());
  }
  return r;
}

inline CommandResult analyze_file(const RunConfig& cfg, const std::string& input) {
  CommandResult r;
  MidiFile file;
  try {
    file = read_midi_file(input);
  } catch (const error& e) {
    r.failures.push_back({input, "", e.kind(), e.what()});
    return r;
  }
  const fs::path base = cfg.out / detail::sanitize(fs::path(input).stem().string());
  bool matched = false;
  for (const auto& track : file.tracks) {
    const std::string label = track.info.name.empty() ? "track" + std::to_string(track.info.index) : track.info.name;
    if (cfg.track && *cfg.track != std::to_string(track.info.index) && *cfg.track != track.info.name) continue;
    if (track.notes.empty()) {
      if (cfg.track) r.failures.push_back({input, label, "invalid_input", "track has no notes"});
      matched = matched || cfg.track.has_value();
      continue;
    }
    matched = true;
    const std::string dirname =
        "track" + std::to_string(track.info.index) + (track.info.name.empty() ? "" : "-" + detail::sanitize(track.info.name));
    try {
      const auto line = extract_melodic_line(track.notes, ChordPolicy::HighestPitch, label);
      r.merge(analyze_line(cfg, line, input, track.info.index, base / dirname));
    } catch (const error& e) {
      r.failures.push_back({input, label, e.kind(), e.what()});
    }
  }
  if (!matched)
    r.failures.push_back({input, cfg.track.value_or(""), "invalid_input",
                          cfg.track ? "no track matches '" + *cfg.track + "'" : "file has no notes"});
  return r;
}

inline CommandResult cmd_analyze(const RunConfig& cfg) {
  cfg.validate();
  CommandResult r;
  for (auto& part : detail::run_concurrently(cfg.inputs, [&](std::size_t, const std::string& in) { return analyze_file(cfg, in); }))
    r.merge(std::move(part));
  return r;
}

inline fs::path analysis_file(const std::string& input) {
  fs::path p(input);
  return fs::is_directory(p) ? p / "analysis.json" : p;
}

inline CommandResult model_one(const RunConfig& cfg, const std::string& input, const fs::path& dir) {
  CommandResult r;
  const Json a = read_json(analysis_file(input));
  const Json& mi = a.at("model_inputs");
  ModelInputs in;
  in.bin_width = mi.at("bin_width").get<double>();
  in.eps_rep = mi.at("eps_rep").get<std::vector<double>>();
  in.q = mi.at("q").get<std::vector<double>>();
  in.mass_desc = mi.at("mass_descending").get<double>();
  in.mass_asc = mi.at("mass_ascending").get<double>();
  in.target_abs = mi.at("target_abs").get<double>();
  in.target_signed = mi.at("target_signed").get<double>();
  const auto p_emp = mi.at("p").get<std::vector<double>>();
  Register reg;
  reg.lowest_index = a.at("register").at("lowest_index").get<int>();
  reg.highest_index = a.at("register").at("highest_index").get<int>();
  CumulativeCurves empirical{detail::points_from_json(a.at("cumulative").at("ascending")),
                             detail::points_from_json(a.at("cumulative").at("descending"))};

  const ModelSolution s = solve_lagrange(in, cfg.tolerance);
  const auto dist = disaggregate(s.p, in, reg, cfg.disaggregation, cfg.seed.value_or(0));
  const auto cmp = compare(dist.curves, empirical);

  auto side = [](const FitComparison& c) {
    return Json{{"empirical", detail::to_json(c.empirical)},
                {"model", detail::to_json(c.model)},
                {"delta_F", c.delta_F},
                {"delta_G", c.delta_G},
                {"same_order_F", c.same_order_F},
                {"same_order_G", c.same_order_G}};
  };
  Json comparison{{"ascending", side(cmp.ascending)}, {"descending", side(cmp.descending)}};

  const std::size_t h = in.half();
  double up = 0.0, down = 0.0;
  for (std::size_t k = 0; k < s.p.size(); ++k) (k < h ? down : up) += s.p[k];
  std::vector<double> pm, qm, pe;
  const double pu = in.mass_desc + in.mass_asc - 1.0;
  double qsum = 0.0;
  for (double q : in.q) qsum += q;
  for (std::size_t k = 0; k < s.p.size(); ++k) {
    pm.push_back(s.p[k] / (1.0 + pu));
    qm.push_back(in.q[k] / qsum);
    pe.push_back(p_emp[k] / (1.0 + pu));
  }
  Json kl = Json::object();
  kl["model_vs_degeneracy"] = kl_divergence(pm, qm);
  try {
    kl["empirical_vs_model"] = kl_divergence(pe, pm);
  } catch (const error& e) {
    kl["empirical_vs_model"] = Json{{"error", e.what()}};
  }

  Json doc = json_document();
  doc["source"] = Json{{"analysis", input}, {"label", a.at("source").at("label")}};
  doc["tolerance"] = cfg.tolerance;
  doc["lambda1"] = s.lambda1;
  doc["lambda2"] = s.lambda2;
  doc["iterations"] = s.iterations;
  doc["branch_masses"] = Json{{"descending", in.mass_desc}, {"ascending", in.mass_asc}};
  doc["model_branch_sums"] = Json{{"descending", down}, {"ascending", up}};
  doc["targets"] = Json{{"abs", in.target_abs}, {"signed", in.target_signed}};
  doc["achieved"] = Json{{"abs", s.achieved_abs}, {"signed", s.achieved_signed}};
  doc["relative_errors"] = Json{{"abs", s.error_abs}, {"signed", s.error_signed}};
  doc["disaggregation"] = Json{{"mode", to_string(cfg.disaggregation)},
                               {"seed", cfg.seed ? Json(*cfg.seed) : Json(nullptr)}};
  doc["kl_divergence"] = kl;
  Json bins = Json::array();
  for (std::size_t k = 0; k < s.p.size(); ++k)
    bins.push_back(Json{{"k", k}, {"q", in.q[k]}, {"eps_rep", in.eps_rep[k]}, {"p_empirical", p_emp[k]}, {"p", s.p[k]}});
  doc["per_bin"] = bins;
  doc["comparison"] = comparison;
  detail::emit_json(r, dir / "model.json", doc);

  if (cfg.formats.json) {
    Json c = json_document();
    c["source"] = doc["source"];
    c["min_y"] = 1e-3;
    c["ascending"] = comparison["ascending"];
    c["descending"] = comparison["descending"];
    detail::emit_json(r, dir / "comparison.json", c);
  }
  if (cfg.formats.csv) {
    CsvTable hcsv({"k", "branch", "eps_rep", "q", "p_empirical", "p_model"});
    for (std::size_t k = 0; k < s.p.size(); ++k)
      hcsv.row(k, k < h ? "descending" : "ascending", in.eps_rep[k], in.q[k], p_emp[k], s.p[k]);
    detail::emit(r, dir / "model_histogram.csv", hcsv.text());
    detail::emit(r, dir / "model_cumulative.csv", detail::cumulative_csv(dist.curves));
  }
  if (cfg.formats.svg) {
    SvgPlot plot("Empirical and model histograms", "eps (Hz^2)", "probability");
    plot.log_y();
    SvgPlot::Series e{"empirical", in.eps_rep, p_emp}, m{"model", in.eps_rep, s.p};
    plot.add(std::move(e));
    plot.add(std::move(m));
    detail::emit(r, dir / "model.svg", plot.render());
    detail::emit(r, dir / "model_cumulative.svg",
                 detail::cumulative_svg("Empirical and model CCDF / CDF", {{"empirical", &empirical}, {"model", &dist.curves}})
                     .render());
  }
  return r;
}

inline fs::path per_input_dir(const RunConfig& cfg, std::size_t i, const std::string& input) {
  if (cfg.inputs.size() == 1) return cfg.out;
  fs::path p(input);
  if (!fs::is_directory(p)) p = p.parent_path();
  return cfg.out / (std::to_string(i) + "-" + detail::sanitize(p.filename().string()));
}

inline CommandResult cmd_model(const RunConfig& cfg) {
  cfg.validate();
  CommandResult r;
  for (auto& part : detail::run_concurrently(cfg.inputs, [&](std::size_t i, const std::string& in) {
         try {
           return model_one(cfg, in, per_input_dir(cfg, i, in));
         } catch (const error& e) {
           CommandResult f;
           f.failures.push_back({in, "", e.kind(), e.what()});
           return f;
         } catch (const nlohmann::json::exception& e) {
           CommandResult f;
           f.failures.push_back({in, "", "invalid_input", e.what()});
           return f;
         }
       }))
    r.merge(std::move(part));
  return r;
}

inline CommandResult cmd_compare(const RunConfig& cfg) {
  cfg.validate();
  CommandResult r;
  CsvTable csv({"input", "label", "lambda1", "lambda2", "lambda1_ratio", "G_ascending_empirical", "G_ascending_model",
                "G_descending_empirical", "G_descending_model"});
  Json entries = Json::array();
  double first = 0.0;
  for (std::size_t i = 0; i < cfg.inputs.size(); ++i) {
    const auto& input = cfg.inputs[i];
    fs::path p(input);
    Json m;
    try {
      m = read_json(fs::is_directory(p) ? p / "model.json" : p);
      const double l1 = m.at("lambda1").get<double>(), l2 = m.at("lambda2").get<double>();
      if (entries.empty()) first = l1;
      const auto& c = m.at("comparison");
      auto g = [&](const char* side, const char* which) { return c.at(side).at(which).at("G").get<double>(); };
      const double ratio = l1 / first;
      csv.row(input, m.at("source").at("label").get<std::string>(), l1, l2, ratio, g("ascending", "empirical"),
              g("ascending", "model"), g("descending", "empirical"), g("descending", "model"));
      entries.push_back(Json{{"input", input},
                             {"label", m.at("source").at("label")},
                             {"lambda1", l1},
                             {"lambda2", l2},
                             {"lambda1_ratio_to_first", ratio},
                             {"comparison", c}});
    } catch (const error& e) {
      r.failures.push_back({input, "", e.kind(), e.what()});
    } catch (const nlohmann::json::exception& e) {
      r.failures.push_back({input, "", "invalid_input", e.what()});
    }
  }
  Json doc = json_document();
  doc["entries"] = entries;
  if (cfg.formats.csv) detail::emit(r, cfg.out / "compare.csv", csv.text());
  if (cfg.formats.json) detail::emit_json(r, cfg.out / "compare.json", doc);
  return r;
}

inline CommandResult run(const RunConfig& cfg) {
  switch (cfg.command) {
    case Command::Scales: return cmd_scales(cfg);
    case Command::Curves: return cmd_curves(cfg);
    case Command::Analyze: return cmd_analyze(cfg);
    case Command::Model: return cmd_model(cfg);
    case Command::Compare: return cmd_compare(cfg);
  }
  throw usage_error("no command");
}

inline std::string failure_json(const Failure& f) {
  Json j = json_document();
  j["error"] = Json{{"kind", f.kind}, {"message", f.message}, {"input", f.input}, {"track", f.track}};
  return j.dump();
}

}  // namespace melmax::cli
