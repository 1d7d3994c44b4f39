// melmax command-line front end. Usage errors exit with 2, failed runs with 1;
// every failure is reported as one JSON object per line on stderr.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <string>

#include "melmax/cli.hpp"

namespace {

using namespace melmax;
using namespace melmax::cli;

void report_usage(const std::string& message) {
  std::cerr << failure_json({"", "", "usage", message}) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"melmax: tonal consonance parameters and maximum-entropy statistics of melodic transitions"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  RunConfig cfg;
  std::string out = ".";
  std::string formats = "csv,json";
  std::string reg;
  std::string amplitudes;
  std::string disaggregation = "random";
  std::string scales;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> track;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--out", out, "Output directory")->capture_default_str();
    sub->add_option("--format", formats, "Comma-separated output formats: csv, json, svg")->capture_default_str();
  };

  auto* scales_cmd = app.add_subcommand("scales", "Scale tables and power-law fits of (r+1)/(r-1) against L");
  common(scales_cmd);
  scales_cmd->add_option("--max-semitones", cfg.max_semitones, "Largest interval size L")->capture_default_str();
  scales_cmd->add_option("--scales", scales, "Comma-separated subset of just, pythagorean, tet");

  auto* curves_cmd = app.add_subcommand("curves", "Normalized dissonance curves for L = 1..12 with fits");
  common(curves_cmd);
  curves_cmd->add_option("--partials", cfg.partials, "Number of equal-amplitude harmonics")->capture_default_str();
  curves_cmd->add_option("--amplitudes", amplitudes, "Comma-separated partial amplitudes (overrides --partials)");
  curves_cmd->add_option("--register", reg, "MIDI index range LO:HI (default 21:108)");
  curves_cmd->add_option("--seed", seed, "Seed for the fit's random starts");

  auto* analyze_cmd = app.add_subcommand("analyze", "Transition statistics of MIDI melodic lines");
  common(analyze_cmd);
  analyze_cmd->add_option("--input", cfg.inputs, "Standard MIDI file(s)")->required();
  analyze_cmd->add_option("--track", track, "Track index or name (default: every track with notes)");
  analyze_cmd->add_option("--register", reg, "Degeneracy register LO:HI (default: the line's ambitus)");
  analyze_cmd->add_flag("--bridge-rests", cfg.bridge_rests, "Count transitions across rests");

  auto* model_cmd = app.add_subcommand("model", "Solve the maximum-entropy model for analyze outputs");
  common(model_cmd);
  model_cmd->add_option("--input", cfg.inputs, "Directory (or analysis.json) written by analyze")->required();
  model_cmd->add_option("--tolerance", cfg.tolerance, "Relative tolerance on the matched expectations")->capture_default_str();
  model_cmd->add_option("--seed", seed, "Seed for random disaggregation (falls back to MELMAX_SEED)");
  model_cmd->add_option("--disaggregate", disaggregation, "uniform or random")->capture_default_str();

  auto* compare_cmd = app.add_subcommand("compare", "Tabulate several model outputs");
  common(compare_cmd);
  compare_cmd->add_option("--input", cfg.inputs, "Directories (or model.json files) written by model")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_usage(e.what());
    return 2;
  }

  try {
    cfg.command = parse_command(app.get_subcommands().front()->get_name());
    cfg.out = out;
    cfg.formats = parse_formats(formats);
    if (!reg.empty()) cfg.register_bounds = parse_register_bounds(reg);
    if (!amplitudes.empty()) cfg.amplitudes = parse_amplitudes(amplitudes);
    if (!scales.empty()) cfg.scales = parse_scale_list(scales);
    cfg.track = track;
    try {
      cfg.disaggregation = parse_disaggregation_mode(disaggregation);
    } catch (const invalid_input& e) {
      throw usage_error(e.what());
    }
    cfg.seed = seed;
    if (!cfg.seed) {
      if (const char* env = std::getenv("MELMAX_SEED"); env && *env) {
        std::uint64_t v = 0;
        const std::string_view s(env);
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) throw usage_error("MELMAX_SEED is not an unsigned integer");
        cfg.seed = v;
      }
    }
    cfg.validate();
  } catch (const usage_error& e) {
    report_usage(e.what());
    return 2;
  }

  try {
    const auto result = run(cfg);
    for (const auto& path : result.written) std::cout << path.generic_string() << "\n";
    for (const auto& f : result.failures) std::cerr << failure_json(f) << "\n";
    return result.failures.empty() ? 0 : 1;
  } catch (const usage_error& e) {
    report_usage(e.what());
    return 2;
  } catch (const error& e) {
    std::cerr << failure_json({"", "", e.kind(), e.what()}) << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << failure_json({"", "", "internal", e.what()}) << "\n";
    return 1;
  }
}
