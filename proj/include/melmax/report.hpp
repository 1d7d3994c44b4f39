#pragma once

// Output emitters shared by the CLI: shortest round-trip number formatting,
// CSV tables, versioned JSON documents and a small SVG line plot.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "melmax/error.hpp"

namespace melmax {

inline constexpr int kSchemaVersion = 1;

class io_error : public error {
 public:
  explicit io_error(const std::string& what) : error("io", what) {}
};

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string format_number(std::int64_t v) { return std::to_string(v); }
inline std::string format_number(int v) { return std::to_string(v); }
inline std::string format_number(std::size_t v) { return std::to_string(v); }

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : width_(header.size()) { add(header); }

  template <class... Cells>
  void row(const Cells&... cells) {
    static_assert(sizeof...(Cells) > 0);
    std::vector<std::string> r{cell(cells)...};
    if (r.size() != width_) throw invalid_input("csv row has " + std::to_string(r.size()) + " cells, expected " + std::to_string(width_));
    add(r);
  }

  const std::string& text() const { return text_; }

 private:
  static std::string cell(const std::string& s) { return quote(s); }
  static std::string cell(std::string_view s) { return quote(std::string(s)); }
  static std::string cell(const char* s) { return quote(s); }
  template <class T>
  static std::string cell(const T& v) {
    return format_number(v);
  }
  static std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
      if (c == '"') out += '"';
      out += c;
    }
    return out + "\"";
  }
  void add(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) text_ += ',';
      text_ += cells[i];
    }
    text_ += '\n';
  }

  std::size_t width_;
  std::string text_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  if (ec) throw io_error("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot open " + path.string() + " for writing");
  out << text;
  out.close();
  if (!out) throw io_error("failed writing " + path.string());
}

using Json = nlohmann::ordered_json;

inline Json json_document() {
  Json j;
  j["schema_version"] = kSchemaVersion;
  return j;
}

inline void write_json(const std::filesystem::path& path, const Json& doc) { write_text(path, doc.dump(2) + "\n"); }

inline Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot read " + path.string());
  try {
    Json j = Json::parse(in);
    if (!j.contains("schema_version") || j["schema_version"] != kSchemaVersion)
      throw invalid_input(path.string() + ": unsupported schema_version");
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw invalid_input(path.string() + ": " + e.what());
  }
}

// Minimal SVG line chart: one polyline per series, optional log axes.
class SvgPlot {
 public:
  struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
  };

  SvgPlot(std::string title, std::string x_label, std::string y_label)
      : title_(std::move(title)), x_label_(std::move(x_label)), y_label_(std::move(y_label)) {}

  SvgPlot& log_y(bool on = true) {
    log_y_ = on;
    return *this;
  }
  void add(Series s) {
    if (s.x.size() != s.y.size()) throw invalid_input("svg series '" + s.label + "' is not aligned");
    series_.push_back(std::move(s));
  }
  std::size_t size() const { return series_.size(); }

  std::string render() const {
    constexpr double W = 720, H = 460, left = 80, right = 170, top = 40, bottom = 60;
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : series_)
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (!usable(s.y[i])) continue;
        x0 = std::min(x0, s.x[i]);
        x1 = std::max(x1, s.x[i]);
        y0 = std::min(y0, ty(s.y[i]));
        y1 = std::max(y1, ty(s.y[i]));
      }
    if (!(x1 >= x0)) x0 = 0, x1 = 1;
    if (!(y1 >= y0)) y0 = 0, y1 = 1;
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y1 = y0 + 1;
    const double pw = W - left - right, ph = H - top - bottom;
    auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
    auto py = [&](double y) { return top + ph - (ty(y) - y0) / (y1 - y0) * ph; };

    std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + n(W) + "\" height=\"" + n(H) +
                      "\" viewBox=\"0 0 " + n(W) + " " + n(H) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out += "<text x=\"" + n(W / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" + esc(title_) + "</text>\n";
    out += "<line x1=\"" + n(left) + "\" y1=\"" + n(top + ph) + "\" x2=\"" + n(left + pw) + "\" y2=\"" + n(top + ph) +
           "\" stroke=\"black\"/>\n";
    out += "<line x1=\"" + n(left) + "\" y1=\"" + n(top) + "\" x2=\"" + n(left) + "\" y2=\"" + n(top + ph) +
           "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
      const double fx = x0 + (x1 - x0) * t / 4.0, fy = y0 + (y1 - y0) * t / 4.0;
      const double gx = left + pw * t / 4.0, gy = top + ph - ph * t / 4.0;
      out += "<text x=\"" + n(gx) + "\" y=\"" + n(top + ph + 18) + "\" text-anchor=\"middle\">" + tick(fx) + "</text>\n";
      out += "<text x=\"" + n(left - 6) + "\" y=\"" + n(gy + 4) + "\" text-anchor=\"end\">" +
             (log_y_ ? "1e" + tick(fy) : tick(fy)) + "</text>\n";
    }
    out += "<text x=\"" + n(left + pw / 2) + "\" y=\"" + n(H - 16) + "\" text-anchor=\"middle\">" + esc(x_label_) + "</text>\n";
    out += "<text transform=\"translate(18 " + n(top + ph / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
           esc(y_label_) + (log_y_ ? " (log)" : "") + "</text>\n";
    for (std::size_t s = 0; s < series_.size(); ++s) {
      const auto& ser = series_[s];
      const std::string colour = palette(s);
      out += "<polyline fill=\"none\" stroke=\"" + colour + "\" stroke-width=\"1.5\" data-label=\"" + esc(ser.label) +
             "\" points=\"";
      bool first = true;
      for (std::size_t i = 0; i < ser.x.size(); ++i) {
        if (!usable(ser.y[i])) continue;
        if (!first) out += ' ';
        out += n(px(ser.x[i])) + "," + n(py(ser.y[i]));
        first = false;
      }
      out += "\"/>\n";
      const double ly = top + 14.0 * static_cast<double>(s) + 8;
      out += "<line x1=\"" + n(W - right + 12) + "\" y1=\"" + n(ly) + "\" x2=\"" + n(W - right + 32) + "\" y2=\"" +
             n(ly) + "\" stroke=\"" + colour + "\" stroke-width=\"2\"/>\n";
      out += "<text x=\"" + n(W - right + 36) + "\" y=\"" + n(ly + 4) + "\">" + esc(ser.label) + "</text>\n";
    }
    out += "</svg>\n";
    return out;
  }

 private:
  bool usable(double y) const { return std::isfinite(y) && (!log_y_ || y > 0.0); }
  double ty(double y) const { return log_y_ ? std::log10(y) : y; }
  static std::string n(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, std::round(v * 100.0) / 100.0, std::chars_format::fixed, 2);
    return std::string(buf, res.ptr);
  }
  static std::string tick(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 4);
    return std::string(buf, res.ptr);
  }
  static std::string esc(const std::string& s) {
    std::string out;
    for (char c : s) {
      switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
      }
    }
    return out;
  }
  static std::string palette(std::size_t i) {
    static const char* colours[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
                                    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939"};
    return colours[i % (sizeof colours / sizeof colours[0])];
  }

  std::string title_, x_label_, y_label_;
  bool log_y_ = false;
  std::vector<Series> series_;
};

}  // namespace melmax
