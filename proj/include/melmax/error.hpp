#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace melmax {

// Base of every error raised by the library. `kind()` is a stable short tag
// used in the CLI's structured error output.
class error : public std::runtime_error {
 public:
  error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

// Violated precondition on an argument (out-of-range size, empty input...).
class invalid_input : public error {
 public:
  explicit invalid_input(const std::string& what) : error("invalid_input", what) {}
};

// Iterative procedure stopped at its cap without meeting its criterion.
class convergence_error : public error {
 public:
  explicit convergence_error(const std::string& what) : error("convergence", what) {}
};

// Malformed or truncated Standard MIDI File. Offsets are byte positions in
// the input buffer; `track` is -1 for header-level problems.
class midi_error : public error {
 public:
  midi_error(const std::string& what, std::size_t offset, int track = -1)
      : error("midi", what + " (offset " + std::to_string(offset) +
                          (track >= 0 ? ", track " + std::to_string(track) : std::string()) + ")"),
        detail_(what),
        offset_(offset),
        track_(track) {}
  std::size_t offset() const noexcept { return offset_; }
  int track() const noexcept { return track_; }
  // Message without the offset suffix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string detail_;
  std::size_t offset_;
  int track_;
};

// Observable targets that no choice of Lagrange multipliers can reach.
class infeasible_error : public error {
 public:
  infeasible_error(const std::string& what, double lower, double upper)
      : error("infeasible", what), lower_(lower), upper_(upper) {}
  double lower() const noexcept { return lower_; }
  double upper() const noexcept { return upper_; }

 private:
  double lower_;
  double upper_;
};

}  // namespace melmax
