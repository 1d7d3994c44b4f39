#pragma once

// Monophonic melodic lines from note events, and the chronological
// transitions between successive pitches.

#include <algorithm>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "melmax/midi.hpp"
#include "melmax/scales.hpp"

namespace melmax {

enum class ChordPolicy { HighestPitch, LowestPitch };

struct Pitch {
  int note_index = 0;
  double frequency = 0.0;
};

struct Segment {
  std::vector<Pitch> pitches;
};

struct MelodicLine {
  std::string label;
  std::vector<Segment> segments;
  Register reg;  // ambitus of the line, 12-TET at A4 = 440 Hz

  std::size_t pitch_count() const {
    std::size_t n = 0;
    for (const auto& s : segments) n += s.pitches.size();
    return n;
  }
  bool empty() const { return segments.empty(); }
};

// Notes sharing an onset tick collapse to one pitch chosen by `policy`. A
// rest, i.e. a positive gap between the end of everything sounding so far
// and the next onset, closes the current segment.
inline MelodicLine extract_melodic_line(std::span<const NoteEvent> events,
                                        ChordPolicy policy = ChordPolicy::HighestPitch,
                                        std::string label = {}, const Register& tuning = {}) {
  MelodicLine line;
  line.label = std::move(label);
  line.reg = tuning;
  if (events.empty()) return line;

  std::vector<NoteEvent> sorted(events.begin(), events.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const NoteEvent& a, const NoteEvent& b) { return a.onset_ticks < b.onset_ticks; });

  int lo = 127, hi = 0;
  std::int64_t sounding_until = sorted.front().onset_ticks;
  std::size_t i = 0;
  while (i < sorted.size()) {
    const std::int64_t onset = sorted[i].onset_ticks;
    int chosen = sorted[i].note_index;
    std::int64_t group_end = onset;
    std::size_t j = i;
    for (; j < sorted.size() && sorted[j].onset_ticks == onset; ++j) {
      chosen = policy == ChordPolicy::HighestPitch ? std::max(chosen, sorted[j].note_index)
                                                   : std::min(chosen, sorted[j].note_index);
      group_end = std::max(group_end, onset + sorted[j].duration_ticks);
    }
    if (line.segments.empty() || onset > sounding_until) line.segments.emplace_back();
    line.segments.back().pitches.push_back({chosen, tet_frequency(chosen, tuning)});
    lo = std::min(lo, chosen);
    hi = std::max(hi, chosen);
    sounding_until = std::max(sounding_until, group_end);
    i = j;
  }
  line.reg.lowest_index = lo;
  line.reg.highest_index = hi;
  return line;
}

enum class TransitionKind { Descending, Unison, Ascending };

inline std::string_view to_string(TransitionKind k) {
  switch (k) {
    case TransitionKind::Descending: return "descending";
    case TransitionKind::Unison: return "unison";
    case TransitionKind::Ascending: return "ascending";
  }
  return "unknown";
}

struct Transition {
  int from_index = 0;
  int to_index = 0;
  double f_from = 0.0;
  double f_to = 0.0;
  double eps = 0.0;  // f_to^2 - f_from^2
  TransitionKind kind = TransitionKind::Unison;
};

inline Transition transition_between(const Pitch& from, const Pitch& to) {
  Transition t;
  t.from_index = from.note_index;
  t.to_index = to.note_index;
  t.f_from = from.frequency;
  t.f_to = to.frequency;
  t.eps = t.from_index == t.to_index ? 0.0 : epsilon(t.f_from, t.f_to);
  t.kind = t.to_index > t.from_index   ? TransitionKind::Ascending
           : t.to_index < t.from_index ? TransitionKind::Descending
                                       : TransitionKind::Unison;
  return t;
}

inline Transition make_transition(int from_index, int to_index, const Register& tuning = {}) {
  return transition_between({from_index, pitch_frequency(from_index, tuning)},
                            {to_index, pitch_frequency(to_index, tuning)});
}

// Successive pitch pairs inside each segment. With `bridge_rests` the last
// pitch of a segment also connects to the first pitch of the next one.
inline std::vector<Transition> transitions(const MelodicLine& line, bool bridge_rests = false) {
  std::vector<Transition> out;
  const Pitch* previous = nullptr;
  for (const auto& seg : line.segments) {
    if (!bridge_rests) previous = nullptr;
    for (const auto& p : seg.pitches) {
      if (previous) out.push_back(transition_between(*previous, p));
      previous = &p;
    }
  }
  return out;
}

// Every non-empty track of a parsed file as its own melodic line.
inline std::vector<MelodicLine> melodic_lines(const MidiFile& file, ChordPolicy policy = ChordPolicy::HighestPitch) {
  std::vector<MelodicLine> lines;
  for (const auto& track : file.tracks) {
    if (track.notes.empty()) continue;
    std::string label = track.info.name.empty() ? "track" + std::to_string(track.info.index) : track.info.name;
    lines.push_back(extract_melodic_line(track.notes, policy, std::move(label)));
  }
  return lines;
}

}  // namespace melmax
