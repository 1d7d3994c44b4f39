#include <catch_amalgamated.hpp>

#include <set>

#include "melmax/ingest.hpp"
#include "test_support.hpp"

using Catch::Approx;
using namespace melmax;

namespace {

NoteEvent note(std::int64_t onset, std::int64_t dur, int key) { return {0, 0, onset, dur, key, 80}; }

}  // namespace

TEST_CASE("chord collapses to its highest pitch", "[ingest]") {
  const std::vector<NoteEvent> chord{note(0, 480, 60), note(0, 480, 64), note(0, 480, 67)};
  const auto line = extract_melodic_line(chord);
  REQUIRE(line.segments.size() == 1);
  REQUIRE(line.segments[0].pitches.size() == 1);
  REQUIRE(line.segments[0].pitches[0].note_index == 67);
  REQUIRE(extract_melodic_line(chord, ChordPolicy::LowestPitch).segments[0].pitches[0].note_index == 60);
}

TEST_CASE("rests split segments", "[ingest]") {
  const std::vector<NoteEvent> legato{note(0, 480, 69), note(480, 480, 81)};
  auto line = extract_melodic_line(legato);
  REQUIRE(line.segments.size() == 1);
  REQUIRE(line.segments[0].pitches.size() == 2);
  REQUIRE(line.reg.lowest_index == 69);
  REQUIRE(line.reg.highest_index == 81);

  const std::vector<NoteEvent> gap{note(0, 240, 69), note(480, 480, 81)};
  line = extract_melodic_line(gap);
  REQUIRE(line.segments.size() == 2);
  REQUIRE(line.segments[0].pitches.size() == 1);
  REQUIRE(line.segments[1].pitches.size() == 1);

  // A held lower note bridges the gap left by the melody note.
  const std::vector<NoteEvent> held{note(0, 240, 72), note(0, 960, 48), note(480, 240, 74)};
  line = extract_melodic_line(held);
  REQUIRE(line.segments.size() == 1);
  REQUIRE(line.segments[0].pitches[1].note_index == 74);

  REQUIRE(extract_melodic_line(std::vector<NoteEvent>{}).empty());
}

TEST_CASE("transitions inside segments only", "[ingest]") {
  MelodicLine line;
  line.segments.push_back({{{69, 440.0}, {81, 880.0}}});
  auto ts = transitions(line);
  REQUIRE(ts.size() == 1);
  REQUIRE(ts[0].eps == 580800.0);
  REQUIRE(ts[0].kind == TransitionKind::Ascending);

  MelodicLine single;
  single.segments.push_back({{{69, 440.0}}});
  REQUIRE(transitions(single).empty());

  MelodicLine two;
  two.segments.push_back({{{69, tet_frequency(69)}, {71, tet_frequency(71)}}});
  two.segments.push_back({{{72, tet_frequency(72)}}});
  REQUIRE(transitions(two).size() == 1);
  const auto bridged = transitions(two, true);
  REQUIRE(bridged.size() == 2);
  REQUIRE(bridged[1].from_index == 71);
  REQUIRE(bridged[1].to_index == 72);
}

TEST_CASE("transition count and eps invariants on random lines", "[ingest][property]") {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const auto line = testing::random_line(rng, 40, 90, 1 + static_cast<int>(rng.next() % 6), 30);
    std::size_t expected = 0;
    for (const auto& s : line.segments) expected += s.pitches.size() - 1;
    const auto ts = transitions(line);
    REQUIRE(ts.size() == expected);
    for (const auto& t : ts) {
      const double direct = tet_frequency(t.to_index) * tet_frequency(t.to_index) -
                            tet_frequency(t.from_index) * tet_frequency(t.from_index);
      if (direct == 0.0)
        REQUIRE(t.eps == 0.0);
      else
        REQUIRE(t.eps == Approx(direct).epsilon(1e-12));
      REQUIRE((t.kind == TransitionKind::Unison) == (t.eps == 0.0));
      REQUIRE((t.kind == TransitionKind::Ascending) == (t.eps > 0.0));
      const auto swapped = make_transition(t.to_index, t.from_index);
      REQUIRE(swapped.eps == -t.eps);
    }
  }
}

TEST_CASE("chord collapse on random simultaneous-onset fixtures is monophonic", "[ingest][property]") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<NoteEvent> events;
    std::vector<int> expected;
    std::int64_t t = 0;
    const int groups = 1 + static_cast<int>(rng.next() % 10);
    for (int g = 0; g < groups; ++g) {
      const int size = 1 + static_cast<int>(rng.next() % 4);
      int top = 0;
      for (int k = 0; k < size; ++k) {
        const int key = 36 + static_cast<int>(rng.next() % 60);
        top = std::max(top, key);
        events.push_back(note(t, 100, key));
      }
      expected.push_back(top);
      t += 100;
    }
    const auto line = extract_melodic_line(events);
    std::vector<int> got;
    for (const auto& s : line.segments)
      for (const auto& p : s.pitches) got.push_back(p.note_index);
    REQUIRE(got == expected);
  }
}

TEST_CASE("melodic_lines labels tracks", "[ingest]") {
  const auto file = parse_midi(testing::single_note_file());
  const auto lines = melodic_lines(file);
  REQUIRE(lines.size() == 1);
  REQUIRE(lines[0].label == "track0");
  REQUIRE(lines[0].segments[0].pitches[0].frequency == Approx(261.6255653));
}
