#pragma once

// Standard MIDI File (format 0/1) reader and writer restricted to what the
// melodic analysis needs: note on/off pairs per channel and key, track names,
// end-of-track. Everything else is skipped.

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <map>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "melmax/error.hpp"

namespace melmax {

struct NoteEvent {
  int track = 0;
  int channel = 0;
  std::int64_t onset_ticks = 0;
  std::int64_t duration_ticks = 0;
  int note_index = 0;
  int velocity = 0;

  friend bool operator==(const NoteEvent&, const NoteEvent&) = default;
};

struct TrackInfo {
  int index = 0;
  std::string name;
};

struct MidiTrack {
  TrackInfo info;
  std::vector<NoteEvent> notes;  // sorted by onset, then channel, key, duration
};

struct MidiFile {
  int format = 1;
  int division = 480;  // ticks per quarter note
  std::vector<MidiTrack> tracks;
};

namespace detail {

inline bool note_order(const NoteEvent& a, const NoteEvent& b) {
  return std::tie(a.onset_ticks, a.channel, a.note_index, a.duration_ticks, a.velocity) <
         std::tie(b.onset_ticks, b.channel, b.note_index, b.duration_ticks, b.velocity);
}

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> data, std::size_t pos, std::size_t end, int track)
      : data_(data), pos_(pos), end_(end), track_(track) {}

  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ >= end_; }

  std::uint8_t u8() {
    if (pos_ >= end_) throw midi_error("truncated data", pos_, track_);
    return data_[pos_++];
  }
  std::uint8_t peek() const {
    if (pos_ >= end_) throw midi_error("truncated data", pos_, track_);
    return data_[pos_];
  }
  std::uint32_t be(int bytes) {
    std::uint32_t v = 0;
    for (int i = 0; i < bytes; ++i) v = (v << 8) | u8();
    return v;
  }
  std::uint32_t vlq() {
    const std::size_t start = pos_;
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      const std::uint8_t b = u8();
      v = (v << 7) | (b & 0x7F);
      if (!(b & 0x80)) return v;
    }
    throw midi_error("variable-length quantity longer than 4 bytes", start, track_);
  }
  void skip(std::size_t n) {
    if (n > end_ - pos_) throw midi_error("truncated data", pos_, track_);
    pos_ += n;
  }
  std::string text(std::size_t n) {
    if (n > end_ - pos_) throw midi_error("truncated data", pos_, track_);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_;
  std::size_t end_;
  int track_;
};

inline MidiTrack parse_track(std::span<const std::uint8_t> data, std::size_t begin, std::size_t end, int index) {
  ByteReader in(data, begin, end, index);
  MidiTrack track;
  track.info.index = index;
  bool named = false;
  // Open notes per (channel, key), closed first-in first-out.
  std::map<std::pair<int, int>, std::vector<std::pair<std::int64_t, int>>> open;
  std::int64_t tick = 0;
  int running = 0;

  while (!in.done()) {
    tick += in.vlq();
    const std::size_t event_pos = in.pos();
    int status = in.peek();
    if (status & 0x80) {
      in.u8();
    } else {
      if (running == 0) throw midi_error("data byte without running status", event_pos, index);
      status = running;
    }

    if (status == 0xFF) {
      running = 0;
      const int type = in.u8();
      const std::uint32_t len = in.vlq();
      if (type == 0x2F) {
        in.skip(len);
        break;
      }
      if (type == 0x03 && !named) {
        track.info.name = in.text(len);
        named = true;
      } else {
        in.skip(len);
      }
      continue;
    }
    if (status == 0xF0 || status == 0xF7) {
      running = 0;
      in.skip(in.vlq());
      continue;
    }
    if (status >= 0xF0) throw midi_error("unexpected system message in track", event_pos, index);

    running = status;
    const int kind = status & 0xF0;
    const int channel = status & 0x0F;
    const int d1 = in.u8();
    const int d2 = (kind == 0xC0 || kind == 0xD0) ? 0 : in.u8();
    if ((d1 | d2) & 0x80) throw midi_error("data byte with high bit set", event_pos, index);

    if (kind == 0x90 && d2 > 0) {
      open[{channel, d1}].emplace_back(tick, d2);
    } else if (kind == 0x80 || kind == 0x90) {
      auto it = open.find({channel, d1});
      if (it == open.end() || it->second.empty()) continue;  // stray note-off
      const auto [onset, velocity] = it->second.front();
      it->second.erase(it->second.begin());
      if (tick > onset) {
        NoteEvent n;
        n.track = index;
        n.channel = channel;
        n.onset_ticks = onset;
        n.duration_ticks = tick - onset;
        n.note_index = d1;
        n.velocity = velocity;
        track.notes.push_back(n);
      }
    }
  }

  for (const auto& [key, pending] : open)
    if (!pending.empty())
      throw midi_error("unmatched note-on for key " + std::to_string(key.second) + " on channel " +
                           std::to_string(key.first) + " at tick " + std::to_string(pending.front().first),
                       in.pos(), index);
  std::stable_sort(track.notes.begin(), track.notes.end(), note_order);
  return track;
}

inline void put_be(std::vector<std::uint8_t>& out, std::uint32_t v, int bytes) {
  for (int i = bytes - 1; i >= 0; --i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

inline void put_vlq(std::vector<std::uint8_t>& out, std::uint32_t v) {
  std::array<std::uint8_t, 5> buf{};
  int n = 0;
  buf[n++] = v & 0x7F;
  while (v >>= 7) buf[n++] = static_cast<std::uint8_t>((v & 0x7F) | 0x80);
  while (n > 0) out.push_back(buf[--n]);
}

}  // namespace detail

inline MidiFile parse_midi(std::span<const std::uint8_t> data) {
  detail::ByteReader head(data, 0, data.size(), -1);
  if (data.size() < 14 || std::string(reinterpret_cast<const char*>(data.data()), 4) != "MThd")
    throw midi_error("missing MThd header", 0);
  head.skip(4);
  const std::uint32_t hlen = head.be(4);
  if (hlen < 6) throw midi_error("header chunk shorter than 6 bytes", 4);
  MidiFile file;
  file.format = static_cast<int>(head.be(2));
  const int ntracks = static_cast<int>(head.be(2));
  file.division = static_cast<int>(head.be(2));
  if (file.format != 0 && file.format != 1)
    throw midi_error("unsupported SMF format " + std::to_string(file.format), 8);
  if (file.division & 0x8000) throw midi_error("SMPTE time division is not supported", 12);
  head.skip(hlen - 6);

  std::size_t pos = head.pos();
  int index = 0;
  while (index < ntracks) {
    if (data.size() - pos < 8) throw midi_error("missing track chunk", pos, index);
    const std::string id(reinterpret_cast<const char*>(data.data() + pos), 4);
    detail::ByteReader len_reader(data, pos + 4, pos + 8, index);
    const std::size_t len = len_reader.be(4);
    const std::size_t body = pos + 8;
    if (len > data.size() - body) throw midi_error("track chunk runs past end of file", pos, index);
    if (id == "MTrk") {
      file.tracks.push_back(detail::parse_track(data, body, body + len, index));
      ++index;
    }
    pos = body + len;
  }
  return file;
}

inline MidiFile read_midi_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw invalid_input("cannot open MIDI file '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_midi(bytes);
  } catch (const midi_error& e) {
    throw midi_error(path + ": " + e.detail(), e.offset(), e.track());
  }
}

inline std::vector<std::uint8_t> serialize_midi(const MidiFile& file) {
  if (file.format == 0 && file.tracks.size() != 1)
    throw invalid_input("serialize_midi: format 0 holds exactly one track");
  std::vector<std::uint8_t> out{'M', 'T', 'h', 'd'};
  detail::put_be(out, 6, 4);
  detail::put_be(out, static_cast<std::uint32_t>(file.format), 2);
  detail::put_be(out, static_cast<std::uint32_t>(file.tracks.size()), 2);
  detail::put_be(out, static_cast<std::uint32_t>(file.division), 2);

  struct Raw {
    std::int64_t tick;
    int order;  // note-offs before note-ons at equal ticks
    std::int64_t tie;
    std::array<std::uint8_t, 3> bytes;
  };
  for (const auto& track : file.tracks) {
    std::vector<Raw> events;
    for (const auto& n : track.notes) {
      if (n.duration_ticks <= 0) throw invalid_input("serialize_midi: non-positive duration");
      if (n.note_index < 0 || n.note_index > 127 || n.channel < 0 || n.channel > 15 || n.velocity < 1 ||
          n.velocity > 127)
        throw invalid_input("serialize_midi: note field out of MIDI range");
      const auto ch = static_cast<std::uint8_t>(n.channel);
      const auto key = static_cast<std::uint8_t>(n.note_index);
      events.push_back({n.onset_ticks, 1, n.duration_ticks,
                        {static_cast<std::uint8_t>(0x90 | ch), key, static_cast<std::uint8_t>(n.velocity)}});
      events.push_back({n.onset_ticks + n.duration_ticks, 0, n.onset_ticks,
                        {static_cast<std::uint8_t>(0x80 | ch), key, 0x40}});
    }
    // Same-key notes opened at one tick are opened shortest first, so the
    // reader's first-in first-out matching pairs them back identically.
    std::stable_sort(events.begin(), events.end(), [](const Raw& a, const Raw& b) {
      return std::tie(a.tick, a.order, a.tie) < std::tie(b.tick, b.order, b.tie);
    });

    std::vector<std::uint8_t> body;
    if (!track.info.name.empty()) {
      body.insert(body.end(), {0x00, 0xFF, 0x03});
      detail::put_vlq(body, static_cast<std::uint32_t>(track.info.name.size()));
      body.insert(body.end(), track.info.name.begin(), track.info.name.end());
    }
    std::int64_t last = 0;
    for (const auto& e : events) {
      detail::put_vlq(body, static_cast<std::uint32_t>(e.tick - last));
      last = e.tick;
      body.insert(body.end(), e.bytes.begin(), e.bytes.end());
    }
    body.insert(body.end(), {0x00, 0xFF, 0x2F, 0x00});

    out.insert(out.end(), {'M', 'T', 'r', 'k'});
    detail::put_be(out, static_cast<std::uint32_t>(body.size()), 4);
    out.insert(out.end(), body.begin(), body.end());
  }
  return out;
}

inline void write_midi_file(const std::string& path, const MidiFile& file) {
  const auto bytes = serialize_midi(file);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw invalid_input("cannot write MIDI file '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace melmax
