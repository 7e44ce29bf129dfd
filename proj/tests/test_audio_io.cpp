#include <doctest.h>

#include <cmath>
#include <cstring>
#include <set>

#include "oracles.h"
#include "sedpipe/audio_io.h"
#include "sedpipe/errors.h"
#include "sedpipe/rng.h"
#include "test_util.h"

using namespace sed;

namespace {

AudioClip ramp_clip(std::size_t n, int channels, int rate = 44100) {
  AudioClip clip;
  clip.sample_rate = rate;
  clip.channels.assign(channels, std::vector<double>(n));
  for (int c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < n; ++i) clip.channels[c][i] = 0.9 * std::sin(0.01 * i + c);
  }
  return clip;
}

void put_u32(std::vector<std::uint8_t>& b, std::size_t at, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

}  // namespace

TEST_CASE("wav round trip stays within half a quantization step") {
  for (int bits : {16, 24}) {
    for (int ch : {1, 2}) {
      const AudioClip clip = ramp_clip(1000, ch);
      const AudioClip back = decode_wav(encode_wav(clip, bits));
      REQUIRE(back.n_channels() == static_cast<std::size_t>(ch));
      REQUIRE(back.n_samples() == 1000);
      CHECK(back.sample_rate == 44100);
      const double step = 1.0 / std::ldexp(1.0, bits - 1);
      double worst = 0.0;
      for (int c = 0; c < ch; ++c) {
        for (std::size_t i = 0; i < 1000; ++i) worst = std::max(worst, std::abs(back.channels[c][i] - clip.channels[c][i]));
      }
      CHECK(worst <= 0.5 * step + 1e-15);
    }
  }
}

TEST_CASE("wav decoding scales full-scale codes by 2^(bits-1)") {
  AudioClip clip;
  clip.sample_rate = 8000;
  clip.channels = {{-1.0, 0.5, 0.0}};
  const auto bytes = encode_wav(clip, 16);
  // -32768, 16384, 0 little-endian after the 44-byte header
  CHECK(bytes[44] == 0x00);
  CHECK(bytes[45] == 0x80);
  CHECK(bytes[46] == 0x00);
  CHECK(bytes[47] == 0x40);
  const AudioClip back = decode_wav(bytes);
  CHECK(back.channels[0][0] == -1.0);
  CHECK(back.channels[0][1] == 0.5);
}

TEST_CASE("wav reader skips unknown chunks") {
  AudioClip clip = ramp_clip(10, 2);
  auto bytes = encode_wav(clip, 24);
  // Insert a LIST chunk between fmt and data.
  const std::vector<std::uint8_t> list = {'L', 'I', 'S', 'T', 4, 0, 0, 0, 'a', 'b', 'c', 'd'};
  bytes.insert(bytes.begin() + 36, list.begin(), list.end());
  put_u32(bytes, 4, static_cast<std::uint32_t>(bytes.size() - 8));
  const AudioClip back = decode_wav(bytes);
  CHECK(back.n_samples() == 10);
  CHECK(back.n_channels() == 2);
}

TEST_CASE("wav reader rejects malformed or unsupported files") {
  const auto good = encode_wav(ramp_clip(8, 1), 16);
  auto bad_magic = good;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_wav(bad_magic), FormatError);

  auto float_format = good;
  float_format[20] = 3;  // IEEE float
  CHECK_THROWS_AS(decode_wav(float_format), UnsupportedError);

  auto eight_bit = good;
  eight_bit[34] = 8;
  CHECK_THROWS_AS(decode_wav(eight_bit), UnsupportedError);

  auto truncated = good;
  truncated.resize(30);
  CHECK_THROWS(decode_wav(truncated));

  CHECK_THROWS_AS(read_wav("/nonexistent/clip.wav"), IoError);
}

TEST_CASE("wav file round trip through disk") {
  testutil::TempDir dir("wav");
  const AudioClip clip = ramp_clip(500, 2, 22050);
  write_wav(dir / "a.wav", clip, 24);
  const AudioClip back = read_wav(dir / "a.wav");
  CHECK(back.sample_rate == 22050);
  CHECK(back.n_samples() == 500);
}

TEST_CASE("to_mono averages channels and leaves mono untouched") {
  AudioClip st;
  st.sample_rate = 100;
  st.channels = {{1.0, -0.5, 0.25}, {0.0, 0.5, 0.75}};
  const AudioClip m = to_mono(st);
  REQUIRE(m.n_channels() == 1);
  CHECK(m.channels[0] == std::vector<double>{0.5, 0.0, 0.5});
  const AudioClip again = to_mono(m);
  CHECK(again.channels == m.channels);
}

TEST_CASE("clip validation") {
  AudioClip c = ramp_clip(4, 2);
  CHECK_NOTHROW(c.validate());
  c.channels[1].pop_back();
  CHECK_THROWS_AS(c.validate(), FormatError);
  AudioClip three = ramp_clip(4, 3);
  CHECK_THROWS_AS(three.validate(), FormatError);
}

TEST_CASE("annotation parsing") {
  const std::vector<std::string> names{"car", "people walking"};
  const auto ev = parse_annotations("0.5\t1.25\tcar\n\n2\t3\tpeople walking\r\n", names);
  REQUIRE(ev.size() == 2);
  CHECK(ev[0] == Event{0.5, 1.25, "car"});
  CHECK(ev[1].label == "people walking");

  CHECK_THROWS_AS(parse_annotations("0.5\t1.0\tbird\n", names), VocabularyError);
  CHECK_THROWS_AS(parse_annotations("0.5 1.0 car\n", names), ParseError);
  CHECK_THROWS_AS(parse_annotations("1.0\t0.5\tcar\n", names), RangeError);
}

TEST_CASE("annotation file round trip") {
  testutil::TempDir dir("ann");
  const EventList ev{{0.1, 0.9, "a"}, {1.5, 2.25, "b"}};
  write_annotations(dir / "x.tsv", ev);
  CHECK(read_annotations(dir / "x.tsv", {"a", "b"}) == ev);
}

TEST_CASE("events_to_roll matches the interval-overlap oracle") {
  Rng rng(7);
  const std::vector<std::string> names{"a", "b", "c"};
  for (int trial = 0; trial < 200; ++trial) {
    const double hop = trial % 2 ? 0.02 : 0.1;
    const std::size_t frames = 10 + rng.below(200);
    EventList ev;
    const int n_ev = static_cast<int>(rng.below(6));
    for (int k = 0; k < n_ev; ++k) {
      // Millisecond grid, so many boundaries land exactly on frame edges.
      const double on = static_cast<double>(rng.below(static_cast<std::uint64_t>(frames * hop * 1000 + 500))) / 1000.0;
      const double off = on + static_cast<double>(1 + rng.below(2000)) / 1000.0;
      ev.push_back({on, off, names[rng.below(3)]});
    }
    const EventRoll roll = events_to_roll(ev, frames, hop, names);
    CHECK(roll.data() == oracle::rasterize(ev, frames, hop, names));
  }
}

TEST_CASE("events_to_roll marks partial frame overlap active") {
  const auto roll = events_to_roll({{0.03, 0.05, "a"}}, 5, 0.02, {"a"});
  // frames [0.02,0.04) and [0.04,0.06)
  CHECK(roll.at(0, 0) == 0);
  CHECK(roll.at(1, 0) == 1);
  CHECK(roll.at(2, 0) == 1);
  CHECK(roll.at(3, 0) == 0);
  CHECK_THROWS_AS(events_to_roll({{0.0, 1.0, "z"}}, 5, 0.02, {"a"}), VocabularyError);
}

TEST_CASE("roll_to_events recovers maximal runs") {
  const std::vector<std::string> names{"a", "b"};
  const EventList ev{{0.0, 0.1, "a"}, {0.2, 0.3, "a"}, {0.1, 0.4, "b"}};
  const EventRoll roll = events_to_roll(ev, 10, 0.1, names);
  const EventList back = roll_to_events(roll);
  REQUIRE(back.size() == 3);
  CHECK(back[0].label == "a");
  CHECK(back[0].onset == doctest::Approx(0.0));
  CHECK(back[0].offset == doctest::Approx(0.1));
  CHECK(back[1].onset == doctest::Approx(0.2));
  CHECK(back[2].label == "b");
  CHECK(back[2].offset == doctest::Approx(0.4));
  CHECK(events_to_roll(back, 10, 0.1, names) == roll);
}

TEST_CASE("manifest round trip and validation") {
  testutil::TempDir dir("manifest");
  DatasetManifest m;
  m.entries = {{"audio/a.wav", "ann/a.tsv", 1, SplitRole::train},
               {"audio/b.wav", "ann/b.tsv", 1, SplitRole::test},
               {"audio/a.wav", "ann/a.tsv", 2, SplitRole::test},
               {"audio/b.wav", "ann/b.tsv", 2, SplitRole::validation}};
  write_manifest(dir / "m.tsv", m);
  const DatasetManifest back = read_manifest(dir / "m.tsv");
  REQUIRE(back.entries.size() == 4);
  CHECK(back.entries[3].role == SplitRole::validation);
  CHECK(back.folds() == std::vector<int>{1, 2});
  CHECK(back.split(2, SplitRole::test).front().audio_path == "audio/a.wav");
  CHECK(back.resolve("audio/a.wav") == dir.path() / "audio/a.wav");
  CHECK_NOTHROW(back.validate());

  DatasetManifest dup = m;
  dup.entries.push_back({"audio/a.wav", "ann/a.tsv", 1, SplitRole::test});
  CHECK_THROWS_AS(dup.validate(), ManifestError);

  DatasetManifest gap;
  gap.entries = {{"a.wav", "a.tsv", 1, SplitRole::train}, {"b.wav", "b.tsv", 3, SplitRole::test}};
  CHECK_THROWS_AS(gap.validate(), ManifestError);

  testutil::spit(dir / "bad.tsv", "a.wav\ta.tsv\tone\ttrain\n");
  CHECK_THROWS_AS(read_manifest(dir / "bad.tsv"), ManifestError);
  testutil::spit(dir / "bad2.tsv", "a.wav\ta.tsv\t1\tholdout\n");
  CHECK_THROWS_AS(read_manifest(dir / "bad2.tsv"), ManifestError);
}

TEST_CASE("synthetic clips respect the generator contract") {
  SynthSpec spec;
  spec.n_clips = 6;
  spec.duration_s = 5.0;
  spec.class_count = 4;
  spec.polyphony_max = 2;
  spec.seed = 3;
  const auto clips = synth_dataset(spec);
  REQUIRE(clips.size() == 6);
  const auto names = synth_class_names(4);
  for (const auto& c : clips) {
    CHECK(c.audio.n_channels() == 2);
    CHECK(c.audio.n_samples() == 5 * 44100);
    CHECK_NOTHROW(c.audio.validate());
    for (const auto& ch : c.audio.channels) {
      for (double v : ch) REQUIRE(std::abs(v) <= 1.0);
    }
    // Events sit on a millisecond grid, so 1 ms frames measure concurrency exactly.
    const EventRoll roll = events_to_roll(c.events, 5000, 0.001, names);
    for (std::size_t f = 0; f < roll.n_frames(); ++f) {
      int active = 0;
      for (std::size_t k = 0; k < roll.n_classes(); ++k) active += roll.at(f, k);
      CHECK(active <= 2);
    }
    for (std::size_t a = 0; a < c.events.size(); ++a) {
      CHECK(c.events[a].onset >= 0.0);
      CHECK(c.events[a].offset <= 5.0 + 1e-9);
      for (std::size_t b = a + 1; b < c.events.size(); ++b) {
        if (c.events[a].label != c.events[b].label) continue;
        CHECK_FALSE(oracle::overlaps(c.events[a].onset, c.events[a].offset, c.events[b].onset, c.events[b].offset));
      }
    }
  }
  // Same seed, same output.
  const auto again = synth_dataset(spec);
  CHECK(again[2].audio.channels == clips[2].audio.channels);
  CHECK(again[2].events == clips[2].events);
  spec.seed = 4;
  CHECK(synth_dataset(spec)[2].events != clips[2].events);
}

TEST_CASE("shared-template synthesis keeps the channel sum class-independent") {
  SynthSpec spec;
  spec.n_clips = 1;
  spec.duration_s = 3.0;
  spec.class_count = 2;
  spec.polyphony_max = 1;
  spec.shared_template = true;
  spec.level_jitter_db = 0.0;
  spec.noise_floor = 0.0;
  const auto clip = synth_dataset(spec).front();
  REQUIRE_FALSE(clip.events.empty());
  // Left/right differ between classes but their sum does not carry the label:
  // check that the per-event L/R energy ratio separates the two classes.
  double ratio[2] = {0.0, 0.0};
  int count[2] = {0, 0};
  for (const auto& e : clip.events) {
    const auto a = static_cast<std::size_t>(e.onset * 44100), b = static_cast<std::size_t>(e.offset * 44100);
    double l = 0.0, r = 0.0;
    for (std::size_t i = a; i < b; ++i) {
      l += clip.audio.channels[0][i] * clip.audio.channels[0][i];
      r += clip.audio.channels[1][i] * clip.audio.channels[1][i];
    }
    const int k = e.label == "class0" ? 0 : 1;
    ratio[k] += l / (l + r);
    ++count[k];
  }
  if (count[0] && count[1]) CHECK(std::abs(ratio[0] / count[0] - ratio[1] / count[1]) > 0.1);
}

TEST_CASE("default synthetic dataset mirrors the real corpus layout") {
  testutil::TempDir dir("synthds");
  SynthSpec spec;
  spec.duration_s = 1.0;  // default clip count, classes and folds; short clips
  const auto manifest_path = write_synth_dataset(dir.path(), spec, 4);
  const DatasetManifest m = read_manifest(manifest_path);
  CHECK_NOTHROW(m.validate());
  CHECK(m.folds() == std::vector<int>{1, 2, 3, 4});
  std::set<std::string> clips;
  std::set<std::string> test_union;
  for (int fold = 1; fold <= 4; ++fold) {
    std::set<std::string> train, test;
    for (const auto& e : m.split(fold, SplitRole::train)) train.insert(e.audio_path);
    for (const auto& e : m.split(fold, SplitRole::test)) test.insert(e.audio_path);
    CHECK_FALSE(m.split(fold, SplitRole::validation).empty());
    for (const auto& t : test) {
      CHECK(train.count(t) == 0);
      CHECK(test_union.insert(t).second);  // each clip is tested in exactly one fold
    }
  }
  for (const auto& e : m.entries) clips.insert(e.audio_path);
  CHECK(clips.size() == 24);
  CHECK(test_union.size() == 24);
  CHECK(synth_class_names(6).size() == 6);
  const auto clip = read_wav(m.resolve(m.entries.front().audio_path));
  CHECK(clip.n_channels() == 2);
}
