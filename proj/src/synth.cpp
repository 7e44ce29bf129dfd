#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "sedpipe/audio_io.h"
#include "sedpipe/errors.h"
#include "sedpipe/rng.h"

namespace sed {
namespace {

struct ClassVoice {
  double f0 = 440.0;
  double noise_center = 660.0;
  double gain_left = 1.0;
  double gain_right = 1.0;
};

std::vector<ClassVoice> make_voices(const SynthSpec& spec) {
  std::vector<ClassVoice> voices(spec.class_count);
  const int n = spec.class_count;
  for (int c = 0; c < n; ++c) {
    ClassVoice& v = voices[c];
    const double pos = n > 1 ? static_cast<double>(c) / (n - 1) : 0.5;
    if (spec.shared_template) {
      // Left+right sum is constant, so the channel average carries no class cue.
      v.f0 = 600.0;
      v.noise_center = 2400.0;
      const double pan = n > 1 ? -0.8 + 1.6 * pos : 0.0;
      v.gain_left = 1.0 + pan;
      v.gain_right = 1.0 - pan;
    } else {
      v.f0 = 300.0 * std::pow(2.0, 0.7 * c);
      v.noise_center = 1.5 * v.f0 + 4000.0 * pos;
      const double pan = n > 1 ? -0.5 + 1.0 * pos : 0.0;
      v.gain_left = 1.0 + pan;
      v.gain_right = 1.0 - pan;
    }
  }
  return voices;
}

// RBJ band-pass (constant 0 dB peak gain).
struct Biquad {
  double b0, b1, b2, a1, a2;
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;

  Biquad(double fc, double q, double fs) {
    const double w0 = 2.0 * M_PI * fc / fs;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double a0 = 1.0 + alpha;
    b0 = alpha / a0;
    b1 = 0.0;
    b2 = -alpha / a0;
    a1 = -2.0 * std::cos(w0) / a0;
    a2 = (1.0 - alpha) / a0;
  }

  double step(double x) {
    const double y = b0 * x + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = x;
    y2 = y1;
    y1 = y;
    return y;
  }
};

int max_concurrency(const EventList& accepted, double onset, double offset) {
  std::vector<double> probes{onset};
  for (const auto& e : accepted) {
    if (e.onset > onset && e.onset < offset) probes.push_back(e.onset);
  }
  int best = 0;
  for (double t : probes) {
    int active = 0;
    for (const auto& e : accepted) {
      if (e.onset <= t && t < e.offset) ++active;
    }
    best = std::max(best, active);
  }
  return best;
}

EventList place_events(const SynthSpec& spec, const std::vector<std::string>& names, Rng& rng) {
  EventList accepted;
  const int target = std::max(1, static_cast<int>(std::lround(spec.class_count * spec.events_per_class)));
  const double max_len = std::min(spec.max_event_s, spec.duration_s);
  const double min_len = std::min(spec.min_event_s, max_len);
  for (int attempt = 0; attempt < target * 20 && static_cast<int>(accepted.size()) < target; ++attempt) {
    const auto cls = static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(spec.class_count)));
    // Quantize to milliseconds so annotation files round-trip exactly.
    const double len = std::round(rng.uniform(min_len, max_len) * 1000.0) / 1000.0;
    const double onset = std::round(rng.uniform(0.0, spec.duration_s - len) * 1000.0) / 1000.0;
    const double offset = std::min(spec.duration_s, onset + len);
    if (offset <= onset) continue;
    bool clash = false;
    for (const auto& e : accepted) {
      if (e.label == names[cls] && e.onset < offset && onset < e.offset) clash = true;
    }
    if (clash) continue;
    if (max_concurrency(accepted, onset, offset) + 1 > spec.polyphony_max) continue;
    accepted.push_back({onset, offset, names[cls]});
  }
  std::sort(accepted.begin(), accepted.end(), [](const Event& a, const Event& b) {
    return a.onset != b.onset ? a.onset < b.onset : a.label < b.label;
  });
  return accepted;
}

void render_event(const ClassVoice& voice, const Event& ev, double level, Rng& rng, AudioClip& clip) {
  const double fs = clip.sample_rate;
  const auto start = static_cast<std::size_t>(std::llround(ev.onset * fs));
  const auto stop = std::min(clip.n_samples(), static_cast<std::size_t>(std::llround(ev.offset * fs)));
  if (stop <= start) return;
  const std::size_t len = stop - start;
  const std::size_t ramp = std::min<std::size_t>(len / 2, static_cast<std::size_t>(0.01 * fs));

  const double phase[3] = {rng.uniform(0.0, 2.0 * M_PI), rng.uniform(0.0, 2.0 * M_PI),
                           rng.uniform(0.0, 2.0 * M_PI)};
  const double nyquist = 0.5 * fs;
  Biquad band(std::min(voice.noise_center, 0.45 * fs), 4.0, fs);
  for (std::size_t i = 0; i < len; ++i) {
    const double t = static_cast<double>(i) / fs;
    double s = 0.0;
    for (int h = 0; h < 3; ++h) {
      const double f = voice.f0 * (h + 1);
      if (f >= nyquist) break;
      s += std::sin(2.0 * M_PI * f * t + phase[h]) / (1 << h);
    }
    s = 0.6 * s + 1.5 * band.step(rng.normal());
    double env = 1.0;
    if (ramp > 0) {
      if (i < ramp) env = 0.5 - 0.5 * std::cos(M_PI * i / ramp);
      else if (i >= len - ramp) env = 0.5 - 0.5 * std::cos(M_PI * (len - 1 - i) / ramp);
    }
    const double v = level * env * s;
    clip.channels[0][start + i] += voice.gain_left * v;
    clip.channels[1][start + i] += voice.gain_right * v;
  }
}

}  // namespace

std::vector<std::string> synth_class_names(int class_count) {
  if (class_count == 6) {
    return {"brakes squeaking", "car", "children", "large vehicle", "people speaking", "people walking"};
  }
  std::vector<std::string> names;
  for (int c = 0; c < class_count; ++c) names.push_back("class" + std::to_string(c));
  return names;
}

std::vector<SynthClip> synth_dataset(const SynthSpec& spec) {
  if (spec.class_count < 1) throw ConfigError("synth: class_count must be >= 1");
  if (spec.polyphony_max < 1) throw ConfigError("synth: polyphony_max must be >= 1");
  if (!(spec.duration_s > 0.0)) throw ConfigError("synth: duration must be positive");
  if (spec.sample_rate <= 0) throw ConfigError("synth: sample_rate must be positive");

  const auto names = synth_class_names(spec.class_count);
  const auto voices = make_voices(spec);
  const auto n_samples = static_cast<std::size_t>(std::llround(spec.duration_s * spec.sample_rate));

  std::vector<SynthClip> out;
  out.reserve(spec.n_clips);
  for (int i = 0; i < spec.n_clips; ++i) {
    Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(i)));
    SynthClip sc;
    sc.events = place_events(spec, names, rng);
    sc.audio.sample_rate = spec.sample_rate;
    sc.audio.channels.assign(2, std::vector<double>(n_samples, 0.0));
    for (auto& ch : sc.audio.channels) {
      for (auto& v : ch) v = spec.noise_floor * rng.normal();
    }
    for (const auto& ev : sc.events) {
      const auto cls = static_cast<std::size_t>(
          std::find(names.begin(), names.end(), ev.label) - names.begin());
      const double jitter = rng.uniform(-spec.level_jitter_db, spec.level_jitter_db);
      const double level = 0.12 * std::pow(10.0, jitter / 20.0);
      render_event(voices[cls], ev, level, rng, sc.audio);
    }
    for (auto& ch : sc.audio.channels) {
      for (auto& v : ch) v = std::clamp(v, -1.0, 1.0);
    }
    out.push_back(std::move(sc));
  }
  return out;
}

std::filesystem::path write_synth_dataset(const std::filesystem::path& dir, const SynthSpec& spec,
                                          int n_folds) {
  if (n_folds < 2) throw ConfigError("synth: at least 2 folds required");
  if (spec.n_clips < 2 * n_folds) throw ConfigError("synth: need at least 2 clips per fold");
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / "audio", ec);
  fs::create_directories(dir / "annotations", ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  const auto clips = synth_dataset(spec);
  std::vector<std::string> audio_rel, ann_rel;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    char stem[32];
    std::snprintf(stem, sizeof(stem), "clip%02zu", i + 1);
    audio_rel.push_back(std::string("audio/") + stem + ".wav");
    ann_rel.push_back(std::string("annotations/") + stem + ".tsv");
    write_wav(dir / audio_rel.back(), clips[i].audio, 24);
    write_annotations(dir / ann_rel.back(), clips[i].events);
  }

  DatasetManifest manifest;
  for (int fold = 1; fold <= n_folds; ++fold) {
    std::size_t rest_index = 0;
    for (std::size_t i = 0; i < clips.size(); ++i) {
      ManifestEntry e{audio_rel[i], ann_rel[i], fold, SplitRole::train};
      if (static_cast<int>(i % n_folds) == fold - 1) {
        e.role = SplitRole::test;
      } else {
        if (rest_index % 4 == 0) e.role = SplitRole::validation;
        ++rest_index;
      }
      manifest.entries.push_back(e);
    }
  }
  const auto path = dir / "manifest.tsv";
  write_manifest(path, manifest);
  return path;
}

}  // namespace sed
