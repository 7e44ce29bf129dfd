#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace sed {

/// Multichannel audio held as one sample vector per channel, values in [-1, 1].
struct AudioClip {
  std::vector<std::vector<double>> channels;
  int sample_rate = 0;

  std::size_t n_channels() const { return channels.size(); }
  std::size_t n_samples() const { return channels.empty() ? 0 : channels[0].size(); }
  double duration() const {
    return sample_rate > 0 ? static_cast<double>(n_samples()) / sample_rate : 0.0;
  }

  // Throws FormatError when the channel count, lengths, rate or sample values
  // violate the clip invariants.
  void validate() const;
};

struct Event {
  double onset = 0.0;
  double offset = 0.0;
  std::string label;

  bool operator==(const Event&) const = default;
};

using EventList = std::vector<Event>;

/// Frame-level binary activity, frames x classes, stored frame-major.
class EventRoll {
 public:
  EventRoll() = default;
  EventRoll(std::size_t n_frames, std::vector<std::string> class_names, double hop_seconds);

  std::size_t n_frames() const { return n_frames_; }
  std::size_t n_classes() const { return class_names_.size(); }
  double hop_seconds() const { return hop_seconds_; }
  const std::vector<std::string>& class_names() const { return class_names_; }

  std::uint8_t at(std::size_t frame, std::size_t cls) const {
    return activity_[frame * n_classes() + cls];
  }
  void set(std::size_t frame, std::size_t cls, bool active) {
    activity_[frame * n_classes() + cls] = active ? 1 : 0;
  }
  const std::vector<std::uint8_t>& data() const { return activity_; }

  bool operator==(const EventRoll&) const = default;

 private:
  std::size_t n_frames_ = 0;
  std::vector<std::string> class_names_;
  double hop_seconds_ = 0.02;
  std::vector<std::uint8_t> activity_;
};

enum class SplitRole { train, validation, test };

std::string to_string(SplitRole role);
SplitRole parse_split_role(const std::string& s);

struct ManifestEntry {
  std::string audio_path;
  std::string annotation_path;
  int fold = 1;
  SplitRole role = SplitRole::train;
};

/// One row per (clip, fold). Relative paths resolve against `base_dir`.
struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::filesystem::path base_dir;

  std::vector<int> folds() const;
  std::vector<ManifestEntry> split(int fold, SplitRole role) const;
  std::filesystem::path resolve(const std::string& p) const;

  // Throws ManifestError if a clip has two roles in one fold or the fold ids
  // do not cover 1..max.
  void validate() const;
};

// WAV (RIFF, PCM format 1, 16/24-bit, 1-2 channels).
AudioClip read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const AudioClip& clip, int bits_per_sample = 24);
std::vector<std::uint8_t> encode_wav(const AudioClip& clip, int bits_per_sample);
AudioClip decode_wav(const std::vector<std::uint8_t>& bytes);

/// Channel mean; a mono clip is returned unchanged.
AudioClip to_mono(const AudioClip& clip);

EventList parse_annotations(const std::string& text, const std::vector<std::string>& class_names);
EventList read_annotations(const std::filesystem::path& path,
                           const std::vector<std::string>& class_names);
void write_annotations(const std::filesystem::path& path, const EventList& events);

/// Frame f of class c is active iff [f*hop, (f+1)*hop) overlaps an event
/// [onset, offset) of that class. Events past the last frame are clipped.
EventRoll events_to_roll(const EventList& events, std::size_t n_frames, double hop_seconds,
                         const std::vector<std::string>& class_names);

/// Maximal runs of active frames per class, in class-then-time order.
EventList roll_to_events(const EventRoll& roll);

DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

// Synthetic polyphonic dataset generation.

struct SynthSpec {
  int n_clips = 24;
  double duration_s = 10.0;
  int class_count = 6;
  int polyphony_max = 2;
  std::uint64_t seed = 1;
  int sample_rate = 44100;
  // Average number of events placed per clip per class.
  double events_per_class = 2.0;
  double min_event_s = 0.5;
  double max_event_s = 3.0;
  // All classes share one spectral template and differ only by stereo image.
  bool shared_template = false;
  // Per-event level jitter in dB (uniform +/-).
  double level_jitter_db = 3.0;
  double noise_floor = 0.002;
};

struct SynthClip {
  AudioClip audio;
  EventList events;
};

/// Class vocabulary used by the generator: the six street classes when
/// class_count == 6, otherwise "class0".."classN-1".
std::vector<std::string> synth_class_names(int class_count);

std::vector<SynthClip> synth_dataset(const SynthSpec& spec);

/// Writes audio/, annotations/ and manifest.tsv under `dir`; folds assign
/// test clips round-robin, the next fold's test clips become validation.
std::filesystem::path write_synth_dataset(const std::filesystem::path& dir, const SynthSpec& spec,
                                          int n_folds);

}  // namespace sed
