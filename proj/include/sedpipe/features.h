#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sedpipe/audio_io.h"

namespace sed {

enum class FeatureClass : std::uint32_t { mbe = 0, bin_mbe = 1, bin_mul_mbe = 2, bin_fft = 3 };

std::string to_string(FeatureClass fc);
/// Accepts "mbe", "bin-mbe", "bin-mul-mbe", "bin-fft"; throws UsageError.
FeatureClass parse_feature_class(const std::string& s);
bool is_binaural(FeatureClass fc);

struct FeatureOptions {
  std::size_t n_mels = 40;
  double f_min = 0.0;
  // <= 0 means Nyquist. Requests above Nyquist are clamped with a warning.
  double f_max = 0.0;
  double window_seconds = 0.040;
  double hop_seconds = 0.020;
  std::vector<std::size_t> multi_res_windows{1024, 4096, 16384};
  // bin-fft magnitude compression; off keeps raw |X|.
  bool log_magnitude = false;
};

/// frames x bins x channels, frame-major: index (f * bins + b) * channels + c.
struct FeatureTensor {
  FeatureClass feature_class = FeatureClass::mbe;
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::size_t channels = 0;
  double hop_seconds = 0.02;
  std::vector<double> data;

  FeatureTensor() = default;
  FeatureTensor(FeatureClass fc, std::size_t f, std::size_t b, std::size_t ch, double hop)
      : feature_class(fc), frames(f), bins(b), channels(ch), hop_seconds(hop), data(f * b * ch, 0.0) {}

  double& at(std::size_t f, std::size_t b, std::size_t c) { return data[(f * bins + b) * channels + c]; }
  double at(std::size_t f, std::size_t b, std::size_t c) const {
    return data[(f * bins + b) * channels + c];
  }
};

/// Samples per analysis window/hop at the clip's rate (rounded).
std::size_t window_samples(const FeatureOptions& opt, int sample_rate);
std::size_t hop_samples(const FeatureOptions& opt, int sample_rate);
/// Effective upper mel edge for a rate: Nyquist when unset, clamped (with a
/// logged warning) when the request exceeds it.
double effective_f_max(const FeatureOptions& opt, int sample_rate);

/// Log mel energies of one channel with an explicit window and FFT size.
/// Returns frames x n_mels.
std::vector<std::vector<double>> channel_log_mel(const std::vector<double>& samples, int sample_rate,
                                                 std::size_t window_len, std::size_t fft_size,
                                                 const FeatureOptions& opt);

FeatureTensor extract_mbe(const AudioClip& clip, const FeatureOptions& opt = {});
FeatureTensor extract_bin_mbe(const AudioClip& clip, const FeatureOptions& opt = {});
FeatureTensor extract_bin_mul_mbe(const AudioClip& clip, const FeatureOptions& opt = {});
FeatureTensor extract_bin_fft(const AudioClip& clip, const FeatureOptions& opt = {});

/// Dispatches on class. mbe on a stereo clip applies to_mono first.
FeatureTensor extract_features(const AudioClip& clip, FeatureClass fc, const FeatureOptions& opt = {});

/// Per-(bin, channel) standardization statistics.
struct Normalizer {
  std::size_t bins = 0;
  std::size_t channels = 0;
  std::vector<double> mean;
  std::vector<double> std;

  bool empty() const { return mean.empty(); }
};

inline constexpr double kStdFloor = 1e-8;

Normalizer fit_normalizer(const std::vector<const FeatureTensor*>& train);
Normalizer fit_normalizer(const std::vector<FeatureTensor>& train);
FeatureTensor apply_normalizer(const Normalizer& norm, const FeatureTensor& tensor);

/// One fixed-length training sequence.
struct Sequence {
  std::vector<double> input;        // T x bins x channels
  std::vector<std::uint8_t> target;  // T x classes
  std::vector<std::uint8_t> mask;    // T; 1 = real frame, 0 = padding
  std::size_t valid_frames() const;
};

struct SequenceBatch {
  std::size_t seq_len = 256;
  std::size_t bins = 0;
  std::size_t channels = 0;
  std::size_t n_classes = 0;
  std::vector<Sequence> sequences;

  std::size_t size() const { return sequences.size(); }
  void append(const SequenceBatch& other);
};

/// Non-overlapping windows of T frames; the tail window is zero-padded with
/// its padded frames masked out. Throws ShapeError when frame counts differ.
SequenceBatch chunk_sequences(const FeatureTensor& tensor, const EventRoll& roll, std::size_t seq_len);

/// Inverse of chunk_sequences for the features (valid frames only).
FeatureTensor reassemble_features(const SequenceBatch& batch, FeatureClass fc, double hop_seconds);

/// Per-frame context stacking: frame f becomes frames f-c/2 .. f+c/2 (edges
/// replicated), giving a frames x (bins*context) x 1 tensor. Requires a
/// single-channel input.
FeatureTensor stack_context(const FeatureTensor& tensor, std::size_t context);

// Feature archive ("SEDF"): magic, u32 version, u32 class, u32 F, u32 B,
// u32 Ch, f64 hop, then F*B*Ch float32, all little-endian, frame-major.
inline constexpr std::uint32_t kFeatureArchiveVersion = 1;

void write_feature_archive(const std::filesystem::path& path, const FeatureTensor& tensor);
FeatureTensor read_feature_archive(const std::filesystem::path& path);

struct FeatureArchiveHeader {
  FeatureClass feature_class;
  std::uint32_t frames, bins, channels;
  double hop_seconds;
};
FeatureArchiveHeader read_feature_archive_header(const std::filesystem::path& path);

}  // namespace sed
