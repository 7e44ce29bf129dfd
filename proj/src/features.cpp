#include "sedpipe/features.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>

#include "binary_io.h"
#include "sedpipe/dsp.h"
#include "sedpipe/errors.h"
#include "sedpipe/log.h"

namespace sed {

std::string to_string(FeatureClass fc) {
  switch (fc) {
    case FeatureClass::mbe:
      return "mbe";
    case FeatureClass::bin_mbe:
      return "bin-mbe";
    case FeatureClass::bin_mul_mbe:
      return "bin-mul-mbe";
    case FeatureClass::bin_fft:
      return "bin-fft";
  }
  return "mbe";
}

FeatureClass parse_feature_class(const std::string& s) {
  if (s == "mbe") return FeatureClass::mbe;
  if (s == "bin-mbe") return FeatureClass::bin_mbe;
  if (s == "bin-mul-mbe") return FeatureClass::bin_mul_mbe;
  if (s == "bin-fft") return FeatureClass::bin_fft;
  throw UsageError("unknown feature class '" + s + "' (expected mbe, bin-mbe, bin-mul-mbe, bin-fft)");
}

bool is_binaural(FeatureClass fc) { return fc != FeatureClass::mbe; }

std::size_t window_samples(const FeatureOptions& opt, int sample_rate) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(opt.window_seconds * sample_rate)));
}

std::size_t hop_samples(const FeatureOptions& opt, int sample_rate) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(opt.hop_seconds * sample_rate)));
}

double effective_f_max(const FeatureOptions& opt, int sample_rate) {
  const double nyquist = sample_rate / 2.0;
  if (opt.f_max <= 0.0) return nyquist;
  if (opt.f_max > nyquist) {
    static std::atomic<bool> warned{false};
    if (!warned.exchange(true)) {
      log::warn("requested f_max " + std::to_string(opt.f_max) + " Hz exceeds Nyquist; clamped to " +
                std::to_string(nyquist) + " Hz");
    }
    return nyquist;
  }
  return opt.f_max;
}

std::vector<std::vector<double>> channel_log_mel(const std::vector<double>& samples, int sample_rate,
                                                 std::size_t window_len, std::size_t fft_size,
                                                 const FeatureOptions& opt) {
  const dsp::MelFilterbank bank(opt.n_mels, fft_size, sample_rate, opt.f_min,
                                effective_f_max(opt, sample_rate));
  const auto spectra = dsp::stft(samples, window_len, fft_size, hop_samples(opt, sample_rate));
  return dsp::log_mel_energies(dsp::power_spectra(spectra), bank);
}

namespace {

void require_channels(const AudioClip& clip, std::size_t n, const char* what) {
  if (clip.n_channels() != n) {
    throw ChannelError(std::string(what) + " expects " + (n == 1 ? "a mono" : "a stereo") +
                       " clip, got " + std::to_string(clip.n_channels()) + " channels");
  }
}

void put_channel(FeatureTensor& out, std::size_t channel, const std::vector<std::vector<double>>& m) {
  for (std::size_t f = 0; f < m.size(); ++f) {
    for (std::size_t b = 0; b < m[f].size(); ++b) out.at(f, b, channel) = m[f][b];
  }
}

}  // namespace

FeatureTensor extract_mbe(const AudioClip& clip, const FeatureOptions& opt) {
  require_channels(clip, 1, "mbe");
  const std::size_t win = window_samples(opt, clip.sample_rate);
  const auto m = channel_log_mel(clip.channels[0], clip.sample_rate, win, dsp::next_power_of_two(win), opt);
  FeatureTensor out(FeatureClass::mbe, m.size(), opt.n_mels, 1, opt.hop_seconds);
  put_channel(out, 0, m);
  return out;
}

FeatureTensor extract_bin_mbe(const AudioClip& clip, const FeatureOptions& opt) {
  require_channels(clip, 2, "bin-mbe");
  const std::size_t win = window_samples(opt, clip.sample_rate);
  const std::size_t nfft = dsp::next_power_of_two(win);
  const std::size_t frames = dsp::stft_frame_count(clip.n_samples(), hop_samples(opt, clip.sample_rate));
  FeatureTensor out(FeatureClass::bin_mbe, frames, opt.n_mels, 2, opt.hop_seconds);
  for (std::size_t c = 0; c < 2; ++c) {
    put_channel(out, c, channel_log_mel(clip.channels[c], clip.sample_rate, win, nfft, opt));
  }
  return out;
}

FeatureTensor extract_bin_mul_mbe(const AudioClip& clip, const FeatureOptions& opt) {
  require_channels(clip, 2, "bin-mul-mbe");
  const std::size_t frames = dsp::stft_frame_count(clip.n_samples(), hop_samples(opt, clip.sample_rate));
  const std::size_t n_res = opt.multi_res_windows.size();
  FeatureTensor out(FeatureClass::bin_mul_mbe, frames, opt.n_mels, 2 * n_res, opt.hop_seconds);
  for (std::size_t r = 0; r < n_res; ++r) {
    const std::size_t win = opt.multi_res_windows[r];
    if (!dsp::is_power_of_two(win)) {
      throw ConfigError("multi-resolution window " + std::to_string(win) + " is not a power of two");
    }
    for (std::size_t c = 0; c < 2; ++c) {
      put_channel(out, 2 * r + c, channel_log_mel(clip.channels[c], clip.sample_rate, win, win, opt));
    }
  }
  return out;
}

FeatureTensor extract_bin_fft(const AudioClip& clip, const FeatureOptions& opt) {
  require_channels(clip, 2, "bin-fft");
  const std::size_t win = window_samples(opt, clip.sample_rate);
  const std::size_t nfft = dsp::next_power_of_two(win);
  const std::size_t hop = hop_samples(opt, clip.sample_rate);
  const std::size_t n_bins = nfft / 2;
  const std::size_t frames = dsp::stft_frame_count(clip.n_samples(), hop);
  FeatureTensor out(FeatureClass::bin_fft, frames, n_bins, 4, opt.hop_seconds);
  for (std::size_t c = 0; c < 2; ++c) {
    const auto spectra = dsp::stft(clip.channels[c], win, nfft, hop);
    for (std::size_t f = 0; f < frames; ++f) {
      // DC dropped: bins 1..nfft/2 kept.
      for (std::size_t b = 0; b < n_bins; ++b) {
        const dsp::Complex x = spectra[f][b + 1];
        double mag = std::abs(x);
        if (opt.log_magnitude) mag = std::log(std::max(mag, dsp::kLogFloor));
        double phase = std::arg(x);
        if (phase <= -M_PI) phase = M_PI;
        out.at(f, b, c) = mag;
        out.at(f, b, 2 + c) = phase;
      }
    }
  }
  return out;
}

FeatureTensor extract_features(const AudioClip& clip, FeatureClass fc, const FeatureOptions& opt) {
  switch (fc) {
    case FeatureClass::mbe:
      if (clip.n_channels() == 2) {
        log::debug("mbe: averaging stereo channels to mono");
        return extract_mbe(to_mono(clip), opt);
      }
      return extract_mbe(clip, opt);
    case FeatureClass::bin_mbe:
      return extract_bin_mbe(clip, opt);
    case FeatureClass::bin_mul_mbe:
      return extract_bin_mul_mbe(clip, opt);
    case FeatureClass::bin_fft:
      return extract_bin_fft(clip, opt);
  }
  throw UsageError("unknown feature class");
}

Normalizer fit_normalizer(const std::vector<const FeatureTensor*>& train) {
  if (train.empty()) throw StateError("fit_normalizer: empty training set");
  Normalizer n;
  n.bins = train[0]->bins;
  n.channels = train[0]->channels;
  const std::size_t width = n.bins * n.channels;
  n.mean.assign(width, 0.0);
  n.std.assign(width, 0.0);
  std::size_t count = 0;
  for (const auto* t : train) {
    if (t->bins != n.bins || t->channels != n.channels) {
      throw ShapeError("fit_normalizer: tensors differ in bins/channels");
    }
    for (std::size_t f = 0; f < t->frames; ++f) {
      const double* row = t->data.data() + f * width;
      for (std::size_t j = 0; j < width; ++j) n.mean[j] += row[j];
    }
    count += t->frames;
  }
  if (count == 0) throw StateError("fit_normalizer: training tensors have no frames");
  for (auto& m : n.mean) m /= static_cast<double>(count);
  // Two-pass variance.
  for (const auto* t : train) {
    for (std::size_t f = 0; f < t->frames; ++f) {
      const double* row = t->data.data() + f * width;
      for (std::size_t j = 0; j < width; ++j) {
        const double d = row[j] - n.mean[j];
        n.std[j] += d * d;
      }
    }
  }
  for (auto& s : n.std) s = std::max(std::sqrt(s / static_cast<double>(count)), kStdFloor);
  return n;
}

Normalizer fit_normalizer(const std::vector<FeatureTensor>& train) {
  std::vector<const FeatureTensor*> ptrs;
  for (const auto& t : train) ptrs.push_back(&t);
  return fit_normalizer(ptrs);
}

FeatureTensor apply_normalizer(const Normalizer& norm, const FeatureTensor& tensor) {
  if (norm.empty()) throw StateError("apply_normalizer: normalizer not fitted");
  if (tensor.bins != norm.bins || tensor.channels != norm.channels) {
    throw ShapeError("apply_normalizer: tensor shape does not match normalizer");
  }
  FeatureTensor out = tensor;
  const std::size_t width = norm.bins * norm.channels;
  for (std::size_t f = 0; f < out.frames; ++f) {
    double* row = out.data.data() + f * width;
    for (std::size_t j = 0; j < width; ++j) row[j] = (row[j] - norm.mean[j]) / norm.std[j];
  }
  return out;
}

std::size_t Sequence::valid_frames() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1));
}

void SequenceBatch::append(const SequenceBatch& other) {
  if (sequences.empty() && bins == 0) {
    *this = other;
    return;
  }
  if (other.sequences.empty()) return;
  if (other.seq_len != seq_len || other.bins != bins || other.channels != channels ||
      other.n_classes != n_classes) {
    throw ShapeError("SequenceBatch::append: incompatible batches");
  }
  sequences.insert(sequences.end(), other.sequences.begin(), other.sequences.end());
}

SequenceBatch chunk_sequences(const FeatureTensor& tensor, const EventRoll& roll, std::size_t seq_len) {
  if (seq_len == 0) throw RangeError("sequence length must be >= 1");
  if (tensor.frames != roll.n_frames()) {
    throw ShapeError("chunk_sequences: tensor has " + std::to_string(tensor.frames) +
                     " frames, roll has " + std::to_string(roll.n_frames()));
  }
  SequenceBatch batch;
  batch.seq_len = seq_len;
  batch.bins = tensor.bins;
  batch.channels = tensor.channels;
  batch.n_classes = roll.n_classes();
  const std::size_t width = tensor.bins * tensor.channels;
  const std::size_t n_cls = roll.n_classes();
  for (std::size_t start = 0; start < tensor.frames; start += seq_len) {
    const std::size_t valid = std::min(seq_len, tensor.frames - start);
    Sequence s;
    s.input.assign(seq_len * width, 0.0);
    s.target.assign(seq_len * n_cls, 0);
    s.mask.assign(seq_len, 0);
    std::copy_n(tensor.data.begin() + static_cast<long>(start * width), valid * width, s.input.begin());
    std::copy_n(roll.data().begin() + static_cast<long>(start * n_cls), valid * n_cls, s.target.begin());
    std::fill_n(s.mask.begin(), valid, 1);
    batch.sequences.push_back(std::move(s));
  }
  return batch;
}

FeatureTensor reassemble_features(const SequenceBatch& batch, FeatureClass fc, double hop_seconds) {
  const std::size_t width = batch.bins * batch.channels;
  std::size_t frames = 0;
  for (const auto& s : batch.sequences) frames += s.valid_frames();
  FeatureTensor out(fc, frames, batch.bins, batch.channels, hop_seconds);
  std::size_t f = 0;
  for (const auto& s : batch.sequences) {
    for (std::size_t t = 0; t < batch.seq_len; ++t) {
      if (!s.mask[t]) continue;
      std::copy_n(s.input.begin() + static_cast<long>(t * width), width,
                  out.data.begin() + static_cast<long>(f * width));
      ++f;
    }
  }
  return out;
}

FeatureTensor stack_context(const FeatureTensor& tensor, std::size_t context) {
  if (tensor.channels != 1) throw ChannelError("context stacking needs a single-channel tensor");
  if (context == 0 || context % 2 == 0) throw ConfigError("context window must be odd");
  const long half = static_cast<long>(context / 2);
  FeatureTensor out(tensor.feature_class, tensor.frames, tensor.bins * context, 1, tensor.hop_seconds);
  const long last = static_cast<long>(tensor.frames) - 1;
  for (std::size_t f = 0; f < tensor.frames; ++f) {
    for (long k = -half; k <= half; ++k) {
      const auto src = static_cast<std::size_t>(std::clamp(static_cast<long>(f) + k, 0L, last));
      const std::size_t slot = static_cast<std::size_t>(k + half);
      for (std::size_t b = 0; b < tensor.bins; ++b) {
        out.at(f, slot * tensor.bins + b, 0) = tensor.at(src, b, 0);
      }
    }
  }
  return out;
}

void write_feature_archive(const std::filesystem::path& path, const FeatureTensor& tensor) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write("SEDF", 4);
  binio::put<std::uint32_t>(out, kFeatureArchiveVersion);
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.feature_class));
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.frames));
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.bins));
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.channels));
  binio::put<double>(out, tensor.hop_seconds);
  for (double v : tensor.data) binio::put<float>(out, static_cast<float>(v));
  if (!out) throw IoError("write failed: " + path.string());
}

namespace {

FeatureArchiveHeader read_header(std::istream& in, const std::string& name) {
  binio::expect_magic(in, "SEDF", name);
  const auto version = binio::get<std::uint32_t>(in);
  if (version != kFeatureArchiveVersion) {
    throw UnsupportedError(name + ": feature archive version " + std::to_string(version));
  }
  FeatureArchiveHeader h{};
  const auto cls = binio::get<std::uint32_t>(in);
  if (cls > 3) throw FormatError(name + ": unknown feature class id");
  h.feature_class = static_cast<FeatureClass>(cls);
  h.frames = binio::get<std::uint32_t>(in);
  h.bins = binio::get<std::uint32_t>(in);
  h.channels = binio::get<std::uint32_t>(in);
  h.hop_seconds = binio::get<double>(in);
  return h;
}

}  // namespace

FeatureArchiveHeader read_feature_archive_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_header(in, path.string());
}

FeatureTensor read_feature_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const auto h = read_header(in, path.string());
  FeatureTensor t(h.feature_class, h.frames, h.bins, h.channels, h.hop_seconds);
  for (auto& v : t.data) v = binio::get<float>(in);
  return t;
}

}  // namespace sed
