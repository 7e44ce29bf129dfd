#include "sedpipe/dsp.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "sedpipe/errors.h"

namespace sed::dsp {

std::vector<double> hamming_window(std::size_t n) {
  if (n == 0) throw SizeError("hamming window length must be >= 1");
  if (n == 1) return {0.54};
  std::vector<double> w(n);
  const double denom = static_cast<double>(n - 1);
  for (std::size_t k = 0; k < n; ++k) {
    w[k] = 0.54 - 0.46 * std::cos(2.0 * M_PI * static_cast<double>(k) / denom);
  }
  return w;
}

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_power_of_two(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

void fft_inplace(std::vector<Complex>& x, bool inverse) {
  const std::size_t n = x.size();
  if (!is_power_of_two(n)) throw SizeError("fft length " + std::to_string(n) + " is not a power of two");
  if (n == 1) return;

  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }

  // Twiddles evaluated directly (not by repeated multiplication) to keep
  // round-off at the 1e-15 level for long transforms.
  const double sign = inverse ? 1.0 : -1.0;
  std::vector<Complex> twiddle(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k) {
    const double a = sign * 2.0 * M_PI * static_cast<double>(k) / static_cast<double>(n);
    twiddle[k] = {std::cos(a), std::sin(a)};
  }

  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t stride = n / len;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const Complex u = x[i + k];
        const Complex v = x[i + k + half] * twiddle[k * stride];
        x[i + k] = u + v;
        x[i + k + half] = u - v;
      }
    }
  }

  if (inverse) {
    const double scale = 1.0 / static_cast<double>(n);
    for (auto& v : x) v *= scale;
  }
}

std::vector<Complex> fft(std::vector<Complex> x, bool inverse) {
  fft_inplace(x, inverse);
  return x;
}

std::size_t stft_frame_count(std::size_t n_samples, std::size_t hop) {
  return hop == 0 ? 0 : (n_samples + hop - 1) / hop;
}

std::vector<Spectrum> stft(std::span<const double> samples, std::size_t window_len,
                           std::size_t fft_size, std::size_t hop) {
  if (hop == 0) throw RangeError("stft hop must be >= 1");
  if (window_len == 0) throw SizeError("stft window must be >= 1");
  if (!is_power_of_two(fft_size)) throw SizeError("stft fft_size must be a power of two");
  if (fft_size < window_len) throw SizeError("stft fft_size smaller than window");

  const std::size_t n_frames = stft_frame_count(samples.size(), hop);
  const auto window = hamming_window(window_len);
  const auto n = static_cast<long long>(samples.size());
  const long long half = static_cast<long long>(window_len / 2);

  std::vector<Spectrum> out;
  out.reserve(n_frames);
  std::vector<Complex> buf(fft_size);
  for (std::size_t f = 0; f < n_frames; ++f) {
    std::fill(buf.begin(), buf.end(), Complex{});
    const long long start = static_cast<long long>(f * hop) - half;
    for (std::size_t k = 0; k < window_len; ++k) {
      const long long idx = start + static_cast<long long>(k);
      if (idx >= 0 && idx < n) buf[k] = samples[static_cast<std::size_t>(idx)] * window[k];
    }
    fft_inplace(buf);
    out.emplace_back(buf.begin(), buf.begin() + static_cast<long>(fft_size / 2 + 1));
  }
  return out;
}

std::vector<std::vector<double>> power_spectra(const std::vector<Spectrum>& frames) {
  std::vector<std::vector<double>> out;
  out.reserve(frames.size());
  for (const auto& spec : frames) {
    std::vector<double> p(spec.size());
    for (std::size_t k = 0; k < spec.size(); ++k) p[k] = std::norm(spec[k]);
    out.push_back(std::move(p));
  }
  return out;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank::MelFilterbank(std::size_t n_mels, std::size_t fft_size, double sample_rate,
                             double f_min, double f_max)
    : n_mels_(n_mels),
      n_bins_(fft_size / 2 + 1),
      sample_rate_(sample_rate),
      f_min_(f_min),
      f_max_(f_max) {
  if (n_mels == 0) throw RangeError("mel filterbank needs n_mels >= 1");
  if (!is_power_of_two(fft_size)) throw SizeError("mel filterbank fft_size must be a power of two");
  if (!(sample_rate > 0.0)) throw RangeError("sample rate must be positive");
  if (f_min < 0.0 || !(f_min < f_max)) throw RangeError("mel filterbank needs 0 <= f_min < f_max");
  if (f_max > sample_rate / 2.0) {
    throw RangeError("f_max " + std::to_string(f_max) + " Hz exceeds Nyquist " +
                     std::to_string(sample_rate / 2.0) + " Hz");
  }

  const double mel_lo = hz_to_mel(f_min);
  const double mel_hi = hz_to_mel(f_max);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / (n_mels + 1));
  }

  weights_.assign(n_mels * n_bins_, 0.0);
  support_.assign(n_mels, {0, 0});
  const double bin_hz = sample_rate / static_cast<double>(fft_size);
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    std::size_t first = n_bins_, last = 0;
    for (std::size_t k = 0; k < n_bins_; ++k) {
      const double f = bin_hz * static_cast<double>(k);
      double w = 0.0;
      if (f > left && f <= center) {
        w = (f - left) / (center - left);
      } else if (f > center && f < right) {
        w = (right - f) / (right - center);
      }
      if (w > 0.0) {
        weights_[m * n_bins_ + k] = w;
        first = std::min(first, k);
        last = k;
      }
    }
    if (first == n_bins_) {
      throw RangeError("mel filter " + std::to_string(m) + " covers no FFT bin; fft_size " +
                       std::to_string(fft_size) + " too small for " + std::to_string(n_mels) +
                       " bands");
    }
    support_[m] = {first, last + 1};
  }
}

std::vector<std::vector<double>> log_mel_energies(const std::vector<std::vector<double>>& power_frames,
                                                  const MelFilterbank& bank) {
  std::vector<std::vector<double>> out;
  out.reserve(power_frames.size());
  for (const auto& p : power_frames) {
    if (p.size() != bank.n_bins()) {
      throw ShapeError("power spectrum has " + std::to_string(p.size()) + " bins, filterbank expects " +
                       std::to_string(bank.n_bins()));
    }
    std::vector<double> row(bank.n_mels());
    for (std::size_t m = 0; m < bank.n_mels(); ++m) {
      const auto [lo, hi] = bank.support_[m];
      const double* w = bank.weights_.data() + m * bank.n_bins_;
      double e = 0.0;
      for (std::size_t k = lo; k < hi; ++k) e += w[k] * p[k];
      row[m] = std::log(std::max(e, kLogFloor));
    }
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace sed::dsp
