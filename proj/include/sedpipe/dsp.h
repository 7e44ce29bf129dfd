#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace sed::dsp {

using Complex = std::complex<double>;
/// Onesided spectrum of one frame: fft_size/2 + 1 bins.
using Spectrum = std::vector<Complex>;

/// Symmetric Hamming window 0.54 - 0.46 cos(2 pi k / (n - 1)); n == 1 gives {0.54}.
std::vector<double> hamming_window(std::size_t n);

bool is_power_of_two(std::size_t n);
std::size_t next_power_of_two(std::size_t n);

/// In-place iterative radix-2 FFT. The inverse transform is scaled by 1/N.
/// Throws SizeError unless the length is a power of two.
void fft_inplace(std::vector<Complex>& x, bool inverse = false);
std::vector<Complex> fft(std::vector<Complex> x, bool inverse = false);

/// Centered short-time Fourier transform.
///
/// Frame f is the window_len samples starting at f*hop - window_len/2
/// (out-of-range samples read as zero), multiplied by a Hamming window,
/// zero-padded to fft_size and transformed. The frame count is
/// ceil(n_samples / hop) regardless of window_len and fft_size, so analyses
/// at different resolutions stay frame-aligned.
std::vector<Spectrum> stft(std::span<const double> samples, std::size_t window_len,
                           std::size_t fft_size, std::size_t hop);

std::size_t stft_frame_count(std::size_t n_samples, std::size_t hop);

/// |X[k]|^2 per frame.
std::vector<std::vector<double>> power_spectra(const std::vector<Spectrum>& frames);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular filters on the HTK mel scale, dense n_mels x (fft_size/2 + 1).
class MelFilterbank {
 public:
  /// Throws RangeError if f_max exceeds Nyquist, f_min >= f_max, or some
  /// filter covers no FFT bin.
  MelFilterbank(std::size_t n_mels, std::size_t fft_size, double sample_rate, double f_min,
                double f_max);

  std::size_t n_mels() const { return n_mels_; }
  std::size_t n_bins() const { return n_bins_; }
  double f_min() const { return f_min_; }
  double f_max() const { return f_max_; }
  double sample_rate() const { return sample_rate_; }

  double weight(std::size_t mel, std::size_t bin) const { return weights_[mel * n_bins_ + bin]; }
  std::span<const double> row(std::size_t mel) const {
    return {weights_.data() + mel * n_bins_, n_bins_};
  }

 private:
  std::size_t n_mels_;
  std::size_t n_bins_;
  double sample_rate_;
  double f_min_;
  double f_max_;
  std::vector<double> weights_;
  // Nonzero column range per row, for the energy dot products.
  std::vector<std::pair<std::size_t, std::size_t>> support_;

  friend std::vector<std::vector<double>> log_mel_energies(
      const std::vector<std::vector<double>>&, const MelFilterbank&);
};

inline constexpr double kLogFloor = 1e-10;

/// out[f][m] = ln(max(sum_k W[m][k] P[f][k], 1e-10)).
std::vector<std::vector<double>> log_mel_energies(const std::vector<std::vector<double>>& power_frames,
                                                  const MelFilterbank& bank);

}  // namespace sed::dsp
