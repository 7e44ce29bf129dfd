#include <doctest.h>

#include <cmath>

#include "oracles.h"
#include "sedpipe/dsp.h"
#include "sedpipe/errors.h"
#include "sedpipe/rng.h"

using namespace sed;
using dsp::Complex;

namespace {

std::vector<Complex> random_signal(Rng& rng, std::size_t n) {
  std::vector<Complex> x(n);
  for (auto& v : x) v = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
  return x;
}

double max_abs(const std::vector<Complex>& v) {
  double m = 0.0;
  for (const auto& c : v) m = std::max(m, std::abs(c));
  return m;
}

}  // namespace

TEST_CASE("hamming window values") {
  const auto w = dsp::hamming_window(5);
  CHECK(w[0] == doctest::Approx(0.08));
  CHECK(w[2] == doctest::Approx(1.0));
  CHECK(w[4] == doctest::Approx(0.08));
  CHECK(w[1] == doctest::Approx(0.54));
  CHECK(dsp::hamming_window(1) == std::vector<double>{0.54});
}

TEST_CASE("power of two helpers") {
  CHECK(dsp::is_power_of_two(1024));
  CHECK_FALSE(dsp::is_power_of_two(1764));
  CHECK_FALSE(dsp::is_power_of_two(0));
  CHECK(dsp::next_power_of_two(1764) == 2048);
  CHECK(dsp::next_power_of_two(1024) == 1024);
}

TEST_CASE("fft agrees with the direct DFT") {
  Rng rng(11);
  for (std::size_t n = 1; n <= 512; n *= 2) {
    const auto x = random_signal(rng, n);
    const auto fast = dsp::fft(x);
    const auto slow = oracle::direct_dft(x);
    std::vector<Complex> diff(n);
    for (std::size_t k = 0; k < n; ++k) diff[k] = fast[k] - slow[k];
    CHECK(max_abs(diff) / max_abs(slow) < 1e-12);
  }
}

TEST_CASE("inverse fft restores the input") {
  Rng rng(12);
  const auto x = random_signal(rng, 256);
  const auto back = dsp::fft(dsp::fft(x), true);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(back[i] - x[i]) < 1e-13);
}

TEST_CASE("fft of an impulse and a pure tone") {
  std::vector<Complex> impulse(16);
  impulse[0] = 1.0;
  for (const auto& v : dsp::fft(impulse)) CHECK(std::abs(v - Complex(1.0)) < 1e-15);

  std::vector<Complex> tone(64);
  for (std::size_t i = 0; i < 64; ++i) tone[i] = std::cos(2.0 * M_PI * 5.0 * i / 64.0);
  const auto X = dsp::fft(tone);
  CHECK(std::abs(X[5]) == doctest::Approx(32.0));
  CHECK(std::abs(X[59]) == doctest::Approx(32.0));
  CHECK(std::abs(X[6]) < 1e-12);
}

TEST_CASE("fft rejects non power-of-two lengths") {
  std::vector<Complex> x(12);
  CHECK_THROWS_AS(dsp::fft_inplace(x), SizeError);
}

TEST_CASE("stft frames are centered and counted by hop") {
  CHECK(dsp::stft_frame_count(441000, 882) == 500);
  CHECK(dsp::stft_frame_count(441001, 882) == 501);
  CHECK(dsp::stft_frame_count(0, 882) == 0);

  // A single unit sample at n = 20: frame f sees it at window offset
  // 20 - (f*hop - win/2) when that lies inside the window.
  std::vector<double> s(64, 0.0);
  s[20] = 1.0;
  const std::size_t win = 8, hop = 4;
  const auto frames = dsp::stft(s, win, 16, hop);
  REQUIRE(frames.size() == 16);
  const auto w = dsp::hamming_window(win);
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const long offset = 20 - (static_cast<long>(f * hop) - static_cast<long>(win / 2));
    const double expected = offset >= 0 && offset < static_cast<long>(win) ? w[offset] : 0.0;
    CHECK(std::abs(frames[f][0]) == doctest::Approx(expected));
  }
  CHECK_THROWS_AS(dsp::stft(s, 8, 12, 4), SizeError);
  CHECK_THROWS_AS(dsp::stft(s, 32, 16, 4), SizeError);
}

TEST_CASE("mel scale conversions") {
  CHECK(dsp::hz_to_mel(0.0) == 0.0);
  CHECK(dsp::hz_to_mel(700.0) == doctest::Approx(2595.0 * std::log10(2.0)));
  CHECK(dsp::hz_to_mel(1000.0) == doctest::Approx(1000.0).epsilon(1e-3));
  for (double hz : {10.0, 440.0, 8000.0, 22050.0}) CHECK(dsp::mel_to_hz(dsp::hz_to_mel(hz)) == doctest::Approx(hz));
}

TEST_CASE("mel filterbank shape and triangle properties") {
  const dsp::MelFilterbank bank(40, 2048, 44100.0, 0.0, 22050.0);
  CHECK(bank.n_mels() == 40);
  CHECK(bank.n_bins() == 1025);
  double prev_centroid = -1.0;
  for (std::size_t m = 0; m < 40; ++m) {
    const auto row = bank.row(m);
    double peak = 0.0, mass = 0.0, centroid = 0.0;
    for (std::size_t k = 0; k < row.size(); ++k) {
      CHECK(row[k] >= 0.0);
      CHECK(row[k] <= 1.0);
      peak = std::max(peak, row[k]);
      mass += row[k];
      centroid += row[k] * k;
    }
    CHECK(peak > 0.5);
    centroid /= mass;
    CHECK(centroid > prev_centroid);
    prev_centroid = centroid;
  }
  // Adjacent triangles overlap: the rising edge of m+1 covers the falling edge of m.
  CHECK(bank.weight(10, 60) + bank.weight(11, 60) > 0.0);
}

TEST_CASE("mel filterbank rejects impossible ranges") {
  CHECK_THROWS_AS(dsp::MelFilterbank(40, 2048, 44100.0, 0.0, 22500.0), RangeError);
  CHECK_THROWS_AS(dsp::MelFilterbank(40, 2048, 44100.0, 5000.0, 1000.0), RangeError);
  CHECK_THROWS_AS(dsp::MelFilterbank(200, 64, 44100.0, 0.0, 22050.0), RangeError);
}

TEST_CASE("log mel energies floor silent frames") {
  const dsp::MelFilterbank bank(4, 64, 8000.0, 0.0, 4000.0);
  const std::vector<std::vector<double>> power{std::vector<double>(33, 0.0), std::vector<double>(33, 1.0)};
  const auto out = dsp::log_mel_energies(power, bank);
  for (double v : out[0]) CHECK(v == doctest::Approx(std::log(1e-10)));
  for (std::size_t m = 0; m < 4; ++m) {
    double sum = 0.0;
    for (std::size_t k = 0; k < 33; ++k) sum += bank.weight(m, k);
    CHECK(out[1][m] == doctest::Approx(std::log(sum)));
  }
}
