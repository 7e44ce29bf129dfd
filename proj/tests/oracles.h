#pragma once

// Reference implementations used only by the tests. Each one is written
// from the defining formula and shares no code with the library.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sedpipe/audio_io.h"

namespace oracle {

// O(N^2) DFT with long double accumulation.
inline std::vector<std::complex<double>> direct_dft(const std::vector<std::complex<double>>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  const long double two_pi = 6.283185307179586476925286766559L;
  for (std::size_t k = 0; k < n; ++k) {
    long double re = 0.0L, im = 0.0L;
    for (std::size_t j = 0; j < n; ++j) {
      const long double a = -two_pi * static_cast<long double>((j * k) % n) / static_cast<long double>(n);
      const long double c = std::cos(a), s = std::sin(a);
      re += x[j].real() * c - x[j].imag() * s;
      im += x[j].real() * s + x[j].imag() * c;
    }
    out[k] = {static_cast<double>(re), static_cast<double>(im)};
  }
  return out;
}

inline bool overlaps(double a0, double a1, double b0, double b1, double tol = 1e-9) {
  return std::min(a1, b1) - std::max(a0, b0) > tol;
}

// Frame f of class c is active iff an event of class c overlaps the frame's
// time span.
inline std::vector<std::uint8_t> rasterize(const sed::EventList& events, std::size_t frames, double hop,
                                           const std::vector<std::string>& classes) {
  std::vector<std::uint8_t> out(frames * classes.size(), 0);
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t c = 0; c < classes.size(); ++c) {
      for (const auto& e : events) {
        if (e.label == classes[c] && overlaps(e.onset, e.offset, f * hop, (f + 1) * hop)) out[f * classes.size() + c] = 1;
      }
    }
  }
  return out;
}

struct Counts {
  long long tp = 0, fp = 0, fn = 0, n = 0, s = 0, d = 0, i = 0;
};

struct Score {
  std::vector<Counts> per_segment;
  Counts total;
  double er = 0.0;
  double f = 0.0;
};

// Segment-based scoring straight from the definitions: a class is active in
// segment k if any frame overlapping [k L, (k+1) L) is active; per segment
// S = min(FN, FP), D = max(0, FN - FP), I = max(0, FP - FN); ER and F from
// the summed counts.
inline Score brute_force_score(const sed::EventRoll& ref, const sed::EventRoll& pred, double seg_len) {
  const double hop = ref.hop_seconds();
  const std::size_t frames = ref.n_frames();
  const std::size_t classes = ref.n_classes();
  const double total_time = frames * hop;
  std::size_t segments = 0;
  while (segments * seg_len < total_time - 1e-9) ++segments;

  Score score;
  for (std::size_t k = 0; k < segments; ++k) {
    Counts c;
    for (std::size_t cls = 0; cls < classes; ++cls) {
      bool r = false, p = false;
      for (std::size_t f = 0; f < frames; ++f) {
        if (!overlaps(f * hop, (f + 1) * hop, k * seg_len, (k + 1) * seg_len)) continue;
        r = r || ref.at(f, cls);
        p = p || pred.at(f, cls);
      }
      if (r && p) ++c.tp;
      if (!r && p) ++c.fp;
      if (r && !p) ++c.fn;
      if (r) ++c.n;
    }
    c.s = std::min(c.fn, c.fp);
    c.d = std::max(0LL, c.fn - c.fp);
    c.i = std::max(0LL, c.fp - c.fn);
    score.per_segment.push_back(c);
    score.total.tp += c.tp;
    score.total.fp += c.fp;
    score.total.fn += c.fn;
    score.total.n += c.n;
    score.total.s += c.s;
    score.total.d += c.d;
    score.total.i += c.i;
  }
  const auto& t = score.total;
  score.er = t.n ? static_cast<double>(t.s + t.d + t.i) / static_cast<double>(t.n) : NAN;
  const long long denom = 2 * t.tp + t.fp + t.fn;
  score.f = denom ? 2.0 * t.tp / static_cast<double>(denom) : 1.0;
  return score;
}

struct GradCheck {
  double max_rel = 0.0;
  double max_abs = 0.0;
  std::size_t checked = 0;
};

// Central finite differences of `loss` with respect to every `stride`-th
// entry of `x`, compared with `analytic`. Relative error per entry is
// |a - n| / max(|a|, |n|, floor).
inline GradCheck check_gradient(std::vector<double>& x, const std::vector<double>& analytic,
                                const std::function<double()>& loss, double h = 1e-5, double floor = 1e-6,
                                std::size_t stride = 1) {
  GradCheck out;
  for (std::size_t i = 0; i < x.size(); i += stride) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = loss();
    x[i] = keep - h;
    const double down = loss();
    x[i] = keep;
    const double numeric = (up - down) / (2.0 * h);
    const double diff = std::abs(numeric - analytic[i]);
    const double scale = std::max({std::abs(numeric), std::abs(analytic[i]), floor});
    out.max_abs = std::max(out.max_abs, diff);
    out.max_rel = std::max(out.max_rel, diff / scale);
    ++out.checked;
  }
  return out;
}

inline double mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// One log-mel frame composed by hand: Hamming window, zero padding, direct
// DFT, power, triangular HTK filters, natural log with floor.
inline std::vector<double> hand_mel_frame(const std::vector<double>& x, std::size_t frame, std::size_t win,
                                   std::size_t hop, std::size_t nfft, double rate, std::size_t n_mels) {
  std::vector<std::complex<double>> buf(nfft);
  const long start = static_cast<long>(frame * hop) - static_cast<long>(win / 2);
  for (std::size_t k = 0; k < win; ++k) {
    const long idx = start + static_cast<long>(k);
    const double w = 0.54 - 0.46 * std::cos(2.0 * M_PI * k / (win - 1));
    if (idx >= 0 && idx < static_cast<long>(x.size())) buf[k] = x[idx] * w;
  }
  const auto X = direct_dft(buf);
  const double top = mel(rate / 2.0);
  std::vector<double> out(n_mels);
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double l = hz(top * m / (n_mels + 1)), c = hz(top * (m + 1) / (n_mels + 1)),
                 r = hz(top * (m + 2) / (n_mels + 1));
    double e = 0.0;
    for (std::size_t k = 0; k <= nfft / 2; ++k) {
      const double f = rate * k / nfft;
      double w = 0.0;
      if (f > l && f <= c) w = (f - l) / (c - l);
      if (f > c && f < r) w = (r - f) / (r - c);
      e += w * std::norm(X[k]);
    }
    out[m] = std::log(std::max(e, 1e-10));
  }
  return out;
}

}  // namespace oracle
