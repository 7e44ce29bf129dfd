#include "sedpipe/metrics.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "sedpipe/errors.h"

namespace sed {

SegmentCount& SegmentCount::operator+=(const SegmentCount& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  n += o.n;
  s += o.s;
  d += o.d;
  i += o.i;
  return *this;
}

SegmentCount SegmentCounts::totals() const {
  SegmentCount t;
  for (const auto& c : segments) t += c;
  return t;
}

void SegmentCounts::append(const SegmentCounts& other) {
  segments.insert(segments.end(), other.segments.begin(), other.segments.end());
}

SegmentRoll roll_to_segments(const EventRoll& roll, double segment_seconds) {
  if (!(segment_seconds > 0.0) || !(roll.hop_seconds() > 0.0)) {
    throw RangeError("segment and hop lengths must be positive");
  }
  const double ratio = segment_seconds / roll.hop_seconds();
  const double frames = std::round(ratio);
  if (frames < 1.0 || std::abs(ratio - frames) > 1e-6 * std::max(1.0, ratio)) {
    throw RangeError("hop " + std::to_string(roll.hop_seconds()) + " s does not tile segment of " +
                     std::to_string(segment_seconds) + " s");
  }
  const auto per_seg = static_cast<std::size_t>(frames);

  SegmentRoll seg;
  seg.n_classes = roll.n_classes();
  seg.n_segments = (roll.n_frames() + per_seg - 1) / per_seg;
  seg.activity.assign(seg.n_segments * seg.n_classes, 0);
  for (std::size_t f = 0; f < roll.n_frames(); ++f) {
    const std::size_t k = f / per_seg;
    for (std::size_t c = 0; c < seg.n_classes; ++c) {
      if (roll.at(f, c)) seg.activity[k * seg.n_classes + c] = 1;
    }
  }
  return seg;
}

SegmentCount count_segment(std::span<const std::uint8_t> ref, std::span<const std::uint8_t> pred) {
  if (ref.size() != pred.size()) {
    throw ShapeError("segment rows differ in length: " + std::to_string(ref.size()) + " vs " +
                     std::to_string(pred.size()));
  }
  SegmentCount c;
  for (std::size_t j = 0; j < ref.size(); ++j) {
    const bool r = ref[j] != 0;
    const bool p = pred[j] != 0;
    c.tp += (r && p);
    c.fp += (!r && p);
    c.fn += (r && !p);
    c.n += r;
  }
  c.s = std::min(c.fn, c.fp);
  c.d = std::max<std::int64_t>(0, c.fn - c.fp);
  c.i = std::max<std::int64_t>(0, c.fp - c.fn);
  return c;
}

SegmentCounts count_segments(const SegmentRoll& ref, const SegmentRoll& pred) {
  if (ref.n_segments != pred.n_segments || ref.n_classes != pred.n_classes) {
    throw ShapeError("segment rolls differ in shape");
  }
  SegmentCounts counts;
  counts.segments.reserve(ref.n_segments);
  for (std::size_t k = 0; k < ref.n_segments; ++k) {
    counts.segments.push_back(count_segment(ref.row(k), pred.row(k)));
  }
  return counts;
}

FScore f_score(const SegmentCount& t) {
  const std::int64_t denom = 2 * t.tp + t.fp + t.fn;
  if (denom == 0) return {1.0, true};
  return {static_cast<double>(2 * t.tp) / static_cast<double>(denom), false};
}

FScore f_score(const SegmentCounts& counts) { return f_score(counts.totals()); }

double error_rate(const SegmentCount& t) {
  if (t.n == 0) throw UndefinedReferenceError("error rate undefined: reference has no active events");
  return static_cast<double>(t.s + t.d + t.i) / static_cast<double>(t.n);
}

double error_rate(const SegmentCounts& counts) { return error_rate(counts.totals()); }

MetricReport make_report(SegmentCounts counts) {
  MetricReport r;
  r.totals = counts.totals();
  r.n_segments = counts.size();
  const FScore f = f_score(r.totals);
  r.f_score = f.value;
  r.f_degenerate = f.degenerate;
  r.error_rate = error_rate(r.totals);
  r.per_segment = std::move(counts);
  return r;
}

namespace {

void check_compatible(const EventRoll& ref, const EventRoll& pred) {
  if (ref.class_names() != pred.class_names()) {
    throw ClassError("reference and prediction class vocabularies differ");
  }
  if (ref.n_frames() != pred.n_frames()) {
    throw ShapeError("reference has " + std::to_string(ref.n_frames()) + " frames, prediction " +
                     std::to_string(pred.n_frames()));
  }
  if (std::abs(ref.hop_seconds() - pred.hop_seconds()) > 1e-12) {
    throw ShapeError("reference and prediction hops differ");
  }
}

}  // namespace

MetricReport evaluate(const EventRoll& ref, const EventRoll& pred, double segment_seconds) {
  check_compatible(ref, pred);
  return make_report(
      count_segments(roll_to_segments(ref, segment_seconds), roll_to_segments(pred, segment_seconds)));
}

MetricReport evaluate_pooled(const std::vector<std::pair<EventRoll, EventRoll>>& pairs,
                             double segment_seconds) {
  SegmentCounts all;
  for (const auto& [ref, pred] : pairs) {
    check_compatible(ref, pred);
    all.append(count_segments(roll_to_segments(ref, segment_seconds),
                              roll_to_segments(pred, segment_seconds)));
  }
  return make_report(std::move(all));
}

void write_metric_tsv(const std::filesystem::path& path, const MetricReport& r) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  char buf[64];
  auto line = [&](const char* key, double v) {
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    out << key << '\t' << buf << '\n';
  };
  line("error_rate", r.error_rate);
  line("f_score", r.f_score);
  line("segments", static_cast<double>(r.n_segments));
  line("tp", static_cast<double>(r.totals.tp));
  line("fp", static_cast<double>(r.totals.fp));
  line("fn", static_cast<double>(r.totals.fn));
  line("substitutions", static_cast<double>(r.totals.s));
  line("deletions", static_cast<double>(r.totals.d));
  line("insertions", static_cast<double>(r.totals.i));
  line("reference_active", static_cast<double>(r.totals.n));
  if (!out) throw IoError("write failed: " + path.string());
}

void write_segment_tsv(const std::filesystem::path& path, const MetricReport& r) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "k\tTP\tFP\tFN\tS\tD\tI\tN\n";
  for (std::size_t k = 0; k < r.per_segment.size(); ++k) {
    const auto& c = r.per_segment.segments[k];
    out << k << '\t' << c.tp << '\t' << c.fp << '\t' << c.fn << '\t' << c.s << '\t' << c.d << '\t'
        << c.i << '\t' << c.n << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace sed
