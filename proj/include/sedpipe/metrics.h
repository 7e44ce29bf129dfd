#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sedpipe/audio_io.h"

namespace sed {

/// Segment-level binary activity (segments x classes), frame-major like EventRoll.
struct SegmentRoll {
  std::size_t n_segments = 0;
  std::size_t n_classes = 0;
  std::vector<std::uint8_t> activity;

  std::uint8_t at(std::size_t k, std::size_t c) const { return activity[k * n_classes + c]; }
  std::span<const std::uint8_t> row(std::size_t k) const {
    return {activity.data() + k * n_classes, n_classes};
  }
};

/// Counts for one segment. S, D and I pair misses with false alarms.
struct SegmentCount {
  std::int64_t tp = 0, fp = 0, fn = 0, n = 0;
  std::int64_t s = 0, d = 0, i = 0;

  SegmentCount& operator+=(const SegmentCount& o);
  bool operator==(const SegmentCount&) const = default;
};

struct SegmentCounts {
  std::vector<SegmentCount> segments;

  std::size_t size() const { return segments.size(); }
  SegmentCount totals() const;
  void append(const SegmentCounts& other);
};

struct FScore {
  double value = 0.0;
  // Set when reference and prediction are both empty everywhere; value is 1.
  bool degenerate = false;
};

struct MetricReport {
  double error_rate = 0.0;
  double f_score = 0.0;
  bool f_degenerate = false;
  SegmentCount totals;
  std::size_t n_segments = 0;
  SegmentCounts per_segment;
};

/// Class active in segment k iff active in any frame of it. The hop must tile
/// the segment length; a trailing partial segment is kept.
SegmentRoll roll_to_segments(const EventRoll& roll, double segment_seconds = 1.0);

SegmentCount count_segment(std::span<const std::uint8_t> ref, std::span<const std::uint8_t> pred);

SegmentCounts count_segments(const SegmentRoll& ref, const SegmentRoll& pred);

/// 2 sum TP / (2 sum TP + sum FP + sum FN), pooled over all segments.
FScore f_score(const SegmentCounts& counts);
FScore f_score(const SegmentCount& totals);

/// (sum S + sum D + sum I) / sum N. Throws UndefinedReferenceError when the
/// reference has no active labels at all.
double error_rate(const SegmentCounts& counts);
double error_rate(const SegmentCount& totals);

/// Builds a report from pooled counts (ER/F computed once from the sums).
MetricReport make_report(SegmentCounts counts);

MetricReport evaluate(const EventRoll& ref, const EventRoll& pred, double segment_seconds = 1.0);

/// Segments of every (ref, pred) pair are pooled before ER and F are formed.
MetricReport evaluate_pooled(const std::vector<std::pair<EventRoll, EventRoll>>& pairs,
                             double segment_seconds = 1.0);

/// Text helpers for the eval command.
void write_metric_tsv(const std::filesystem::path& path, const MetricReport& report);
void write_segment_tsv(const std::filesystem::path& path, const MetricReport& report);

}  // namespace sed
