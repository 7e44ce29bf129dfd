#include <doctest.h>

#include "oracles.h"
#include "sedpipe/errors.h"
#include "sedpipe/metrics.h"
#include "sedpipe/rng.h"
#include "test_util.h"

using namespace sed;

namespace {

EventRoll random_roll(Rng& rng, std::size_t frames, double hop, const std::vector<std::string>& names,
                      double density) {
  EventRoll r(frames, names, hop);
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t c = 0; c < names.size(); ++c) r.set(f, c, rng.bernoulli(density));
  }
  return r;
}

EventRoll roll_from(const std::vector<std::vector<int>>& rows, double hop) {
  std::vector<std::string> names;
  for (std::size_t c = 0; c < rows[0].size(); ++c) names.push_back("c" + std::to_string(c));
  EventRoll r(rows.size(), names, hop);
  for (std::size_t f = 0; f < rows.size(); ++f) {
    for (std::size_t c = 0; c < rows[f].size(); ++c) r.set(f, c, rows[f][c] != 0);
  }
  return r;
}

}  // namespace

TEST_CASE("single-segment counts follow the pairing rules") {
  const std::vector<std::uint8_t> ref{1, 1, 1, 0, 0};
  const std::vector<std::uint8_t> pred{1, 0, 0, 1, 0};
  const auto c = count_segment(ref, pred);
  CHECK(c.tp == 1);
  CHECK(c.fp == 1);
  CHECK(c.fn == 2);
  CHECK(c.n == 3);
  CHECK(c.s == 1);
  CHECK(c.d == 1);
  CHECK(c.i == 0);
}

TEST_CASE("hand-worked two-segment example") {
  // hop 0.5 s, 1 s segments: frames {0,1} -> segment 0, {2,3} -> segment 1.
  const auto ref = roll_from({{1, 0, 0}, {0, 0, 0}, {0, 1, 0}, {0, 1, 0}}, 0.5);
  const auto pred = roll_from({{0, 0, 0}, {1, 0, 1}, {0, 0, 1}, {0, 0, 1}}, 0.5);
  const auto r = evaluate(ref, pred);
  REQUIRE(r.n_segments == 2);
  // Segment 0: ref {0}, pred {0,2}: TP1 FP1 FN0 -> I1. Segment 1: ref {1}, pred {2}: S1.
  CHECK(r.per_segment.segments[0] == SegmentCount{1, 1, 0, 1, 0, 0, 1});
  CHECK(r.per_segment.segments[1] == SegmentCount{0, 1, 1, 1, 1, 0, 0});
  CHECK(r.error_rate == doctest::Approx(1.0));
  CHECK(r.f_score == doctest::Approx(2.0 / (2.0 + 2.0 + 1.0)));
}

TEST_CASE("a trailing partial segment is scored") {
  // 2.5 s of frames at 0.5 s hop: segments [0,1), [1,2), [2,2.5).
  const auto ref = roll_from({{0}, {0}, {0}, {0}, {1}}, 0.5);
  const auto pred = roll_from({{0}, {0}, {0}, {0}, {0}}, 0.5);
  const auto r = evaluate(ref, pred);
  CHECK(r.n_segments == 3);
  CHECK(r.totals.d == 1);
  CHECK(r.error_rate == 1.0);
}

TEST_CASE("segment roll takes the any-frame union") {
  const auto roll = roll_from({{0, 1}, {0, 0}, {0, 0}, {1, 0}, {0, 0}}, 0.25);
  const auto seg = roll_to_segments(roll, 1.0);
  REQUIRE(seg.n_segments == 2);
  CHECK(seg.at(0, 0) == 1);
  CHECK(seg.at(0, 1) == 1);
  CHECK(seg.at(1, 0) == 0);
  CHECK_THROWS(roll_to_segments(roll_from({{1}}, 0.3), 1.0));
}

TEST_CASE("perfect prediction gives ER 0 and F 1") {
  Rng rng(3);
  const auto ref = random_roll(rng, 300, 0.02, {"a", "b", "c"}, 0.2);
  const auto r = evaluate(ref, ref);
  CHECK(r.error_rate == 0.0);
  CHECK(r.f_score == 1.0);
  CHECK_FALSE(r.f_degenerate);
}

TEST_CASE("empty reference is flagged, not coerced") {
  const auto empty = roll_from({{0, 0}, {0, 0}}, 0.5);
  CHECK_THROWS_AS(evaluate(empty, empty), UndefinedReferenceError);
  SegmentCount zero;
  const FScore f = f_score(zero);
  CHECK(f.degenerate);
  CHECK(f.value == 1.0);
  CHECK_THROWS_AS(error_rate(zero), UndefinedReferenceError);
}

TEST_CASE("all-silent prediction deletes everything") {
  const auto ref = roll_from({{1, 1}, {1, 0}}, 1.0);
  const auto pred = roll_from({{0, 0}, {0, 0}}, 1.0);
  const auto r = evaluate(ref, pred);
  CHECK(r.error_rate == 1.0);
  CHECK(r.f_score == 0.0);
}

TEST_CASE("ER can exceed one with many insertions") {
  const auto ref = roll_from({{1, 0, 0, 0}}, 1.0);
  const auto pred = roll_from({{1, 1, 1, 1}}, 1.0);
  CHECK(evaluate(ref, pred).error_rate == 3.0);
}

TEST_CASE("evaluate rejects mismatched rolls") {
  const auto a = roll_from({{1, 0}}, 1.0);
  const auto b = roll_from({{1, 0}, {0, 0}}, 1.0);
  CHECK_THROWS_AS(evaluate(a, b), ShapeError);
  EventRoll other(1, {"x", "y"}, 1.0);
  CHECK_THROWS_AS(evaluate(a, other), ClassError);
}

TEST_CASE("evaluate agrees with the brute-force scorer") {
  Rng rng(99);
  const double hops[] = {0.02, 0.1, 0.25, 0.5};
  for (int trial = 0; trial < 100; ++trial) {
    const double hop = hops[rng.below(4)];
    const std::size_t classes = 1 + rng.below(6);
    std::vector<std::string> names;
    for (std::size_t c = 0; c < classes; ++c) names.push_back("k" + std::to_string(c));
    const std::size_t frames = 1 + rng.below(static_cast<std::uint64_t>(20.0 / hop));
    const auto ref = random_roll(rng, frames, hop, names, 0.1);
    const auto pred = random_roll(rng, frames, hop, names, 0.1);
    const auto o = oracle::brute_force_score(ref, pred, 1.0);
    if (o.total.n == 0) continue;
    const auto r = evaluate(ref, pred);
    REQUIRE(r.n_segments == o.per_segment.size());
    CHECK(r.totals.tp == o.total.tp);
    CHECK(r.totals.s == o.total.s);
    CHECK(r.error_rate == o.er);
    CHECK(r.f_score == o.f);
  }
}

TEST_CASE("pooling sums counts before dividing") {
  const auto r1 = roll_from({{1, 0}}, 1.0), p1 = roll_from({{0, 0}}, 1.0);
  const auto r2 = roll_from({{1, 1}, {1, 1}}, 1.0), p2 = roll_from({{1, 1}, {1, 1}}, 1.0);
  const auto pooled = evaluate_pooled({{r1, p1}, {r2, p2}});
  CHECK(pooled.n_segments == 3);
  CHECK(pooled.totals.n == 5);
  CHECK(pooled.error_rate == doctest::Approx(1.0 / 5.0));
  CHECK(pooled.f_score == doctest::Approx(8.0 / 9.0));
}

TEST_CASE("metric and segment TSV output") {
  testutil::TempDir dir("metrics");
  const auto ref = roll_from({{1, 0}, {0, 1}}, 1.0);
  const auto pred = roll_from({{1, 0}, {1, 0}}, 1.0);
  const auto r = evaluate(ref, pred);
  write_metric_tsv(dir / "m.tsv", r);
  write_segment_tsv(dir / "s.tsv", r);
  const auto m = testutil::slurp(dir / "m.tsv");
  CHECK(m.find("error_rate\t0.5\n") != std::string::npos);
  CHECK(m.find("f_score\t0.5\n") != std::string::npos);
  CHECK(testutil::slurp(dir / "s.tsv") == "k\tTP\tFP\tFN\tS\tD\tI\tN\n0\t1\t0\t0\t0\t0\t0\t1\n1\t0\t1\t1\t1\t0\t0\t1\n");
}
