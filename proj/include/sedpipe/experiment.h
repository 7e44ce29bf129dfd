#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sedpipe/config.h"
#include "sedpipe/features.h"
#include "sedpipe/metrics.h"
#include "sedpipe/nn/model.h"
#include "sedpipe/nn/train.h"

namespace sed {

/// Raw (unnormalized) features and reference rolls for every clip named in
/// a manifest, loaded once and shared by all folds and runs.
struct Dataset {
  DatasetManifest manifest;
  std::vector<std::string> class_names;
  std::vector<std::string> clip_ids;  // audio paths as written in the manifest
  std::vector<FeatureTensor> features;
  std::vector<EventRoll> rolls;

  std::size_t index_of(const std::string& clip_id) const;
};

/// Archive path used for a clip inside a feature directory.
std::filesystem::path feature_archive_path(const std::filesystem::path& feature_dir,
                                           const std::string& audio_path, FeatureClass fc);

/// Reads the manifest and annotations, taking features from SEDF archives in
/// data.feature_dir when present and extracting from audio otherwise.
Dataset load_dataset(const ExperimentConfig& cfg);

/// Normalized network inputs of one fold. Throws ManifestError when a split
/// role has no clips or a test clip also appears in train.
struct FoldData {
  Normalizer normalizer;
  std::vector<nn::ClipData> train, validation, test;
};
FoldData prepare_fold(const ExperimentConfig& cfg, const Dataset& data, int fold);

/// Baseline frame-wise MLP plus its input adapter (context stacking).
struct BaselineMlp {
  nn::ModelGraph model;
  std::size_t context = 5;

  FeatureTensor adapt(const FeatureTensor& normalized_mbe) const;
};
/// Requires single-channel mbe input of `n_mels` bands; throws ConfigError
/// otherwise.
BaselineMlp baseline_mlp(std::size_t n_classes, std::uint64_t seed, FeatureClass fc = FeatureClass::mbe,
                         std::size_t n_mels = 40, const ModelConfig& mc = {});

/// Network spec for the configured architecture and input shape; pool
/// factors default to default_pool_factors(bins, conv layers).
nn::ModelSpec model_spec_for(const ExperimentConfig& cfg, std::size_t bins, std::size_t channels,
                             std::size_t n_classes);

/// Per-run seed derived from the master training seed.
std::uint64_t run_seed(const ExperimentConfig& cfg, std::size_t run);

struct RunResult {
  int fold = 0;
  std::size_t run = 0;
  MetricReport report;  // best snapshot on the fold's test split
  nn::TrainHistory history;
};

/// Trains one model on `fold` and scores it on the test split at the
/// configured threshold. With a non-empty `out_dir` the checkpoint, history
/// and metrics are written there.
RunResult run_fold(const ExperimentConfig& cfg, const Dataset& data, int fold, std::size_t run = 0,
                   const std::filesystem::path& out_dir = {});

/// Mean and population standard deviation of ER and F over runs x folds, or
/// one report from pooled counts when `aggregation == pooled`.
struct AggregateReport {
  Aggregation mode = Aggregation::mean;
  std::size_t n = 0;
  double er_mean = 0.0, er_std = 0.0;
  double f_mean = 0.0, f_std = 0.0;
  SegmentCount totals;
};
AggregateReport aggregate(const std::vector<MetricReport>& reports, Aggregation mode = Aggregation::mean);

struct CrossValResult {
  AggregateReport summary;
  std::vector<RunResult> runs;  // run-major, then fold order
};

/// Runs every configured fold n_runs times. Results are ordered by (run,
/// fold) whatever `jobs` is. Failures are rethrown naming the fold and run.
/// With a non-empty `out_dir` results go to out_dir/fold<k>/run<r>/ plus
/// out_dir/summary.tsv.
CrossValResult cross_validate(const ExperimentConfig& cfg, const Dataset& data,
                              const std::filesystem::path& out_dir = {});

void write_summary_tsv(const std::filesystem::path& path, const AggregateReport& summary);

/// Space with invalid options removed (zero layers/units, dropout outside
/// [0, 1), conv depths whose pooling cannot reach bins/2). Throws ConfigError
/// when a dimension ends up empty.
SearchSpace validated_space(const SearchSpace& space, std::size_t bins);

/// One uniform draw from each dimension of a validated space.
ModelConfig sample_model(const SearchSpace& space, const ModelConfig& base, Rng& rng);

struct Trial {
  std::size_t index = 0;
  ModelConfig model;
  AggregateReport summary;
};

/// Samples `search.trials` configurations, cross-validates each with the
/// epoch budget truncated to `search.epochs`, and returns them ranked by
/// ascending mean ER (ties by trial index). With a non-empty `out_dir`,
/// trial_XX/ directories and ranking.tsv are written.
std::vector<Trial> random_search(const ExperimentConfig& cfg, const Dataset& data,
                                 const std::filesystem::path& out_dir = {});

std::string describe(const ModelConfig& mc);

}  // namespace sed
