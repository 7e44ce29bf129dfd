#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sedpipe/audio_io.h"
#include "sedpipe/features.h"
#include "sedpipe/nn/train.h"

namespace sed {

struct DataConfig {
  std::string name = "experiment";
  std::filesystem::path manifest;     // dataset manifest TSV
  std::filesystem::path feature_dir;  // optional pre-extracted SEDF archives
  std::vector<std::string> classes;   // empty: synthetic vocabulary of synth.class_count
  int folds = 4;                      // synthetic dataset fold count
  SynthSpec synth;
};

struct FeatureConfig {
  FeatureClass feature = FeatureClass::mbe;
  FeatureOptions options;
  std::size_t seq_len = 256;
};

struct ModelConfig {
  enum class Kind { crnn, mlp };
  Kind kind = Kind::crnn;
  std::vector<std::size_t> conv_filters{64, 64, 64};
  std::vector<std::size_t> pool_factors;  // empty: derived from bins and layer count
  std::vector<std::size_t> gru_units{64, 64};
  std::vector<std::size_t> dense_units{64};
  double dropout = 0.5;
  std::vector<std::size_t> mlp_hidden{50, 50};
  std::size_t mlp_context = 5;
  double mlp_dropout = 0.2;
};

enum class Aggregation { mean, pooled };

/// Candidate sets for random search; each trial picks one value per set.
struct SearchSpace {
  std::vector<std::size_t> conv_layers{1, 2, 3};
  std::vector<std::size_t> filters{16, 32, 64};
  std::vector<std::size_t> gru_layers{1, 2};
  std::vector<std::size_t> gru_units{16, 32, 64};
  std::vector<std::size_t> dense_layers{0, 1, 2};
  std::vector<std::size_t> dense_units{16, 32, 64};
  std::vector<double> dropout{0.05, 0.25, 0.5, 0.75};
};

struct SearchConfig {
  SearchSpace space;
  std::size_t trials = 10;
  std::size_t epochs = 20;
  std::uint64_t seed = 1;
};

struct ExperimentConfig {
  DataConfig data;
  FeatureConfig features;
  ModelConfig model;
  nn::TrainConfig train;
  std::vector<int> folds;  // empty: every fold in the manifest
  std::size_t n_runs = 5;
  Aggregation aggregation = Aggregation::mean;
  std::size_t jobs = 1;
  SearchConfig search;

  /// Applies one seed to data synthesis, training and search.
  void set_seed(std::uint64_t seed);
};

/// Parses `key = value` lines grouped under [data], [features], [model],
/// [train] and [search]. '#' starts a comment. Unknown sections or keys and
/// malformed values throw ConfigError naming the offender. Relative paths
/// resolve against `base_dir`.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// Class vocabulary in effect: explicit classes or the synthetic ones.
std::vector<std::string> class_vocabulary(const ExperimentConfig& cfg);

}  // namespace sed
