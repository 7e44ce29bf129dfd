#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "sedpipe/features.h"
#include "sedpipe/metrics.h"
#include "sedpipe/nn/model.h"

namespace sed::nn {

enum class MonitorSplit { validation, test };

std::string to_string(MonitorSplit s);
MonitorSplit parse_monitor_split(const std::string& s);

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t max_epochs = 500;
  std::size_t patience = 100;
  std::size_t batch_size = 8;
  MonitorSplit monitor = MonitorSplit::validation;
  std::uint64_t seed = 1;
  double threshold = 0.5;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double monitor_er = 0.0;
  double monitor_f = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_er = std::numeric_limits<double>::infinity();
  bool stopped_early = false;

  std::string to_tsv() const;
  void write_tsv(const std::filesystem::path& path) const;
};

/// Scores the current model on the monitored split.
using MonitorFn = std::function<MetricReport(ModelGraph&)>;

/// Mini-batch Adam on masked BCE. After every epoch the monitor is run in
/// inference mode; the snapshot with the lowest monitored ER is kept and
/// restored at the end. Training stops once `patience` epochs pass without
/// a strict improvement. Throws StateError on an empty training set.
TrainHistory train(ModelGraph& model, const SequenceBatch& train_data, const MonitorFn& monitor,
                   const TrainConfig& cfg);

/// Packs the selected sequences into (N, T, bins, channels), plus flattened
/// targets (N*T*C) and mask (N*T).
Tensor batch_inputs(const SequenceBatch& batch, std::span<const std::size_t> indices);
std::vector<std::uint8_t> batch_targets(const SequenceBatch& batch, std::span<const std::size_t> indices);
std::vector<std::uint8_t> batch_mask(const SequenceBatch& batch, std::span<const std::size_t> indices);

/// A clip ready for scoring: normalized network input and reference roll.
struct ClipData {
  std::string id;
  FeatureTensor features;
  EventRoll reference;
};

/// Inference-mode frame probabilities (frames x C, frame-major), computed in
/// seq_len chunks.
std::vector<double> predict_frames(ModelGraph& model, const FeatureTensor& features, std::size_t seq_len);

EventRoll predict_roll(ModelGraph& model, const FeatureTensor& features, std::size_t seq_len,
                       const std::vector<std::string>& class_names, double threshold = 0.5);

/// Predicts every clip and scores all of them with pooled segment counts.
MetricReport evaluate_clips(ModelGraph& model, const std::vector<ClipData>& clips, std::size_t seq_len,
                            double threshold = 0.5, double segment_seconds = 1.0);

MonitorFn clip_monitor(const std::vector<ClipData>& clips, std::size_t seq_len, double threshold = 0.5,
                       double segment_seconds = 1.0);

}  // namespace sed::nn
