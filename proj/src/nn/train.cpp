#include "sedpipe/nn/train.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "sedpipe/errors.h"
#include "sedpipe/log.h"
#include "sedpipe/nn/optim.h"

namespace sed::nn {

std::string to_string(MonitorSplit s) { return s == MonitorSplit::validation ? "validation" : "test"; }

MonitorSplit parse_monitor_split(const std::string& s) {
  if (s == "validation") return MonitorSplit::validation;
  if (s == "test") return MonitorSplit::test;
  throw ConfigError("monitor split must be 'validation' or 'test', got '" + s + "'");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (max_epochs == 0) throw ConfigError("max_epochs must be >= 1");
  if (patience == 0 || patience >= max_epochs) throw ConfigError("patience must be in [1, max_epochs)");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must be in (0, 1)");
}

std::string TrainHistory::to_tsv() const {
  std::string out = "epoch\ttrain_loss\tmonitor_er\tmonitor_f\n";
  char buf[160];
  for (const auto& e : epochs) {
    std::snprintf(buf, sizeof(buf), "%zu\t%.10g\t%.10g\t%.10g\n", e.epoch, e.train_loss, e.monitor_er,
                  e.monitor_f);
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "# best_epoch\t%zu\n", best_epoch);
  out += buf;
  return out;
}

void TrainHistory::write_tsv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_tsv();
  if (!out) throw IoError("write failed: " + path.string());
}

Tensor batch_inputs(const SequenceBatch& batch, std::span<const std::size_t> indices) {
  const std::size_t per = batch.seq_len * batch.bins * batch.channels;
  Tensor x({indices.size(), batch.seq_len, batch.bins, batch.channels});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& src = batch.sequences[indices[i]].input;
    std::copy(src.begin(), src.end(), x.data.begin() + static_cast<long>(i * per));
  }
  return x;
}

std::vector<std::uint8_t> batch_targets(const SequenceBatch& batch, std::span<const std::size_t> indices) {
  std::vector<std::uint8_t> out;
  out.reserve(indices.size() * batch.seq_len * batch.n_classes);
  for (auto i : indices) {
    const auto& t = batch.sequences[i].target;
    out.insert(out.end(), t.begin(), t.end());
  }
  return out;
}

std::vector<std::uint8_t> batch_mask(const SequenceBatch& batch, std::span<const std::size_t> indices) {
  std::vector<std::uint8_t> out;
  out.reserve(indices.size() * batch.seq_len);
  for (auto i : indices) {
    const auto& m = batch.sequences[i].mask;
    out.insert(out.end(), m.begin(), m.end());
  }
  return out;
}

TrainHistory train(ModelGraph& model, const SequenceBatch& train_data, const MonitorFn& monitor,
                   const TrainConfig& cfg) {
  cfg.validate();
  if (train_data.sequences.empty()) throw StateError("train: empty training set");
  if (train_data.n_classes != model.n_classes()) {
    throw ShapeError("train: targets have " + std::to_string(train_data.n_classes) + " classes, model " +
                     std::to_string(model.n_classes()));
  }

  Rng shuffle_rng(derive_seed(cfg.seed, 0x5EED));
  const AdamConfig adam{cfg.learning_rate, 0.9, 0.999, 1e-8};
  const auto params = model.params();
  for (Param* p : params) {
    p->m.fill(0.0);
    p->v.fill(0.0);
  }

  TrainHistory history;
  std::vector<double> best_state = model.snapshot();
  std::vector<std::size_t> order(train_data.size());
  std::int64_t step = 0;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    }

    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const Tensor x = batch_inputs(train_data, idx);
      const auto target = batch_targets(train_data, idx);
      const auto mask = batch_mask(train_data, idx);

      model.zero_grad();
      const Tensor pred = model.forward(x, Mode::train);
      Tensor grad;
      loss_sum += bce_loss(pred, target, mask, &grad);
      model.backward(grad);
      adam_step(params, ++step, adam);
      ++n_batches;
    }

    const MetricReport report = monitor(model);
    EpochRecord rec{epoch, loss_sum / static_cast<double>(n_batches), report.error_rate, report.f_score};
    history.epochs.push_back(rec);
    if (rec.monitor_er < history.best_er) {
      history.best_er = rec.monitor_er;
      history.best_epoch = epoch;
      best_state = model.snapshot();
    }
    log::debug("epoch " + std::to_string(epoch) + " loss " + std::to_string(rec.train_loss) + " ER " +
               std::to_string(rec.monitor_er) + " F " + std::to_string(rec.monitor_f));
    if (epoch - history.best_epoch >= cfg.patience) {
      history.stopped_early = true;
      break;
    }
  }
  model.restore(best_state);
  return history;
}

std::vector<double> predict_frames(ModelGraph& model, const FeatureTensor& features, std::size_t seq_len) {
  const std::size_t n_cls = model.n_classes();
  std::vector<double> probs(features.frames * n_cls, 0.0);
  if (features.frames == 0) return probs;
  const EventRoll blank(features.frames, {}, features.hop_seconds);
  const SequenceBatch chunks = chunk_sequences(features, blank, seq_len);
  std::size_t frame = 0;
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    const std::size_t idx[1] = {i};
    const Tensor out = model.forward(batch_inputs(chunks, idx), Mode::infer);
    const std::size_t valid = chunks.sequences[i].valid_frames();
    std::copy_n(out.data.begin(), valid * n_cls, probs.begin() + static_cast<long>(frame * n_cls));
    frame += valid;
  }
  return probs;
}

EventRoll predict_roll(ModelGraph& model, const FeatureTensor& features, std::size_t seq_len,
                       const std::vector<std::string>& class_names, double threshold) {
  if (class_names.size() != model.n_classes()) {
    throw ClassError("predict_roll: " + std::to_string(class_names.size()) + " class names for a " +
                     std::to_string(model.n_classes()) + "-class model");
  }
  const auto probs = predict_frames(model, features, seq_len);
  EventRoll roll(features.frames, class_names, features.hop_seconds);
  const std::size_t n_cls = class_names.size();
  for (std::size_t f = 0; f < features.frames; ++f) {
    for (std::size_t c = 0; c < n_cls; ++c) roll.set(f, c, probs[f * n_cls + c] > threshold);
  }
  return roll;
}

MetricReport evaluate_clips(ModelGraph& model, const std::vector<ClipData>& clips, std::size_t seq_len,
                            double threshold, double segment_seconds) {
  std::vector<std::pair<EventRoll, EventRoll>> pairs;
  pairs.reserve(clips.size());
  for (const auto& clip : clips) {
    pairs.emplace_back(clip.reference,
                       predict_roll(model, clip.features, seq_len, clip.reference.class_names(), threshold));
  }
  return evaluate_pooled(pairs, segment_seconds);
}

MonitorFn clip_monitor(const std::vector<ClipData>& clips, std::size_t seq_len, double threshold,
                       double segment_seconds) {
  // The caller keeps `clips` alive for the lifetime of the returned function.
  return [&clips, seq_len, threshold, segment_seconds](ModelGraph& model) {
    return evaluate_clips(model, clips, seq_len, threshold, segment_seconds);
  };
}

}  // namespace sed::nn
