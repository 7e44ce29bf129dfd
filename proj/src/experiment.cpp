#include "sedpipe/experiment.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <set>

#include "sedpipe/errors.h"
#include "sedpipe/log.h"

namespace sed {
namespace {

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return v.empty() ? "none" : out;
}

std::vector<nn::ClipData> normalized_clips(const ExperimentConfig& cfg, const Dataset& data,
                                           const std::vector<std::size_t>& idx, const Normalizer& norm) {
  std::vector<nn::ClipData> out;
  out.reserve(idx.size());
  const bool mlp = cfg.model.kind == ModelConfig::Kind::mlp;
  for (auto i : idx) {
    FeatureTensor x = apply_normalizer(norm, data.features[i]);
    if (mlp) x = stack_context(x, cfg.model.mlp_context);
    out.push_back({data.clip_ids[i], std::move(x), data.rolls[i]});
  }
  return out;
}

}  // namespace

std::size_t Dataset::index_of(const std::string& clip_id) const {
  const auto it = std::find(clip_ids.begin(), clip_ids.end(), clip_id);
  if (it == clip_ids.end()) throw ManifestError("clip not in dataset: " + clip_id);
  return static_cast<std::size_t>(it - clip_ids.begin());
}

std::filesystem::path feature_archive_path(const std::filesystem::path& feature_dir,
                                           const std::string& audio_path, FeatureClass fc) {
  return feature_dir / (std::filesystem::path(audio_path).stem().string() + "." + to_string(fc) + ".sedf");
}

Dataset load_dataset(const ExperimentConfig& cfg) {
  if (cfg.data.manifest.empty()) throw ConfigError("config key 'data.manifest' is not set");
  Dataset ds;
  ds.manifest = read_manifest(cfg.data.manifest);
  ds.manifest.validate();
  ds.class_names = class_vocabulary(cfg);
  const FeatureClass fc = cfg.features.feature;

  for (const auto& e : ds.manifest.entries) {
    if (std::find(ds.clip_ids.begin(), ds.clip_ids.end(), e.audio_path) != ds.clip_ids.end()) continue;
    FeatureTensor x;
    const auto archive =
        cfg.data.feature_dir.empty() ? std::filesystem::path{} : feature_archive_path(cfg.data.feature_dir, e.audio_path, fc);
    if (!archive.empty() && std::filesystem::exists(archive)) {
      x = read_feature_archive(archive);
      if (x.feature_class != fc) throw FormatError(archive.string() + ": archive holds " + to_string(x.feature_class));
    } else {
      x = extract_features(read_wav(ds.manifest.resolve(e.audio_path)), fc, cfg.features.options);
    }
    const auto events = read_annotations(ds.manifest.resolve(e.annotation_path), ds.class_names);
    ds.rolls.push_back(events_to_roll(events, x.frames, x.hop_seconds, ds.class_names));
    ds.features.push_back(std::move(x));
    ds.clip_ids.push_back(e.audio_path);
  }
  log::info("loaded " + std::to_string(ds.clip_ids.size()) + " clips (" + to_string(fc) + ")");
  return ds;
}

FoldData prepare_fold(const ExperimentConfig& cfg, const Dataset& data, int fold) {
  const auto folds = data.manifest.folds();
  if (std::find(folds.begin(), folds.end(), fold) == folds.end()) {
    throw ManifestError("fold " + std::to_string(fold) + " is not in the manifest");
  }
  std::vector<std::size_t> idx[3];
  const SplitRole roles[3] = {SplitRole::train, SplitRole::validation, SplitRole::test};
  for (int r = 0; r < 3; ++r) {
    for (const auto& e : data.manifest.split(fold, roles[r])) idx[r].push_back(data.index_of(e.audio_path));
    if (idx[r].empty()) {
      throw ManifestError("fold " + std::to_string(fold) + " has no " + to_string(roles[r]) + " clips");
    }
  }
  const std::set<std::size_t> train_set(idx[0].begin(), idx[0].end());
  for (auto i : idx[2]) {
    if (train_set.count(i)) {
      throw ManifestError("fold " + std::to_string(fold) + ": test clip " + data.clip_ids[i] + " is also in train");
    }
  }

  FoldData fd;
  std::vector<const FeatureTensor*> train_features;
  for (auto i : idx[0]) train_features.push_back(&data.features[i]);
  fd.normalizer = fit_normalizer(train_features);
  fd.train = normalized_clips(cfg, data, idx[0], fd.normalizer);
  fd.validation = normalized_clips(cfg, data, idx[1], fd.normalizer);
  fd.test = normalized_clips(cfg, data, idx[2], fd.normalizer);
  return fd;
}

FeatureTensor BaselineMlp::adapt(const FeatureTensor& normalized_mbe) const {
  return stack_context(normalized_mbe, context);
}

BaselineMlp baseline_mlp(std::size_t n_classes, std::uint64_t seed, FeatureClass fc, std::size_t n_mels,
                         const ModelConfig& mc) {
  if (fc != FeatureClass::mbe) {
    throw ConfigError("the baseline MLP takes mbe features, not " + to_string(fc));
  }
  nn::ModelSpec spec;
  spec.kind = nn::ModelSpec::Kind::mlp;
  spec.mlp.input_width = n_mels * mc.mlp_context;
  spec.mlp.hidden = mc.mlp_hidden;
  spec.mlp.n_classes = n_classes;
  spec.mlp.dropout = mc.mlp_dropout;
  return BaselineMlp{nn::build_model(spec, seed), mc.mlp_context};
}

nn::ModelSpec model_spec_for(const ExperimentConfig& cfg, std::size_t bins, std::size_t channels,
                             std::size_t n_classes) {
  nn::ModelSpec spec;
  const auto& mc = cfg.model;
  if (mc.kind == ModelConfig::Kind::mlp) {
    if (cfg.features.feature != FeatureClass::mbe || channels != 1) {
      throw ConfigError("the baseline MLP takes mbe features, not " + to_string(cfg.features.feature));
    }
    spec.kind = nn::ModelSpec::Kind::mlp;
    spec.mlp.input_width = bins * mc.mlp_context;
    spec.mlp.hidden = mc.mlp_hidden;
    spec.mlp.n_classes = n_classes;
    spec.mlp.dropout = mc.mlp_dropout;
    nn::validate(spec.mlp);
    return spec;
  }
  spec.kind = nn::ModelSpec::Kind::crnn;
  auto& c = spec.crnn;
  c.bins = bins;
  c.channels = channels;
  c.conv_filters = mc.conv_filters;
  c.pool_factors = mc.pool_factors.empty() ? nn::default_pool_factors(bins, mc.conv_filters.size()) : mc.pool_factors;
  c.gru_units = mc.gru_units;
  c.dense_units = mc.dense_units;
  c.n_classes = n_classes;
  c.dropout = mc.dropout;
  nn::validate(c);
  return spec;
}

std::uint64_t run_seed(const ExperimentConfig& cfg, std::size_t run) { return derive_seed(cfg.train.seed, run); }

RunResult run_fold(const ExperimentConfig& cfg, const Dataset& data, int fold, std::size_t run,
                   const std::filesystem::path& out_dir) {
  const FoldData fd = prepare_fold(cfg, data, fold);
  const auto& first = data.features.front();
  const auto spec = model_spec_for(cfg, first.bins, first.channels, data.class_names.size());
  const std::uint64_t seed = run_seed(cfg, run);
  nn::ModelGraph model = nn::build_model(spec, seed);

  SequenceBatch batch;
  for (const auto& clip : fd.train) batch.append(chunk_sequences(clip.features, clip.reference, cfg.features.seq_len));

  nn::TrainConfig tc = cfg.train;
  tc.seed = seed;
  const auto& monitored = tc.monitor == nn::MonitorSplit::validation ? fd.validation : fd.test;
  const auto monitor = nn::clip_monitor(monitored, cfg.features.seq_len, tc.threshold);

  RunResult res;
  res.fold = fold;
  res.run = run;
  res.history = nn::train(model, batch, monitor, tc);
  res.report = nn::evaluate_clips(model, fd.test, cfg.features.seq_len, tc.threshold);
  log::info("fold " + std::to_string(fold) + " run " + std::to_string(run) + ": ER " +
            std::to_string(res.report.error_rate) + " F " + std::to_string(res.report.f_score) + " (best epoch " +
            std::to_string(res.history.best_epoch) + ")");

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    nn::CheckpointMeta meta;
    meta.feature_class = cfg.features.feature;
    meta.seq_len = cfg.features.seq_len;
    meta.context = cfg.model.kind == ModelConfig::Kind::mlp ? cfg.model.mlp_context : 1;
    meta.threshold = tc.threshold;
    meta.class_names = data.class_names;
    nn::save_checkpoint(out_dir / "checkpoint.sedm", model, fd.normalizer, meta);
    res.history.write_tsv(out_dir / "history.tsv");
    write_metric_tsv(out_dir / "metrics.tsv", res.report);
  }
  return res;
}

AggregateReport aggregate(const std::vector<MetricReport>& reports, Aggregation mode) {
  if (reports.empty()) throw StateError("aggregate: no reports");
  AggregateReport a;
  a.mode = mode;
  a.n = reports.size();
  for (const auto& r : reports) a.totals += r.totals;
  if (mode == Aggregation::pooled) {
    a.er_mean = error_rate(a.totals);
    a.f_mean = f_score(a.totals).value;
    return a;
  }
  const double n = static_cast<double>(reports.size());
  for (const auto& r : reports) {
    a.er_mean += r.error_rate;
    a.f_mean += r.f_score;
  }
  a.er_mean /= n;
  a.f_mean /= n;
  for (const auto& r : reports) {
    a.er_std += (r.error_rate - a.er_mean) * (r.error_rate - a.er_mean);
    a.f_std += (r.f_score - a.f_mean) * (r.f_score - a.f_mean);
  }
  a.er_std = std::sqrt(a.er_std / n);
  a.f_std = std::sqrt(a.f_std / n);
  return a;
}

void write_summary_tsv(const std::filesystem::path& path, const AggregateReport& s) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "metric\tvalue\naggregation\t%s\nn\t%zu\ner_mean\t%.10g\ner_std\t%.10g\nf_mean\t%.10g\nf_std\t%.10g\n",
                s.mode == Aggregation::mean ? "mean" : "pooled", s.n, s.er_mean, s.er_std, s.f_mean, s.f_std);
  out << buf;
  if (!out) throw IoError("write failed: " + path.string());
}

CrossValResult cross_validate(const ExperimentConfig& cfg, const Dataset& data, const std::filesystem::path& out_dir) {
  if (cfg.n_runs == 0) throw ConfigError("n_runs must be >= 1");
  const auto available = data.manifest.folds();
  const std::vector<int> folds = cfg.folds.empty() ? available : cfg.folds;
  for (int f : folds) {
    if (std::find(available.begin(), available.end(), f) == available.end()) {
      throw ManifestError("fold " + std::to_string(f) + " is not in the manifest");
    }
  }

  struct Job {
    int fold;
    std::size_t run;
  };
  std::vector<Job> jobs;
  for (std::size_t r = 0; r < cfg.n_runs; ++r) {
    for (int f : folds) jobs.push_back({f, r});
  }

  auto run_one = [&](const Job& j) {
    const auto dir = out_dir.empty() ? std::filesystem::path{}
                                     : out_dir / ("fold" + std::to_string(j.fold)) / ("run" + std::to_string(j.run));
    try {
      return run_fold(cfg, data, j.fold, j.run, dir);
    } catch (const Error& e) {
      throw Error("fold " + std::to_string(j.fold) + " run " + std::to_string(j.run) + ": " + e.what(),
                  e.is_usage());
    }
  };

  CrossValResult res;
  res.runs.resize(jobs.size());
  const std::size_t width = std::max<std::size_t>(1, cfg.jobs);
  for (std::size_t start = 0; start < jobs.size(); start += width) {
    const std::size_t end = std::min(jobs.size(), start + width);
    if (width == 1) {
      res.runs[start] = run_one(jobs[start]);
      continue;
    }
    std::vector<std::future<RunResult>> pending;
    for (std::size_t i = start; i < end; ++i) pending.push_back(std::async(std::launch::async, run_one, jobs[i]));
    for (std::size_t i = start; i < end; ++i) res.runs[i] = pending[i - start].get();
  }

  std::vector<MetricReport> reports;
  for (const auto& r : res.runs) reports.push_back(r.report);
  res.summary = aggregate(reports, cfg.aggregation);
  if (!out_dir.empty()) write_summary_tsv(out_dir / "summary.tsv", res.summary);
  return res;
}

SearchSpace validated_space(const SearchSpace& space, std::size_t bins) {
  SearchSpace v;
  v.conv_layers.clear();
  v.dropout.clear();
  for (auto n : space.conv_layers) {
    if (n == 0) continue;
    try {
      nn::default_pool_factors(bins, n);
      v.conv_layers.push_back(n);
    } catch (const ConfigError&) {
    }
  }
  auto positive = [](const std::vector<std::size_t>& in) {
    std::vector<std::size_t> out;
    std::copy_if(in.begin(), in.end(), std::back_inserter(out), [](std::size_t x) { return x > 0; });
    return out;
  };
  v.filters = positive(space.filters);
  v.gru_layers = positive(space.gru_layers);
  v.gru_units = positive(space.gru_units);
  v.dense_layers = space.dense_layers;
  v.dense_units = positive(space.dense_units);
  std::copy_if(space.dropout.begin(), space.dropout.end(), std::back_inserter(v.dropout),
               [](double d) { return d >= 0.0 && d < 1.0; });

  const std::pair<const char*, bool> dims[] = {
      {"conv_layers", v.conv_layers.empty()}, {"filters", v.filters.empty()},
      {"gru_layers", v.gru_layers.empty()},   {"gru_units", v.gru_units.empty()},
      {"dense_layers", v.dense_layers.empty()}, {"dense_units", v.dense_units.empty()},
      {"dropout", v.dropout.empty()}};
  for (const auto& [name, empty] : dims) {
    if (empty) throw ConfigError(std::string("search space '") + name + "' has no valid option");
  }
  return v;
}

ModelConfig sample_model(const SearchSpace& space, const ModelConfig& base, Rng& rng) {
  auto pick = [&rng](const auto& options) { return options[rng.below(options.size())]; };
  ModelConfig mc = base;
  mc.kind = ModelConfig::Kind::crnn;
  const std::size_t conv_layers = pick(space.conv_layers);
  const std::size_t filters = pick(space.filters);
  const std::size_t gru_layers = pick(space.gru_layers);
  const std::size_t gru_units = pick(space.gru_units);
  const std::size_t dense_layers = pick(space.dense_layers);
  const std::size_t dense_units = pick(space.dense_units);
  mc.dropout = pick(space.dropout);
  mc.conv_filters.assign(conv_layers, filters);
  mc.pool_factors.clear();
  mc.gru_units.assign(gru_layers, gru_units);
  mc.dense_units.assign(dense_layers, dense_units);
  return mc;
}

std::string describe(const ModelConfig& mc) {
  char buf[64];
  if (mc.kind == ModelConfig::Kind::mlp) {
    std::snprintf(buf, sizeof(buf), " context=%zu dropout=%g", mc.mlp_context, mc.mlp_dropout);
    return "mlp hidden=" + join(mc.mlp_hidden) + buf;
  }
  std::snprintf(buf, sizeof(buf), " dropout=%g", mc.dropout);
  return "crnn conv=" + join(mc.conv_filters) + " pool=" + (mc.pool_factors.empty() ? "auto" : join(mc.pool_factors)) +
         " gru=" + join(mc.gru_units) + " dense=" + join(mc.dense_units) + buf;
}

std::vector<Trial> random_search(const ExperimentConfig& cfg, const Dataset& data, const std::filesystem::path& out_dir) {
  const auto& sc = cfg.search;
  if (sc.trials == 0) throw ConfigError("search needs at least one trial");
  if (sc.epochs < 2) throw ConfigError("search epochs must be >= 2");
  if (cfg.model.kind != ModelConfig::Kind::crnn) throw ConfigError("random search applies to the crnn model");
  const SearchSpace space = validated_space(sc.space, data.features.front().bins);

  Rng rng(derive_seed(sc.seed, 0x5EA7C4));
  std::vector<Trial> trials;
  for (std::size_t t = 0; t < sc.trials; ++t) {
    ExperimentConfig tcfg = cfg;
    tcfg.model = sample_model(space, cfg.model, rng);
    tcfg.train.max_epochs = sc.epochs;
    tcfg.train.patience = std::clamp<std::size_t>(cfg.train.patience, 1, sc.epochs - 1);
    char name[32];
    std::snprintf(name, sizeof(name), "trial_%02zu", t);
    log::info(std::string(name) + ": " + describe(tcfg.model));
    const auto dir = out_dir.empty() ? std::filesystem::path{} : out_dir / name;
    const auto cv = cross_validate(tcfg, data, dir);
    trials.push_back({t, tcfg.model, cv.summary});
  }
  std::stable_sort(trials.begin(), trials.end(),
                   [](const Trial& a, const Trial& b) { return a.summary.er_mean < b.summary.er_mean; });
  for (const auto& t : trials) {
    if (t.summary.er_mean < trials.front().summary.er_mean) throw StateError("search ranking is not ascending");
  }

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream out(out_dir / "ranking.tsv", std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + (out_dir / "ranking.tsv").string());
    out << "rank\ttrial\ter_mean\ter_std\tf_mean\tf_std\tconfig\n";
    char buf[160];
    for (std::size_t r = 0; r < trials.size(); ++r) {
      const auto& t = trials[r];
      std::snprintf(buf, sizeof(buf), "%zu\ttrial_%02zu\t%.10g\t%.10g\t%.10g\t%.10g\t", r + 1, t.index,
                    t.summary.er_mean, t.summary.er_std, t.summary.f_mean, t.summary.f_std);
      out << buf << describe(t.model) << '\n';
    }
  }
  return trials;
}

}  // namespace sed
