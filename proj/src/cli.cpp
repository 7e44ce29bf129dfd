#include "sedpipe/cli.h"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "sedpipe/config.h"
#include "sedpipe/errors.h"
#include "sedpipe/experiment.h"
#include "sedpipe/log.h"

namespace sed {
namespace {

namespace fs = std::filesystem;

struct Globals {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  std::size_t jobs = 0;
  CLI::Option* seed_opt = nullptr;
};

ExperimentConfig load(const Globals& g) {
  ExperimentConfig cfg = g.config.empty() ? ExperimentConfig{} : load_config(g.config);
  if (g.seed_opt && g.seed_opt->count()) cfg.set_seed(g.seed);
  if (g.jobs) cfg.jobs = g.jobs;
  return cfg;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

void print_report(std::ostream& out, const MetricReport& r) {
  out << "segments " << r.n_segments << '\n';
  out << "ER " << fmt("%.2f", r.error_rate) << '\n';
  out << "F " << fmt("%.1f", 100.0 * r.f_score);
  if (r.f_degenerate) out << " (degenerate: no activity in reference or prediction)";
  out << '\n';
  out << "S " << r.totals.s << "  D " << r.totals.d << "  I " << r.totals.i << "  N " << r.totals.n << '\n';
}

void print_summary(std::ostream& out, const AggregateReport& s) {
  if (s.mode == Aggregation::pooled) {
    out << "pooled over " << s.n << " runs\n";
    out << "ER " << fmt("%.2f", s.er_mean) << '\n' << "F " << fmt("%.1f", 100.0 * s.f_mean) << '\n';
    return;
  }
  out << "mean over " << s.n << " runs\n";
  out << "ER " << fmt("%.2f", s.er_mean) << " (std " << fmt("%.2f", s.er_std) << ")\n";
  out << "F " << fmt("%.1f", 100.0 * s.f_mean) << " (std " << fmt("%.1f", 100.0 * s.f_std) << ")\n";
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Labels and latest offset of an annotation file, without a vocabulary.
void scan_annotations(const fs::path& p, std::set<std::string>& labels, double& max_offset) {
  std::istringstream in(read_text(p));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (cols.size() != 3) continue;
    labels.insert(cols[2]);
    try {
      max_offset = std::max(max_offset, std::stod(cols[1]));
    } catch (const std::exception&) {
    }
  }
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

fs::path results_dir(const Globals& g, const ExperimentConfig& cfg) {
  return fs::path(g.out.empty() ? "." : g.out) / "runs" / cfg.data.name;
}

int cmd_synth(const Globals& g, std::ostream& out) {
  const auto cfg = load(g);
  const fs::path dir = g.out.empty() ? "data" : g.out;
  const auto manifest = write_synth_dataset(dir, cfg.data.synth, cfg.data.folds);
  out << manifest.string() << '\n';
  return kExitOk;
}

int cmd_extract(const Globals& g, const std::string& feature, const std::string& manifest_path, bool force,
                std::ostream& out) {
  auto cfg = load(g);
  if (!feature.empty()) cfg.features.feature = parse_feature_class(feature);
  if (!manifest_path.empty()) cfg.data.manifest = manifest_path;
  if (cfg.data.manifest.empty()) throw UsageError("extract needs --manifest or data.manifest in the config");
  const fs::path dir = !g.out.empty() ? fs::path(g.out) : !cfg.data.feature_dir.empty() ? cfg.data.feature_dir
                                                                                       : fs::path("features");
  fs::create_directories(dir);
  const auto manifest = read_manifest(cfg.data.manifest);
  const FeatureClass fc = cfg.features.feature;

  std::set<std::string> seen;
  out << "clip\tframes\tbins\tchannels\tstatus\n";
  for (const auto& e : manifest.entries) {
    if (!seen.insert(e.audio_path).second) continue;
    const auto archive = feature_archive_path(dir, e.audio_path, fc);
    std::uint32_t frames, bins, channels;
    std::string status;
    if (fs::exists(archive) && !force) {
      const auto h = read_feature_archive_header(archive);
      frames = h.frames, bins = h.bins, channels = h.channels;
      status = "skipped";
    } else {
      const AudioClip clip = read_wav(manifest.resolve(e.audio_path));
      if (fc == FeatureClass::mbe && clip.n_channels() == 2) {
        log::info(e.audio_path + ": stereo input averaged to mono for mbe");
      }
      const auto x = extract_features(clip, fc, cfg.features.options);
      write_feature_archive(archive, x);
      frames = static_cast<std::uint32_t>(x.frames);
      bins = static_cast<std::uint32_t>(x.bins);
      channels = static_cast<std::uint32_t>(x.channels);
      status = "written";
    }
    out << archive.filename().string() << '\t' << frames << '\t' << bins << '\t' << channels << '\t' << status
        << '\n';
  }
  return kExitOk;
}

int cmd_train(const Globals& g, const std::string& manifest_path, std::ostream& out) {
  auto cfg = load(g);
  if (!manifest_path.empty()) cfg.data.manifest = manifest_path;
  const Dataset data = load_dataset(cfg);
  const fs::path dir = results_dir(g, cfg);
  const auto cv = cross_validate(cfg, data, dir);
  out << "fold\trun\tER\tF\tbest_epoch\n";
  for (const auto& r : cv.runs) {
    out << r.fold << '\t' << r.run << '\t' << fmt("%.2f", r.report.error_rate) << '\t'
        << fmt("%.1f", 100.0 * r.report.f_score) << '\t' << r.history.best_epoch << '\n';
  }
  print_summary(out, cv.summary);
  out << "results " << dir.string() << '\n';
  return kExitOk;
}

struct EvalArgs {
  std::vector<std::string> ref, pred, audio;
  std::string classes, checkpoint, pred_out, tsv, segments;
  double hop = 0.0, segment = 1.0, duration = 0.0;
};

int cmd_eval(const Globals& g, const EvalArgs& a, std::ostream& out) {
  const auto cfg = load(g);
  std::vector<std::pair<EventRoll, EventRoll>> pairs;

  if (!a.checkpoint.empty()) {
    if (a.audio.empty() || a.audio.size() != a.ref.size()) {
      throw UsageError("eval --checkpoint needs matching --audio and --ref lists");
    }
    auto ck = nn::load_checkpoint(a.checkpoint);
    const auto& names = ck.meta.class_names;
    for (std::size_t i = 0; i < a.audio.size(); ++i) {
      FeatureTensor x = extract_features(read_wav(a.audio[i]), ck.meta.feature_class, cfg.features.options);
      x = apply_normalizer(ck.normalizer, x);
      if (ck.meta.context > 1) x = stack_context(x, ck.meta.context);
      EventRoll pred = nn::predict_roll(ck.model, x, ck.meta.seq_len, names, ck.meta.threshold);
      EventRoll ref = events_to_roll(read_annotations(a.ref[i], names), x.frames, x.hop_seconds, names);
      if (!a.pred_out.empty()) {
        fs::create_directories(a.pred_out);
        write_annotations(fs::path(a.pred_out) / (fs::path(a.audio[i]).stem().string() + ".tsv"),
                          roll_to_events(pred));
      }
      pairs.emplace_back(std::move(ref), std::move(pred));
    }
  } else {
    if (a.ref.empty() || a.ref.size() != a.pred.size()) {
      throw UsageError("eval needs matching --ref and --pred lists (or --checkpoint)");
    }
    const double hop = a.hop > 0.0 ? a.hop : cfg.features.options.hop_seconds;
    std::vector<std::string> names;
    if (!a.classes.empty()) names = split_commas(a.classes);
    else if (!g.config.empty()) names = class_vocabulary(cfg);
    std::vector<double> ends(a.ref.size(), 0.0);
    std::set<std::string> labels;
    for (std::size_t i = 0; i < a.ref.size(); ++i) {
      scan_annotations(a.ref[i], labels, ends[i]);
      scan_annotations(a.pred[i], labels, ends[i]);
    }
    if (names.empty()) names.assign(labels.begin(), labels.end());
    for (std::size_t i = 0; i < a.ref.size(); ++i) {
      const double end = a.duration > 0.0 ? a.duration : ends[i];
      const auto frames = static_cast<std::size_t>(std::ceil(end / hop - 1e-9));
      pairs.emplace_back(events_to_roll(read_annotations(a.ref[i], names), frames, hop, names),
                         events_to_roll(read_annotations(a.pred[i], names), frames, hop, names));
    }
  }

  const MetricReport report = evaluate_pooled(pairs, a.segment);
  print_report(out, report);
  if (!a.tsv.empty()) write_metric_tsv(a.tsv, report);
  if (!a.segments.empty()) write_segment_tsv(a.segments, report);
  return kExitOk;
}

int cmd_search(const Globals& g, const std::string& manifest_path, std::size_t trials, std::ostream& out) {
  auto cfg = load(g);
  if (!manifest_path.empty()) cfg.data.manifest = manifest_path;
  if (trials) cfg.search.trials = trials;
  const Dataset data = load_dataset(cfg);
  const fs::path dir = results_dir(g, cfg) / "search";
  const auto ranked = random_search(cfg, data, dir);
  out << "rank\ttrial\tER\tF\tconfig\n";
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    const auto& t = ranked[r];
    char name[32];
    std::snprintf(name, sizeof(name), "trial_%02zu", t.index);
    out << r + 1 << '\t' << name << '\t' << fmt("%.2f", t.summary.er_mean) << '\t'
        << fmt("%.1f", 100.0 * t.summary.f_mean) << '\t' << describe(t.model) << '\n';
  }
  out << "results " << dir.string() << '\n';
  return kExitOk;
}

int cmd_report(const Globals& g, const std::string& dir_arg, std::ostream& out) {
  const auto cfg = load(g);
  const fs::path dir = dir_arg.empty() ? results_dir(g, cfg) : fs::path(dir_arg);
  if (!fs::is_directory(dir)) throw IoError("no results directory " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() == "metrics.tsv") files.push_back(e.path());
  }
  if (files.empty()) throw IoError("no metrics.tsv under " + dir.string());
  std::sort(files.begin(), files.end());

  std::vector<MetricReport> reports;
  out << "run\tER\tF\n";
  for (const auto& f : files) {
    std::map<std::string, double> values;
    std::istringstream in(read_text(f));
    std::string key;
    double v;
    while (in >> key >> v) values[key] = v;
    if (!values.count("error_rate") || !values.count("f_score")) throw FormatError(f.string() + ": missing metrics");
    MetricReport r;
    r.error_rate = values["error_rate"];
    r.f_score = values["f_score"];
    reports.push_back(r);
    out << fs::relative(f.parent_path(), dir).generic_string() << '\t' << fmt("%.2f", r.error_rate) << '\t'
        << fmt("%.1f", 100.0 * r.f_score) << '\n';
  }
  print_summary(out, aggregate(reports, Aggregation::mean));
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Polyphonic sound event detection with binaural features", "sedpipe"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Experiment config file");
  g.seed_opt = app.add_option("--seed", g.seed, "Master seed for synthesis, training and search");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--jobs", g.jobs, "Parallel folds/runs (1 = deterministic single thread)");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic binaural dataset");

  std::string feature, manifest;
  bool force = false;
  auto* extract = app.add_subcommand("extract", "Extract feature archives for every clip");
  extract->add_option("--feature", feature, "mbe, bin-mbe, bin-mul-mbe or bin-fft");
  extract->add_option("--manifest", manifest, "Dataset manifest");
  extract->add_flag("--force", force, "Overwrite existing archives");

  auto* train = app.add_subcommand("train", "Cross-validate the configured model");
  train->add_option("--manifest", manifest, "Dataset manifest");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Score predictions with segment-based ER and F");
  eval->add_option("--ref", ea.ref, "Reference annotation TSVs");
  eval->add_option("--pred", ea.pred, "Predicted annotation TSVs");
  eval->add_option("--classes", ea.classes, "Comma-separated class vocabulary");
  eval->add_option("--hop", ea.hop, "Frame hop in seconds");
  eval->add_option("--segment", ea.segment, "Segment length in seconds");
  eval->add_option("--duration", ea.duration, "Clip duration in seconds");
  eval->add_option("--checkpoint", ea.checkpoint, "Trained model to run on --audio");
  eval->add_option("--audio", ea.audio, "WAV files to predict");
  eval->add_option("--pred-out", ea.pred_out, "Directory for predicted annotations");
  eval->add_option("--tsv", ea.tsv, "Write metric<TAB>value TSV");
  eval->add_option("--segments", ea.segments, "Write per-segment counts TSV");

  std::size_t trials = 0;
  auto* search = app.add_subcommand("search", "Random hyper-parameter search");
  search->add_option("--manifest", manifest, "Dataset manifest");
  search->add_option("--trials", trials, "Number of sampled configurations");

  std::string report_dir;
  auto* report = app.add_subcommand("report", "Summarize a results directory");
  report->add_option("--dir", report_dir, "Results directory");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(g, out);
    if (*extract) return cmd_extract(g, feature, manifest, force, out);
    if (*train) return cmd_train(g, manifest, out);
    if (*eval) return cmd_eval(g, ea, out);
    if (*search) return cmd_search(g, manifest, trials, out);
    if (*report) return cmd_report(g, report_dir, out);
  } catch (const Error& e) {
    err << "sedpipe: " << e.what() << '\n';
    return e.is_usage() ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    err << "sedpipe: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace sed
