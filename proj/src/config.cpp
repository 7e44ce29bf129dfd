#include "sedpipe/config.h"

#include <functional>
#include <fstream>
#include <map>
#include <sstream>

#include "sedpipe/errors.h"

namespace sed {
namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct Parser {
  std::string key;

  [[noreturn]] void bad(const std::string& value, const char* what) const {
    throw ConfigError("config key '" + key + "': expected " + what + ", got '" + value + "'");
  }

  double real(const std::string& v) const {
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used != v.size()) bad(v, "a number");
      return d;
    } catch (const std::logic_error&) {
      bad(v, "a number");
    }
  }

  long long integer(const std::string& v) const {
    try {
      std::size_t used = 0;
      const long long i = std::stoll(v, &used);
      if (used != v.size()) bad(v, "an integer");
      return i;
    } catch (const std::logic_error&) {
      bad(v, "an integer");
    }
  }

  std::size_t count(const std::string& v) const {
    const long long i = integer(v);
    if (i < 0) bad(v, "a non-negative integer");
    return static_cast<std::size_t>(i);
  }

  bool boolean(const std::string& v) const {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    bad(v, "true or false");
  }

  std::vector<std::size_t> counts(const std::string& v) const {
    std::vector<std::size_t> out;
    for (const auto& item : split_list(v)) out.push_back(count(item));
    return out;
  }

  std::vector<double> reals(const std::string& v) const {
    std::vector<double> out;
    for (const auto& item : split_list(v)) out.push_back(real(item));
    return out;
  }
};

using Setter = std::function<void(const Parser&, const std::string&)>;

std::map<std::string, Setter> make_setters(ExperimentConfig& c, const std::filesystem::path& base) {
  auto path = [&base](const std::string& v) {
    std::filesystem::path p(v);
    return p.is_absolute() || base.empty() ? p : base / p;
  };
  std::map<std::string, Setter> s;
  // [data]
  s["data.name"] = [&](const Parser&, const std::string& v) { c.data.name = v; };
  s["data.manifest"] = [&, path](const Parser&, const std::string& v) { c.data.manifest = path(v); };
  s["data.feature_dir"] = [&, path](const Parser&, const std::string& v) { c.data.feature_dir = path(v); };
  s["data.classes"] = [&](const Parser&, const std::string& v) { c.data.classes = split_list(v); };
  s["data.folds"] = [&](const Parser& p, const std::string& v) { c.data.folds = static_cast<int>(p.integer(v)); };
  s["data.seed"] = [&](const Parser& p, const std::string& v) { c.data.synth.seed = p.count(v); };
  s["data.synth_clips"] = [&](const Parser& p, const std::string& v) {
    c.data.synth.n_clips = static_cast<int>(p.integer(v));
  };
  s["data.synth_duration"] = [&](const Parser& p, const std::string& v) { c.data.synth.duration_s = p.real(v); };
  s["data.synth_classes"] = [&](const Parser& p, const std::string& v) {
    c.data.synth.class_count = static_cast<int>(p.integer(v));
  };
  s["data.synth_polyphony"] = [&](const Parser& p, const std::string& v) {
    c.data.synth.polyphony_max = static_cast<int>(p.integer(v));
  };
  s["data.synth_events_per_class"] = [&](const Parser& p, const std::string& v) {
    c.data.synth.events_per_class = p.real(v);
  };
  s["data.synth_min_event"] = [&](const Parser& p, const std::string& v) { c.data.synth.min_event_s = p.real(v); };
  s["data.synth_max_event"] = [&](const Parser& p, const std::string& v) { c.data.synth.max_event_s = p.real(v); };
  s["data.synth_shared_template"] = [&](const Parser& p, const std::string& v) {
    c.data.synth.shared_template = p.boolean(v);
  };
  s["data.synth_level_jitter_db"] = [&](const Parser& p, const std::string& v) {
    c.data.synth.level_jitter_db = p.real(v);
  };
  s["data.synth_sample_rate"] = [&](const Parser& p, const std::string& v) {
    c.data.synth.sample_rate = static_cast<int>(p.integer(v));
  };
  // [features]
  s["features.feature"] = [&](const Parser& p, const std::string& v) {
    try {
      c.features.feature = parse_feature_class(v);
    } catch (const UsageError&) {
      p.bad(v, "mbe, bin-mbe, bin-mul-mbe or bin-fft");
    }
  };
  s["features.n_mels"] = [&](const Parser& p, const std::string& v) { c.features.options.n_mels = p.count(v); };
  s["features.f_min"] = [&](const Parser& p, const std::string& v) { c.features.options.f_min = p.real(v); };
  s["features.f_max"] = [&](const Parser& p, const std::string& v) { c.features.options.f_max = p.real(v); };
  s["features.window_seconds"] = [&](const Parser& p, const std::string& v) {
    c.features.options.window_seconds = p.real(v);
  };
  s["features.hop_seconds"] = [&](const Parser& p, const std::string& v) {
    c.features.options.hop_seconds = p.real(v);
  };
  s["features.multi_res_windows"] = [&](const Parser& p, const std::string& v) {
    c.features.options.multi_res_windows = p.counts(v);
  };
  s["features.log_magnitude"] = [&](const Parser& p, const std::string& v) {
    c.features.options.log_magnitude = p.boolean(v);
  };
  s["features.sequence_length"] = [&](const Parser& p, const std::string& v) { c.features.seq_len = p.count(v); };
  // [model]
  s["model.kind"] = [&](const Parser& p, const std::string& v) {
    if (v == "crnn") c.model.kind = ModelConfig::Kind::crnn;
    else if (v == "mlp") c.model.kind = ModelConfig::Kind::mlp;
    else p.bad(v, "crnn or mlp");
  };
  s["model.conv_filters"] = [&](const Parser& p, const std::string& v) { c.model.conv_filters = p.counts(v); };
  s["model.pool_factors"] = [&](const Parser& p, const std::string& v) { c.model.pool_factors = p.counts(v); };
  s["model.gru_units"] = [&](const Parser& p, const std::string& v) { c.model.gru_units = p.counts(v); };
  s["model.dense_units"] = [&](const Parser& p, const std::string& v) { c.model.dense_units = p.counts(v); };
  s["model.dropout"] = [&](const Parser& p, const std::string& v) { c.model.dropout = p.real(v); };
  s["model.mlp_hidden"] = [&](const Parser& p, const std::string& v) { c.model.mlp_hidden = p.counts(v); };
  s["model.mlp_context"] = [&](const Parser& p, const std::string& v) { c.model.mlp_context = p.count(v); };
  s["model.mlp_dropout"] = [&](const Parser& p, const std::string& v) { c.model.mlp_dropout = p.real(v); };
  // [train]
  s["train.learning_rate"] = [&](const Parser& p, const std::string& v) { c.train.learning_rate = p.real(v); };
  s["train.max_epochs"] = [&](const Parser& p, const std::string& v) { c.train.max_epochs = p.count(v); };
  s["train.patience"] = [&](const Parser& p, const std::string& v) { c.train.patience = p.count(v); };
  s["train.batch_size"] = [&](const Parser& p, const std::string& v) { c.train.batch_size = p.count(v); };
  s["train.monitor"] = [&](const Parser&, const std::string& v) { c.train.monitor = nn::parse_monitor_split(v); };
  s["train.seed"] = [&](const Parser& p, const std::string& v) { c.train.seed = p.count(v); };
  s["train.threshold"] = [&](const Parser& p, const std::string& v) { c.train.threshold = p.real(v); };
  s["train.folds"] = [&](const Parser& p, const std::string& v) {
    c.folds.clear();
    for (auto f : p.counts(v)) c.folds.push_back(static_cast<int>(f));
  };
  s["train.n_runs"] = [&](const Parser& p, const std::string& v) { c.n_runs = p.count(v); };
  s["train.aggregation"] = [&](const Parser& p, const std::string& v) {
    if (v == "mean") c.aggregation = Aggregation::mean;
    else if (v == "pooled") c.aggregation = Aggregation::pooled;
    else p.bad(v, "mean or pooled");
  };
  s["train.jobs"] = [&](const Parser& p, const std::string& v) { c.jobs = p.count(v); };
  // [search]
  s["search.trials"] = [&](const Parser& p, const std::string& v) { c.search.trials = p.count(v); };
  s["search.epochs"] = [&](const Parser& p, const std::string& v) { c.search.epochs = p.count(v); };
  s["search.seed"] = [&](const Parser& p, const std::string& v) { c.search.seed = p.count(v); };
  s["search.conv_layers"] = [&](const Parser& p, const std::string& v) { c.search.space.conv_layers = p.counts(v); };
  s["search.filters"] = [&](const Parser& p, const std::string& v) { c.search.space.filters = p.counts(v); };
  s["search.gru_layers"] = [&](const Parser& p, const std::string& v) { c.search.space.gru_layers = p.counts(v); };
  s["search.gru_units"] = [&](const Parser& p, const std::string& v) { c.search.space.gru_units = p.counts(v); };
  s["search.dense_layers"] = [&](const Parser& p, const std::string& v) {
    c.search.space.dense_layers = p.counts(v);
  };
  s["search.dense_units"] = [&](const Parser& p, const std::string& v) { c.search.space.dense_units = p.counts(v); };
  s["search.dropout"] = [&](const Parser& p, const std::string& v) { c.search.space.dropout = p.reals(v); };
  return s;
}

}  // namespace

void ExperimentConfig::set_seed(std::uint64_t seed) {
  data.synth.seed = seed;
  train.seed = seed;
  search.seed = seed;
}

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  ExperimentConfig cfg;
  const auto setters = make_setters(cfg, base_dir);
  std::istringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("config line " + std::to_string(line_no) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "data" && section != "features" && section != "model" && section != "train" &&
          section != "search") {
        throw ConfigError("config line " + std::to_string(line_no) + ": unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    if (section.empty()) {
      throw ConfigError("config line " + std::to_string(line_no) + ": key outside of a section");
    }
    const std::string key = section + "." + trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(Parser{key}, value);
  }
  if (cfg.n_runs == 0) throw ConfigError("config key 'train.n_runs' must be >= 1");
  if (cfg.features.seq_len == 0) throw ConfigError("config key 'features.sequence_length' must be >= 1");
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

std::vector<std::string> class_vocabulary(const ExperimentConfig& cfg) {
  if (!cfg.data.classes.empty()) return cfg.data.classes;
  return synth_class_names(cfg.data.synth.class_count);
}

}  // namespace sed
