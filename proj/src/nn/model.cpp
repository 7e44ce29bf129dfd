#include "sedpipe/nn/model.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "../binary_io.h"
#include "sedpipe/errors.h"

namespace sed::nn {
namespace {

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s.empty() ? "-" : s;
}

std::vector<std::size_t> split_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  if (s == "-" || s.empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(item, &used);
      if (used != item.size() || v < 0) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ConfigError("bad size list '" + s + "'");
    }
  }
  return out;
}

// Shortest text that parses back to the same double.
std::string fmt_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<std::size_t> prime_factors(std::size_t n) {
  std::vector<std::size_t> f;
  for (std::size_t p = 2; p * p <= n; ++p) {
    while (n % p == 0) {
      f.push_back(p);
      n /= p;
    }
  }
  if (n > 1) f.push_back(n);
  return f;
}

}  // namespace

std::string ModelSpec::to_string() const {
  if (kind == Kind::crnn) {
    return "crnn bins=" + std::to_string(crnn.bins) + " channels=" + std::to_string(crnn.channels) +
           " conv=" + join(crnn.conv_filters) + " pool=" + join(crnn.pool_factors) +
           " gru=" + join(crnn.gru_units) + " dense=" + join(crnn.dense_units) +
           " classes=" + std::to_string(crnn.n_classes) + " dropout=" + fmt_double(crnn.dropout);
  }
  return "mlp width=" + std::to_string(mlp.input_width) + " hidden=" + join(mlp.hidden) +
         " act=" + nn::to_string(mlp.hidden_activation) + " classes=" + std::to_string(mlp.n_classes) +
         " dropout=" + fmt_double(mlp.dropout);
}

ModelSpec ModelSpec::parse(const std::string& text) {
  std::istringstream in(text);
  std::string kind;
  in >> kind;
  std::map<std::string, std::string> kv;
  std::string tok;
  while (in >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw FormatError("bad model spec token '" + tok + "'");
    kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  auto need = [&](const std::string& k) -> const std::string& {
    const auto it = kv.find(k);
    if (it == kv.end()) throw FormatError("model spec missing '" + k + "'");
    return it->second;
  };
  ModelSpec spec;
  try {
    if (kind == "crnn") {
      spec.kind = Kind::crnn;
      spec.crnn.bins = std::stoul(need("bins"));
      spec.crnn.channels = std::stoul(need("channels"));
      spec.crnn.conv_filters = split_sizes(need("conv"));
      spec.crnn.pool_factors = split_sizes(need("pool"));
      spec.crnn.gru_units = split_sizes(need("gru"));
      spec.crnn.dense_units = split_sizes(need("dense"));
      spec.crnn.n_classes = std::stoul(need("classes"));
      spec.crnn.dropout = std::stod(need("dropout"));
    } else if (kind == "mlp") {
      spec.kind = Kind::mlp;
      spec.mlp.input_width = std::stoul(need("width"));
      spec.mlp.hidden = split_sizes(need("hidden"));
      spec.mlp.hidden_activation = parse_activation(need("act"));
      spec.mlp.n_classes = std::stoul(need("classes"));
      spec.mlp.dropout = std::stod(need("dropout"));
    } else {
      throw FormatError("unknown model kind '" + kind + "'");
    }
  } catch (const std::invalid_argument&) {
    throw FormatError("malformed model spec '" + text + "'");
  } catch (const std::out_of_range&) {
    throw FormatError("malformed model spec '" + text + "'");
  }
  return spec;
}

std::vector<std::size_t> default_pool_factors(std::size_t bins, std::size_t n_layers) {
  if (n_layers == 0) throw ConfigError("at least one conv layer is required");
  if (bins < 2 || bins % 2 != 0) throw ConfigError("bins must be even to pool down to 2");
  auto primes = prime_factors(bins / 2);
  std::sort(primes.rbegin(), primes.rend());
  std::vector<std::size_t> factors(n_layers, 1);
  for (std::size_t p : primes) {
    const auto it = std::min_element(factors.begin(), factors.end());
    *it *= p;
  }
  return factors;
}

void validate(const CrnnSpec& s) {
  if (s.bins == 0 || s.channels == 0) throw ConfigError("crnn: input bins/channels must be positive");
  if (s.conv_filters.empty()) throw ConfigError("crnn: at least one conv layer is required");
  for (auto f : s.conv_filters) {
    if (f == 0) throw ConfigError("crnn: conv layers need at least one filter");
  }
  if (s.pool_factors.size() != s.conv_filters.size()) {
    throw ConfigError("crnn: one pool factor per conv layer is required");
  }
  const std::size_t product = std::accumulate(s.pool_factors.begin(), s.pool_factors.end(), std::size_t{1},
                                              std::multiplies<>());
  if (s.bins % 2 != 0 || product == 0 || product != s.bins / 2) {
    throw ConfigError("crnn: pool factors multiply to " + std::to_string(product) + ", expected bins/2 = " +
                      std::to_string(s.bins / 2));
  }
  if (s.gru_units.empty()) throw ConfigError("crnn: at least one GRU layer is required");
  for (auto u : s.gru_units) {
    if (u == 0) throw ConfigError("crnn: GRU layers need at least one unit");
  }
  for (auto u : s.dense_units) {
    if (u == 0) throw ConfigError("crnn: dense layers need at least one unit");
  }
  if (s.n_classes == 0) throw ConfigError("crnn: n_classes must be positive");
  if (!(s.dropout >= 0.0 && s.dropout < 1.0)) throw ConfigError("crnn: dropout must be in [0, 1)");
}

void validate(const MlpSpec& s) {
  if (s.input_width == 0) throw ConfigError("mlp: input width must be positive");
  for (auto u : s.hidden) {
    if (u == 0) throw ConfigError("mlp: hidden layers need at least one unit");
  }
  if (s.n_classes == 0) throw ConfigError("mlp: n_classes must be positive");
  if (!(s.dropout >= 0.0 && s.dropout < 1.0)) throw ConfigError("mlp: dropout must be in [0, 1)");
}

ModelGraph::ModelGraph(ModelSpec spec, std::uint64_t seed)
    : spec_(std::move(spec)), rng_(std::make_unique<Rng>(seed)) {}

Tensor ModelGraph::forward(const Tensor& x, Mode mode) {
  Tensor h = x;
  for (auto& layer : layers_) h = layer->forward(h, mode);
  return h;
}

Tensor ModelGraph::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

std::vector<Param*> ModelGraph::params() {
  std::vector<Param*> out;
  for (auto& layer : layers_) {
    for (Param* p : layer->params()) out.push_back(p);
  }
  return out;
}

void ModelGraph::zero_grad() {
  for (Param* p : params()) p->zero_grad();
}

std::size_t ModelGraph::n_parameters() {
  std::size_t n = 0;
  for (Param* p : params()) n += p->value.size();
  return n;
}

std::string ModelGraph::descriptor() const {
  std::string s;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (i) s += ';';
    s += layers_[i]->descriptor();
  }
  return s;
}

std::vector<double> ModelGraph::snapshot() {
  std::vector<double> state;
  for (Param* p : params()) state.insert(state.end(), p->value.data.begin(), p->value.data.end());
  for (auto& layer : layers_) {
    for (auto* buf : layer->buffers()) state.insert(state.end(), buf->begin(), buf->end());
  }
  return state;
}

void ModelGraph::restore(std::span<const double> state) {
  std::size_t pos = 0;
  auto take = [&](std::vector<double>& dst) {
    if (pos + dst.size() > state.size()) throw StateError("model state too short");
    std::copy_n(state.begin() + static_cast<long>(pos), dst.size(), dst.begin());
    pos += dst.size();
  };
  for (Param* p : params()) take(p->value.data);
  for (auto& layer : layers_) {
    for (auto* buf : layer->buffers()) take(*buf);
  }
  if (pos != state.size()) throw StateError("model state has trailing values");
}

ModelGraph build_crnn(const CrnnSpec& spec, std::uint64_t seed) {
  validate(spec);
  ModelSpec ms;
  ms.kind = ModelSpec::Kind::crnn;
  ms.crnn = spec;
  ModelGraph g(ms, seed);
  Rng init(derive_seed(seed, 0x1417));

  std::size_t ch = spec.channels;
  std::size_t bins = spec.bins;
  for (std::size_t i = 0; i < spec.conv_filters.size(); ++i) {
    auto conv = std::make_unique<Conv2d>(ch, spec.conv_filters[i]);
    conv->init(init);
    g.add(std::move(conv));
    g.add(std::make_unique<BatchNorm>(spec.conv_filters[i]));
    g.add(std::make_unique<MaxPoolFreq>(spec.pool_factors[i]));
    g.add(std::make_unique<Dropout>(spec.dropout, &g.rng()));
    ch = spec.conv_filters[i];
    bins /= spec.pool_factors[i];
  }
  g.add(std::make_unique<Flatten>());
  std::size_t width = bins * ch;
  for (std::size_t u : spec.gru_units) {
    auto gru = std::make_unique<BiGru>(width, u);
    gru->init(init);
    g.add(std::move(gru));
    g.add(std::make_unique<Dropout>(spec.dropout, &g.rng()));
    width = 2 * u;
  }
  for (std::size_t u : spec.dense_units) {
    auto dense = std::make_unique<Dense>(width, u, Activation::linear);
    dense->init(init);
    g.add(std::move(dense));
    g.add(std::make_unique<Dropout>(spec.dropout, &g.rng()));
    width = u;
  }
  auto head = std::make_unique<Dense>(width, spec.n_classes, Activation::sigmoid);
  head->init(init);
  g.add(std::move(head));
  return g;
}

ModelGraph build_mlp(const MlpSpec& spec, std::uint64_t seed) {
  validate(spec);
  ModelSpec ms;
  ms.kind = ModelSpec::Kind::mlp;
  ms.mlp = spec;
  ModelGraph g(ms, seed);
  Rng init(derive_seed(seed, 0x1417));
  g.add(std::make_unique<Flatten>());
  std::size_t width = spec.input_width;
  for (std::size_t u : spec.hidden) {
    auto dense = std::make_unique<Dense>(width, u, spec.hidden_activation);
    dense->init(init);
    g.add(std::move(dense));
    g.add(std::make_unique<Dropout>(spec.dropout, &g.rng()));
    width = u;
  }
  auto head = std::make_unique<Dense>(width, spec.n_classes, Activation::sigmoid);
  head->init(init);
  g.add(std::move(head));
  return g;
}

ModelGraph build_model(const ModelSpec& spec, std::uint64_t seed) {
  return spec.kind == ModelSpec::Kind::crnn ? build_crnn(spec.crnn, seed) : build_mlp(spec.mlp, seed);
}

double bce_loss(const Tensor& pred, std::span<const std::uint8_t> target, std::span<const std::uint8_t> mask,
                Tensor* grad) {
  if (pred.rank() != 3) throw ShapeError("bce_loss: predictions must be (N, T, C)");
  const std::size_t rows = pred.dim(0) * pred.dim(1);
  const std::size_t n_cls = pred.dim(2);
  if (target.size() != pred.size() || mask.size() != rows) {
    throw ShapeError("bce_loss: target/mask do not match predictions " + pred.shape_string());
  }
  std::size_t valid_rows = 0;
  for (auto m : mask) valid_rows += (m != 0);
  if (grad) *grad = Tensor(pred.shape);
  if (valid_rows == 0) return 0.0;
  const double count = static_cast<double>(valid_rows * n_cls);

  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!mask[r]) continue;
    for (std::size_t c = 0; c < n_cls; ++c) {
      const std::size_t i = r * n_cls + c;
      const double raw = pred[i];
      const double p = std::clamp(raw, kProbClamp, 1.0 - kProbClamp);
      const double y = target[i] ? 1.0 : 0.0;
      total -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
      if (grad && raw == p) (*grad)[i] = (p - y) / (p * (1.0 - p)) / count;
    }
  }
  return total / count;
}

// ------------------------------------------------------------ checkpoint

namespace {

void write_meta(std::ostream& out, const CheckpointMeta& meta) {
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(meta.feature_class));
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(meta.seq_len));
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(meta.context));
  binio::put<double>(out, meta.threshold);
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(meta.class_names.size()));
  for (const auto& n : meta.class_names) binio::put_string(out, n);
}

CheckpointMeta read_meta(std::istream& in) {
  CheckpointMeta meta;
  const auto fc = binio::get<std::uint32_t>(in);
  if (fc > 3) throw FormatError("checkpoint: unknown feature class");
  meta.feature_class = static_cast<FeatureClass>(fc);
  meta.seq_len = binio::get<std::uint32_t>(in);
  meta.context = binio::get<std::uint32_t>(in);
  meta.threshold = binio::get<double>(in);
  const auto n = binio::get<std::uint32_t>(in);
  if (n > 100000) throw FormatError("checkpoint: implausible class count");
  for (std::uint32_t i = 0; i < n; ++i) meta.class_names.push_back(binio::get_string(in));
  return meta;
}

struct RawCheckpoint {
  std::string spec;
  std::string descriptor;
  CheckpointMeta meta;
  std::vector<double> state;
  Normalizer norm;
};

RawCheckpoint read_raw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  binio::expect_magic(in, "SEDM", path.string());
  const auto version = binio::get<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw UnsupportedError(path.string() + ": checkpoint version " + std::to_string(version));
  }
  RawCheckpoint raw;
  raw.spec = binio::get_string(in);
  raw.descriptor = binio::get_string(in);
  raw.meta = read_meta(in);
  const auto n = binio::get<std::uint64_t>(in);
  if (n > (1ull << 32)) throw FormatError("checkpoint: implausible parameter count");
  raw.state.resize(n);
  for (auto& v : raw.state) v = binio::get<double>(in);
  raw.norm.bins = binio::get<std::uint32_t>(in);
  raw.norm.channels = binio::get<std::uint32_t>(in);
  const std::size_t width = raw.norm.bins * raw.norm.channels;
  raw.norm.mean.resize(width);
  raw.norm.std.resize(width);
  for (auto& v : raw.norm.mean) v = binio::get<double>(in);
  for (auto& v : raw.norm.std) v = binio::get<double>(in);
  return raw;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, ModelGraph& model, const Normalizer& norm,
                     const CheckpointMeta& meta) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write("SEDM", 4);
  binio::put<std::uint32_t>(out, kCheckpointVersion);
  binio::put_string(out, model.spec().to_string());
  binio::put_string(out, model.descriptor());
  write_meta(out, meta);
  const auto state = model.snapshot();
  binio::put<std::uint64_t>(out, state.size());
  for (double v : state) binio::put<double>(out, v);
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(norm.bins));
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(norm.channels));
  for (double v : norm.mean) binio::put<double>(out, v);
  for (double v : norm.std) binio::put<double>(out, v);
  if (!out) throw IoError("write failed: " + path.string());
}

void load_checkpoint_into(const std::filesystem::path& path, ModelGraph& model, Normalizer* norm,
                          CheckpointMeta* meta) {
  auto raw = read_raw(path);
  if (raw.descriptor != model.descriptor()) {
    throw FormatError(path.string() + ": architecture mismatch (checkpoint '" + raw.descriptor +
                      "', model '" + model.descriptor() + "')");
  }
  try {
    model.restore(raw.state);
  } catch (const StateError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (norm) *norm = std::move(raw.norm);
  if (meta) *meta = std::move(raw.meta);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  auto raw = read_raw(path);
  ModelGraph model = build_model(ModelSpec::parse(raw.spec), 0);
  if (raw.descriptor != model.descriptor()) {
    throw FormatError(path.string() + ": stored descriptor does not match its model spec");
  }
  try {
    model.restore(raw.state);
  } catch (const StateError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return Checkpoint{std::move(model), std::move(raw.norm), std::move(raw.meta)};
}

}  // namespace sed::nn
