#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sedpipe/features.h"
#include "sedpipe/nn/layers.h"
#include "sedpipe/rng.h"

namespace sed::nn {

/// Stacked conv / recurrent / dense network.
struct CrnnSpec {
  std::size_t bins = 40;
  std::size_t channels = 1;
  std::vector<std::size_t> conv_filters{64, 64, 64};
  std::vector<std::size_t> pool_factors{5, 2, 2};
  std::vector<std::size_t> gru_units{64, 64};
  std::vector<std::size_t> dense_units{64};
  std::size_t n_classes = 6;
  double dropout = 0.5;
};

/// Frame-wise fully connected network on context-stacked features.
struct MlpSpec {
  std::size_t input_width = 200;
  std::vector<std::size_t> hidden{50, 50};
  Activation hidden_activation = Activation::relu;
  std::size_t n_classes = 6;
  double dropout = 0.2;
};

struct ModelSpec {
  enum class Kind { crnn, mlp };
  Kind kind = Kind::crnn;
  CrnnSpec crnn;
  MlpSpec mlp;

  std::size_t n_classes() const { return kind == Kind::crnn ? crnn.n_classes : mlp.n_classes; }
  /// Canonical one-line form; parse(to_string()) reproduces the spec.
  std::string to_string() const;
  static ModelSpec parse(const std::string& text);
};

/// Splits bins/2 into `n_layers` integer factors (largest primes first, each
/// assigned to the currently smallest factor). 40 bins / 3 layers -> 5,2,2;
/// 1024 bins / 3 layers -> 8,8,8.
std::vector<std::size_t> default_pool_factors(std::size_t bins, std::size_t n_layers);

/// Throws ConfigError describing the first violated structural constraint.
void validate(const CrnnSpec& spec);
void validate(const MlpSpec& spec);

/// Ordered layer stack plus the dropout generator it owns.
class ModelGraph {
 public:
  ModelGraph(ModelSpec spec, std::uint64_t seed);
  ModelGraph(ModelGraph&&) noexcept = default;
  ModelGraph& operator=(ModelGraph&&) noexcept = default;

  const ModelSpec& spec() const { return spec_; }
  std::size_t n_classes() const { return spec_.n_classes(); }
  Rng& rng() { return *rng_; }

  void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }
  std::size_t n_layers() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_[i]; }

  /// Input (N, T, bins, channels); output (N, T, C).
  Tensor forward(const Tensor& x, Mode mode);
  /// Back-propagates dLoss/dOutput, accumulating parameter gradients.
  Tensor backward(const Tensor& grad_out);

  std::vector<Param*> params();
  void zero_grad();
  std::size_t n_parameters();

  /// Joined layer descriptors, e.g. "conv2d(1->8,3x3);batch_norm(8);...".
  std::string descriptor() const;

  /// Parameters then buffers, flattened in declaration order.
  std::vector<double> snapshot();
  void restore(std::span<const double> state);

 private:
  ModelSpec spec_;
  std::unique_ptr<Rng> rng_;
  std::vector<std::unique_ptr<Layer>> layers_;
};

/// conv(3x3)+batch_norm+max_pool+dropout per conv layer, flatten, bigru+dropout
/// per recurrent layer, time_dense(linear)+dropout per dense layer, then a
/// sigmoid time_dense head with n_classes units.
ModelGraph build_crnn(const CrnnSpec& spec, std::uint64_t seed);

/// Flatten, [time_dense(hidden)+dropout] per hidden layer, sigmoid head.
ModelGraph build_mlp(const MlpSpec& spec, std::uint64_t seed);

ModelGraph build_model(const ModelSpec& spec, std::uint64_t seed);

// ---------------------------------------------------------------- loss

inline constexpr double kProbClamp = 1e-7;

/// Mean binary cross-entropy over unmasked (sequence, frame, class) cells.
/// pred (N, T, C); target N*T*C; mask N*T (nonzero = valid frame). When
/// `grad` is given it receives dLoss/dpred (zero at masked or clamped cells).
double bce_loss(const Tensor& pred, std::span<const std::uint8_t> target,
                std::span<const std::uint8_t> mask, Tensor* grad = nullptr);

// ----------------------------------------------------------- checkpoint

/// Everything needed to rebuild and run a trained model.
struct CheckpointMeta {
  FeatureClass feature_class = FeatureClass::mbe;
  std::size_t seq_len = 256;
  std::size_t context = 1;  // >1 for context-stacked (baseline) inputs
  double threshold = 0.5;
  std::vector<std::string> class_names;
};

struct Checkpoint {
  ModelGraph model;
  Normalizer normalizer;
  CheckpointMeta meta;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// "SEDM", u32 version, model spec string, layer descriptor, meta, then u64
/// value count and the parameters/buffers as f64 in declaration order, then
/// the normalizer (u32 bins, u32 channels, means, stds). Little-endian.
void save_checkpoint(const std::filesystem::path& path, ModelGraph& model, const Normalizer& norm,
                     const CheckpointMeta& meta);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Loads weights into an existing graph; throws FormatError if its
/// descriptor differs from the stored one.
void load_checkpoint_into(const std::filesystem::path& path, ModelGraph& model, Normalizer* norm = nullptr,
                          CheckpointMeta* meta = nullptr);

}  // namespace sed::nn
