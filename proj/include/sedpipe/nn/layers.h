#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "sedpipe/nn/tensor.h"
#include "sedpipe/rng.h"

namespace sed::nn {

enum class Mode { train, infer };

enum class Activation { linear, relu, tanh, sigmoid };

std::string to_string(Activation a);
Activation parse_activation(const std::string& s);

/// A trainable array with its gradient and Adam moments.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor m;
  Tensor v;

  Param() = default;
  Param(std::string n, std::vector<std::size_t> shape);
  void zero_grad() { grad.fill(0.0); }
};

/// Layers cache whatever forward() needs for the following backward().
/// backward() accumulates parameter gradients and returns the input gradient.
class Layer {
 public:
  virtual ~Layer() = default;

  /// Layer kind and sizes; used to reject mismatched checkpoints.
  virtual std::string descriptor() const = 0;
  virtual Tensor forward(const Tensor& x, Mode mode) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual std::vector<Param*> params() { return {}; }
  /// Non-trainable state that must survive checkpointing (running stats).
  virtual std::vector<std::vector<double>*> buffers() { return {}; }
};

/// 3x3 "same" cross-correlation over (time, freq). Input (N, T, F, Cin),
/// kernel (Cout, 3, 3, Cin), output (N, T, F, Cout).
class Conv2d final : public Layer {
 public:
  Conv2d(std::size_t in_channels, std::size_t filters);
  std::string descriptor() const override;
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Param*> params() override { return {&kernel, &bias}; }
  void init(Rng& rng);

  Param kernel;
  Param bias;

 private:
  std::size_t in_ch_, out_ch_;
  Tensor input_;
};

/// Normalizes every channel (last axis) over all other axes.
class BatchNorm final : public Layer {
 public:
  explicit BatchNorm(std::size_t channels, double momentum = 0.9, double eps = 1e-5);
  std::string descriptor() const override;
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Param*> params() override { return {&gamma, &beta}; }
  std::vector<std::vector<double>*> buffers() override {
    return {&running_mean, &running_var, &updated_};
  }
  bool has_running_stats() const { return updated_[0] != 0.0; }

  Param gamma;
  Param beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;

 private:
  std::size_t channels_;
  double momentum_, eps_;
  std::vector<double> updated_{0.0};
  bool train_mode_ = true;
  Tensor xhat_;
  std::vector<double> inv_std_;
};

/// Max over groups of `factor` adjacent frequency bins; time untouched.
/// Input (N, T, F, C) -> (N, T, F/factor, C). Ties go to the lowest index.
class MaxPoolFreq final : public Layer {
 public:
  explicit MaxPoolFreq(std::size_t factor);
  std::string descriptor() const override;
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  std::size_t factor_;
  std::vector<std::size_t> in_shape_;
  std::vector<std::size_t> argmax_;
};

/// Inverted dropout; identity at inference or rate 0.
class Dropout final : public Layer {
 public:
  Dropout(double rate, Rng* rng);
  std::string descriptor() const override;
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  double rate() const { return rate_; }

 private:
  double rate_;
  Rng* rng_;
  std::vector<double> scale_;
};

/// (N, T, F, C) -> (N, T, F*C), frequency-major.
class Flatten final : public Layer {
 public:
  std::string descriptor() const override { return "flatten"; }
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  std::vector<std::size_t> in_shape_;
};

/// Same affine map + activation applied at every time step (last axis).
class Dense final : public Layer {
 public:
  Dense(std::size_t in_features, std::size_t units, Activation act);
  std::string descriptor() const override;
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Param*> params() override { return {&weight, &bias}; }
  void init(Rng& rng);
  Activation activation() const { return act_; }

  Param weight;  // (units, in)
  Param bias;    // (units)

 private:
  std::size_t in_, units_;
  Activation act_;
  Tensor input_;
  Tensor output_;
};

/// Bidirectional GRU over the time axis of (N, T, D); output (N, T, 2U) with
/// the forward direction in [0, U) and the backward direction in [U, 2U).
///
/// Per direction, with gates stacked [update; reset; candidate]:
///   z = sigmoid(Wz x + Uz h + bz)
///   r = sigmoid(Wr x + Ur h + br)
///   c = tanh(Wc x + Uc (r * h) + bc)
///   h' = z * h + (1 - z) * c
class BiGru final : public Layer {
 public:
  BiGru(std::size_t in_features, std::size_t units);
  std::string descriptor() const override;
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Param*> params() override;
  void init(Rng& rng);

  struct Direction {
    Param w;  // (3U, D)
    Param u;  // (3U, U)
    Param b;  // (3U)
  };
  Direction fwd;
  Direction bwd;

  std::size_t units() const { return units_; }

 private:
  struct StepCache {
    // Per (sequence, time): previous state, gates, candidate, r*h.
    std::vector<double> h_prev, z, r, c, rh;
  };
  void run_direction(const Tensor& x, Direction& dir, bool reverse, Tensor& out, std::size_t offset,
                     StepCache& cache);
  void back_direction(const Tensor& grad_out, Direction& dir, bool reverse, std::size_t offset,
                      const StepCache& cache, Tensor& grad_in);

  std::size_t in_, units_;
  Tensor input_;
  StepCache cache_fwd_, cache_bwd_;
};

double activate(Activation a, double x);

}  // namespace sed::nn
