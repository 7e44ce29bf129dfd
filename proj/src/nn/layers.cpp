#include "sedpipe/nn/layers.h"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "sedpipe/errors.h"

namespace sed::nn {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::linear:
      return "linear";
    case Activation::relu:
      return "relu";
    case Activation::tanh:
      return "tanh";
    case Activation::sigmoid:
      return "sigmoid";
  }
  return "linear";
}

Activation parse_activation(const std::string& s) {
  if (s == "linear") return Activation::linear;
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "sigmoid") return Activation::sigmoid;
  throw ConfigError("unknown activation '" + s + "'");
}

double activate(Activation a, double x) {
  switch (a) {
    case Activation::linear:
      return x;
    case Activation::relu:
      return x > 0.0 ? x : 0.0;
    case Activation::tanh:
      return std::tanh(x);
    case Activation::sigmoid:
      return 1.0 / (1.0 + std::exp(-x));
  }
  return x;
}

namespace {

// Derivative expressed through the activation's output.
double activate_grad_from_output(Activation a, double y) {
  switch (a) {
    case Activation::linear:
      return 1.0;
    case Activation::relu:
      return y > 0.0 ? 1.0 : 0.0;
    case Activation::tanh:
      return 1.0 - y * y;
    case Activation::sigmoid:
      return y * (1.0 - y);
  }
  return 1.0;
}

void fill_uniform(Tensor& t, double limit, Rng& rng) {
  for (auto& v : t.data) v = rng.uniform(-limit, limit);
}

void require_rank(const Tensor& x, std::size_t rank, const std::string& who) {
  if (x.rank() != rank) {
    throw ShapeError(who + ": expected rank " + std::to_string(rank) + " input, got " + x.shape_string());
  }
}

}  // namespace

Param::Param(std::string n, std::vector<std::size_t> shape)
    : name(std::move(n)), value(shape), grad(shape), m(shape), v(shape) {}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::size_t in_channels, std::size_t filters)
    : kernel("kernel", {filters, 3, 3, in_channels}),
      bias("bias", {filters}),
      in_ch_(in_channels),
      out_ch_(filters) {}

std::string Conv2d::descriptor() const {
  return "conv2d(" + std::to_string(in_ch_) + "->" + std::to_string(out_ch_) + ",3x3)";
}

void Conv2d::init(Rng& rng) {
  const double limit = std::sqrt(6.0 / (9.0 * static_cast<double>(in_ch_ + out_ch_)));
  fill_uniform(kernel.value, limit, rng);
  bias.value.fill(0.0);
}

Tensor Conv2d::forward(const Tensor& x, Mode) {
  require_rank(x, 4, "conv2d");
  if (x.dim(3) != in_ch_) {
    throw ShapeError("conv2d: expected " + std::to_string(in_ch_) + " input channels, got " +
                     std::to_string(x.dim(3)));
  }
  input_ = x;
  const std::size_t n_batch = x.dim(0), n_t = x.dim(1), n_f = x.dim(2);
  const std::size_t ci = in_ch_, co = out_ch_;
  Tensor out({n_batch, n_t, n_f, co});
  const double* w = kernel.value.data.data();
  for (std::size_t n = 0; n < n_batch; ++n) {
    for (std::size_t t = 0; t < n_t; ++t) {
      for (std::size_t f = 0; f < n_f; ++f) {
        double* o = out.data.data() + ((n * n_t + t) * n_f + f) * co;
        for (std::size_t oc = 0; oc < co; ++oc) o[oc] = bias.value[oc];
        for (std::size_t dt = 0; dt < 3; ++dt) {
          if (t + dt < 1 || t + dt - 1 >= n_t) continue;
          const std::size_t tt = t + dt - 1;
          for (std::size_t df = 0; df < 3; ++df) {
            if (f + df < 1 || f + df - 1 >= n_f) continue;
            const std::size_t ff = f + df - 1;
            const double* xp = x.data.data() + ((n * n_t + tt) * n_f + ff) * ci;
            for (std::size_t oc = 0; oc < co; ++oc) {
              const double* wp = w + ((oc * 3 + dt) * 3 + df) * ci;
              double acc = 0.0;
              for (std::size_t i = 0; i < ci; ++i) acc += wp[i] * xp[i];
              o[oc] += acc;
            }
          }
        }
      }
    }
  }
  return out;
}

Tensor Conv2d::backward(const Tensor& grad_out) {
  const Tensor& x = input_;
  const std::size_t n_batch = x.dim(0), n_t = x.dim(1), n_f = x.dim(2);
  const std::size_t ci = in_ch_, co = out_ch_;
  Tensor grad_in(x.shape);
  const double* w = kernel.value.data.data();
  double* dw = kernel.grad.data.data();
  for (std::size_t n = 0; n < n_batch; ++n) {
    for (std::size_t t = 0; t < n_t; ++t) {
      for (std::size_t f = 0; f < n_f; ++f) {
        const double* g = grad_out.data.data() + ((n * n_t + t) * n_f + f) * co;
        for (std::size_t oc = 0; oc < co; ++oc) bias.grad[oc] += g[oc];
        for (std::size_t dt = 0; dt < 3; ++dt) {
          if (t + dt < 1 || t + dt - 1 >= n_t) continue;
          const std::size_t tt = t + dt - 1;
          for (std::size_t df = 0; df < 3; ++df) {
            if (f + df < 1 || f + df - 1 >= n_f) continue;
            const std::size_t ff = f + df - 1;
            const std::size_t base = ((n * n_t + tt) * n_f + ff) * ci;
            const double* xp = x.data.data() + base;
            double* dxp = grad_in.data.data() + base;
            for (std::size_t oc = 0; oc < co; ++oc) {
              const double go = g[oc];
              if (go == 0.0) continue;
              const std::size_t woff = ((oc * 3 + dt) * 3 + df) * ci;
              const double* wp = w + woff;
              double* dwp = dw + woff;
              for (std::size_t i = 0; i < ci; ++i) {
                dwp[i] += go * xp[i];
                dxp[i] += go * wp[i];
              }
            }
          }
        }
      }
    }
  }
  return grad_in;
}

// ------------------------------------------------------------- BatchNorm

BatchNorm::BatchNorm(std::size_t channels, double momentum, double eps)
    : gamma("gamma", {channels}),
      beta("beta", {channels}),
      running_mean(channels, 0.0),
      running_var(channels, 1.0),
      channels_(channels),
      momentum_(momentum),
      eps_(eps) {
  gamma.value.fill(1.0);
}

std::string BatchNorm::descriptor() const { return "batch_norm(" + std::to_string(channels_) + ")"; }

Tensor BatchNorm::forward(const Tensor& x, Mode mode) {
  if (x.last() != channels_) {
    throw ShapeError("batch_norm: expected " + std::to_string(channels_) + " channels, got " +
                     x.shape_string());
  }
  const std::size_t rows = x.rows();
  const std::size_t c_n = channels_;
  Tensor out(x.shape);
  xhat_ = Tensor(x.shape);
  inv_std_.assign(c_n, 0.0);

  if (mode == Mode::train) {
    if (rows == 0) throw ShapeError("batch_norm: empty batch");
    std::vector<double> mean(c_n, 0.0), var(c_n, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < c_n; ++c) mean[c] += x[r * c_n + c];
    }
    for (auto& m : mean) m /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < c_n; ++c) {
        const double d = x[r * c_n + c] - mean[c];
        var[c] += d * d;
      }
    }
    for (auto& v : var) v /= static_cast<double>(rows);
    for (std::size_t c = 0; c < c_n; ++c) inv_std_[c] = 1.0 / std::sqrt(var[c] + eps_);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < c_n; ++c) {
        const std::size_t i = r * c_n + c;
        xhat_[i] = (x[i] - mean[c]) * inv_std_[c];
        out[i] = gamma.value[c] * xhat_[i] + beta.value[c];
      }
    }
    // The first update adopts the batch statistics outright instead of
    // blending them into the 0/1 placeholders.
    const double keep = updated_[0] != 0.0 ? momentum_ : 0.0;
    for (std::size_t c = 0; c < c_n; ++c) {
      running_mean[c] = keep * running_mean[c] + (1.0 - keep) * mean[c];
      running_var[c] = keep * running_var[c] + (1.0 - keep) * var[c];
    }
    updated_[0] = 1.0;
    train_mode_ = true;
  } else {
    if (!has_running_stats()) {
      throw StateError("batch_norm: inference requested before any training update");
    }
    for (std::size_t c = 0; c < c_n; ++c) inv_std_[c] = 1.0 / std::sqrt(running_var[c] + eps_);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < c_n; ++c) {
        const std::size_t i = r * c_n + c;
        xhat_[i] = (x[i] - running_mean[c]) * inv_std_[c];
        out[i] = gamma.value[c] * xhat_[i] + beta.value[c];
      }
    }
    train_mode_ = false;
  }
  return out;
}

Tensor BatchNorm::backward(const Tensor& grad_out) {
  const std::size_t rows = xhat_.rows();
  const std::size_t c_n = channels_;
  Tensor grad_in(xhat_.shape);
  std::vector<double> sum_g(c_n, 0.0), sum_gx(c_n, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < c_n; ++c) {
      const std::size_t i = r * c_n + c;
      sum_g[c] += grad_out[i];
      sum_gx[c] += grad_out[i] * xhat_[i];
    }
  }
  for (std::size_t c = 0; c < c_n; ++c) {
    gamma.grad[c] += sum_gx[c];
    beta.grad[c] += sum_g[c];
  }
  if (!train_mode_) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < c_n; ++c) {
        const std::size_t i = r * c_n + c;
        grad_in[i] = grad_out[i] * gamma.value[c] * inv_std_[c];
      }
    }
    return grad_in;
  }
  const double m = static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < c_n; ++c) {
      const std::size_t i = r * c_n + c;
      // d xhat = g * gamma; sums scale by gamma as well.
      const double dxhat = grad_out[i] * gamma.value[c];
      grad_in[i] = inv_std_[c] / m *
                   (m * dxhat - gamma.value[c] * sum_g[c] - xhat_[i] * gamma.value[c] * sum_gx[c]);
    }
  }
  return grad_in;
}

// ----------------------------------------------------------- MaxPoolFreq

MaxPoolFreq::MaxPoolFreq(std::size_t factor) : factor_(factor) {
  if (factor == 0) throw ConfigError("max_pool factor must be >= 1");
}

std::string MaxPoolFreq::descriptor() const { return "max_pool_freq(" + std::to_string(factor_) + ")"; }

Tensor MaxPoolFreq::forward(const Tensor& x, Mode) {
  require_rank(x, 4, "max_pool_freq");
  const std::size_t n_batch = x.dim(0), n_t = x.dim(1), n_f = x.dim(2), n_c = x.dim(3);
  if (n_f % factor_ != 0) {
    throw ShapeError("max_pool_freq: factor " + std::to_string(factor_) + " does not divide " +
                     std::to_string(n_f) + " bins");
  }
  const std::size_t out_f = n_f / factor_;
  in_shape_ = x.shape;
  Tensor out({n_batch, n_t, out_f, n_c});
  argmax_.assign(out.size(), 0);
  for (std::size_t nt = 0; nt < n_batch * n_t; ++nt) {
    for (std::size_t of = 0; of < out_f; ++of) {
      for (std::size_t c = 0; c < n_c; ++c) {
        std::size_t best = (nt * n_f + of * factor_) * n_c + c;
        for (std::size_t k = 1; k < factor_; ++k) {
          const std::size_t idx = (nt * n_f + of * factor_ + k) * n_c + c;
          if (x[idx] > x[best]) best = idx;
        }
        const std::size_t o = (nt * out_f + of) * n_c + c;
        out[o] = x[best];
        argmax_[o] = best;
      }
    }
  }
  return out;
}

Tensor MaxPoolFreq::backward(const Tensor& grad_out) {
  Tensor grad_in(in_shape_);
  for (std::size_t o = 0; o < grad_out.size(); ++o) grad_in[argmax_[o]] += grad_out[o];
  return grad_in;
}

// --------------------------------------------------------------- Dropout

Dropout::Dropout(double rate, Rng* rng) : rate_(rate), rng_(rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must be in [0, 1)");
}

std::string Dropout::descriptor() const {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "dropout(%.6g)", rate_);
  return buf;
}

Tensor Dropout::forward(const Tensor& x, Mode mode) {
  if (mode == Mode::infer || rate_ == 0.0) {
    scale_.clear();
    return x;
  }
  const double keep = 1.0 - rate_;
  scale_.resize(x.size());
  Tensor out(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) {
    scale_[i] = rng_->bernoulli(keep) ? 1.0 / keep : 0.0;
    out[i] = x[i] * scale_[i];
  }
  return out;
}

Tensor Dropout::backward(const Tensor& grad_out) {
  if (scale_.empty()) return grad_out;
  Tensor grad_in(grad_out.shape);
  for (std::size_t i = 0; i < grad_out.size(); ++i) grad_in[i] = grad_out[i] * scale_[i];
  return grad_in;
}

// --------------------------------------------------------------- Flatten

Tensor Flatten::forward(const Tensor& x, Mode) {
  require_rank(x, 4, "flatten");
  in_shape_ = x.shape;
  Tensor out = x;
  out.shape = {x.dim(0), x.dim(1), x.dim(2) * x.dim(3)};
  return out;
}

Tensor Flatten::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  g.shape = in_shape_;
  return g;
}

// ----------------------------------------------------------------- Dense

Dense::Dense(std::size_t in_features, std::size_t units, Activation act)
    : weight("weight", {units, in_features}), bias("bias", {units}), in_(in_features), units_(units), act_(act) {}

std::string Dense::descriptor() const {
  return "time_dense(" + std::to_string(in_) + "->" + std::to_string(units_) + "," + to_string(act_) + ")";
}

void Dense::init(Rng& rng) {
  fill_uniform(weight.value, std::sqrt(6.0 / static_cast<double>(in_ + units_)), rng);
  bias.value.fill(0.0);
}

Tensor Dense::forward(const Tensor& x, Mode) {
  if (x.rank() < 1 || x.last() != in_) {
    throw ShapeError("time_dense: expected last axis " + std::to_string(in_) + ", got " + x.shape_string());
  }
  input_ = x;
  std::vector<std::size_t> shape = x.shape;
  shape.back() = units_;
  Tensor out(shape);
  const std::size_t rows = x.rows();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data.data() + r * in_;
    double* orow = out.data.data() + r * units_;
    for (std::size_t u = 0; u < units_; ++u) {
      const double* wr = weight.value.data.data() + u * in_;
      double acc = bias.value[u];
      for (std::size_t i = 0; i < in_; ++i) acc += wr[i] * xr[i];
      orow[u] = activate(act_, acc);
    }
  }
  output_ = out;
  return out;
}

Tensor Dense::backward(const Tensor& grad_out) {
  Tensor grad_in(input_.shape);
  const std::size_t rows = input_.rows();
  std::vector<double> dpre(units_);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = input_.data.data() + r * in_;
    double* dxr = grad_in.data.data() + r * in_;
    for (std::size_t u = 0; u < units_; ++u) {
      dpre[u] = grad_out[r * units_ + u] * activate_grad_from_output(act_, output_[r * units_ + u]);
    }
    for (std::size_t u = 0; u < units_; ++u) {
      const double d = dpre[u];
      if (d == 0.0) continue;
      bias.grad[u] += d;
      double* dwr = weight.grad.data.data() + u * in_;
      const double* wr = weight.value.data.data() + u * in_;
      for (std::size_t i = 0; i < in_; ++i) {
        dwr[i] += d * xr[i];
        dxr[i] += d * wr[i];
      }
    }
  }
  return grad_in;
}

}  // namespace sed::nn
