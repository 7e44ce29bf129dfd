#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sedpipe/nn/layers.h"

namespace sed::nn {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected Adam update. `step` is the 1-based update count.
void adam_step(std::span<double> params, std::span<const double> grads, std::span<double> m,
               std::span<double> v, std::int64_t step, const AdamConfig& cfg);

void adam_step(const std::vector<Param*>& params, std::int64_t step, const AdamConfig& cfg);

}  // namespace sed::nn
