#include "sedpipe/nn/optim.h"

#include <cmath>

#include "sedpipe/errors.h"

namespace sed::nn {

void adam_step(std::span<double> params, std::span<const double> grads, std::span<double> m,
               std::span<double> v, std::int64_t step, const AdamConfig& cfg) {
  if (step < 1) throw StateError("adam step count must be >= 1");
  if (grads.size() != params.size() || m.size() != params.size() || v.size() != params.size()) {
    throw ShapeError("adam: parameter, gradient and moment sizes differ");
  }
  const double t = static_cast<double>(step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    params[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

void adam_step(const std::vector<Param*>& params, std::int64_t step, const AdamConfig& cfg) {
  for (Param* p : params) adam_step(p->value.data, p->grad.data, p->m.data, p->v.data, step, cfg);
}

}  // namespace sed::nn
