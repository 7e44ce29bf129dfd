#include <cmath>

#include "sedpipe/errors.h"
#include "sedpipe/nn/layers.h"

namespace sed::nn {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

BiGru::BiGru(std::size_t in_features, std::size_t units) : in_(in_features), units_(units) {
  if (units == 0) throw ConfigError("bigru needs at least one unit");
  for (Direction* d : {&fwd, &bwd}) {
    const std::string prefix = d == &fwd ? "fwd_" : "bwd_";
    d->w = Param(prefix + "w", {3 * units, in_features});
    d->u = Param(prefix + "u", {3 * units, units});
    d->b = Param(prefix + "b", {3 * units});
  }
}

std::string BiGru::descriptor() const {
  return "bigru(" + std::to_string(in_) + "->2x" + std::to_string(units_) + ")";
}

std::vector<Param*> BiGru::params() {
  return {&fwd.w, &fwd.u, &fwd.b, &bwd.w, &bwd.u, &bwd.b};
}

void BiGru::init(Rng& rng) {
  const double w_limit = std::sqrt(6.0 / static_cast<double>(in_ + units_));
  const double u_limit = 1.0 / std::sqrt(static_cast<double>(units_));
  for (Direction* d : {&fwd, &bwd}) {
    for (auto& v : d->w.value.data) v = rng.uniform(-w_limit, w_limit);
    for (auto& v : d->u.value.data) v = rng.uniform(-u_limit, u_limit);
    d->b.value.fill(0.0);
  }
}

Tensor BiGru::forward(const Tensor& x, Mode) {
  if (x.rank() != 3 || x.dim(2) != in_) {
    throw ShapeError("bigru: expected (N, T, " + std::to_string(in_) + "), got " + x.shape_string());
  }
  input_ = x;
  Tensor out({x.dim(0), x.dim(1), 2 * units_});
  run_direction(x, fwd, false, out, 0, cache_fwd_);
  run_direction(x, bwd, true, out, units_, cache_bwd_);
  return out;
}

void BiGru::run_direction(const Tensor& x, Direction& dir, bool reverse, Tensor& out, std::size_t offset,
                          StepCache& cache) {
  const std::size_t n_batch = x.dim(0), n_t = x.dim(1), d_in = in_, u_n = units_;
  const std::size_t cells = n_batch * n_t * u_n;
  cache.h_prev.assign(cells, 0.0);
  cache.z.assign(cells, 0.0);
  cache.r.assign(cells, 0.0);
  cache.c.assign(cells, 0.0);
  cache.rh.assign(cells, 0.0);

  const double* w = dir.w.value.data.data();
  const double* u = dir.u.value.data.data();
  const double* b = dir.b.value.data.data();
  std::vector<double> h(u_n), a(3 * u_n);
  for (std::size_t n = 0; n < n_batch; ++n) {
    std::fill(h.begin(), h.end(), 0.0);
    for (std::size_t s = 0; s < n_t; ++s) {
      const std::size_t t = reverse ? n_t - 1 - s : s;
      const double* xt = x.data.data() + (n * n_t + t) * d_in;
      const std::size_t cell = (n * n_t + t) * u_n;

      for (std::size_t g = 0; g < 3 * u_n; ++g) {
        const double* wr = w + g * d_in;
        double acc = b[g];
        for (std::size_t i = 0; i < d_in; ++i) acc += wr[i] * xt[i];
        a[g] = acc;
      }
      for (std::size_t g = 0; g < 2 * u_n; ++g) {
        const double* ur = u + g * u_n;
        double acc = 0.0;
        for (std::size_t j = 0; j < u_n; ++j) acc += ur[j] * h[j];
        a[g] += acc;
      }
      for (std::size_t j = 0; j < u_n; ++j) {
        cache.h_prev[cell + j] = h[j];
        cache.z[cell + j] = sigmoid(a[j]);
        cache.r[cell + j] = sigmoid(a[u_n + j]);
        cache.rh[cell + j] = cache.r[cell + j] * h[j];
      }
      for (std::size_t j = 0; j < u_n; ++j) {
        const double* ur = u + (2 * u_n + j) * u_n;
        double acc = a[2 * u_n + j];
        for (std::size_t k = 0; k < u_n; ++k) acc += ur[k] * cache.rh[cell + k];
        cache.c[cell + j] = std::tanh(acc);
      }
      for (std::size_t j = 0; j < u_n; ++j) {
        const double z = cache.z[cell + j];
        h[j] = z * h[j] + (1.0 - z) * cache.c[cell + j];
        out[(n * n_t + t) * 2 * u_n + offset + j] = h[j];
      }
    }
  }
}

Tensor BiGru::backward(const Tensor& grad_out) {
  Tensor grad_in(input_.shape);
  back_direction(grad_out, fwd, false, 0, cache_fwd_, grad_in);
  back_direction(grad_out, bwd, true, units_, cache_bwd_, grad_in);
  return grad_in;
}

void BiGru::back_direction(const Tensor& grad_out, Direction& dir, bool reverse, std::size_t offset,
                           const StepCache& cache, Tensor& grad_in) {
  const std::size_t n_batch = input_.dim(0), n_t = input_.dim(1), d_in = in_, u_n = units_;
  const double* w = dir.w.value.data.data();
  const double* u = dir.u.value.data.data();
  double* dw = dir.w.grad.data.data();
  double* du = dir.u.grad.data.data();
  double* db = dir.b.grad.data.data();

  std::vector<double> dh(u_n), dh_next(u_n), dh_prev(u_n), da(3 * u_n), d_rh(u_n);
  for (std::size_t n = 0; n < n_batch; ++n) {
    std::fill(dh_next.begin(), dh_next.end(), 0.0);
    for (std::size_t s = n_t; s-- > 0;) {
      const std::size_t t = reverse ? n_t - 1 - s : s;
      const std::size_t cell = (n * n_t + t) * u_n;
      const double* xt = input_.data.data() + (n * n_t + t) * d_in;
      double* dxt = grad_in.data.data() + (n * n_t + t) * d_in;
      const double* h_prev = cache.h_prev.data() + cell;
      const double* z = cache.z.data() + cell;
      const double* r = cache.r.data() + cell;
      const double* c = cache.c.data() + cell;
      const double* rh = cache.rh.data() + cell;

      for (std::size_t j = 0; j < u_n; ++j) {
        dh[j] = grad_out[(n * n_t + t) * 2 * u_n + offset + j] + dh_next[j];
        const double dz = dh[j] * (h_prev[j] - c[j]);
        const double dc = dh[j] * (1.0 - z[j]);
        dh_prev[j] = dh[j] * z[j];
        da[j] = dz * z[j] * (1.0 - z[j]);
        da[2 * u_n + j] = dc * (1.0 - c[j] * c[j]);
      }
      // Candidate path through r * h_prev.
      std::fill(d_rh.begin(), d_rh.end(), 0.0);
      for (std::size_t j = 0; j < u_n; ++j) {
        const double dac = da[2 * u_n + j];
        const double* ur = u + (2 * u_n + j) * u_n;
        double* dur = du + (2 * u_n + j) * u_n;
        for (std::size_t k = 0; k < u_n; ++k) {
          d_rh[k] += ur[k] * dac;
          dur[k] += dac * rh[k];
        }
      }
      for (std::size_t k = 0; k < u_n; ++k) {
        const double dr = d_rh[k] * h_prev[k];
        dh_prev[k] += d_rh[k] * r[k];
        da[u_n + k] = dr * r[k] * (1.0 - r[k]);
      }
      // Update and reset gates' recurrent terms.
      for (std::size_t g = 0; g < 2 * u_n; ++g) {
        const double dag = da[g];
        if (dag == 0.0) continue;
        const double* ur = u + g * u_n;
        double* dur = du + g * u_n;
        for (std::size_t k = 0; k < u_n; ++k) {
          dur[k] += dag * h_prev[k];
          dh_prev[k] += ur[k] * dag;
        }
      }
      for (std::size_t g = 0; g < 3 * u_n; ++g) {
        const double dag = da[g];
        db[g] += dag;
        if (dag == 0.0) continue;
        const double* wr = w + g * d_in;
        double* dwr = dw + g * d_in;
        for (std::size_t i = 0; i < d_in; ++i) {
          dwr[i] += dag * xt[i];
          dxt[i] += wr[i] * dag;
        }
      }
      dh_next = dh_prev;
    }
  }
}

}  // namespace sed::nn
