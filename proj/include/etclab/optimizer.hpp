#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "etclab/encoder.hpp"
#include "etclab/errors.hpp"
#include "etclab/tensor.hpp"

namespace etclab {

struct RAdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.01;
  double eps = 1e-8;
};

// First and second moment buffers, one pair per parameter tensor in
// canonical for_each_param order.
template <typename T>
struct OptState {
  std::vector<Tensor<T>> m, v;
  long long step = 0;  // completed steps; the next call runs step+1
};

template <typename T>
OptState<T> init_opt_state(const EncoderParams<T>& params) {
  OptState<T> s;
  for_each_param(params, [&s](const std::string&, const Tensor<T>& t) {
    s.m.emplace_back(t.shape);
    s.v.emplace_back(t.shape);
  });
  return s;
}

// base_lr * (1 + cos(pi * step/total)) / 2, clamped to the final value (0)
// past the end of the schedule.
inline double cosine_lr(long long step, long long total_steps, double base_lr) {
  if (total_steps <= 0 || step < 0) throw DataError("cosine schedule needs step range");
  if (step >= total_steps) return 0.0;
  constexpr double kPi = 3.14159265358979323846;
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return base_lr * (1.0 + std::cos(kPi * frac)) / 2.0;
}

// Scales all gradients so their global L2 norm is at most max_norm.
// Returns the pre-clip norm. max_norm <= 0 disables clipping.
template <typename T>
double clip_global_norm(std::vector<Tensor<T>>& grads, double max_norm) {
  double sq = 0;
  for (const Tensor<T>& g : grads)
    for (std::size_t i = 0; i < g.numel(); ++i) {
      const double x = static_cast<double>(g[i]);
      sq += x * x;
    }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const T scale = static_cast<T>(max_norm / norm);
    for (Tensor<T>& g : grads)
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] *= scale;
  }
  return norm;
}

// Per-step rectification terms of the published update rule. The variance
// estimate engages only once rho_t exceeds 4; with beta2 = 0.999 that means
// steps 1..4 apply bias-corrected momentum alone.
struct RAdamTerms {
  double b1_pow, b2_pow;  // beta^t bias-correction powers
  double rho_t;
  double r_t;       // 1 when not rectified
  bool rectified;
};

inline RAdamTerms radam_terms(long long t, double beta1, double beta2) {
  RAdamTerms w;
  w.b1_pow = std::pow(beta1, static_cast<double>(t));
  w.b2_pow = std::pow(beta2, static_cast<double>(t));
  const double rho_inf = 2.0 / (1.0 - beta2) - 1.0;
  w.rho_t = rho_inf - 2.0 * static_cast<double>(t) * w.b2_pow / (1.0 - w.b2_pow);
  w.rectified = w.rho_t > 4.0;
  w.r_t = 1.0;
  if (w.rectified)
    w.r_t = std::sqrt(((w.rho_t - 4.0) * (w.rho_t - 2.0) * rho_inf) /
                      ((rho_inf - 4.0) * (rho_inf - 2.0) * w.rho_t));
  return w;
}

// One tensor's update. Moment math runs in 64-bit regardless of parameter
// precision; weight decay is decoupled and multiplicative.
template <typename T>
void radam_update_tensor(Tensor<T>& p, const Tensor<T>& g, Tensor<T>& m, Tensor<T>& v,
                         const RAdamConfig& cfg, double lr_now, const RAdamTerms& w,
                         const std::string& name, long long t) {
  if (!g.same_shape(p)) throw std::logic_error("gradient shape mismatch for " + name);
  for (std::size_t i = 0; i < p.numel(); ++i) {
    const double gi = static_cast<double>(g[i]);
    if (!std::isfinite(gi))
      throw DivergenceError("divergence: non-finite gradient in " + name + " at step " +
                            std::to_string(t));
    const double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * gi;
    const double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * gi * gi;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    const double m_hat = mi / (1.0 - w.b1_pow);
    const double update = w.rectified
                              ? lr_now * w.r_t * m_hat / (std::sqrt(vi / (1.0 - w.b2_pow)) + cfg.eps)
                              : lr_now * m_hat;
    double pi = static_cast<double>(p[i]);
    pi *= 1.0 - lr_now * cfg.weight_decay;
    pi -= update;
    p[i] = static_cast<T>(pi);
  }
}

template <typename T>
void radam_step(EncoderParams<T>& params, const std::vector<Tensor<T>>& grads,
                OptState<T>& state, const RAdamConfig& cfg, double lr_now) {
  const long long t = state.step + 1;
  const RAdamTerms w = radam_terms(t, cfg.beta1, cfg.beta2);
  std::size_t slot = 0;
  for_each_param(params, [&](const std::string& name, Tensor<T>& p) {
    radam_update_tensor(p, grads[slot], state.m[slot], state.v[slot], cfg, lr_now, w, name, t);
    ++slot;
  });
  state.step = t;
}

}  // namespace etclab
