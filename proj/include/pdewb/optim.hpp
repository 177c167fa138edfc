#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "pdewb/errors.hpp"
#include "pdewb/fno.hpp"

namespace pdewb {

inline double cosine_lr(long step, long total_steps, double lr_max, double lr_min) {
  if (total_steps <= 0 || step < 0 || step > total_steps) throw ConfigError("cosine_lr step outside [0, total]");
  const double t = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * t));
}

/// Adam moments mirror the parameter tensors.
template <typename Real>
struct AdamState {
  FnoParams<Real> m;
  FnoParams<Real> v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState init(const FnoConfig& cfg) {
    AdamState s;
    s.m = FnoParams<Real>::zeros(cfg);
    s.v = FnoParams<Real>::zeros(cfg);
    return s;
  }
};

namespace detail {

template <typename Real>
std::vector<std::span<Real>> tensor_spans(FnoParams<Real>& p) {
  std::vector<std::span<Real>> out;
  p.for_each_tensor([&](const std::string&, std::span<Real> t) { out.push_back(t); });
  return out;
}

} // namespace detail

/// Bias-corrected Adam update. A non-finite gradient raises NumericError
/// before anything is modified.
template <typename Real>
void adam_step(FnoParams<Real>& params, const FnoParams<Real>& grads, AdamState<Real>& state, double lr) {
  if (!(grads.config == params.config) || !(state.m.config == params.config))
    throw ShapeError("optimizer shapes do not match parameters");
  grads.for_each_tensor([](const std::string& name, std::span<const Real> g) {
    for (Real x : g)
      if (!std::isfinite(x)) throw NumericError("non-finite gradient in tensor '" + name + "'");
  });
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  auto p = detail::tensor_spans(params);
  std::vector<std::span<const Real>> g;
  grads.for_each_tensor([&](const std::string&, std::span<const Real> t) { g.push_back(t); });
  auto m = detail::tensor_spans(state.m);
  auto v = detail::tensor_spans(state.v);
  for (std::size_t t = 0; t < p.size(); ++t) {
    for (std::size_t i = 0; i < p[t].size(); ++i) {
      const double gi = g[t][i];
      const double mi = state.beta1 * m[t][i] + (1.0 - state.beta1) * gi;
      const double vi = state.beta2 * v[t][i] + (1.0 - state.beta2) * gi * gi;
      m[t][i] = static_cast<Real>(mi);
      v[t][i] = static_cast<Real>(vi);
      const double upd = lr * (mi / c1) / (std::sqrt(vi / c2) + state.eps);
      p[t][i] = static_cast<Real>(p[t][i] - upd);
    }
  }
}

} // namespace pdewb
