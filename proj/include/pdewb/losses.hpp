#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "pdewb/data.hpp"
#include "pdewb/errors.hpp"
#include "pdewb/pde.hpp"

namespace pdewb {

enum class LossMode { Data, Physics, Hybrid };

inline std::string_view to_string(LossMode m) {
  switch (m) {
  case LossMode::Data: return "data";
  case LossMode::Physics: return "physics";
  case LossMode::Hybrid: return "hybrid";
  }
  return "?";
}

inline LossMode parse_loss_mode(std::string_view s) {
  if (s == "data") return LossMode::Data;
  if (s == "physics") return LossMode::Physics;
  if (s == "hybrid") return LossMode::Hybrid;
  throw ConfigError("unknown loss mode '" + std::string(s) + "'");
}

struct LossConfig {
  LossMode mode = LossMode::Hybrid;
  double alpha = 0.5;  // read only in hybrid mode

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  }
};

/// One sample's contribution: its loss and d(batch loss)/d(pred), where the
/// batch loss averages sample losses.
struct SampleLoss {
  double value = 0.0;
  Field2D seed;
};

struct BatchLoss {
  double value = 0.0;
  std::vector<Field2D> seeds;
};

/// Mean squared error over the grid; seed scaled by batch_scale (1/B).
inline SampleLoss data_loss_term(const Field2D& pred, const Field2D& target, double batch_scale) {
  pred.check_same(target);
  const double P = static_cast<double>(pred.size());
  const double g = 2.0 * batch_scale / P;
  SampleLoss out{0.0, Field2D(pred.grid)};
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.values[i] - target.values[i];
    acc += d * d;
    out.seed.values[i] = g * d;
  }
  out.value = acc / P;
  return out;
}

/// Systems whose operator annihilates constants; their solutions are the
/// mean-zero representatives.
inline bool mean_gauged(SystemTag s) { return s == SystemTag::Poisson || s == SystemTag::AdvectionDiffusion; }

/// Smallest |s(k)| over k != 0. The zero mode of a mean-gauged residual is
/// weighted by it, so an offset costs as much as the slowest physical mode.
inline double gauge_weight(SystemTag system, const CoefficientSet& c, const GridSpec& grid) {
  const OperatorSymbol sym(system, c, grid);
  double w = std::numeric_limits<double>::infinity();
  for (int iy = 0; iy < grid.ny; ++iy)
    for (int ix = 0; ix < grid.nx; ++ix)
      if (iy != 0 || ix != 0) w = std::min(w, std::abs(sym(iy, ix)));
  return w;
}

/// Mean squared PDE residual; the seed is the operator adjoint applied to
/// the scaled residual. For mean-gauged systems the residual carries
/// gauge_weight * mean(pred) in its zero mode, which vanishes on the
/// mean-zero solution.
inline SampleLoss physics_loss_term(const Field2D& pred, const PdeSample& s, double batch_scale) {
  if (!is_steady(s.system))
    throw UnsupportedSystemError("physics loss needs a steady system, got " + std::string(to_string(s.system)));
  Field2D r = residual(s.system, pred, s.coeffs, s.source);
  const double c = mean_gauged(s.system) ? gauge_weight(s.system, s.coeffs, pred.grid) : 0.0;
  if (c != 0.0) {
    const double m = c * pred.mean();
    for (double& v : r.values) v += m;
  }
  const double P = static_cast<double>(pred.size());
  const double g = 2.0 * batch_scale / P;
  Field2D w(pred.grid);
  double acc = 0.0, wsum = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    acc += r.values[i] * r.values[i];
    w.values[i] = g * r.values[i];
    wsum += w.values[i];
  }
  Field2D seed = apply_operator_adjoint(s.system, w, s.coeffs);
  if (c != 0.0)
    for (double& v : seed.values) v += c * wsum / P;
  return {acc / P, std::move(seed)};
}

namespace detail {

inline const Field2D& require_solution(const PdeSample& s) {
  if (!s.solution) throw PreconditionError("data loss requires a solution field");
  return *s.solution;
}

} // namespace detail

/// Per-sample loss under cfg. Hybrid falls back to physics when the
/// solution is absent and takes the pure data path when alpha == 1.
inline SampleLoss sample_loss(const Field2D& pred, const PdeSample& s, const LossConfig& cfg, double batch_scale) {
  switch (cfg.mode) {
  case LossMode::Data: return data_loss_term(pred, detail::require_solution(s), batch_scale);
  case LossMode::Physics: return physics_loss_term(pred, s, batch_scale);
  case LossMode::Hybrid: break;
  }
  if (!s.solution || cfg.alpha == 0.0) return physics_loss_term(pred, s, batch_scale);
  if (cfg.alpha == 1.0) return data_loss_term(pred, *s.solution, batch_scale);
  SampleLoss d = data_loss_term(pred, *s.solution, batch_scale);
  const SampleLoss p = physics_loss_term(pred, s, batch_scale);
  const double a = cfg.alpha;
  d.value = a * d.value + (1.0 - a) * p.value;
  for (std::size_t i = 0; i < d.seed.size(); ++i) d.seed.values[i] = a * d.seed.values[i] + (1.0 - a) * p.seed.values[i];
  return d;
}

namespace detail {

template <typename Term>
BatchLoss batch_loss(std::size_t n, Term&& term) {
  if (n == 0) throw PreconditionError("empty batch");
  const double scale = 1.0 / static_cast<double>(n);
  BatchLoss out;
  out.seeds.reserve(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    SampleLoss s = term(i, scale);
    acc += s.value;
    out.seeds.push_back(std::move(s.seed));
  }
  out.value = acc * scale;
  return out;
}

} // namespace detail

inline BatchLoss loss_data(std::span<const Field2D> preds, std::span<const Field2D> targets) {
  if (preds.size() != targets.size()) throw ShapeError("prediction and target batch sizes differ");
  return detail::batch_loss(preds.size(),
                            [&](std::size_t i, double scale) { return data_loss_term(preds[i], targets[i], scale); });
}

inline BatchLoss loss_physics(std::span<const Field2D> preds, std::span<const PdeSample> samples) {
  if (preds.size() != samples.size()) throw ShapeError("prediction and sample batch sizes differ");
  return detail::batch_loss(preds.size(),
                            [&](std::size_t i, double scale) { return physics_loss_term(preds[i], samples[i], scale); });
}

inline BatchLoss loss_hybrid(std::span<const Field2D> preds, std::span<const PdeSample> samples, double alpha) {
  if (preds.size() != samples.size()) throw ShapeError("prediction and sample batch sizes differ");
  const LossConfig cfg{LossMode::Hybrid, alpha};
  cfg.validate();
  return detail::batch_loss(preds.size(),
                            [&](std::size_t i, double scale) { return sample_loss(preds[i], samples[i], cfg, scale); });
}

} // namespace pdewb
