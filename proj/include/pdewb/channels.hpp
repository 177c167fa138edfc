#pragma once

#include <algorithm>
#include <array>
#include <string>
#include <vector>

#include "json.hpp"
#include "pdewb/data.hpp"
#include "pdewb/errors.hpp"

namespace pdewb {

/// Fixed input layout: source (f or u0) then the scalar coefficients, each
/// broadcast as a constant field; coefficients a system lacks are zero.
enum Channel : int {
  kSource = 0,
  kD11 = 1,
  kD12 = 2,
  kD22 = 3,
  kVx = 4,
  kVy = 5,
  kOmega = 6,
  kReaction = 7,
};

inline constexpr int layout_channels = 8;

/// Layout channels fed to a model (in model-input order) and the layout slot
/// that carries a field coefficient outside the layout, such as Darcy K.
struct InputSpec {
  std::vector<int> channels{0, 1, 2, 3, 4, 5, 6, 7};
  int k_slot = -1;

  int size() const { return static_cast<int>(channels.size()); }

  void validate() const {
    if (channels.empty()) throw LayoutError("input spec selects no channels");
    std::array<bool, layout_channels> seen{};
    for (int c : channels) {
      if (c < 0 || c >= layout_channels) throw LayoutError("channel index out of range: " + std::to_string(c));
      if (seen[c]) throw LayoutError("duplicate channel " + std::to_string(c));
      seen[c] = true;
    }
    if (!seen[kSource]) throw LayoutError("source channel must be selected");
    if (k_slot != -1 && (k_slot == kSource || k_slot < 0 || k_slot >= layout_channels || !seen[k_slot]))
      throw LayoutError("permeability slot must be a selected coefficient channel");
  }

  friend bool operator==(const InputSpec&, const InputSpec&) = default;
};

inline nlohmann::json to_json(const InputSpec& s) { return {{"channels", s.channels}, {"k_slot", s.k_slot}}; }

inline InputSpec input_spec_from_json(const nlohmann::json& j) {
  InputSpec s;
  s.channels = j.at("channels").get<std::vector<int>>();
  s.k_slot = j.at("k_slot").get<int>();
  s.validate();
  return s;
}

/// Smallest channel set that describes a task; used by scratch models.
/// Darcy K occupies slot 1.
inline InputSpec minimal_inputs(SystemTag system) {
  switch (system) {
  case SystemTag::Poisson: return {{0, 1, 2, 3}, -1};
  case SystemTag::AdvectionDiffusion: return {{0, 1, 2, 3, 4, 5}, -1};
  case SystemTag::Helmholtz: return {{0, 6}, -1};
  case SystemTag::ReactionDiffusion: return {{0, 1, 2, 3, 7}, -1};
  case SystemTag::ReactionAdvectionDiffusion: return {{0, 1, 2, 3, 4, 5, 7}, -1};
  case SystemTag::Darcy: return {{0, 1}, 1};
  }
  throw ConfigError("unknown system");
}

/// Constant value of each layout channel for a sample (channel 0 unused).
inline std::array<double, layout_channels> layout_constants(const CoefficientSet& c) {
  std::array<double, layout_channels> a{};
  if (c.d) {
    a[kD11] = c.d->d11;
    a[kD12] = c.d->d12;
    a[kD22] = c.d->d22;
  }
  if (c.v) {
    a[kVx] = c.v->x;
    a[kVy] = c.v->y;
  }
  if (c.omega) a[kOmega] = *c.omega;
  if (c.r) a[kReaction] = *c.r;
  return a;
}

/// Model input for one sample, layout [pixel][selected channel].
template <typename Real>
void assemble_input(const PdeSample& s, const InputSpec& spec, std::vector<Real>& out) {
  if (s.coeffs.k && spec.k_slot < 0)
    throw LayoutError("sample carries a permeability field but no channel is assigned to it");
  const std::size_t P = s.source.size();
  const std::size_t C = spec.channels.size();
  const auto consts = layout_constants(s.coeffs);
  out.resize(P * C);
  for (std::size_t ci = 0; ci < C; ++ci) {
    const int ch = spec.channels[ci];
    if (ch == kSource) {
      for (std::size_t p = 0; p < P; ++p) out[p * C + ci] = static_cast<Real>(s.source.values[p]);
    } else if (ch == spec.k_slot && s.coeffs.k) {
      for (std::size_t p = 0; p < P; ++p) out[p * C + ci] = static_cast<Real>(s.coeffs.k->values[p]);
    } else {
      const Real v = static_cast<Real>(consts[ch]);
      for (std::size_t p = 0; p < P; ++p) out[p * C + ci] = v;
    }
  }
}

} // namespace pdewb
