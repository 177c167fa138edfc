#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <optional>
#include <string>
#include <string_view>

#include "pdewb/errors.hpp"
#include "pdewb/grid.hpp"
#include "pdewb/spectral.hpp"

namespace pdewb {

enum class SystemTag : std::uint8_t {
  Poisson = 0,
  AdvectionDiffusion = 1,
  Helmholtz = 2,
  ReactionDiffusion = 3,
  ReactionAdvectionDiffusion = 4,
  Darcy = 5,
};

inline constexpr std::array<SystemTag, 6> all_systems{
    SystemTag::Poisson,           SystemTag::AdvectionDiffusion,         SystemTag::Helmholtz,
    SystemTag::ReactionDiffusion, SystemTag::ReactionAdvectionDiffusion, SystemTag::Darcy};

inline constexpr std::array<SystemTag, 3> steady_systems{
    SystemTag::Poisson, SystemTag::AdvectionDiffusion, SystemTag::Helmholtz};

inline bool is_steady(SystemTag s) {
  return s == SystemTag::Poisson || s == SystemTag::AdvectionDiffusion || s == SystemTag::Helmholtz;
}

inline std::string_view to_string(SystemTag s) {
  switch (s) {
  case SystemTag::Poisson: return "poisson";
  case SystemTag::AdvectionDiffusion: return "advection-diffusion";
  case SystemTag::Helmholtz: return "helmholtz";
  case SystemTag::ReactionDiffusion: return "reaction-diffusion";
  case SystemTag::ReactionAdvectionDiffusion: return "reaction-advection-diffusion";
  case SystemTag::Darcy: return "darcy";
  }
  return "unknown";
}

inline SystemTag parse_system(std::string_view name) {
  for (SystemTag s : all_systems)
    if (to_string(s) == name) return s;
  if (name == "ad") return SystemTag::AdvectionDiffusion;
  if (name == "rd") return SystemTag::ReactionDiffusion;
  if (name == "rad") return SystemTag::ReactionAdvectionDiffusion;
  throw ConfigError("unknown PDE system '" + std::string(name) + "'");
}

/// PDE parameters. Which members are set depends on the system.
struct CoefficientSet {
  std::optional<Tensor2> d;      // diffusion tensor
  std::optional<Vec2> v;         // velocity
  std::optional<double> omega;   // Helmholtz shift
  std::optional<double> r;       // linear reaction rate
  std::optional<double> psi;     // advection/diffusion ratio the velocity was calibrated to
  std::optional<Field2D> k;      // Darcy permeability

  friend bool operator==(const CoefficientSet&, const CoefficientSet&) = default;
};

inline void validate_coefficients(SystemTag system, const CoefficientSet& c) {
  const bool need_d = system != SystemTag::Helmholtz && system != SystemTag::Darcy;
  const bool need_v = system == SystemTag::AdvectionDiffusion || system == SystemTag::ReactionAdvectionDiffusion;
  const bool need_omega = system == SystemTag::Helmholtz;
  const bool need_r = system == SystemTag::ReactionDiffusion || system == SystemTag::ReactionAdvectionDiffusion;
  const bool need_k = system == SystemTag::Darcy;
  const bool allow_psi = system == SystemTag::AdvectionDiffusion;
  const std::string name(to_string(system));
  auto check = [&](bool present, bool needed, const char* what) {
    if (present != needed)
      throw ConfigError(std::string("coefficient '") + what + (needed ? "' missing" : "' not allowed") +
                        " for " + name);
  };
  check(c.d.has_value(), need_d, "D");
  check(c.v.has_value(), need_v, "v");
  check(c.omega.has_value(), need_omega, "omega");
  check(c.r.has_value(), need_r, "r");
  check(c.k.has_value(), need_k, "K");
  if (c.psi && !allow_psi) throw ConfigError("coefficient 'psi' not allowed for " + name);
  if (c.d && !c.d->is_spd()) throw DomainError("diffusion tensor must be symmetric positive definite");
  if (c.omega && !(*c.omega > 0.0)) throw DomainError("omega must be positive");
}

struct TimeSpec {
  double t_end = 1.0;
  double dt = 1e-2;  // used by the Darcy stepper only
};

/// Fourier symbol s(k) of the linear spatial operator, i.e. G(u)^ = s * u^.
/// Covers every periodic system; reaction adds r, advection adds i v.k.
class OperatorSymbol {
public:
  OperatorSymbol(SystemTag system, const CoefficientSet& c, const GridSpec& grid)
      : system_(system), even_(wavenumbers(grid)), odd_(odd_wavenumbers(grid)) {
    if (system == SystemTag::Darcy) throw UnsupportedSystemError("Darcy has no Fourier symbol");
    validate_coefficients(system, c);
    if (c.d) d_ = *c.d;
    if (c.v) v_ = *c.v;
    if (c.omega) omega_ = *c.omega;
    if (c.r) r_ = *c.r;
  }

  std::complex<double> operator()(int iy, int ix) const {
    const double kx = even_.kx[ix];
    const double ky = even_.ky[iy];
    if (system_ == SystemTag::Helmholtz) return {kx * kx + ky * ky + omega_, 0.0};
    const double diff = d_.d11 * kx * kx + 2.0 * d_.d12 * odd_.kx[ix] * odd_.ky[iy] + d_.d22 * ky * ky;
    const double adv = v_.x * odd_.kx[ix] + v_.y * odd_.ky[iy];
    return {diff + r_, adv};
  }

  /// Whether the zero mode of the symbol vanishes (mean-free solvability).
  bool singular_at_zero() const {
    return system_ == SystemTag::Poisson || system_ == SystemTag::AdvectionDiffusion;
  }

private:
  SystemTag system_;
  Wavenumbers even_;
  Wavenumbers odd_;
  Tensor2 d_{};
  Vec2 v_{};
  double omega_ = 0.0;
  double r_ = 0.0;
};

inline void require_steady(SystemTag system) {
  if (!is_steady(system))
    throw UnsupportedSystemError(std::string(to_string(system)) + " is not a steady-state system");
}

/// G(u; lambda) for a steady system, spectral derivatives throughout.
inline Field2D apply_operator(SystemTag system, const Field2D& u, const CoefficientSet& c) {
  require_steady(system);
  const OperatorSymbol sym(system, c, u.grid);
  return apply_multiplier(u, sym);
}

/// Adjoint of apply_operator with respect to the grid inner product.
inline Field2D apply_operator_adjoint(SystemTag system, const Field2D& w, const CoefficientSet& c) {
  require_steady(system);
  const OperatorSymbol sym(system, c, w.grid);
  return apply_multiplier(w, [&](int iy, int ix) { return std::conj(sym(iy, ix)); });
}

/// G(u; lambda) - f.
inline Field2D residual(SystemTag system, const Field2D& u, const CoefficientSet& c, const Field2D& f) {
  u.check_same(f);
  Field2D r = apply_operator(system, u, c);
  r -= f;
  return r;
}

inline Field2D mean_projected(Field2D f) {
  const double m = f.mean();
  for (double& v : f.values) v -= m;
  return f;
}

/// Fourier-diagonal solve of a periodic steady system. Poisson and
/// advection-diffusion return the mean-zero solution for the mean-projected source.
inline Field2D solve_steady(SystemTag system, const Field2D& f, const CoefficientSet& c) {
  require_steady(system);
  const OperatorSymbol sym(system, c, f.grid);
  const bool project = sym.singular_at_zero();
  SpectralField2D s = fft2(project ? mean_projected(f) : f);
  for (int iy = 0; iy < f.grid.ny; ++iy)
    for (int ix = 0; ix < f.grid.nx; ++ix) {
      if (project && iy == 0 && ix == 0) {
        s(0, 0) = 0.0;
        continue;
      }
      const std::complex<double> sk = sym(iy, ix);
      if (std::abs(sk) < 1e-14)
        throw SingularSymbolError("operator symbol vanishes at mode (" + std::to_string(iy) + ", " +
                                  std::to_string(ix) + ")");
      s(iy, ix) /= sk;
    }
  return ifft2(s);
}

/// Exact per-mode exponential integrator for du/dt + G(u) = f with linear reaction.
inline Field2D evolve_linear(SystemTag system, const Field2D& u0, const Field2D& f, const CoefficientSet& c,
                             const TimeSpec& time) {
  if (system != SystemTag::ReactionDiffusion && system != SystemTag::ReactionAdvectionDiffusion)
    throw UnsupportedSystemError(std::string(to_string(system)) + " is not a linear evolution system");
  u0.check_same(f);
  if (time.t_end < 0.0) throw ConfigError("t_end must be nonnegative");
  const OperatorSymbol sym(system, c, u0.grid);
  const double t = time.t_end;
  if (t == 0.0) return u0;
  SpectralField2D su = fft2(u0);
  const SpectralField2D sf = fft2(f);
  for (int iy = 0; iy < u0.grid.ny; ++iy)
    for (int ix = 0; ix < u0.grid.nx; ++ix) {
      const std::complex<double> s = sym(iy, ix);
      const std::complex<double> st = s * t;
      const std::complex<double> decay = std::exp(-st);
      std::complex<double> phi;  // (1 - e^{-st}) / s
      if (std::abs(s) < 1e-12)
        phi = t;
      else if (std::abs(st) < 1e-5)
        phi = t * (1.0 - st / 2.0 + st * st / 6.0);
      else
        phi = (1.0 - decay) / s;
      su(iy, ix) = decay * su(iy, ix) + phi * sf(iy, ix);
    }
  return ifft2(su);
}

} // namespace pdewb
