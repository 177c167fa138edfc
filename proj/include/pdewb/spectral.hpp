#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <utility>
#include <vector>

#include "pdewb/errors.hpp"
#include "pdewb/fft.hpp"
#include "pdewb/grid.hpp"

namespace pdewb {

inline constexpr double two_pi = 2.0 * std::numbers::pi;

/// Symmetric 2x2 tensor stored as (d11, d12, d22).
struct Tensor2 {
  double d11 = 0.0;
  double d12 = 0.0;
  double d22 = 0.0;

  static Tensor2 identity() { return {1.0, 0.0, 1.0}; }

  bool is_spd() const { return d11 > 0.0 && d11 * d22 - d12 * d12 > 0.0; }

  std::pair<double, double> eigenvalues() const {
    const double tr = d11 + d22;
    const double disc = std::sqrt(std::max(0.0, 0.25 * (d11 - d22) * (d11 - d22) + d12 * d12));
    return {0.5 * tr - disc, 0.5 * tr + disc};
  }

  friend bool operator==(const Tensor2&, const Tensor2&) = default;
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  double norm() const { return std::hypot(x, y); }
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline SpectralField2D fft2(const Field2D& field) {
  SpectralField2D out(field.grid);
  for (std::size_t i = 0; i < field.size(); ++i) out.coeffs[i] = field.values[i];
  fft2_inplace(field.grid.nx, field.grid.ny, out.coeffs.data());
  return out;
}

/// Inverse transform of a Hermitian spectrum. The imaginary residue is dropped
/// when it is below 1e-10 of the field norm; larger residue means the input
/// does not describe a real field.
inline Field2D ifft2(const SpectralField2D& spec) {
  std::vector<std::complex<double>> work = spec.coeffs;
  ifft2_inplace(spec.grid.nx, spec.grid.ny, work.data());
  Field2D out(spec.grid);
  double re2 = 0.0;
  double im2 = 0.0;
  for (std::size_t i = 0; i < work.size(); ++i) {
    out.values[i] = work[i].real();
    re2 += work[i].real() * work[i].real();
    im2 += work[i].imag() * work[i].imag();
  }
  if (std::sqrt(im2) > 1e-10 * (std::sqrt(re2) + std::sqrt(im2)))
    throw SymmetryError("spectrum is not Hermitian-symmetric; inverse would be complex");
  return out;
}

/// Angular wavenumbers 2*pi*m per axis, Nyquist carried as +n/2.
struct Wavenumbers {
  std::vector<double> kx;
  std::vector<double> ky;
};

inline Wavenumbers wavenumbers(const GridSpec& grid) {
  grid.validate();
  Wavenumbers w;
  w.kx.resize(grid.nx);
  w.ky.resize(grid.ny);
  for (int j = 0; j < grid.nx; ++j) w.kx[j] = two_pi * mode_index(j, grid.nx);
  for (int j = 0; j < grid.ny; ++j) w.ky[j] = two_pi * mode_index(j, grid.ny);
  return w;
}

/// Wavenumbers for odd-order derivatives: the Nyquist entry is zeroed so the
/// result of the derivative stays real.
inline Wavenumbers odd_wavenumbers(const GridSpec& grid) {
  Wavenumbers w = wavenumbers(grid);
  w.kx[grid.nx / 2] = 0.0;
  w.ky[grid.ny / 2] = 0.0;
  return w;
}

/// Applies a Fourier multiplier symbol(iy, ix) to a real field.
template <typename Symbol>
Field2D apply_multiplier(const Field2D& u, Symbol&& symbol) {
  SpectralField2D s = fft2(u);
  for (int iy = 0; iy < u.grid.ny; ++iy)
    for (int ix = 0; ix < u.grid.nx; ++ix) s(iy, ix) *= symbol(iy, ix);
  return ifft2(s);
}

inline std::pair<Field2D, Field2D> spectral_gradient(const Field2D& u) {
  const Wavenumbers k = odd_wavenumbers(u.grid);
  const std::complex<double> i(0.0, 1.0);
  SpectralField2D s = fft2(u);
  SpectralField2D sx = s;
  SpectralField2D sy = s;
  for (int iy = 0; iy < u.grid.ny; ++iy)
    for (int ix = 0; ix < u.grid.nx; ++ix) {
      sx(iy, ix) *= i * k.kx[ix];
      sy(iy, ix) *= i * k.ky[iy];
    }
  return {ifft2(sx), ifft2(sy)};
}

/// Fourier symbol of -div(D grad .) at (iy, ix): d11 kx^2 + 2 d12 kx ky + d22 ky^2.
/// The mixed term is odd in each axis and uses Nyquist-zeroed wavenumbers.
struct DiffusionSymbol {
  Wavenumbers even;
  Wavenumbers odd;
  Tensor2 d;

  DiffusionSymbol(const GridSpec& g, const Tensor2& tensor)
      : even(wavenumbers(g)), odd(odd_wavenumbers(g)), d(tensor) {}

  double operator()(int iy, int ix) const {
    const double kx = even.kx[ix];
    const double ky = even.ky[iy];
    return d.d11 * kx * kx + 2.0 * d.d12 * odd.kx[ix] * odd.ky[iy] + d.d22 * ky * ky;
  }
};

/// div(D grad u) for constant symmetric positive definite D.
inline Field2D diffusion_term(const Field2D& u, const Tensor2& d) {
  if (!d.is_spd()) throw DomainError("diffusion tensor must be symmetric positive definite");
  const DiffusionSymbol sym(u.grid, d);
  return apply_multiplier(u, [&](int iy, int ix) { return std::complex<double>(-sym(iy, ix), 0.0); });
}

/// Largest rounded radial integer wavenumber present on the grid.
inline int max_radial_mode(const GridSpec& grid) {
  const double mx = grid.nx / 2;
  const double my = grid.ny / 2;
  return static_cast<int>(std::lround(std::sqrt(mx * mx + my * my)));
}

inline int radial_mode(const GridSpec& grid, int iy, int ix) {
  const double mx = mode_index(ix, grid.nx);
  const double my = mode_index(iy, grid.ny);
  return static_cast<int>(std::lround(std::sqrt(mx * mx + my * my)));
}

inline void validate_band(const GridSpec& grid, const FrequencyBand& band) {
  if (band.k_min < 0 || band.k_min > band.k_max || band.k_max > max_radial_mode(grid))
    throw ConfigError("frequency band [" + std::to_string(band.k_min) + ", " +
                      std::to_string(band.k_max) + "] is invalid for grid " + to_string(grid));
}

/// Row-major (ny, nx) mask of spectral indices whose rounded radius lies in the band.
inline std::vector<bool> radial_band_mask(const GridSpec& grid, const FrequencyBand& band) {
  validate_band(grid, band);
  std::vector<bool> mask(grid.size());
  for (int iy = 0; iy < grid.ny; ++iy)
    for (int ix = 0; ix < grid.nx; ++ix) {
      const int r = radial_mode(grid, iy, ix);
      mask[static_cast<std::size_t>(iy) * grid.nx + ix] = r >= band.k_min && r <= band.k_max;
    }
  return mask;
}

} // namespace pdewb
