#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pdewb/errors.hpp"

namespace pdewb {

/// Uniform grid over the unit square. Periodic fields sample x_i = i/nx;
/// Dirichlet (Darcy) fields sample x_i = i/(nx-1) so both walls are nodes.
struct GridSpec {
  int nx = 0;
  int ny = 0;
  double lx = 1.0;
  double ly = 1.0;

  std::size_t size() const { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny); }

  void validate() const {
    if (nx < 8 || ny < 8 || nx % 2 != 0 || ny % 2 != 0)
      throw ConfigError("grid must be at least 8x8 with even extents, got " +
                        std::to_string(nx) + "x" + std::to_string(ny));
    if (lx != 1.0 || ly != 1.0)
      throw ConfigError("domain is fixed to the unit square");
  }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

inline std::string to_string(const GridSpec& g) {
  return std::to_string(g.nx) + "x" + std::to_string(g.ny);
}

/// Real field on a GridSpec, row-major with shape (ny, nx).
struct Field2D {
  GridSpec grid;
  std::vector<double> values;

  Field2D() = default;
  explicit Field2D(const GridSpec& g, double fill = 0.0) : grid(g), values(g.size(), fill) {}
  Field2D(const GridSpec& g, std::vector<double> v) : grid(g), values(std::move(v)) {
    if (values.size() != grid.size()) throw ShapeError("field value count does not match grid");
  }

  /// Samples fn(x, y) at periodic nodes (i/nx, j/ny).
  template <typename Fn>
  static Field2D sample(const GridSpec& g, Fn&& fn) {
    Field2D f(g);
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i)
        f(j, i) = fn(static_cast<double>(i) / g.nx, static_cast<double>(j) / g.ny);
    return f;
  }

  double& operator()(int y, int x) { return values[static_cast<std::size_t>(y) * grid.nx + x]; }
  double operator()(int y, int x) const { return values[static_cast<std::size_t>(y) * grid.nx + x]; }

  std::size_t size() const { return values.size(); }
  std::span<const double> span() const { return values; }

  bool all_finite() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
  }

  double mean() const {
    double s = 0.0;
    for (double v : values) s += v;
    return values.empty() ? 0.0 : s / static_cast<double>(values.size());
  }

  double norm2() const {
    double s = 0.0;
    for (double v : values) s += v * v;
    return std::sqrt(s);
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : values) m = std::max(m, std::abs(v));
    return m;
  }

  Field2D& operator+=(const Field2D& o) {
    check_same(o);
    for (std::size_t i = 0; i < values.size(); ++i) values[i] += o.values[i];
    return *this;
  }
  Field2D& operator-=(const Field2D& o) {
    check_same(o);
    for (std::size_t i = 0; i < values.size(); ++i) values[i] -= o.values[i];
    return *this;
  }
  Field2D& operator*=(double a) {
    for (double& v : values) v *= a;
    return *this;
  }
  friend Field2D operator+(Field2D a, const Field2D& b) { return a += b; }
  friend Field2D operator-(Field2D a, const Field2D& b) { return a -= b; }
  friend Field2D operator*(double a, Field2D f) { return f *= a; }
  friend Field2D operator*(Field2D f, double a) { return f *= a; }

  friend bool operator==(const Field2D&, const Field2D&) = default;

  void check_same(const Field2D& o) const {
    if (!(grid == o.grid)) throw ShapeError("field grids differ");
  }
};

/// Rounds every value to the nearest float, making the field exactly
/// representable in the on-disk f32 formats.
inline void quantize_f32(Field2D& f) {
  for (double& v : f.values) v = static_cast<double>(static_cast<float>(v));
}

inline double max_abs_diff(const Field2D& a, const Field2D& b) {
  a.check_same(b);
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values[i] - b.values[i]));
  return m;
}

inline double relative_l2(const Field2D& approx, const Field2D& exact) {
  return (approx - exact).norm2() / exact.norm2();
}

/// Complex coefficients in standard DFT layout, shape (ny, nx).
struct SpectralField2D {
  GridSpec grid;
  std::vector<std::complex<double>> coeffs;

  SpectralField2D() = default;
  explicit SpectralField2D(const GridSpec& g) : grid(g), coeffs(g.size()) {}

  std::complex<double>& operator()(int ky, int kx) {
    return coeffs[static_cast<std::size_t>(ky) * grid.nx + kx];
  }
  std::complex<double> operator()(int ky, int kx) const {
    return coeffs[static_cast<std::size_t>(ky) * grid.nx + kx];
  }
};

/// Inclusive band of rounded radial integer wavenumbers.
struct FrequencyBand {
  int k_min = 0;
  int k_max = 0;
};

/// Signed integer mode of DFT index j on an n-point axis; the Nyquist index
/// n/2 maps to +n/2.
constexpr int mode_index(int j, int n) noexcept { return j <= n / 2 ? j : j - n; }

} // namespace pdewb
