#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "pdewb/errors.hpp"
#include "pdewb/grid.hpp"
#include "pdewb/pde.hpp"

namespace pdewb {

/// Node coordinate along an axis of a Dirichlet grid (both walls are nodes).
inline double dirichlet_node(int i, int n) { return static_cast<double>(i) / (n - 1); }

/// Five-point flux-form discretization of -div(K grad p) on the nodes of a
/// Dirichlet grid with face permeabilities taken as the arithmetic mean of
/// the two adjacent nodes. Boundary nodes are held at zero.
class DarcyOperator {
public:
  explicit DarcyOperator(const Field2D& k) : grid_(k.grid), k_(k) {
    for (double v : k.values)
      if (!(v > 0.0)) throw DomainError("permeability must be strictly positive");
    inv_hx2_ = static_cast<double>((grid_.nx - 1) * (grid_.nx - 1));
    inv_hy2_ = static_cast<double>((grid_.ny - 1) * (grid_.ny - 1));
  }

  const GridSpec& grid() const { return grid_; }

  bool is_interior(int y, int x) const { return x > 0 && y > 0 && x < grid_.nx - 1 && y < grid_.ny - 1; }

  /// out = shift * p + scale * A p on interior nodes; boundary entries of out are zero.
  void apply(const std::vector<double>& p, std::vector<double>& out, double shift, double scale) const {
    const int nx = grid_.nx;
    const int ny = grid_.ny;
    out.assign(p.size(), 0.0);
    for (int y = 1; y < ny - 1; ++y)
      for (int x = 1; x < nx - 1; ++x) {
        const std::size_t c = static_cast<std::size_t>(y) * nx + x;
        const double kc = k_.values[c];
        const double ke = 0.5 * (kc + k_.values[c + 1]);
        const double kw = 0.5 * (kc + k_.values[c - 1]);
        const double kn = 0.5 * (kc + k_.values[c + nx]);
        const double ks = 0.5 * (kc + k_.values[c - nx]);
        const double pc = p[c];
        const double flux_x = ke * (p[c + 1] - pc) - kw * (pc - p[c - 1]);
        const double flux_y = kn * (p[c + nx] - pc) - ks * (pc - p[c - nx]);
        out[c] = shift * pc - scale * (flux_x * inv_hx2_ + flux_y * inv_hy2_);
      }
  }

  std::size_t interior_count() const {
    return static_cast<std::size_t>(grid_.nx - 2) * static_cast<std::size_t>(grid_.ny - 2);
  }

private:
  GridSpec grid_;
  Field2D k_;
  double inv_hx2_ = 0.0;
  double inv_hy2_ = 0.0;
};

/// Conjugate gradient on (shift I + scale A) p = rhs over interior nodes.
/// Stops at ||r|| <= rel_tol * ||rhs||; throws SolverError after max_iter.
inline void darcy_cg(const DarcyOperator& op, double shift, double scale, const std::vector<double>& rhs,
                     std::vector<double>& p, double rel_tol = 1e-10) {
  const std::size_t n = rhs.size();
  const std::size_t max_iter = 10 * op.interior_count();
  auto dot = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
  };
  std::vector<double> ap;
  op.apply(p, ap, shift, scale);
  std::vector<double> r(n, 0.0);
  const int nx = op.grid().nx;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(i / nx);
    const int x = static_cast<int>(i % nx);
    r[i] = op.is_interior(y, x) ? rhs[i] - ap[i] : 0.0;
  }
  double rhs_norm = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(i / nx);
    const int x = static_cast<int>(i % nx);
    if (op.is_interior(y, x)) rhs_norm += rhs[i] * rhs[i];
  }
  rhs_norm = std::sqrt(rhs_norm);
  if (rhs_norm == 0.0) {
    std::fill(p.begin(), p.end(), 0.0);
    return;
  }
  std::vector<double> d = r;
  double rr = dot(r, r);
  for (std::size_t it = 0; it < max_iter; ++it) {
    if (std::sqrt(rr) <= rel_tol * rhs_norm) return;
    op.apply(d, ap, shift, scale);
    const double alpha = rr / dot(d, ap);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] += alpha * d[i];
      r[i] -= alpha * ap[i];
    }
    const double rr_next = dot(r, r);
    const double beta = rr_next / rr;
    rr = rr_next;
    for (std::size_t i = 0; i < n; ++i) d[i] = r[i] + beta * d[i];
  }
  if (std::sqrt(rr) <= rel_tol * rhs_norm) return;
  throw SolverError("conjugate gradient did not converge in " + std::to_string(max_iter) + " iterations");
}

/// Implicit-Euler integration of dp/dt = div(K grad p) + f with homogeneous
/// Dirichlet walls, returning p at time.t_end.
inline Field2D solve_darcy(const Field2D& u0, const Field2D& k, const Field2D& f, const TimeSpec& time) {
  u0.check_same(k);
  u0.check_same(f);
  if (!(time.dt > 0.0) || time.t_end < 0.0) throw ConfigError("Darcy time step must be positive");
  const double steps_real = time.t_end / time.dt;
  const long steps = std::lround(steps_real);
  if (std::abs(steps_real - static_cast<double>(steps)) > 1e-9 * std::max(1.0, steps_real))
    throw ConfigError("Darcy dt must divide t_end");

  const DarcyOperator op(k);
  const GridSpec& g = u0.grid;
  for (int y = 0; y < g.ny; ++y)
    for (int x = 0; x < g.nx; ++x)
      if (!op.is_interior(y, x) && u0(y, x) != 0.0)
        throw PreconditionError("Darcy initial condition must vanish on the boundary");

  std::vector<double> p = u0.values;
  std::vector<double> rhs(p.size());
  for (long s = 0; s < steps; ++s) {
    for (std::size_t i = 0; i < p.size(); ++i) rhs[i] = p[i] + time.dt * f.values[i];
    darcy_cg(op, 1.0, time.dt, rhs, p);
  }
  for (int y = 0; y < g.ny; ++y)
    for (int x = 0; x < g.nx; ++x)
      if (!op.is_interior(y, x)) p[static_cast<std::size_t>(y) * g.nx + x] = 0.0;
  return Field2D(g, std::move(p));
}

} // namespace pdewb
