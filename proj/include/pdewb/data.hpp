#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "pdewb/darcy.hpp"
#include "pdewb/errors.hpp"
#include "pdewb/grid.hpp"
#include "pdewb/parallel.hpp"
#include "pdewb/pde.hpp"
#include "pdewb/rng.hpp"
#include "pdewb/spectral.hpp"

namespace pdewb {

/// Open interval (lo, hi) a coefficient is drawn from uniformly.
struct RangeSpec {
  double lo = 0.0;
  double hi = 0.0;

  void validate() const {
    if (!(lo < hi)) throw ConfigError("range requires lo < hi");
  }
  bool contains(double x) const { return x >= lo && x <= hi; }
  double draw(Rng& rng) const { return rng.uniform(lo, hi); }

  friend bool operator==(const RangeSpec&, const RangeSpec&) = default;
};

inline nlohmann::json to_json(const RangeSpec& r) { return nlohmann::json::array({r.lo, r.hi}); }

/// Gaussian radial-basis source on a square lattice of centers.
struct SourceSpec {
  int n_centers = 144;
  double sigma_rbf = 1.0 / 32.0;
  double sparsity = 0.5;  // probability that a center is kept

  int side() const { return static_cast<int>(std::lround(std::sqrt(static_cast<double>(n_centers)))); }

  void validate() const {
    if (n_centers < 1 || side() * side() != n_centers) throw ConfigError("n_centers must be a perfect square");
    if (!(sigma_rbf > 0.0)) throw ConfigError("sigma_rbf must be positive");
    if (!(sparsity > 0.0 && sparsity < 1.0)) throw ConfigError("sparsity must lie in (0, 1)");
  }
};

/// Per-center amplitudes p_i ~ U(0, 1), zeroed where the Bernoulli(sparsity)
/// keep-mask drops the center. Two draws per center, mask first.
inline std::vector<double> draw_rbf_weights(const SourceSpec& spec, Rng& rng) {
  spec.validate();
  std::vector<double> w(spec.n_centers);
  for (double& p : w) {
    const bool keep = rng.bernoulli(spec.sparsity);
    const double amp = rng.uniform();
    p = keep ? amp : 0.0;
  }
  return w;
}

/// sum_i w_i exp(-|x - c_i|^2 / (2 sigma^2)) with minimum-image periodic distance;
/// center (a, b) of the lattice sits at (a/side, b/side).
inline Field2D rbf_field(const SourceSpec& spec, std::span<const double> weights, const GridSpec& grid) {
  spec.validate();
  grid.validate();
  if (weights.size() != static_cast<std::size_t>(spec.n_centers)) throw ShapeError("one weight per center required");
  const int side = spec.side();
  const double inv2s2 = 1.0 / (2.0 * spec.sigma_rbf * spec.sigma_rbf);
  auto profile = [&](double c, int n) {
    std::vector<double> g(n);
    for (int i = 0; i < n; ++i) {
      double d = static_cast<double>(i) / n - c;
      d -= std::round(d);
      g[i] = std::exp(-d * d * inv2s2);
    }
    return g;
  };
  Field2D f(grid);
  for (int a = 0; a < side; ++a) {
    for (int b = 0; b < side; ++b) {
      const double w = weights[static_cast<std::size_t>(a) * side + b];
      if (w == 0.0) continue;
      const auto gx = profile(static_cast<double>(a) / side, grid.nx);
      const auto gy = profile(static_cast<double>(b) / side, grid.ny);
      for (int y = 0; y < grid.ny; ++y) {
        const double wy = w * gy[y];
        for (int x = 0; x < grid.nx; ++x) f(y, x) += wy * gx[x];
      }
    }
  }
  return f;
}

inline Field2D sample_source(const SourceSpec& spec, Rng& rng, const GridSpec& grid) {
  const auto w = draw_rbf_weights(spec, rng);
  return rbf_field(spec, w, grid);
}

/// R(theta)^T diag(e1, e2) R(theta).
inline Tensor2 diffusion_from_eigen(double e1, double e2, double theta) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  return {c * c * e1 + s * s * e2, c * s * (e2 - e1), s * s * e1 + c * c * e2};
}

inline Tensor2 sample_diffusion(const RangeSpec& range_e, Rng& rng) {
  range_e.validate();
  if (!(range_e.lo > 0.0)) throw ConfigError("diffusion eigenvalues must be positive");
  const double e1 = range_e.draw(rng);
  const double e2 = range_e.draw(rng);
  const double theta = rng.uniform(0.0, two_pi);
  return diffusion_from_eigen(e1, e2, theta);
}

/// ||v . grad u|| / ||div(D grad u)|| with discrete L2 norms.
inline double measure_psi(const Field2D& u, const Tensor2& d, const Vec2& v) {
  const auto [ux, uy] = spectral_gradient(u);
  Field2D adv = v.x * ux + v.y * uy;
  const double den = diffusion_term(u, d).norm2();
  return den > 0.0 ? adv.norm2() / den : 0.0;
}

struct PsiCalibration {
  Vec2 v;
  Field2D u;  // advection-diffusion solution at v
  double psi_achieved = 0.0;
  int iterations = 0;
};

/// Raised when the fixed point misses tolerance; carries the closest iterate.
class CalibrationError : public NumericError {
public:
  CalibrationError(const std::string& what, PsiCalibration best) : NumericError(what), best_(std::move(best)) {}
  const PsiCalibration& best() const { return best_; }

private:
  PsiCalibration best_;
};

inline constexpr int psi_max_iterations = 25;
inline constexpr double psi_rel_tol = 1e-3;

/// Draws a velocity direction and rescales |v| until the measured ratio
/// matches psi_target. The returned u solves the system at the returned v.
inline PsiCalibration calibrate_psi(const Field2D& f, const Tensor2& d, double psi_target, Rng& rng) {
  if (!(psi_target > 0.0)) throw ConfigError("psi target must be positive");
  const double angle = rng.uniform(0.0, two_pi);
  const Vec2 dir{std::cos(angle), std::sin(angle)};
  double mag = 1.0;
  PsiCalibration best;
  double best_err = INFINITY;
  CoefficientSet c;
  c.d = d;
  for (int it = 1; it <= psi_max_iterations; ++it) {
    c.v = Vec2{mag * dir.x, mag * dir.y};
    Field2D u = solve_steady(SystemTag::AdvectionDiffusion, f, c);
    const double psi = measure_psi(u, d, *c.v);
    const double err = std::abs(psi - psi_target) / psi_target;
    if (err < best_err) {
      best_err = err;
      best = {*c.v, std::move(u), psi, it};
    }
    if (err < psi_rel_tol) return best;
    if (!(psi > 0.0)) break;
    mag *= psi_target / psi;
  }
  throw CalibrationError("psi calibration missed tolerance (best relative error " + std::to_string(best_err) + ")",
                         std::move(best));
}

/// Two-level permeability: a Gaussian random field with spectral power
/// (1 + |m|^2)^-2 thresholded at its median into {0.1, 1.0}.
inline Field2D sample_permeability(const GridSpec& grid, Rng& rng) {
  grid.validate();
  std::vector<std::complex<double>> c(grid.size());
  for (int iy = 0; iy < grid.ny; ++iy)
    for (int ix = 0; ix < grid.nx; ++ix) {
      const double mx = mode_index(ix, grid.nx);
      const double my = mode_index(iy, grid.ny);
      const double amp = 1.0 / (1.0 + mx * mx + my * my);
      const double re = rng.normal();
      const double im = rng.normal();
      c[static_cast<std::size_t>(iy) * grid.nx + ix] = (ix == 0 && iy == 0) ? 0.0 : amp * std::complex<double>(re, im);
    }
  ifft2_inplace(grid.nx, grid.ny, c.data());
  std::vector<double> g(grid.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = c[i].real();
  std::vector<double> sorted = g;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t half = sorted.size() / 2;
  const double threshold = 0.5 * (sorted[half - 1] + sorted[half]);
  Field2D k(grid);
  for (std::size_t i = 0; i < g.size(); ++i) k.values[i] = g[i] > threshold ? 1.0 : 0.1;
  return k;
}

// ---------------------------------------------------------------------------
// Samples and datasets

struct PdeSample {
  SystemTag system = SystemTag::Poisson;
  Field2D source;  // f, or u0 for time-dependent systems
  CoefficientSet coeffs;
  std::optional<Field2D> solution;

  bool has_solution() const { return solution.has_value(); }
  friend bool operator==(const PdeSample&, const PdeSample&) = default;
};

enum class Split : std::uint8_t { Train = 0, Val = 1, Test = 2 };

inline std::string_view to_string(Split s) {
  switch (s) {
  case Split::Train: return "train";
  case Split::Val: return "val";
  case Split::Test: return "test";
  }
  return "unknown";
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw ConfigError("unknown split '" + std::string(s) + "'");
}

struct Dataset {
  std::vector<PdeSample> samples;
  Split split = Split::Train;
  nlohmann::json manifest = nlohmann::json::object();

  std::size_t size() const { return samples.size(); }
  GridSpec grid() const {
    if (samples.empty()) throw PreconditionError("empty dataset has no grid");
    return samples.front().source.grid;
  }
  bool all_have_solutions() const {
    return std::all_of(samples.begin(), samples.end(), [](const PdeSample& s) { return s.has_solution(); });
  }
  bool any_has_solution() const {
    return std::any_of(samples.begin(), samples.end(), [](const PdeSample& s) { return s.has_solution(); });
  }
};

enum class PlanKind { Expensive, Synthetic, Extended, Downstream };
enum class OodLevel { Id, Slight, Medium, High };

inline constexpr std::array<OodLevel, 4> all_ood_levels{OodLevel::Id, OodLevel::Slight, OodLevel::Medium,
                                                        OodLevel::High};

inline std::string_view to_string(OodLevel o) {
  switch (o) {
  case OodLevel::Id: return "id";
  case OodLevel::Slight: return "slight-ood";
  case OodLevel::Medium: return "medium-ood";
  case OodLevel::High: return "high-ood";
  }
  return "unknown";
}

inline OodLevel parse_ood(std::string_view s) {
  for (OodLevel o : all_ood_levels)
    if (to_string(o) == s) return o;
  throw ConfigError("unknown OOD level '" + std::string(s) + "'");
}

/// Ranges a sample's coefficients are drawn from; unset members are unused.
struct SampleRanges {
  std::optional<RangeSpec> d_eig = std::nullopt;
  std::optional<RangeSpec> psi = std::nullopt;
  std::optional<RangeSpec> omega = std::nullopt;
  std::optional<RangeSpec> r = std::nullopt;
  std::optional<RangeSpec> v_mag = std::nullopt;

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    if (d_eig) j["D_eigenvalues"] = pdewb::to_json(*d_eig);
    if (psi) j["psi"] = pdewb::to_json(*psi);
    if (omega) j["omega"] = pdewb::to_json(*omega);
    if (r) j["r"] = pdewb::to_json(*r);
    if (v_mag) j["v_magnitude"] = pdewb::to_json(*v_mag);
    return j;
  }
};

// The advection-diffusion diffusion tensor is always drawn from the
// pre-training Poisson range so OOD shifts move psi alone.
inline constexpr RangeSpec pretrain_d_range{1.0, 5.0};

inline SampleRanges pretrain_ranges(SystemTag s) {
  switch (s) {
  case SystemTag::Poisson: return {.d_eig = pretrain_d_range};
  case SystemTag::AdvectionDiffusion: return {.d_eig = pretrain_d_range, .psi = RangeSpec{0.2, 1.0}};
  case SystemTag::Helmholtz: return {.omega = RangeSpec{1.0, 10.0}};
  default: throw ConfigError(std::string(to_string(s)) + " is not a pre-training system");
  }
}

/// Synthetic ranges of the extended plan: the lower half of the synthetic
/// samples uses the in-distribution range, the upper half the widened one.
inline SampleRanges extended_synthetic_ranges(SystemTag s, bool widened) {
  switch (s) {
  case SystemTag::Poisson: return {.d_eig = widened ? RangeSpec{15.0, 20.0} : pretrain_d_range};
  case SystemTag::AdvectionDiffusion:
    return {.d_eig = pretrain_d_range, .psi = widened ? RangeSpec{4.0, 5.0} : RangeSpec{0.2, 1.0}};
  case SystemTag::Helmholtz: return {.omega = widened ? RangeSpec{1.0, 15.0} : RangeSpec{1.0, 10.0}};
  default: throw ConfigError(std::string(to_string(s)) + " is not a pre-training system");
  }
}

inline SampleRanges downstream_ranges(SystemTag s, OodLevel o) {
  const int i = static_cast<int>(o);
  switch (s) {
  case SystemTag::Poisson: {
    constexpr RangeSpec d[4] = {{1.0, 2.5}, {2.5, 7.5}, {7.5, 12.5}, {15.0, 20.0}};
    return {.d_eig = d[i]};
  }
  case SystemTag::AdvectionDiffusion: {
    constexpr RangeSpec p[4] = {{0.2, 0.4}, {0.4, 1.6}, {2.0, 3.0}, {4.0, 5.0}};
    return {.d_eig = pretrain_d_range, .psi = p[i]};
  }
  case SystemTag::Helmholtz: {
    constexpr RangeSpec w[4] = {{1.0, 5.0}, {2.0, 12.0}, {10.0, 13.0}, {12.0, 15.0}};
    return {.omega = w[i]};
  }
  case SystemTag::ReactionDiffusion:
  case SystemTag::ReactionAdvectionDiffusion:
  case SystemTag::Darcy: {
    if (o != OodLevel::Id)
      throw ConfigError(std::string(to_string(s)) + " has a single downstream range; use 'id'");
    if (s == SystemTag::Darcy) return {};
    SampleRanges r{.d_eig = RangeSpec{5.0, 10.0}, .r = RangeSpec{-1.0, 1.0}};
    if (s == SystemTag::ReactionAdvectionDiffusion) r.v_mag = RangeSpec{0.1, 1.0};
    return r;
  }
  }
  throw ConfigError("unknown system");
}

struct DatasetPlan {
  PlanKind kind = PlanKind::Expensive;
  SystemTag task = SystemTag::Poisson;  // downstream only
  OodLevel ood = OodLevel::Id;          // downstream only

  std::string name() const {
    switch (kind) {
    case PlanKind::Expensive: return "expensive";
    case PlanKind::Synthetic: return "synthetic";
    case PlanKind::Extended: return "extended";
    case PlanKind::Downstream:
      return "downstream:" + std::string(to_string(task)) + ":" + std::string(to_string(ood));
    }
    return "unknown";
  }

  /// Accepts expensive, synthetic, extended and downstream:<task>[:<ood>].
  static DatasetPlan parse(std::string_view s) {
    if (s == "expensive") return {PlanKind::Expensive};
    if (s == "synthetic") return {PlanKind::Synthetic};
    if (s == "extended") return {PlanKind::Extended};
    constexpr std::string_view pre = "downstream:";
    if (s.substr(0, pre.size()) == pre) {
      std::string_view rest = s.substr(pre.size());
      const auto colon = rest.find(':');
      DatasetPlan p{PlanKind::Downstream};
      p.task = parse_system(rest.substr(0, colon));
      p.ood = colon == std::string_view::npos ? OodLevel::Id : parse_ood(rest.substr(colon + 1));
      downstream_ranges(p.task, p.ood);  // validates the combination
      return p;
    }
    throw ConfigError("unknown dataset plan '" + std::string(s) + "'");
  }

  friend bool operator==(const DatasetPlan&, const DatasetPlan&) = default;
};

struct DataConfig {
  GridSpec grid{32, 32};
  std::size_t train = 1024;
  std::size_t val = 256;
  std::size_t test = 256;
  RangeSpec sparsity{0.2, 0.8};
  double darcy_dt = 1e-2;
  std::uint64_t seed = 0;

  std::size_t count(Split s) const { return s == Split::Train ? train : s == Split::Val ? val : test; }
};

/// Per-sample generation diagnostics, reduced in index order.
struct GenerationStats {
  std::size_t residual_checked = 0;
  std::size_t residual_passed = 0;
  double residual_max = 0.0;
  std::size_t psi_retries = 0;
  std::size_t psi_failures = 0;

  void merge(const GenerationStats& o) {
    residual_checked += o.residual_checked;
    residual_passed += o.residual_passed;
    residual_max = std::max(residual_max, o.residual_max);
    psi_retries += o.psi_retries;
    psi_failures += o.psi_failures;
  }
};

inline constexpr double residual_check_tol = 1e-8;
inline constexpr int psi_max_attempts = 4;

/// Draws one sample. Source and coefficients consume rng in a fixed order that
/// does not depend on with_solution, so expensive and synthetic streams agree.
inline PdeSample draw_sample(SystemTag system, const SampleRanges& ranges, bool with_solution, const DataConfig& cfg,
                             Rng& rng, GenerationStats& stats) {
  PdeSample s;
  s.system = system;
  SourceSpec spec;
  spec.sparsity = cfg.sparsity.draw(rng);
  Field2D src = sample_source(spec, rng, cfg.grid);
  if (system == SystemTag::Poisson || system == SystemTag::AdvectionDiffusion) src = mean_projected(std::move(src));
  if (system == SystemTag::Darcy) {
    for (int y = 0; y < cfg.grid.ny; ++y)
      for (int x = 0; x < cfg.grid.nx; ++x)
        if (x == 0 || y == 0 || x == cfg.grid.nx - 1 || y == cfg.grid.ny - 1) src(y, x) = 0.0;
  }
  quantize_f32(src);
  s.source = src;

  std::optional<Field2D> u;
  switch (system) {
  case SystemTag::Poisson:
    s.coeffs.d = sample_diffusion(*ranges.d_eig, rng);
    break;
  case SystemTag::AdvectionDiffusion: {
    s.coeffs.d = sample_diffusion(*ranges.d_eig, rng);
    const double target = ranges.psi->draw(rng);
    s.coeffs.psi = target;
    std::optional<PsiCalibration> cal;
    for (int attempt = 0; attempt < psi_max_attempts && !cal; ++attempt) {
      try {
        cal = calibrate_psi(src, *s.coeffs.d, target, rng);
      } catch (const CalibrationError& e) {
        if (attempt + 1 < psi_max_attempts) {
          ++stats.psi_retries;
        } else {
          ++stats.psi_failures;
          cal = e.best();
        }
      }
    }
    s.coeffs.v = cal->v;
    u = std::move(cal->u);
    break;
  }
  case SystemTag::Helmholtz:
    s.coeffs.omega = ranges.omega->draw(rng);
    break;
  case SystemTag::ReactionDiffusion:
  case SystemTag::ReactionAdvectionDiffusion:
    s.coeffs.d = sample_diffusion(*ranges.d_eig, rng);
    if (system == SystemTag::ReactionAdvectionDiffusion) {
      const double mag = ranges.v_mag->draw(rng);
      const double angle = rng.uniform(0.0, two_pi);
      s.coeffs.v = Vec2{mag * std::cos(angle), mag * std::sin(angle)};
    }
    s.coeffs.r = ranges.r->draw(rng);
    break;
  case SystemTag::Darcy: {
    Field2D k = sample_permeability(cfg.grid, rng);
    quantize_f32(k);
    s.coeffs.k = std::move(k);
    break;
  }
  }
  validate_coefficients(system, s.coeffs);
  if (!with_solution) return s;

  const Field2D zero(cfg.grid);
  if (is_steady(system)) {
    if (!u) u = solve_steady(system, src, s.coeffs);
    const double res = residual(system, *u, s.coeffs, src).max_abs();
    ++stats.residual_checked;
    if (res < residual_check_tol) ++stats.residual_passed;
    stats.residual_max = std::max(stats.residual_max, res);
  } else if (system == SystemTag::Darcy) {
    u = solve_darcy(src, *s.coeffs.k, zero, TimeSpec{1.0, cfg.darcy_dt});
  } else {
    u = evolve_linear(system, src, zero, s.coeffs, TimeSpec{1.0, cfg.darcy_dt});
  }
  quantize_f32(*u);
  s.solution = std::move(u);
  return s;
}

namespace detail {

struct SampleRecipe {
  SystemTag system;
  SampleRanges ranges;
  bool with_solution;
};

inline SampleRecipe recipe(const DatasetPlan& plan, std::size_t index) {
  if (plan.kind == PlanKind::Downstream) return {plan.task, downstream_ranges(plan.task, plan.ood), true};
  const SystemTag sys = steady_systems[index % 3];
  const std::size_t j = index / 3;
  switch (plan.kind) {
  case PlanKind::Expensive: return {sys, pretrain_ranges(sys), true};
  case PlanKind::Synthetic: return {sys, pretrain_ranges(sys), false};
  case PlanKind::Extended:
    if (j % 3 == 0) return {sys, pretrain_ranges(sys), true};
    return {sys, extended_synthetic_ranges(sys, j % 3 == 2), false};
  default: break;
  }
  throw ConfigError("unknown plan");
}

// Expensive and synthetic share a stream so their samples coincide.
inline std::uint64_t plan_stream_seed(const DatasetPlan& plan, std::uint64_t seed) {
  switch (plan.kind) {
  case PlanKind::Expensive:
  case PlanKind::Synthetic: return derive_seed(seed, "pretrain");
  case PlanKind::Extended: return derive_seed(seed, "extended");
  case PlanKind::Downstream: return derive_seed(seed, "downstream:" + std::string(to_string(plan.task)) + ":" +
                                                          std::string(to_string(plan.ood)));
  }
  return seed;
}

} // namespace detail

inline nlohmann::json channel_semantics() {
  return nlohmann::json::array({"f_or_u0", "D11", "D12", "D22", "vx", "vy", "omega", "r"});
}

/// Builds one split of a plan. Sample i depends only on (seed, plan, split, i).
inline Dataset build_split(const DatasetPlan& plan, const DataConfig& cfg, Split split) {
  cfg.grid.validate();
  cfg.sparsity.validate();
  const std::size_t n = cfg.count(split);
  const std::uint64_t base = detail::plan_stream_seed(plan, cfg.seed);
  Dataset ds;
  ds.split = split;
  ds.samples.resize(n);
  std::vector<GenerationStats> stats(n);
  parallel_for(n, worker_threads(), [&](std::size_t i) {
    const auto r = detail::recipe(plan, i);
    Rng rng(derive_seed(base, static_cast<std::uint64_t>(split), i));
    ds.samples[i] = draw_sample(r.system, r.ranges, r.with_solution, cfg, rng, stats[i]);
  });
  GenerationStats total;
  for (const auto& s : stats) total.merge(s);

  nlohmann::json ranges = nlohmann::json::object();
  if (plan.kind == PlanKind::Downstream) {
    ranges[std::string(to_string(plan.task))] = downstream_ranges(plan.task, plan.ood).to_json();
  } else {
    for (SystemTag s : steady_systems) {
      nlohmann::json r = {{"with_solution", pretrain_ranges(s).to_json()}};
      if (plan.kind == PlanKind::Extended) {
        r["synthetic"] = {extended_synthetic_ranges(s, false).to_json(), extended_synthetic_ranges(s, true).to_json()};
      }
      ranges[std::string(to_string(s))] = r;
    }
  }
  nlohmann::json systems = nlohmann::json::array();
  if (plan.kind == PlanKind::Downstream)
    systems.push_back(to_string(plan.task));
  else
    for (SystemTag s : steady_systems) systems.push_back(to_string(s));
  ds.manifest = {
      {"format", "pdewb-dataset"},
      {"plan", plan.name()},
      {"split", to_string(split)},
      {"seed", cfg.seed},
      {"grid", {{"nx", cfg.grid.nx}, {"ny", cfg.grid.ny}}},
      {"sizes", {{"train", cfg.train}, {"val", cfg.val}, {"test", cfg.test}}},
      {"sample_count", n},
      {"systems", systems},
      {"ranges", ranges},
      {"source", {{"n_centers", 144}, {"sigma_rbf", 1.0 / 32.0}, {"sparsity", to_json(cfg.sparsity)}}},
      {"channels", channel_semantics()},
      {"time", {{"t_end", 1.0}, {"darcy_dt", cfg.darcy_dt}}},
      {"residual_check",
       {{"tolerance", residual_check_tol},
        {"checked", total.residual_checked},
        {"passed", total.residual_passed},
        {"max", total.residual_max}}},
      {"psi_calibration", {{"retries", total.psi_retries}, {"failures", total.psi_failures}}},
  };
  return ds;
}

struct DatasetSplits {
  Dataset train;
  Dataset val;
  Dataset test;
};

inline DatasetSplits build_dataset(const DatasetPlan& plan, const DataConfig& cfg) {
  return {build_split(plan, cfg, Split::Train), build_split(plan, cfg, Split::Val),
          build_split(plan, cfg, Split::Test)};
}

/// Population standard deviation over grid points.
inline double field_std(const Field2D& f) {
  const double m = f.mean();
  double s = 0.0;
  for (double v : f.values) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(f.size()));
}

/// u + sigma * std(u) * eps on training solutions; validation and test
/// splits are returned unchanged.
inline Dataset add_noise(const Dataset& ds, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw ConfigError("noise level must be nonnegative");
  if (!ds.all_have_solutions()) throw PreconditionError("noise requires every sample to carry a solution");
  Dataset out = ds;
  if (sigma == 0.0 || ds.split != Split::Train) return out;
  const std::uint64_t base = derive_seed(seed, "noise");
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    Rng rng(derive_seed(base, 0, i));
    Field2D& u = *out.samples[i].solution;
    const double scale = sigma * field_std(u);
    for (double& v : u.values) v += scale * rng.normal();
    quantize_f32(u);
  }
  out.manifest["noise"] = {{"sigma", sigma}, {"seed", seed}};
  return out;
}

/// First n entries of one seeded permutation of the training split, so
/// subsets for increasing n are nested.
inline Dataset subsample_nshot(const Dataset& ds, std::size_t n, std::uint64_t seed) {
  if (n > ds.size())
    throw ConfigError("n-shot size " + std::to_string(n) + " exceeds split size " + std::to_string(ds.size()));
  std::vector<std::size_t> perm(ds.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  Rng rng(derive_seed(seed, "nshot"));
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  Dataset out;
  out.split = ds.split;
  out.manifest = ds.manifest;
  out.samples.reserve(n);
  nlohmann::json idx = nlohmann::json::array();
  for (std::size_t i = 0; i < n; ++i) {
    out.samples.push_back(ds.samples[perm[i]]);
    idx.push_back(perm[i]);
  }
  out.manifest["nshot"] = {{"n", n}, {"seed", seed}, {"indices", idx}};
  out.manifest["sample_count"] = n;
  return out;
}

} // namespace pdewb
