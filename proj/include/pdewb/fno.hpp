#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <experimental/simd>
#include <numbers>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "pdewb/errors.hpp"
#include "pdewb/grid.hpp"
#include "pdewb/rng.hpp"

namespace pdewb {

enum class Activation { Gelu, Identity };

/// Architecture of the Fourier neural operator.
struct FnoConfig {
  int in_channels = 8;
  int width = 16;
  int modes = 8;
  int n_blocks = 4;
  GridSpec grid{32, 32};
  Activation activation = Activation::Gelu;  // Identity is an ablation used in tests
  bool pointwise_bypass = true;               // false keeps only the spectral path

  void validate() const {
    grid.validate();
    if (in_channels < 1) throw ConfigError("in_channels must be positive");
    if (width < 4) throw ConfigError("width must be at least 4");
    if (n_blocks < 1) throw ConfigError("n_blocks must be positive");
    if (modes < 1 || modes > grid.nx / 2 || modes > grid.ny / 2)
      throw ConfigError("modes must lie in [1, min(nx, ny)/2]");
  }

  friend bool operator==(const FnoConfig&, const FnoConfig&) = default;
};

/// Per-input-channel standardization statistics.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;

  static NormStats identity(int channels) {
    return {std::vector<double>(channels, 0.0), std::vector<double>(channels, 1.0)};
  }
  friend bool operator==(const NormStats&, const NormStats&) = default;
};

inline constexpr double norm_std_floor = 1e-8;

template <typename Real>
struct FnoBlockParams {
  // Spectral weights, layout [corner][ky][kx][in][out]; corner 0 holds
  // ky in [0, modes), corner 1 holds ky in [ny - modes, ny).
  std::vector<Real> spec_re;
  std::vector<Real> spec_im;
  std::vector<Real> pw_w;  // [in][out]
  std::vector<Real> pw_b;  // [out]

  friend bool operator==(const FnoBlockParams&, const FnoBlockParams&) = default;
};

/// Every learnable tensor of the network plus the input normalization.
template <typename Real>
struct FnoParams {
  FnoConfig config;
  NormStats norm;
  std::vector<Real> lift_w;  // [in_channels][width]
  std::vector<Real> lift_b;
  std::vector<FnoBlockParams<Real>> blocks;
  std::vector<Real> proj1_w;  // [width][width]
  std::vector<Real> proj1_b;
  std::vector<Real> proj2_w;  // [width]
  std::vector<Real> proj2_b;  // [1]

  /// Zero-valued parameters with the shapes implied by cfg.
  static FnoParams zeros(const FnoConfig& cfg) {
    cfg.validate();
    FnoParams p;
    p.config = cfg;
    p.norm = NormStats::identity(cfg.in_channels);
    const std::size_t w = cfg.width;
    const std::size_t m = cfg.modes;
    p.lift_w.assign(cfg.in_channels * w, Real(0));
    p.lift_b.assign(w, Real(0));
    p.blocks.resize(cfg.n_blocks);
    for (auto& b : p.blocks) {
      b.spec_re.assign(2 * m * m * w * w, Real(0));
      b.spec_im.assign(2 * m * m * w * w, Real(0));
      b.pw_w.assign(w * w, Real(0));
      b.pw_b.assign(w, Real(0));
    }
    p.proj1_w.assign(w * w, Real(0));
    p.proj1_b.assign(w, Real(0));
    p.proj2_w.assign(w, Real(0));
    p.proj2_b.assign(1, Real(0));
    return p;
  }

  /// Visits (name, data) for every learnable tensor in declaration order.
  template <typename Fn>
  void for_each_tensor(Fn&& fn) {
    fn(std::string("lift.w"), std::span<Real>(lift_w));
    fn(std::string("lift.b"), std::span<Real>(lift_b));
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const std::string pre = "blocks." + std::to_string(i) + ".";
      fn(pre + "spec_re", std::span<Real>(blocks[i].spec_re));
      fn(pre + "spec_im", std::span<Real>(blocks[i].spec_im));
      fn(pre + "pw.w", std::span<Real>(blocks[i].pw_w));
      fn(pre + "pw.b", std::span<Real>(blocks[i].pw_b));
    }
    fn(std::string("proj1.w"), std::span<Real>(proj1_w));
    fn(std::string("proj1.b"), std::span<Real>(proj1_b));
    fn(std::string("proj2.w"), std::span<Real>(proj2_w));
    fn(std::string("proj2.b"), std::span<Real>(proj2_b));
  }

  template <typename Fn>
  void for_each_tensor(Fn&& fn) const {
    const_cast<FnoParams*>(this)->for_each_tensor(
        [&](const std::string& name, std::span<Real> t) { fn(name, std::span<const Real>(t)); });
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_tensor([&](const std::string&, std::span<const Real> t) { n += t.size(); });
    return n;
  }

  void set_zero() {
    for_each_tensor([](const std::string&, std::span<Real> t) { std::fill(t.begin(), t.end(), Real(0)); });
  }

  template <typename Other>
  FnoParams<Other> cast() const {
    FnoParams<Other> out = FnoParams<Other>::zeros(config);
    out.norm = norm;
    std::vector<std::span<const Real>> src;
    for_each_tensor([&](const std::string&, std::span<const Real> t) { src.push_back(t); });
    std::size_t i = 0;
    out.for_each_tensor([&](const std::string&, std::span<Other> t) {
      std::transform(src[i].begin(), src[i].end(), t.begin(), [](Real v) { return static_cast<Other>(v); });
      ++i;
    });
    return out;
  }

  friend bool operator==(const FnoParams&, const FnoParams&) = default;
};

/// Closed-form count of learnable scalars (complex weights count twice).
inline std::size_t fno_parameter_count(const FnoConfig& c) {
  const std::size_t w = c.width;
  const std::size_t m = c.modes;
  const std::size_t lift = c.in_channels * w + w;
  const std::size_t block = 2 * w * w * m * m * 2 + w * w + w;
  const std::size_t proj = w * w + w + w + 1;
  return lift + c.n_blocks * block + proj;
}

/// Factor on the Glorot bound of the final projection row. Keeps untrained
/// outputs well below solution magnitudes (O(1e-3) for unit-scale sources).
inline constexpr double output_init_scale = 1e-3;

/// Glorot-uniform real weights (final row scaled by output_init_scale),
/// N(0, 1/width^2) spectral components, zero biases, identity normalization.
template <typename Real>
FnoParams<Real> init_params(const FnoConfig& cfg, Rng& rng) {
  FnoParams<Real> p = FnoParams<Real>::zeros(cfg);
  auto glorot = [&](std::vector<Real>& t, int fan_in, int fan_out) {
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    for (Real& v : t) v = static_cast<Real>(rng.uniform(-a, a));
  };
  const double spec_std = 1.0 / cfg.width;
  glorot(p.lift_w, cfg.in_channels, cfg.width);
  for (auto& b : p.blocks) {
    for (std::size_t i = 0; i < b.spec_re.size(); ++i) {
      b.spec_re[i] = static_cast<Real>(spec_std * rng.normal());
      b.spec_im[i] = static_cast<Real>(spec_std * rng.normal());
    }
    glorot(b.pw_w, cfg.width, cfg.width);
  }
  glorot(p.proj1_w, cfg.width, cfg.width);
  glorot(p.proj2_w, cfg.width, 1);
  for (Real& v : p.proj2_w) v *= static_cast<Real>(output_init_scale);
  return p;
}

namespace detail {

namespace stdx = std::experimental;

// Channel-lane vector used by the fixed-width kernels.
template <typename Real, int L>
using Lanes = stdx::fixed_size_simd<Real, L>;

template <typename Real, int L>
inline Lanes<Real, L> load(const Real* p) {
  return Lanes<Real, L>(p, stdx::element_aligned);
}

template <typename Real, int L>
inline void store(const Lanes<Real, L>& v, Real* p) {
  v.copy_to(p, stdx::element_aligned);
}

// Rational tanh approximation (accurate to a few ulp in float); clamps
// where tanh saturates in single precision.
inline float fast_tanh(float x) {
  x = std::clamp(x, -7.90531110763549805f, 7.90531110763549805f);
  const float x2 = x * x;
  float p = -2.76076847742355e-16f;
  p = p * x2 + 2.00018790482477e-13f;
  p = p * x2 + -8.60467152213735e-11f;
  p = p * x2 + 5.12229709037114e-08f;
  p = p * x2 + 1.48572235717979e-05f;
  p = p * x2 + 6.37261928875436e-04f;
  p = p * x2 + 4.89352455891786e-03f;
  p = p * x;
  float q = 1.19825839466702e-06f;
  q = q * x2 + 1.18534705686654e-04f;
  q = q * x2 + 2.26843463243900e-03f;
  q = q * x2 + 4.89352518554385e-03f;
  return p / q;
}

template <typename Real>
inline Real tanh_of(Real x) {
  if constexpr (std::is_same_v<Real, float>)
    return fast_tanh(x);
  else
    return std::tanh(x);
}

inline constexpr double gelu_k = 0.7978845608028654;  // sqrt(2/pi)
inline constexpr double gelu_c = 0.044715;

template <typename Real>
inline Real gelu(Real x) {
  const Real t = tanh_of<Real>(Real(gelu_k) * (x + Real(gelu_c) * x * x * x));
  return Real(0.5) * x * (Real(1) + t);
}

// Vectorized tanh for float lanes; same rational form as fast_tanh.
template <int L>
inline Lanes<float, L> fast_tanh(Lanes<float, L> x) {
  using V = Lanes<float, L>;
  x = stdx::min(stdx::max(x, V(-7.90531110763549805f)), V(7.90531110763549805f));
  const V x2 = x * x;
  V p(-2.76076847742355e-16f);
  p = p * x2 + 2.00018790482477e-13f;
  p = p * x2 + -8.60467152213735e-11f;
  p = p * x2 + 5.12229709037114e-08f;
  p = p * x2 + 1.48572235717979e-05f;
  p = p * x2 + 6.37261928875436e-04f;
  p = p * x2 + 4.89352455891786e-03f;
  p = p * x;
  V q(1.19825839466702e-06f);
  q = q * x2 + 1.18534705686654e-04f;
  q = q * x2 + 2.26843463243900e-03f;
  q = q * x2 + 4.89352518554385e-03f;
  return p / q;
}

template <typename Real>
inline Real gelu_grad(Real x) {
  const Real t = tanh_of<Real>(Real(gelu_k) * (x + Real(gelu_c) * x * x * x));
  return Real(0.5) * (Real(1) + t) +
         Real(0.5) * x * (Real(1) - t * t) * Real(gelu_k) * (Real(1) + Real(3 * gelu_c) * x * x);
}

// Calls fn.template operator()<B>(start) over [0, n) in blocks of 4, then 1.
template <typename Fn>
inline void blocked(std::size_t n, Fn&& fn) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) fn.template operator()<4>(i);
  for (; i < n; ++i) fn.template operator()<1>(i);
}

// out[i] = gelu(z[i]).
template <typename Real>
inline void gelu_array(const Real* __restrict z, Real* __restrict out, std::size_t n) {
  std::size_t i = 0;
  if constexpr (std::is_same_v<Real, float>) {
    using V = Lanes<float, 16>;
    for (; i + 16 <= n; i += 16) {
      const V x = load<float, 16>(z + i);
      const V t = fast_tanh<16>(float(gelu_k) * (x + float(gelu_c) * x * x * x));
      store(0.5f * x * (1.0f + t), out + i);
    }
  }
  for (; i < n; ++i) out[i] = gelu(z[i]);
}

// out[i] = d[i] * gelu'(z[i]).
template <typename Real>
inline void gelu_grad_array(const Real* __restrict z, const Real* d, Real* out, std::size_t n) {
  std::size_t i = 0;
  if constexpr (std::is_same_v<Real, float>) {
    using V = Lanes<float, 16>;
    for (; i + 16 <= n; i += 16) {
      const V x = load<float, 16>(z + i);
      const V t = fast_tanh<16>(float(gelu_k) * (x + float(gelu_c) * x * x * x));
      const V g = 0.5f * (1.0f + t) + 0.5f * x * (1.0f - t * t) * float(gelu_k) * (1.0f + float(3 * gelu_c) * x * x);
      store(load<float, 16>(d + i) * g, out + i);
    }
  }
  for (; i < n; ++i) out[i] = d[i] * gelu_grad(z[i]);
}

} // namespace detail

/// Truncated 2D DFT over channel-innermost data [pixel][channel], restricted
/// to kx in [0, modes) and ky in the two low corners. Spectral arrays have
/// layout [j][kx][channel] with j < modes for ky = j and j >= modes for
/// ky = ny - 2*modes + j.
template <typename Real>
class TruncatedDft {
public:
  TruncatedDft() = default;
  TruncatedDft(const GridSpec& g, int modes, int lanes) : nx_(g.nx), ny_(g.ny), m_(modes), lanes_(lanes) {
    cx_.resize(static_cast<std::size_t>(nx_) * m_);
    sx_.resize(cx_.size());
    for (int x = 0; x < nx_; ++x)
      for (int k = 0; k < m_; ++k) {
        const double a = 2.0 * std::numbers::pi * k * x / nx_;
        cx_[x * m_ + k] = static_cast<Real>(std::cos(a));
        sx_[x * m_ + k] = static_cast<Real>(std::sin(a));
      }
    const int nj = 2 * m_;
    cy_.resize(static_cast<std::size_t>(ny_) * nj);
    sy_.resize(cy_.size());
    for (int y = 0; y < ny_; ++y)
      for (int j = 0; j < nj; ++j) {
        const int ky = j < m_ ? j : ny_ - 2 * m_ + j;
        // Reduce the product modulo ny before scaling for exact phases.
        const long ph = (static_cast<long>(ky) * y) % ny_;
        const double a = 2.0 * std::numbers::pi * ph / ny_;
        cy_[y * nj + j] = static_cast<Real>(std::cos(a));
        sy_[y * nj + j] = static_cast<Real>(std::sin(a));
      }
    tmp_re_.resize(static_cast<std::size_t>(ny_) * m_ * lanes_);
    tmp_im_.resize(tmp_re_.size());
  }

  int modes() const { return m_; }
  std::size_t spectral_size() const { return static_cast<std::size_t>(2 * m_) * m_ * lanes_; }

  /// out(k) = sum_p in(p) exp(-i theta(p, k)). Lanes > 0 fixes the channel
  /// count at compile time and must equal the runtime value.
  template <int Lanes = 0>
  void analysis(const Real* __restrict in, Real* __restrict out_re, Real* __restrict out_im) {
    if constexpr (Lanes == 0) {
      analysis_generic(in, out_re, out_im);
    } else {
      constexpr int L = Lanes;
      using Vec = detail::Lanes<Real, L>;
      const int m = m_;
      const int nj = 2 * m_;
      Real* __restrict rre = tmp_re_.data();
      Real* __restrict rim = tmp_im_.data();
      // rows: R[y][kx] = sum_x in[y][x] exp(-i kx x)
      for (int y = 0; y < ny_; ++y) {
        const Real* __restrict row = in + static_cast<std::size_t>(y) * nx_ * L;
        detail::blocked(m, [&]<int B>(int k0) {
          Vec ar[B];
          Vec ai[B];
          for (int b = 0; b < B; ++b) ar[b] = ai[b] = Real(0);
          for (int x = 0; x < nx_; ++x) {
            const Vec v = detail::load<Real, L>(row + static_cast<std::size_t>(x) * L);
            const Real* c = &cx_[x * m + k0];
            const Real* sn = &sx_[x * m + k0];
            for (int b = 0; b < B; ++b) {
              ar[b] += v * c[b];
              ai[b] -= v * sn[b];
            }
          }
          for (int b = 0; b < B; ++b) {
            detail::store(ar[b], rre + (static_cast<std::size_t>(y) * m + k0 + b) * L);
            detail::store(ai[b], rim + (static_cast<std::size_t>(y) * m + k0 + b) * L);
          }
        });
      }
      // columns: out[j][kx] = sum_y R[y][kx] exp(-i ky y)
      for (int k = 0; k < m; ++k) {
        detail::blocked(nj, [&]<int B>(int j0) {
          Vec orr[B];
          Vec oi[B];
          for (int b = 0; b < B; ++b) orr[b] = oi[b] = Real(0);
          for (int y = 0; y < ny_; ++y) {
            const Vec a = detail::load<Real, L>(rre + (static_cast<std::size_t>(y) * m + k) * L);
            const Vec bi = detail::load<Real, L>(rim + (static_cast<std::size_t>(y) * m + k) * L);
            const Real* c = &cy_[y * nj + j0];
            const Real* sn = &sy_[y * nj + j0];
            for (int b = 0; b < B; ++b) {
              orr[b] += a * c[b] + bi * sn[b];
              oi[b] += bi * c[b] - a * sn[b];
            }
          }
          for (int b = 0; b < B; ++b) {
            detail::store(orr[b], out_re + (static_cast<std::size_t>(j0 + b) * m + k) * L);
            detail::store(oi[b], out_im + (static_cast<std::size_t>(j0 + b) * m + k) * L);
          }
        });
      }
    }
  }

  /// out(p) (+)= sum_k weight(kx) * Re[coef(k) exp(+i theta(p, k))].
  template <int Lanes = 0>
  void synthesis(const Real* __restrict in_re, const Real* __restrict in_im, std::span<const Real> kx_weight,
                 Real* __restrict out, bool accumulate) {
    if constexpr (Lanes == 0) {
      synthesis_generic(in_re, in_im, kx_weight, out, accumulate);
    } else {
      constexpr int L = Lanes;
      using Vec = detail::Lanes<Real, L>;
      const int m = m_;
      const int nj = 2 * m_;
      Real* __restrict tre = tmp_re_.data();
      Real* __restrict tim = tmp_im_.data();
      // columns: T[y][kx] = sum_j C[j][kx] exp(+i ky y)
      for (int k = 0; k < m; ++k) {
        detail::blocked(ny_, [&]<int B>(int y0) {
          Vec tr[B];
          Vec ti[B];
          for (int b = 0; b < B; ++b) tr[b] = ti[b] = Real(0);
          for (int j = 0; j < nj; ++j) {
            const Vec cr = detail::load<Real, L>(in_re + (static_cast<std::size_t>(j) * m + k) * L);
            const Vec ci = detail::load<Real, L>(in_im + (static_cast<std::size_t>(j) * m + k) * L);
            for (int b = 0; b < B; ++b) {
              const Real c = cy_[(y0 + b) * nj + j];
              const Real sn = sy_[(y0 + b) * nj + j];
              tr[b] += cr * c - ci * sn;
              ti[b] += ci * c + cr * sn;
            }
          }
          for (int b = 0; b < B; ++b) {
            detail::store(tr[b], tre + (static_cast<std::size_t>(y0 + b) * m + k) * L);
            detail::store(ti[b], tim + (static_cast<std::size_t>(y0 + b) * m + k) * L);
          }
        });
      }
      // rows: out[y][x] = sum_kx w(kx) Re[T[y][kx] exp(+i kx x)]
      for (int y = 0; y < ny_; ++y) {
        Real* __restrict orow = out + static_cast<std::size_t>(y) * nx_ * L;
        detail::blocked(nx_, [&]<int B>(int x0) {
          Vec o[B];
          for (int b = 0; b < B; ++b)
            o[b] = accumulate ? detail::load<Real, L>(orow + static_cast<std::size_t>(x0 + b) * L) : Vec(Real(0));
          for (int k = 0; k < m; ++k) {
            const Vec a = detail::load<Real, L>(tre + (static_cast<std::size_t>(y) * m + k) * L);
            const Vec bi = detail::load<Real, L>(tim + (static_cast<std::size_t>(y) * m + k) * L);
            for (int b = 0; b < B; ++b) {
              const Real c = kx_weight[k] * cx_[(x0 + b) * m + k];
              const Real sn = kx_weight[k] * sx_[(x0 + b) * m + k];
              o[b] += a * c - bi * sn;
            }
          }
          for (int b = 0; b < B; ++b) detail::store(o[b], orow + static_cast<std::size_t>(x0 + b) * L);
        });
      }
    }
  }

private:
  void analysis_generic(const Real* __restrict in, Real* __restrict out_re, Real* __restrict out_im) {
    const int L = lanes_;
    Real* __restrict rre = tmp_re_.data();
    Real* __restrict rim = tmp_im_.data();
    std::fill(tmp_re_.begin(), tmp_re_.end(), Real(0));
    std::fill(tmp_im_.begin(), tmp_im_.end(), Real(0));
    for (int y = 0; y < ny_; ++y) {
      for (int x = 0; x < nx_; ++x) {
        const Real* __restrict row = in + (static_cast<std::size_t>(y) * nx_ + x) * L;
        for (int k = 0; k < m_; ++k) {
          const Real c = cx_[x * m_ + k];
          const Real s = sx_[x * m_ + k];
          Real* __restrict ar = rre + (static_cast<std::size_t>(y) * m_ + k) * L;
          Real* __restrict ai = rim + (static_cast<std::size_t>(y) * m_ + k) * L;
          for (int l = 0; l < L; ++l) {
            ar[l] += row[l] * c;
            ai[l] -= row[l] * s;
          }
        }
      }
    }
    const int nj = 2 * m_;
    std::fill(out_re, out_re + spectral_size(), Real(0));
    std::fill(out_im, out_im + spectral_size(), Real(0));
    for (int y = 0; y < ny_; ++y) {
      for (int j = 0; j < nj; ++j) {
        const Real c = cy_[y * nj + j];
        const Real s = sy_[y * nj + j];
        for (int k = 0; k < m_; ++k) {
          const Real* __restrict ar = rre + (static_cast<std::size_t>(y) * m_ + k) * L;
          const Real* __restrict ai = rim + (static_cast<std::size_t>(y) * m_ + k) * L;
          Real* __restrict orr = out_re + (static_cast<std::size_t>(j) * m_ + k) * L;
          Real* __restrict oi = out_im + (static_cast<std::size_t>(j) * m_ + k) * L;
          for (int l = 0; l < L; ++l) {
            orr[l] += ar[l] * c + ai[l] * s;
            oi[l] += ai[l] * c - ar[l] * s;
          }
        }
      }
    }
  }

  void synthesis_generic(const Real* __restrict in_re, const Real* __restrict in_im, std::span<const Real> kx_weight,
                 Real* __restrict out, bool accumulate) {
    const int L = lanes_;
    const int nj = 2 * m_;
    Real* __restrict tre = tmp_re_.data();
    Real* __restrict tim = tmp_im_.data();
    std::fill(tmp_re_.begin(), tmp_re_.end(), Real(0));
    std::fill(tmp_im_.begin(), tmp_im_.end(), Real(0));
    for (int y = 0; y < ny_; ++y) {
      for (int j = 0; j < nj; ++j) {
        const Real c = cy_[y * nj + j];
        const Real s = sy_[y * nj + j];
        for (int k = 0; k < m_; ++k) {
          const Real* __restrict cr = in_re + (static_cast<std::size_t>(j) * m_ + k) * L;
          const Real* __restrict ci = in_im + (static_cast<std::size_t>(j) * m_ + k) * L;
          Real* __restrict ar = tre + (static_cast<std::size_t>(y) * m_ + k) * L;
          Real* __restrict ai = tim + (static_cast<std::size_t>(y) * m_ + k) * L;
          for (int l = 0; l < L; ++l) {
            ar[l] += cr[l] * c - ci[l] * s;
            ai[l] += ci[l] * c + cr[l] * s;
          }
        }
      }
    }
    if (!accumulate) std::fill(out, out + static_cast<std::size_t>(nx_) * ny_ * L, Real(0));
    for (int y = 0; y < ny_; ++y) {
      for (int x = 0; x < nx_; ++x) {
        Real* __restrict o = out + (static_cast<std::size_t>(y) * nx_ + x) * L;
        for (int k = 0; k < m_; ++k) {
          const Real c = kx_weight[k] * cx_[x * m_ + k];
          const Real s = kx_weight[k] * sx_[x * m_ + k];
          const Real* __restrict ar = tre + (static_cast<std::size_t>(y) * m_ + k) * L;
          const Real* __restrict ai = tim + (static_cast<std::size_t>(y) * m_ + k) * L;
          for (int l = 0; l < L; ++l) o[l] += ar[l] * c - ai[l] * s;
        }
      }
    }
  }

  int nx_ = 0;
  int ny_ = 0;
  int m_ = 0;
  int lanes_ = 0;
  std::vector<Real> cx_, sx_, cy_, sy_;
  std::vector<Real> tmp_re_, tmp_im_;
};

/// Intermediates recorded by forward() for one sample. A tape may be
/// re-recorded, but each recording supports exactly one backward().
template <typename Real>
struct FnoTape {
  std::vector<Real> input;                  // normalized, [pixel][in_channel]
  std::vector<std::vector<Real>> h;         // block inputs plus final hidden state
  std::vector<std::vector<Real>> z;         // block pre-activations
  std::vector<std::vector<Real>> f_re, f_im;  // truncated spectra of block inputs
  std::vector<Real> q;                      // projection pre-activation
  std::vector<Real> a;                      // projection activation
  bool recorded = false;
  bool consumed = false;
};

/// Forward and reverse-mode evaluation of a fixed FNO architecture. Holds
/// scratch buffers, so one engine must not be shared between threads.
template <typename Real>
class FnoEngine {
public:
  explicit FnoEngine(const FnoConfig& cfg)
      : cfg_(cfg), dft_(cfg.grid, cfg.modes, cfg.width), P_(cfg.grid.size()) {
    cfg.validate();
    const double inv_n = 1.0 / static_cast<double>(P_);
    synth_w_.resize(cfg.modes);
    unit_w_.assign(cfg.modes, Real(1));
    for (int k = 0; k < cfg.modes; ++k) synth_w_[k] = static_cast<Real>((k == 0 ? 1.0 : 2.0) * inv_n);
    const std::size_t spec = dft_.spectral_size();
    g_re_.resize(spec);
    g_im_.resize(spec);
    df_re_.resize(spec);
    df_im_.resize(spec);
    dh_.resize(P_ * cfg.width);
    dz_.resize(P_ * cfg.width);
  }

  const FnoConfig& config() const { return cfg_; }

  /// input: raw (un-normalized) channels, layout [pixel][in_channel].
  std::vector<Real> forward(const FnoParams<Real>& p, std::span<const Real> input, FnoTape<Real>& tape) {
    check(p, input.size());
    switch (cfg_.width) {
    case 8: return forward_impl<8>(p, input, tape);
    case 16: return forward_impl<16>(p, input, tape);
    case 32: return forward_impl<32>(p, input, tape);
    default: return forward_impl<0>(p, input, tape);
    }
  }

  /// Accumulates d(loss)/d(theta) into grads given d(loss)/d(output).
  void backward(const FnoParams<Real>& p, FnoTape<Real>& tape, std::span<const Real> upstream,
                FnoParams<Real>& grads) {
    if (!tape.recorded) throw TapeError("backward called on an empty tape");
    if (tape.consumed) throw TapeError("tape already consumed by a previous backward pass");
    if (upstream.size() != P_) throw ShapeError("upstream gradient size does not match grid");
    if (!(grads.config == cfg_)) throw ShapeError("gradient config does not match engine config");
    tape.consumed = true;
    switch (cfg_.width) {
    case 8: backward_impl<8>(p, tape, upstream, grads); break;
    case 16: backward_impl<16>(p, tape, upstream, grads); break;
    case 32: backward_impl<32>(p, tape, upstream, grads); break;
    default: backward_impl<0>(p, tape, upstream, grads); break;
    }
  }

private:
  template <int Lanes>
  std::vector<Real> forward_impl(const FnoParams<Real>& p, std::span<const Real> input, FnoTape<Real>& tape) {
    const int C = cfg_.in_channels;
    const int W = Lanes > 0 ? Lanes : cfg_.width;
    const int m = cfg_.modes;
    tape.recorded = true;
    tape.consumed = false;
    tape.input.resize(P_ * C);
    for (int c = 0; c < C; ++c) {
      const Real mean = static_cast<Real>(p.norm.mean[c]);
      const Real inv = static_cast<Real>(1.0 / p.norm.stddev[c]);
      for (std::size_t px = 0; px < P_; ++px) tape.input[px * C + c] = (input[px * C + c] - mean) * inv;
    }
    tape.h.resize(cfg_.n_blocks + 1);
    tape.z.resize(cfg_.n_blocks);
    tape.f_re.resize(cfg_.n_blocks);
    tape.f_im.resize(cfg_.n_blocks);

    // lift
    auto& h0 = tape.h[0];
    h0.resize(P_ * W);
    if constexpr (Lanes > 0) {
      using Vec = detail::Lanes<Real, Lanes>;
      const Vec bias = detail::load<Real, Lanes>(p.lift_b.data());
      for (std::size_t px = 0; px < P_; ++px) {
        Vec o = bias;
        for (int c = 0; c < C; ++c)
          o += tape.input[px * C + c] * detail::load<Real, Lanes>(p.lift_w.data() + static_cast<std::size_t>(c) * W);
        detail::store(o, h0.data() + px * W);
      }
    } else for (std::size_t px = 0; px < P_; ++px) {
      Real* __restrict o = h0.data() + px * W;
      for (int w = 0; w < W; ++w) o[w] = p.lift_b[w];
      for (int c = 0; c < C; ++c) {
        const Real xv = tape.input[px * C + c];
        const Real* __restrict wr = p.lift_w.data() + static_cast<std::size_t>(c) * W;
        for (int w = 0; w < W; ++w) o[w] += xv * wr[w];
      }
    }

    for (int b = 0; b < cfg_.n_blocks; ++b) {
      const auto& bp = p.blocks[b];
      const auto& h = tape.h[b];
      auto& z = tape.z[b];
      auto& fr = tape.f_re[b];
      auto& fi = tape.f_im[b];
      fr.resize(dft_.spectral_size());
      fi.resize(dft_.spectral_size());
      z.resize(P_ * W);
      dft_.template analysis<Lanes>(h.data(), fr.data(), fi.data());
      spectral_mix<Lanes>(bp, fr.data(), fi.data(), g_re_.data(), g_im_.data(), m, W);
      dft_.template synthesis<Lanes>(g_re_.data(), g_im_.data(), synth_w_, z.data(), false);
      if (cfg_.pointwise_bypass) pointwise<Lanes>(h.data(), bp.pw_w.data(), bp.pw_b.data(), z.data(), W);
      auto& hn = tape.h[b + 1];
      hn.resize(P_ * W);
      const bool act = cfg_.activation == Activation::Gelu && b + 1 < cfg_.n_blocks;
      if (act)
        detail::gelu_array(z.data(), hn.data(), hn.size());
      else
        std::copy(z.begin(), z.end(), hn.begin());
    }

    // projection
    const auto& hl = tape.h[cfg_.n_blocks];
    tape.q.assign(P_ * W, Real(0));
    pointwise<Lanes>(hl.data(), p.proj1_w.data(), p.proj1_b.data(), tape.q.data(), W);
    tape.a.resize(P_ * W);
    if (cfg_.activation == Activation::Gelu)
      detail::gelu_array(tape.q.data(), tape.a.data(), tape.a.size());
    else
      tape.a = tape.q;
    std::vector<Real> out(P_);
    if constexpr (Lanes > 0) {
      const auto w2 = detail::load<Real, Lanes>(p.proj2_w.data());
      for (std::size_t px = 0; px < P_; ++px)
        out[px] = p.proj2_b[0] + detail::stdx::reduce(detail::load<Real, Lanes>(tape.a.data() + px * W) * w2);
      return out;
    }
    for (std::size_t px = 0; px < P_; ++px) {
      const Real* __restrict a = tape.a.data() + px * W;
      Real s = p.proj2_b[0];
      for (int w = 0; w < W; ++w) s += a[w] * p.proj2_w[w];
      out[px] = s;
    }
    return out;
  }

  template <int Lanes>
  void backward_impl(const FnoParams<Real>& p, FnoTape<Real>& tape, std::span<const Real> upstream,
                     FnoParams<Real>& grads) {
    const int C = cfg_.in_channels;
    const int W = Lanes > 0 ? Lanes : cfg_.width;
    const int m = cfg_.modes;

    // projection
    if constexpr (Lanes > 0) {
      using Vec = detail::Lanes<Real, Lanes>;
      const Vec w2 = detail::load<Real, Lanes>(p.proj2_w.data());
      Vec gw2 = detail::load<Real, Lanes>(grads.proj2_w.data());
      Real gb2 = Real(0);
      for (std::size_t px = 0; px < P_; ++px) {
        const Real g = upstream[px];
        gb2 += g;
        gw2 += detail::load<Real, Lanes>(tape.a.data() + px * W) * g;
        detail::store(Vec(w2 * g), dz_.data() + px * W);
      }
      detail::store(gw2, grads.proj2_w.data());
      grads.proj2_b[0] += gb2;
    } else for (std::size_t px = 0; px < P_; ++px) {
      const Real g = upstream[px];
      grads.proj2_b[0] += g;
      const Real* __restrict a = tape.a.data() + px * W;
      Real* __restrict dq = dz_.data() + px * W;
      for (int w = 0; w < W; ++w) {
        grads.proj2_w[w] += a[w] * g;
        dq[w] = p.proj2_w[w] * g;
      }
    }
    if (cfg_.activation == Activation::Gelu) detail::gelu_grad_array(tape.q.data(), dz_.data(), dz_.data(), P_ * W);
    pointwise_backward<Lanes>(tape.h[cfg_.n_blocks].data(), p.proj1_w.data(), dz_.data(), grads.proj1_w.data(),
                       grads.proj1_b.data(), dh_.data(), W, false);

    for (int b = cfg_.n_blocks - 1; b >= 0; --b) {
      const auto& bp = p.blocks[b];
      auto& gb = grads.blocks[b];
      const auto& z = tape.z[b];
      const bool act = cfg_.activation == Activation::Gelu && b + 1 < cfg_.n_blocks;
      if (act)
        detail::gelu_grad_array(z.data(), dh_.data(), dz_.data(), P_ * W);
      else
        std::copy(dh_.begin(), dh_.end(), dz_.begin());
      const auto& h = tape.h[b];
      if (cfg_.pointwise_bypass)
        pointwise_backward<Lanes>(h.data(), bp.pw_w.data(), dz_.data(), gb.pw_w.data(), gb.pw_b.data(), dh_.data(), W,
                           false);
      else
        std::fill(dh_.begin(), dh_.end(), Real(0));
      // adjoint of the weighted synthesis: analysis scaled per kx
      dft_.template analysis<Lanes>(dz_.data(), g_re_.data(), g_im_.data());
      const std::size_t nj = 2 * static_cast<std::size_t>(m);
      for (std::size_t j = 0; j < nj; ++j)
        for (int k = 0; k < m; ++k) {
          const Real s = synth_w_[k];
          Real* __restrict gr = g_re_.data() + (j * m + k) * W;
          Real* __restrict gi = g_im_.data() + (j * m + k) * W;
          for (int w = 0; w < W; ++w) {
            gr[w] *= s;
            gi[w] *= s;
          }
        }
      spectral_mix_backward<Lanes>(bp, gb, tape.f_re[b].data(), tape.f_im[b].data(), g_re_.data(), g_im_.data(),
                            df_re_.data(), df_im_.data(), m, W);
      // adjoint of the analysis: unweighted synthesis
      dft_.template synthesis<Lanes>(df_re_.data(), df_im_.data(), unit_w_, dh_.data(), true);
    }

    // lift
    if constexpr (Lanes > 0) {
      using Vec = detail::Lanes<Real, Lanes>;
      Vec gb = Real(0);
      for (std::size_t px = 0; px < P_; ++px) {
        const Vec d = detail::load<Real, Lanes>(dh_.data() + px * W);
        gb += d;
        for (int c = 0; c < C; ++c) {
          Real* gw = grads.lift_w.data() + static_cast<std::size_t>(c) * W;
          detail::store(Vec(detail::load<Real, Lanes>(gw) + tape.input[px * C + c] * d), gw);
        }
      }
      detail::store(Vec(detail::load<Real, Lanes>(grads.lift_b.data()) + gb), grads.lift_b.data());
      return;
    }
    for (std::size_t px = 0; px < P_; ++px) {
      const Real* __restrict d = dh_.data() + px * W;
      for (int w = 0; w < W; ++w) grads.lift_b[w] += d[w];
      for (int c = 0; c < C; ++c) {
        const Real xv = tape.input[px * C + c];
        Real* __restrict gw = grads.lift_w.data() + static_cast<std::size_t>(c) * W;
        for (int w = 0; w < W; ++w) gw[w] += xv * d[w];
      }
    }
  }

  void check(const FnoParams<Real>& p, std::size_t input_size) const {
    if (!(p.config == cfg_)) throw ShapeError("parameter config does not match engine config");
    if (input_size != P_ * cfg_.in_channels)
      throw ShapeError("input has " + std::to_string(input_size) + " values, expected " +
                       std::to_string(P_ * cfg_.in_channels));
    if (p.norm.mean.size() != static_cast<std::size_t>(cfg_.in_channels) || p.norm.stddev.size() != p.norm.mean.size())
      throw ShapeError("normalization statistics do not match in_channels");
  }

  // out[px][o] += sum_i in[px][i] w[i][o] + b[o]
  template <int Lanes>
  void pointwise(const Real* __restrict in, const Real* __restrict w, const Real* __restrict b, Real* __restrict out,
                 int w_dyn) const {
    const int W = Lanes > 0 ? Lanes : w_dyn;
    if constexpr (Lanes > 0) {
      using Vec = detail::Lanes<Real, Lanes>;
      const Vec bias = detail::load<Real, Lanes>(b);
      detail::blocked(P_, [&]<int B>(std::size_t px0) {
        Vec o[B];
        for (int k = 0; k < B; ++k) o[k] = detail::load<Real, Lanes>(out + (px0 + k) * W) + bias;
        for (int i = 0; i < W; ++i) {
          const Vec wr = detail::load<Real, Lanes>(w + static_cast<std::size_t>(i) * W);
          for (int k = 0; k < B; ++k) o[k] += in[(px0 + k) * W + i] * wr;
        }
        for (int k = 0; k < B; ++k) detail::store(o[k], out + (px0 + k) * W);
      });
      return;
    }
    for (std::size_t px = 0; px < P_; ++px) {
      Real* __restrict o = out + px * W;
      const Real* __restrict x = in + px * W;
      for (int k = 0; k < W; ++k) o[k] += b[k];
      for (int i = 0; i < W; ++i) {
        const Real xv = x[i];
        const Real* __restrict wr = w + static_cast<std::size_t>(i) * W;
        for (int k = 0; k < W; ++k) o[k] += xv * wr[k];
      }
    }
  }

  // Given dout, accumulate dW, db and write (or add) din.
  template <int Lanes>
  void pointwise_backward(const Real* __restrict in, const Real* __restrict w, const Real* __restrict dout,
                          Real* __restrict dw, Real* __restrict db, Real* __restrict din, int w_dyn,
                          bool accumulate) {
    const int W = Lanes > 0 ? Lanes : w_dyn;
    if constexpr (Lanes > 0) {
      using Vec = detail::Lanes<Real, Lanes>;
      wt_.resize(static_cast<std::size_t>(W) * W);
      for (int i = 0; i < W; ++i)
        for (int o = 0; o < W; ++o) wt_[static_cast<std::size_t>(o) * W + i] = w[static_cast<std::size_t>(i) * W + o];
      Vec gw[Lanes];
      for (int i = 0; i < W; ++i) gw[i] = detail::load<Real, Lanes>(dw + static_cast<std::size_t>(i) * W);
      Vec gb = detail::load<Real, Lanes>(db);
      for (std::size_t px = 0; px < P_; ++px) {
        const Real* __restrict dp = dout + px * W;
        const Real* __restrict x = in + px * W;
        const Vec d = detail::load<Real, Lanes>(dp);
        gb += d;
        Vec acc = accumulate ? detail::load<Real, Lanes>(din + px * W) : Vec(Real(0));
        for (int i = 0; i < W; ++i) {
          gw[i] += x[i] * d;
          acc += dp[i] * detail::load<Real, Lanes>(wt_.data() + static_cast<std::size_t>(i) * W);
        }
        detail::store(acc, din + px * W);
      }
      for (int i = 0; i < W; ++i) detail::store(gw[i], dw + static_cast<std::size_t>(i) * W);
      detail::store(gb, db);
      return;
    }
    for (std::size_t px = 0; px < P_; ++px) {
      const Real* __restrict d = dout + px * W;
      const Real* __restrict x = in + px * W;
      Real* __restrict di = din + px * W;
      for (int k = 0; k < W; ++k) db[k] += d[k];
      for (int i = 0; i < W; ++i) {
        const Real xv = x[i];
        Real* __restrict gw = dw + static_cast<std::size_t>(i) * W;
        const Real* __restrict wr = w + static_cast<std::size_t>(i) * W;
        Real acc = Real(0);
        for (int k = 0; k < W; ++k) {
          gw[k] += xv * d[k];
          acc += wr[k] * d[k];
        }
        di[i] = accumulate ? di[i] + acc : acc;
      }
    }
  }

  // G[j][kx][o] = sum_i F[j][kx][i] * Wt[corner][ky][kx][i][o]
  template <int Lanes>
  void spectral_mix(const FnoBlockParams<Real>& bp, const Real* __restrict fr, const Real* __restrict fi,
                    Real* __restrict gr, Real* __restrict gi, int m, int w_dyn) const {
    const int W = Lanes > 0 ? Lanes : w_dyn;
    const std::size_t nj = 2 * static_cast<std::size_t>(m);
    const std::size_t ww = static_cast<std::size_t>(W) * W;
    for (std::size_t j = 0; j < nj; ++j)
      for (int k = 0; k < m; ++k) {
        const std::size_t mode = j * m + k;  // equals (corner*m + ky)*m + kx
        const Real* __restrict wre = bp.spec_re.data() + mode * ww;
        const Real* __restrict wim = bp.spec_im.data() + mode * ww;
        const Real* __restrict a = fr + mode * W;
        const Real* __restrict bi = fi + mode * W;
        Real* __restrict o_r = gr + mode * W;
        Real* __restrict o_i = gi + mode * W;
        if constexpr (Lanes > 0) {
          using Vec = detail::Lanes<Real, Lanes>;
          Vec sr = Real(0);
          Vec si = Real(0);
          for (int i = 0; i < W; ++i) {
            const Vec wr = detail::load<Real, Lanes>(wre + static_cast<std::size_t>(i) * W);
            const Vec wi = detail::load<Real, Lanes>(wim + static_cast<std::size_t>(i) * W);
            sr += a[i] * wr - bi[i] * wi;
            si += a[i] * wi + bi[i] * wr;
          }
          detail::store(sr, o_r);
          detail::store(si, o_i);
          continue;
        }
        for (int o = 0; o < W; ++o) {
          o_r[o] = Real(0);
          o_i[o] = Real(0);
        }
        for (int i = 0; i < W; ++i) {
          const Real xr = a[i];
          const Real xi = bi[i];
          const Real* __restrict wr = wre + static_cast<std::size_t>(i) * W;
          const Real* __restrict wi = wim + static_cast<std::size_t>(i) * W;
          for (int o = 0; o < W; ++o) {
            o_r[o] += xr * wr[o] - xi * wi[o];
            o_i[o] += xr * wi[o] + xi * wr[o];
          }
        }
      }
  }

  template <int Lanes>
  void spectral_mix_backward(const FnoBlockParams<Real>& bp, FnoBlockParams<Real>& gb, const Real* __restrict fr,
                             const Real* __restrict fi, const Real* __restrict dgr, const Real* __restrict dgi,
                             Real* __restrict dfr, Real* __restrict dfi, int m, int w_dyn) const {
    const int W = Lanes > 0 ? Lanes : w_dyn;
    const std::size_t nj = 2 * static_cast<std::size_t>(m);
    const std::size_t ww = static_cast<std::size_t>(W) * W;
    for (std::size_t j = 0; j < nj; ++j)
      for (int k = 0; k < m; ++k) {
        const std::size_t mode = j * m + k;
        const Real* __restrict wre = bp.spec_re.data() + mode * ww;
        const Real* __restrict wim = bp.spec_im.data() + mode * ww;
        Real* __restrict gwr = gb.spec_re.data() + mode * ww;
        Real* __restrict gwi = gb.spec_im.data() + mode * ww;
        const Real* __restrict a = fr + mode * W;
        const Real* __restrict bi = fi + mode * W;
        const Real* __restrict gr = dgr + mode * W;
        const Real* __restrict gi = dgi + mode * W;
        if constexpr (Lanes > 0) {
          using Vec = detail::Lanes<Real, Lanes>;
          const Vec vgr = detail::load<Real, Lanes>(gr);
          const Vec vgi = detail::load<Real, Lanes>(gi);
          for (int i = 0; i < W; ++i) {
            const std::size_t row = static_cast<std::size_t>(i) * W;
            const Vec wr = detail::load<Real, Lanes>(wre + row);
            const Vec wi = detail::load<Real, Lanes>(wim + row);
            detail::store(Vec(detail::load<Real, Lanes>(gwr + row) + a[i] * vgr + bi[i] * vgi), gwr + row);
            detail::store(Vec(detail::load<Real, Lanes>(gwi + row) + a[i] * vgi - bi[i] * vgr), gwi + row);
            dfr[mode * W + i] = detail::stdx::reduce(Vec(vgr * wr + vgi * wi));
            dfi[mode * W + i] = detail::stdx::reduce(Vec(vgi * wr - vgr * wi));
          }
          continue;
        }
        for (int i = 0; i < W; ++i) {
          const Real xr = a[i];
          const Real xi = bi[i];
          const Real* __restrict wr = wre + static_cast<std::size_t>(i) * W;
          const Real* __restrict wi = wim + static_cast<std::size_t>(i) * W;
          Real* __restrict dwr = gwr + static_cast<std::size_t>(i) * W;
          Real* __restrict dwi = gwi + static_cast<std::size_t>(i) * W;
          Real accr = Real(0);
          Real acci = Real(0);
          for (int o = 0; o < W; ++o) {
            dwr[o] += xr * gr[o] + xi * gi[o];
            dwi[o] += xr * gi[o] - xi * gr[o];
            accr += gr[o] * wr[o] + gi[o] * wi[o];
            acci += gi[o] * wr[o] - gr[o] * wi[o];
          }
          dfr[mode * W + i] = accr;
          dfi[mode * W + i] = acci;
        }
      }
  }

  FnoConfig cfg_;
  TruncatedDft<Real> dft_;
  std::size_t P_;
  std::vector<Real> synth_w_, unit_w_;
  std::vector<Real> g_re_, g_im_, df_re_, df_im_;
  std::vector<Real> dh_, dz_;
  std::vector<Real> wt_;
};

/// One-shot convenience wrappers mirroring the engine.
template <typename Real>
std::vector<Real> forward(const FnoParams<Real>& p, std::type_identity_t<std::span<const Real>> input,
                          FnoTape<Real>& tape) {
  FnoEngine<Real> engine(p.config);
  return engine.forward(p, input, tape);
}

template <typename Real>
FnoParams<Real> backward(const FnoParams<Real>& p, FnoTape<Real>& tape,
                         std::type_identity_t<std::span<const Real>> upstream) {
  FnoEngine<Real> engine(p.config);
  FnoParams<Real> grads = FnoParams<Real>::zeros(p.config);
  engine.backward(p, tape, upstream, grads);
  return grads;
}

} // namespace pdewb
