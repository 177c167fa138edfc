#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pdewb/binary_io.hpp"
#include "pdewb/checkpoint.hpp"
#include "pdewb/data.hpp"
#include "pdewb/errors.hpp"
#include "pdewb/spectral.hpp"
#include "pdewb/trainer.hpp"

namespace pdewb {

/// Radial band partition: low = [0, low], mid = (low, mid], high = (mid, k_max].
struct BandEdges {
  int low = 4;
  int mid = 12;

  friend bool operator==(const BandEdges&, const BandEdges&) = default;
};

inline std::array<FrequencyBand, 3> frequency_bands(const GridSpec& grid, const BandEdges& e) {
  const int kmax = max_radial_mode(grid);
  if (!(0 <= e.low && e.low < e.mid && e.mid < kmax))
    throw ConfigError("band edges must satisfy 0 <= low < mid < " + std::to_string(kmax));
  return {FrequencyBand{0, e.low}, FrequencyBand{e.low + 1, e.mid}, FrequencyBand{e.mid + 1, kmax}};
}

namespace detail {

inline void check_batch(std::span<const Field2D> preds, std::span<const Field2D> targets) {
  if (preds.size() != targets.size()) throw ShapeError("prediction and target batch sizes differ");
  if (preds.empty()) throw PreconditionError("metrics need a nonempty batch");
  for (std::size_t i = 0; i < preds.size(); ++i) preds[i].check_same(targets[i]);
}

} // namespace detail

struct MuL2 {
  double value = 0.0;
  std::size_t excluded = 0;  // zero-norm targets left out of the mean
};

/// Mean relative L2 error over samples with nonzero targets.
inline MuL2 mu_l2(std::span<const Field2D> preds, std::span<const Field2D> targets) {
  detail::check_batch(preds, targets);
  MuL2 out;
  double acc = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double den = targets[i].norm2();
    if (den == 0.0) {
      ++out.excluded;
      continue;
    }
    double num = 0.0;
    for (std::size_t p = 0; p < preds[i].size(); ++p) {
      const double d = preds[i].values[p] - targets[i].values[p];
      num += d * d;
    }
    acc += std::sqrt(num) / den;
    ++used;
  }
  if (used == 0) throw PreconditionError("every target has zero norm");
  out.value = acc / static_cast<double>(used);
  return out;
}

enum class LinfMode { Max, PerSampleMean };

/// Largest absolute error over the batch, or with PerSampleMean the mean of
/// per-sample maxima.
inline double l_inf(std::span<const Field2D> preds, std::span<const Field2D> targets, LinfMode mode = LinfMode::Max) {
  detail::check_batch(preds, targets);
  double best = 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double m = max_abs_diff(preds[i], targets[i]);
    best = std::max(best, m);
    sum += m;
  }
  return mode == LinfMode::Max ? best : sum / static_cast<double>(preds.size());
}

/// Per-sample spectral error energy inside the band, with coefficients
/// scaled by 1/(nx*ny).
inline double band_energy(const Field2D& pred, const Field2D& target, const std::vector<bool>& mask) {
  Field2D diff = pred;
  diff -= target;
  const SpectralField2D s = fft2(diff);
  const double inv = 1.0 / static_cast<double>(diff.size());
  double e = 0.0;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) e += std::norm(s.coeffs[i] * inv);
  return e;
}

inline double frmse(std::span<const Field2D> preds, std::span<const Field2D> targets, const FrequencyBand& band) {
  detail::check_batch(preds, targets);
  const auto mask = radial_band_mask(preds[0].grid, band);
  if (std::none_of(mask.begin(), mask.end(), [](bool b) { return b; }))
    throw ConfigError("frequency band [" + std::to_string(band.k_min) + ", " + std::to_string(band.k_max) +
                      "] selects no modes");
  const double width = band.k_max - band.k_min + 1;
  double acc = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) acc += std::sqrt(band_energy(preds[i], targets[i], mask)) / width;
  return acc / static_cast<double>(preds.size());
}

struct MetricsReport {
  std::string task;
  std::size_t n_samples = 0;
  double mu_l2 = 0.0;
  double l_inf = 0.0;
  double frmse_low = 0.0;
  double frmse_mid = 0.0;
  double frmse_high = 0.0;
  BandEdges band_edges;
  std::size_t excluded = 0;
  nlohmann::json provenance = nlohmann::json::object();

  nlohmann::json to_json() const {
    return {{"task", task},
            {"n_samples", n_samples},
            {"mu_l2", mu_l2},
            {"l_inf", l_inf},
            {"frmse_low", frmse_low},
            {"frmse_mid", frmse_mid},
            {"frmse_high", frmse_high},
            {"band_edges", {band_edges.low, band_edges.mid}},
            {"excluded", excluded},
            {"provenance", provenance}};
  }

  static MetricsReport from_json(const nlohmann::json& j) {
    auto num = [&](const char* k) {
      const auto& v = j.at(k);
      return v.is_null() ? std::nan("") : v.get<double>();
    };
    MetricsReport r;
    r.task = j.at("task").get<std::string>();
    r.n_samples = j.at("n_samples").get<std::size_t>();
    r.mu_l2 = num("mu_l2");
    r.l_inf = num("l_inf");
    r.frmse_low = num("frmse_low");
    r.frmse_mid = num("frmse_mid");
    r.frmse_high = num("frmse_high");
    r.band_edges = {j.at("band_edges").at(0).get<int>(), j.at("band_edges").at(1).get<int>()};
    r.excluded = j.at("excluded").get<std::size_t>();
    r.provenance = j.at("provenance");
    return r;
  }

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

inline MetricsReport compute_metrics(std::span<const Field2D> preds, std::span<const Field2D> targets,
                                     const std::string& task, const BandEdges& edges = {}) {
  detail::check_batch(preds, targets);
  const auto bands = frequency_bands(preds[0].grid, edges);
  MetricsReport r;
  r.task = task;
  r.n_samples = preds.size();
  const MuL2 m = mu_l2(preds, targets);
  r.mu_l2 = m.value;
  r.excluded = m.excluded;
  r.l_inf = l_inf(preds, targets);
  r.frmse_low = frmse(preds, targets, bands[0]);
  r.frmse_mid = frmse(preds, targets, bands[1]);
  r.frmse_high = frmse(preds, targets, bands[2]);
  r.band_edges = edges;
  return r;
}

/// Model outputs for every sample, in sample order.
inline std::vector<Field2D> predict_all(const Checkpoint& ck, const Dataset& ds, int threads = 0) {
  detail::check_grid(ck, ds);
  std::vector<Field2D> out(ds.size());
  parallel_chunks(ds.size(), detail::resolve_threads(threads), [&](std::size_t, std::size_t b, std::size_t e) {
    Predictor pr(ck.params.config);
    for (std::size_t i = b; i < e; ++i) out[i] = pr.predict(ck, ds.samples[i]);
  });
  return out;
}

inline std::string hex32(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

/// Inference over a labelled dataset. Provenance records the checkpoint
/// CRC and the manifest CRC.
inline MetricsReport evaluate(const Checkpoint& ck, const Dataset& ds, const BandEdges& edges = {}, int threads = 0) {
  if (ds.samples.empty()) throw PreconditionError("evaluation dataset is empty");
  if (!ds.all_have_solutions()) throw PreconditionError("evaluation needs solutions for every sample");
  const auto preds = predict_all(ck, ds, threads);
  std::vector<Field2D> targets;
  targets.reserve(ds.size());
  for (const PdeSample& s : ds.samples) targets.push_back(*s.solution);
  MetricsReport r = compute_metrics(preds, targets, std::string(to_string(ds.samples.front().system)), edges);
  r.provenance = {{"checkpoint_crc32", hex32(crc32_of(encode_checkpoint(ck)))},
                  {"manifest_crc32", hex32(crc32_of(ds.manifest.dump()))},
                  {"split", std::string(to_string(ds.split))},
                  {"k_slot", ck.inputs.k_slot}};
  return r;
}

} // namespace pdewb
