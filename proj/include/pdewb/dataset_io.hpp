#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <limits>
#include <string>

#include "json.hpp"
#include "pdewb/binary_io.hpp"
#include "pdewb/data.hpp"

namespace pdewb {

inline constexpr std::string_view dataset_magic{"PDEWB1\0\0", 8};
inline constexpr std::uint32_t dataset_version = 1;
inline constexpr int coefficient_slots = 12;

namespace detail {

inline std::array<double, coefficient_slots> pack_coefficients(const CoefficientSet& c) {
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  std::array<double, coefficient_slots> a;
  a.fill(nan);
  if (c.d) {
    a[0] = c.d->d11;
    a[1] = c.d->d12;
    a[2] = c.d->d22;
  }
  if (c.v) {
    a[3] = c.v->x;
    a[4] = c.v->y;
  }
  if (c.omega) a[5] = *c.omega;
  if (c.r) a[6] = *c.r;
  if (c.psi) a[7] = *c.psi;
  return a;
}

inline CoefficientSet unpack_coefficients(const std::array<double, coefficient_slots>& a) {
  CoefficientSet c;
  if (!std::isnan(a[0])) c.d = Tensor2{a[0], a[1], a[2]};
  if (!std::isnan(a[3])) c.v = Vec2{a[3], a[4]};
  if (!std::isnan(a[5])) c.omega = a[5];
  if (!std::isnan(a[6])) c.r = a[6];
  if (!std::isnan(a[7])) c.psi = a[7];
  return c;
}

} // namespace detail

/// Serializes a dataset. Fields are stored as f32; generated datasets hold
/// f32-representable values, so the round trip is exact.
inline std::string encode_dataset(const Dataset& ds) {
  if (ds.samples.empty()) throw PreconditionError("cannot encode an empty dataset");
  const GridSpec g = ds.grid();
  nlohmann::json manifest = ds.manifest;
  manifest["grid"] = {{"nx", g.nx}, {"ny", g.ny}};
  manifest["split"] = to_string(ds.split);
  manifest["sample_count"] = ds.samples.size();
  ByteWriter w;
  w.put_bytes(dataset_magic);
  w.put(dataset_version);
  w.put_string(manifest.dump());
  for (const PdeSample& s : ds.samples) {
    if (!(s.source.grid == g)) throw ShapeError("samples must share one grid");
    w.put(static_cast<std::uint8_t>(s.system));
    w.put(static_cast<std::uint8_t>(s.has_solution() ? 1 : 0));
    for (double v : detail::pack_coefficients(s.coeffs)) w.put(v);
    w.put_f32(s.source.span());
    if (s.system == SystemTag::Darcy) w.put_f32(s.coeffs.k->span());
    if (s.solution) w.put_f32(s.solution->span());
  }
  w.seal();
  return w.bytes();
}

inline Dataset decode_dataset(std::string_view bytes) {
  if (bytes.size() < dataset_magic.size() || bytes.substr(0, dataset_magic.size()) != dataset_magic)
    throw FormatError("not a dataset file (bad magic)");
  const std::string_view body = checked_payload(bytes);
  ByteReader r(body);
  r.get_bytes(dataset_magic.size());
  const auto version = r.get<std::uint32_t>();
  if (version != dataset_version) throw FormatError("unsupported dataset version " + std::to_string(version));
  Dataset ds;
  try {
    ds.manifest = nlohmann::json::parse(r.get_string());
    const GridSpec g{ds.manifest.at("grid").at("nx").get<int>(), ds.manifest.at("grid").at("ny").get<int>()};
    g.validate();
    ds.split = parse_split(ds.manifest.at("split").get<std::string>());
    const auto n = ds.manifest.at("sample_count").get<std::size_t>();
    ds.samples.resize(n);
    for (PdeSample& s : ds.samples) {
      const auto tag = r.get<std::uint8_t>();
      if (tag > static_cast<std::uint8_t>(SystemTag::Darcy)) throw FormatError("unknown system tag");
      s.system = static_cast<SystemTag>(tag);
      const bool has_solution = r.get<std::uint8_t>() != 0;
      std::array<double, coefficient_slots> a;
      for (double& v : a) v = r.get<double>();
      s.coeffs = detail::unpack_coefficients(a);
      s.source = Field2D(g);
      r.get_f32(s.source.values);
      if (s.system == SystemTag::Darcy) {
        Field2D k(g);
        r.get_f32(k.values);
        s.coeffs.k = std::move(k);
      }
      if (has_solution) {
        Field2D u(g);
        r.get_f32(u.values);
        s.solution = std::move(u);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed dataset manifest: ") + e.what());
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after last sample");
  return ds;
}

inline void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
  write_file_atomic(path, encode_dataset(ds));
}

inline Dataset read_dataset(const std::filesystem::path& path) { return decode_dataset(read_file(path)); }

} // namespace pdewb
