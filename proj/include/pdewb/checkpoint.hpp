#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "pdewb/binary_io.hpp"
#include "pdewb/channels.hpp"
#include "pdewb/fno.hpp"

namespace pdewb {

/// Trained parameters with the input layout they expect.
struct Checkpoint {
  FnoParams<float> params;
  InputSpec inputs;
  nlohmann::json provenance = nlohmann::json::object();

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline constexpr std::string_view checkpoint_magic{"PDEWBCK1", 8};
inline constexpr std::uint32_t checkpoint_version = 1;

inline nlohmann::json to_json(const FnoConfig& c) {
  return {{"in_channels", c.in_channels},
          {"width", c.width},
          {"modes", c.modes},
          {"n_blocks", c.n_blocks},
          {"grid", {{"nx", c.grid.nx}, {"ny", c.grid.ny}}},
          {"activation", c.activation == Activation::Gelu ? "gelu" : "identity"},
          {"pointwise_bypass", c.pointwise_bypass}};
}

inline FnoConfig fno_config_from_json(const nlohmann::json& j) {
  FnoConfig c;
  c.in_channels = j.at("in_channels").get<int>();
  c.width = j.at("width").get<int>();
  c.modes = j.at("modes").get<int>();
  c.n_blocks = j.at("n_blocks").get<int>();
  c.grid = GridSpec{j.at("grid").at("nx").get<int>(), j.at("grid").at("ny").get<int>()};
  const auto act = j.at("activation").get<std::string>();
  if (act != "gelu" && act != "identity") throw FormatError("unknown activation '" + act + "'");
  c.activation = act == "gelu" ? Activation::Gelu : Activation::Identity;
  c.pointwise_bypass = j.at("pointwise_bypass").get<bool>();
  c.validate();
  return c;
}

/// Name and shape of every tensor, in declaration order.
inline std::vector<std::pair<std::string, std::vector<int>>> tensor_shapes(const FnoConfig& c) {
  const int w = c.width;
  const int m = c.modes;
  std::vector<std::pair<std::string, std::vector<int>>> s;
  s.push_back({"lift.w", {c.in_channels, w}});
  s.push_back({"lift.b", {w}});
  for (int i = 0; i < c.n_blocks; ++i) {
    const std::string pre = "blocks." + std::to_string(i) + ".";
    s.push_back({pre + "spec_re", {2, m, m, w, w}});
    s.push_back({pre + "spec_im", {2, m, m, w, w}});
    s.push_back({pre + "pw.w", {w, w}});
    s.push_back({pre + "pw.b", {w}});
  }
  s.push_back({"proj1.w", {w, w}});
  s.push_back({"proj1.b", {w}});
  s.push_back({"proj2.w", {w, 1}});
  s.push_back({"proj2.b", {1}});
  return s;
}

namespace detail {

inline std::string shape_string(const std::vector<int>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? ", " : "") + std::to_string(s[i]);
  return out + "]";
}

} // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ck) {
  ck.params.config.validate();
  ck.inputs.validate();
  if (ck.inputs.size() != ck.params.config.in_channels)
    throw LayoutError("input spec width does not match in_channels");
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& [name, shape] : tensor_shapes(ck.params.config)) tensors.push_back({{"name", name}, {"shape", shape}});
  const nlohmann::json header = {
      {"config", to_json(ck.params.config)},
      {"inputs", to_json(ck.inputs)},
      {"norm_stats", {{"mean", ck.params.norm.mean}, {"std", ck.params.norm.stddev}}},
      {"tensors", tensors},
      {"provenance", ck.provenance},
  };
  ByteWriter w;
  w.put_bytes(checkpoint_magic);
  w.put(checkpoint_version);
  w.put_string(header.dump());
  ck.params.for_each_tensor([&](const std::string&, std::span<const float> t) { w.put_f32(t); });
  w.seal();
  return w.bytes();
}

/// Decodes a checkpoint. With `expected`, every tensor shape is checked
/// against that config and the first mismatch is reported by name.
inline Checkpoint decode_checkpoint(std::string_view bytes, const std::optional<FnoConfig>& expected = std::nullopt) {
  if (bytes.size() < checkpoint_magic.size() || bytes.substr(0, checkpoint_magic.size()) != checkpoint_magic)
    throw FormatError("not a checkpoint file (bad magic)");
  const std::string_view body = checked_payload(bytes);
  ByteReader r(body);
  r.get_bytes(checkpoint_magic.size());
  const auto version = r.get<std::uint32_t>();
  if (version != checkpoint_version) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  FnoConfig cfg;
  try {
    const auto header = nlohmann::json::parse(r.get_string());
    cfg = fno_config_from_json(header.at("config"));
    ck.inputs = input_spec_from_json(header.at("inputs"));
    ck.params = FnoParams<float>::zeros(cfg);
    ck.params.norm.mean = header.at("norm_stats").at("mean").get<std::vector<double>>();
    ck.params.norm.stddev = header.at("norm_stats").at("std").get<std::vector<double>>();
    ck.provenance = header.at("provenance");
    const auto shapes = tensor_shapes(cfg);
    const auto& listed = header.at("tensors");
    if (listed.size() != shapes.size()) throw FormatError("tensor list does not match config");
    for (std::size_t i = 0; i < shapes.size(); ++i)
      if (listed[i].at("name").get<std::string>() != shapes[i].first ||
          listed[i].at("shape").get<std::vector<int>>() != shapes[i].second)
        throw FormatError("tensor '" + shapes[i].first + "' does not match config");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint header: ") + e.what());
  }
  if (ck.params.norm.mean.size() != static_cast<std::size_t>(cfg.in_channels) ||
      ck.params.norm.stddev.size() != ck.params.norm.mean.size())
    throw FormatError("normalization statistics do not match in_channels");
  if (expected) {
    const auto want = tensor_shapes(*expected);
    const auto have = tensor_shapes(cfg);
    for (std::size_t i = 0; i < std::max(want.size(), have.size()); ++i) {
      if (i >= want.size()) throw ShapeError("unexpected tensor '" + have[i].first + "' in checkpoint");
      if (i >= have.size()) throw ShapeError("tensor '" + want[i].first + "' missing from checkpoint");
      if (want[i] != have[i])
        throw ShapeError("tensor '" + want[i].first + "' has shape " + detail::shape_string(have[i].second) +
                         ", expected " + detail::shape_string(want[i].second));
    }
    if (!(cfg == *expected)) throw ShapeError("checkpoint config differs from the expected config");
  }
  ck.params.for_each_tensor([&](const std::string&, std::span<float> t) { r.get_f32(t); });
  if (r.remaining() != 0) throw FormatError("trailing bytes after tensors");
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path,
                                  const std::optional<FnoConfig>& expected = std::nullopt) {
  return decode_checkpoint(read_file(path), expected);
}

} // namespace pdewb
