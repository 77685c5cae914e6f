#pragma once

#include <filesystem>
#include <string>

#include "geoshift/model.hpp"
#include "geoshift/serialize.hpp"

namespace geoshift {

// Checkpoint container, little-endian:
//   magic "GSCK" | version u16 | ModelConfig block | parameter arrays in a
//   fixed order, each as (dim count u8, dims u32 each, float64 payload) |
//   trailing CRC32. Values stay 64-bit so gradient-check fidelity survives
//   a save/load roundtrip.
inline constexpr char kCheckpointMagic[4] = {'G', 'S', 'C', 'K'};
inline constexpr uint16_t kCheckpointVersion = 1;

namespace detail {

inline void write_array1(ByteWriter& w, const std::vector<double>& v) {
  w.u8(1);
  w.u32(static_cast<uint32_t>(v.size()));
  for (double x : v) w.f64(x);
}

inline void write_array2(ByteWriter& w, const Matrix& m) {
  w.u8(2);
  w.u32(static_cast<uint32_t>(m.rows));
  w.u32(static_cast<uint32_t>(m.cols));
  for (double x : m.data) w.f64(x);
}

inline std::vector<double> read_array1(ByteReader& r) {
  if (r.u8() != 1) throw io_error("checkpoint: expected rank-1 array");
  const uint32_t n = r.u32();
  std::vector<double> v(n);
  for (double& x : v) x = r.f64();
  return v;
}

inline Matrix read_array2(ByteReader& r) {
  if (r.u8() != 2) throw io_error("checkpoint: expected rank-2 array");
  const uint32_t rows = r.u32();
  const uint32_t cols = r.u32();
  Matrix m(rows, cols);
  for (double& x : m.data) x = r.f64();
  return m;
}

}  // namespace detail

inline std::string checkpoint_bytes(const Parameters& p) {
  ByteWriter w;
  w.bytes(std::string_view(kCheckpointMagic, 4));
  w.u16(kCheckpointVersion);
  w.u32(static_cast<uint32_t>(p.config.input_dim));
  w.u32(static_cast<uint32_t>(p.config.num_classes));
  w.u8(static_cast<uint8_t>(p.config.hidden_dims.size()));
  for (size_t d : p.config.hidden_dims) w.u32(static_cast<uint32_t>(d));
  w.f64(p.config.dropout_p);
  w.f64(p.config.bn_momentum);
  w.f64(p.config.bn_epsilon);
  for (const LayerParams& layer : p.layers) {
    detail::write_array2(w, layer.weight);
    detail::write_array1(w, layer.bias);
    detail::write_array1(w, layer.bn_gamma);
    detail::write_array1(w, layer.bn_beta);
    detail::write_array1(w, layer.bn_running_mean);
    detail::write_array1(w, layer.bn_running_var);
  }
  detail::write_array2(w, p.head.weight);
  detail::write_array1(w, p.head.bias);
  return w.buffer();
}

/// CRC of the serialized payload; equal to the trailer a saved file carries.
inline uint32_t checkpoint_crc(const Parameters& p) { return crc32(checkpoint_bytes(p)); }

inline void save_checkpoint(const Parameters& p, const std::filesystem::path& path) {
  write_file_crc(path, checkpoint_bytes(p));
}

inline Parameters load_checkpoint(const std::filesystem::path& path) {
  CheckedFile file = CheckedFile::load(path);
  ByteReader r(file.payload);
  if (r.str(4) != std::string(kCheckpointMagic, 4)) throw magic_error("not a checkpoint file");
  if (r.u16() != kCheckpointVersion) throw version_error("unsupported checkpoint version");
  Parameters p;
  p.config.input_dim = r.u32();
  p.config.num_classes = r.u32();
  const uint8_t n_hidden = r.u8();
  p.config.hidden_dims.clear();
  for (uint8_t i = 0; i < n_hidden; ++i) p.config.hidden_dims.push_back(r.u32());
  p.config.dropout_p = r.f64();
  p.config.bn_momentum = r.f64();
  p.config.bn_epsilon = r.f64();
  p.config.validate();
  size_t in_dim = p.config.input_dim;
  for (size_t out_dim : p.config.hidden_dims) {
    LayerParams layer;
    layer.weight = detail::read_array2(r);
    layer.bias = detail::read_array1(r);
    layer.bn_gamma = detail::read_array1(r);
    layer.bn_beta = detail::read_array1(r);
    layer.bn_running_mean = detail::read_array1(r);
    layer.bn_running_var = detail::read_array1(r);
    if (layer.weight.rows != in_dim || layer.weight.cols != out_dim ||
        layer.bias.size() != out_dim || layer.bn_gamma.size() != out_dim ||
        layer.bn_beta.size() != out_dim || layer.bn_running_mean.size() != out_dim ||
        layer.bn_running_var.size() != out_dim)
      throw shape_error("checkpoint: array shapes inconsistent with config");
    p.layers.push_back(std::move(layer));
    in_dim = out_dim;
  }
  p.head.weight = detail::read_array2(r);
  p.head.bias = detail::read_array1(r);
  if (p.head.weight.rows != in_dim || p.head.weight.cols != p.config.num_classes ||
      p.head.bias.size() != p.config.num_classes)
    throw shape_error("checkpoint: head shape inconsistent with config");
  if (!r.done()) throw io_error("checkpoint: trailing bytes");
  file.verify();
  return p;
}

/// Load and require a specific architecture.
inline Parameters load_checkpoint(const std::filesystem::path& path,
                                  const ModelConfig& expected) {
  Parameters p = load_checkpoint(path);
  if (!(p.config == expected)) throw shape_error("checkpoint: config differs from expected");
  return p;
}

}  // namespace geoshift
