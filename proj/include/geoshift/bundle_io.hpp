#pragma once

#include <filesystem>
#include <string>

#include "geoshift/dataset.hpp"
#include "geoshift/serialize.hpp"

namespace geoshift {

// Bundle container, little-endian:
//   magic "GSD1" | version u16 | num_classes u32 | H u16 | W u16 | C u8 |
//   split count u8 | per split: name len u8 + name, sample count u32 |
//   per sample: id len u8 + id, region u16, label count u16 + labels u16,
//   pixels H*W*C float32 | trailing CRC32 of all preceding bytes.
inline constexpr char kBundleMagic[4] = {'G', 'S', 'D', '1'};
inline constexpr uint16_t kBundleVersion = 1;

inline void write_bundle(const DatasetBundle& b, const std::filesystem::path& path) {
  validate_bundle(b);
  ByteWriter w;
  w.bytes(std::string_view(kBundleMagic, 4));
  w.u16(kBundleVersion);
  w.u32(static_cast<uint32_t>(b.vocab.num_classes));
  const Split& first = b.source_train;
  const size_t h = first.empty() ? 0 : first[0].image.height;
  const size_t wd = first.empty() ? 0 : first[0].image.width;
  const size_t ch = first.empty() ? 0 : first[0].image.channels;
  w.u16(static_cast<uint16_t>(h));
  w.u16(static_cast<uint16_t>(wd));
  w.u8(static_cast<uint8_t>(ch));
  w.u8(static_cast<uint8_t>(split_names().size()));
  for (const auto& name : split_names()) {
    const Split& split = b.split(name);
    w.u8(static_cast<uint8_t>(name.size()));
    w.bytes(name);
    w.u32(static_cast<uint32_t>(split.size()));
    for (const Sample& s : split) {
      if (s.sample_id.size() > 255) throw config_error("sample_id longer than 255 bytes");
      if (s.image.height != h || s.image.width != wd || s.image.channels != ch)
        throw shape_error("write_bundle: image shape differs from header");
      w.u8(static_cast<uint8_t>(s.sample_id.size()));
      w.bytes(s.sample_id);
      w.u16(s.region_id);
      w.u16(static_cast<uint16_t>(s.labels.size()));
      for (int c : s.labels) w.u16(static_cast<uint16_t>(c));
      for (double v : s.image.data) w.f32(static_cast<float>(v));
    }
  }
  write_file_crc(path, w.buffer());
}

inline DatasetBundle read_bundle(const std::filesystem::path& path) {
  CheckedFile file = CheckedFile::load(path);
  ByteReader r(file.payload);
  if (r.str(4) != std::string(kBundleMagic, 4)) throw magic_error("not a bundle file");
  if (r.u16() != kBundleVersion) throw version_error("unsupported bundle version");
  DatasetBundle b;
  const uint32_t num_classes = r.u32();
  b.vocab = ClassVocabulary::canonical(num_classes);
  const uint16_t h = r.u16();
  const uint16_t wd = r.u16();
  const uint8_t ch = r.u8();
  const uint8_t split_count = r.u8();
  if (split_count != split_names().size())
    throw io_error("bundle split count differs from the expected five");
  for (size_t si = 0; si < split_count; ++si) {
    const std::string name = r.str(r.u8());
    if (name != split_names()[si]) throw io_error("unexpected split name: " + name);
    Split& split = b.split(name);
    const uint32_t count = r.u32();
    split.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
      Sample s;
      s.sample_id = r.str(r.u8());
      s.region_id = r.u16();
      const uint16_t label_count = r.u16();
      s.labels.reserve(label_count);
      for (uint16_t k = 0; k < label_count; ++k) s.labels.push_back(r.u16());
      s.image = ImageTensor(h, wd, ch);
      for (double& v : s.image.data) v = static_cast<double>(r.f32());
      split.push_back(std::move(s));
    }
  }
  if (!r.done()) throw io_error("trailing bytes after last split");
  file.verify();
  validate_bundle(b);
  return b;
}

/// Flat annotation list: `sample_id,region_id,labels` with labels as
/// space-separated class indices, all splits concatenated in order.
inline void write_labels_csv(const DatasetBundle& b, const std::filesystem::path& path) {
  std::string out = "sample_id,region_id,labels\n";
  for (const auto& name : split_names()) {
    for (const Sample& s : b.split(name)) {
      out += s.sample_id;
      out += ',';
      out += std::to_string(s.region_id);
      out += ',';
      for (size_t i = 0; i < s.labels.size(); ++i) {
        if (i) out += ' ';
        out += std::to_string(s.labels[i]);
      }
      out += '\n';
    }
  }
  write_file(path, out);
}

}  // namespace geoshift
