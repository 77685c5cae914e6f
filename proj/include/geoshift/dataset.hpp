#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include "geoshift/errors.hpp"
#include "geoshift/metrics.hpp"
#include "geoshift/rng.hpp"
#include "geoshift/tensor.hpp"

namespace geoshift {

struct ClassVocabulary {
  size_t num_classes = 0;
  std::vector<std::string> names;

  static ClassVocabulary canonical(size_t n) {
    ClassVocabulary v;
    v.num_classes = n;
    v.names.reserve(n);
    for (size_t i = 0; i < n; ++i) v.names.push_back("class_" + std::to_string(i));
    return v;
  }

  bool operator==(const ClassVocabulary&) const = default;
};

/// Per-region inclusion probability for every class; regions differ only
/// in this label distribution, never in appearance.
struct RegionProfile {
  uint16_t region_id = 0;
  std::vector<double> label_prior;
  // Optional pairwise multiplier: if class `first` was already drawn for a
  // sample, the prior of class `second` is multiplied by `boost` (capped
  // at 1). Classes are visited in ascending index order.
  struct Boost {
    int first = 0;
    int second = 0;
    double boost = 1.0;
  };
  std::vector<Boost> co_occurrence_boost;

  void validate() const {
    bool any_positive = false;
    for (double p : label_prior) {
      if (p < 0.0 || p > 1.0) throw config_error("region prior outside [0,1]");
      if (p > 0.0) any_positive = true;
    }
    if (!any_positive) throw config_error("region needs at least one positive prior");
  }
};

struct Sample {
  std::string sample_id;
  ImageTensor image;
  LabelSet labels;  // sorted class indices
  uint16_t region_id = 0;

  bool operator==(const Sample&) const = default;
};

using Split = std::vector<Sample>;

inline const std::vector<std::string>& split_names() {
  static const std::vector<std::string> names = {"source_train", "source_val", "target_tuning",
                                                 "target_eval", "target_hidden"};
  return names;
}

struct DatasetBundle {
  ClassVocabulary vocab;
  Split source_train;
  Split source_val;
  Split target_tuning;
  Split target_eval;
  Split target_hidden;

  const Split& split(const std::string& name) const {
    if (name == "source_train") return source_train;
    if (name == "source_val") return source_val;
    if (name == "target_tuning") return target_tuning;
    if (name == "target_eval") return target_eval;
    if (name == "target_hidden") return target_hidden;
    throw config_error("unknown split: " + name);
  }
  Split& split(const std::string& name) {
    return const_cast<Split&>(static_cast<const DatasetBundle*>(this)->split(name));
  }

  bool operator==(const DatasetBundle&) const = default;
};

/// Sample ids must be globally unique across all splits. Called on every
/// construction and on every read from disk.
inline void validate_bundle(const DatasetBundle& b) {
  std::set<std::string> seen;
  for (const auto& name : split_names()) {
    for (const Sample& s : b.split(name)) {
      if (!seen.insert(s.sample_id).second)
        throw config_error("duplicate sample_id across splits: " + s.sample_id);
      for (int c : s.labels)
        if (c < 0 || static_cast<size_t>(c) >= b.vocab.num_classes)
          throw config_error("label outside vocabulary in " + s.sample_id);
    }
  }
}

struct GeneratorConfig {
  size_t height = 16;
  size_t width = 16;
  size_t channels = 3;
  size_t num_classes = 20;
  size_t source_train_size = 5000;
  size_t source_val_size = 1000;
  size_t target_tuning_size = 1000;
  size_t target_eval_size = 1000;
  size_t target_hidden_size = 1000;
  RegionProfile source_region;
  RegionProfile target_region;
  RegionProfile hidden_region;
  double proto_noise_sigma = 0.05;
  double background_noise_sigma = 0.25;
  // Minimum total-variation distance between the source and target
  // configured priors (normalized as distributions over class occurrences).
  double min_shift_delta = 0.3;
  bool allow_empty_labels = false;
  uint64_t seed = 42;

  /// Desk-scale default: first half of the classes frequent at the source
  /// and rare at the target, second half the other way round; the hidden
  /// region sits between the two, close to the target.
  static GeneratorConfig desk_default(size_t num_classes = 20, double source_head = 0.30,
                                      double source_tail = 0.02, double target_head = 0.05,
                                      double target_tail = 0.35, double hidden_interp = 0.2) {
    GeneratorConfig cfg;
    cfg.num_classes = num_classes;
    cfg.source_region.region_id = 0;
    cfg.target_region.region_id = 1;
    cfg.hidden_region.region_id = 2;
    const size_t half = num_classes / 2;
    for (size_t c = 0; c < num_classes; ++c) {
      const double ps = c < half ? source_head : source_tail;
      const double pt = c < half ? target_head : target_tail;
      cfg.source_region.label_prior.push_back(ps);
      cfg.target_region.label_prior.push_back(pt);
      cfg.hidden_region.label_prior.push_back((1.0 - hidden_interp) * pt + hidden_interp * ps);
    }
    return cfg;
  }
};

/// Per-class occurrence frequency: count(class present) / num_samples.
inline std::vector<double> label_histogram(const Split& split, const ClassVocabulary& vocab) {
  if (split.empty()) throw empty_input_error("label_histogram: empty split");
  std::vector<double> hist(vocab.num_classes, 0.0);
  for (const Sample& s : split)
    for (int c : s.labels) hist[static_cast<size_t>(c)] += 1.0;
  for (double& v : hist) v /= static_cast<double>(split.size());
  return hist;
}

/// Total-variation distance between two frequency vectors after
/// normalizing each to sum 1 (a distribution over class occurrences).
inline double tv_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw shape_error("tv_distance: length mismatch");
  double sa = 0.0, sb = 0.0;
  for (double v : a) sa += v;
  for (double v : b) sb += v;
  if (sa <= 0.0 || sb <= 0.0) throw empty_input_error("tv_distance: zero-mass histogram");
  double tv = 0.0;
  for (size_t i = 0; i < a.size(); ++i) tv += std::abs(a[i] / sa - b[i] / sb);
  return 0.5 * tv;
}

namespace detail {

inline void validate_generator_config(const GeneratorConfig& cfg) {
  if (cfg.height < 1 || cfg.width < 1) throw config_error("generator: empty image plane");
  if (cfg.channels != 1 && cfg.channels != 3) throw config_error("generator: channels must be 1 or 3");
  if (cfg.num_classes < 1) throw config_error("generator: no classes");
  if (cfg.num_classes > 65535) throw config_error("generator: too many classes for container");
  if (cfg.source_train_size < 1 || cfg.source_val_size < 1 || cfg.target_tuning_size < 1 ||
      cfg.target_eval_size < 1 || cfg.target_hidden_size < 1)
    throw config_error("generator: split sizes must be >= 1");
  if (cfg.min_shift_delta < 0.0 || cfg.min_shift_delta > 1.0)
    throw config_error("generator: delta outside [0,1]");
  for (const RegionProfile* r : {&cfg.source_region, &cfg.target_region, &cfg.hidden_region}) {
    if (r->label_prior.size() != cfg.num_classes)
      throw config_error("generator: prior length != num_classes");
    r->validate();
  }
  const double tv = tv_distance(cfg.source_region.label_prior, cfg.target_region.label_prior);
  if (tv < cfg.min_shift_delta)
    throw config_error("generator: configured priors give TV distance below delta");
}

}  // namespace detail

/// Fixed per-class patterns: a random rectangular patch with a random
/// per-channel color plus frozen per-pixel jitter inside the patch.
/// Deterministic prefix of generate(cfg)'s stream.
inline std::vector<ImageTensor> generate_prototypes(const GeneratorConfig& cfg, Rng& rng) {
  std::vector<ImageTensor> protos;
  protos.reserve(cfg.num_classes);
  const size_t min_h = std::max<size_t>(1, cfg.height / 4);
  const size_t max_h = std::max<size_t>(min_h, cfg.height / 2);
  const size_t min_w = std::max<size_t>(1, cfg.width / 4);
  const size_t max_w = std::max<size_t>(min_w, cfg.width / 2);
  for (size_t c = 0; c < cfg.num_classes; ++c) {
    ImageTensor img(cfg.height, cfg.width, cfg.channels, 0.0);
    const size_t ph = min_h + rng.int_below(max_h - min_h + 1);
    const size_t pw = min_w + rng.int_below(max_w - min_w + 1);
    const size_t y0 = rng.int_below(cfg.height - ph + 1);
    const size_t x0 = rng.int_below(cfg.width - pw + 1);
    std::vector<double> amplitude(cfg.channels);
    for (size_t ch = 0; ch < cfg.channels; ++ch) amplitude[ch] = rng.uniform(0.3, 0.9);
    for (size_t y = y0; y < y0 + ph; ++y)
      for (size_t x = x0; x < x0 + pw; ++x)
        for (size_t ch = 0; ch < cfg.channels; ++ch) {
          double v = amplitude[ch];
          if (cfg.proto_noise_sigma > 0.0) v += rng.normal(0.0, cfg.proto_noise_sigma);
          img.at(y, x, ch) = std::clamp(v, 0.0, 1.0);
        }
    protos.push_back(std::move(img));
  }
  return protos;
}

inline std::vector<ImageTensor> generate_prototypes(const GeneratorConfig& cfg) {
  detail::validate_generator_config(cfg);
  Rng rng = make_rng(cfg.seed);
  return generate_prototypes(cfg, rng);
}

namespace detail {

inline LabelSet draw_labels(const RegionProfile& region, Rng& rng, bool allow_empty) {
  for (int attempt = 0; attempt < 100000; ++attempt) {
    LabelSet labels;
    for (size_t c = 0; c < region.label_prior.size(); ++c) {
      double p = region.label_prior[c];
      for (const auto& boost : region.co_occurrence_boost) {
        if (boost.second == static_cast<int>(c) &&
            std::binary_search(labels.begin(), labels.end(), boost.first))
          p = std::min(1.0, p * boost.boost);
      }
      if (rng.bernoulli(p)) labels.push_back(static_cast<int>(c));
    }
    if (!labels.empty() || allow_empty) return labels;
  }
  throw config_error("generator: could not draw a nonempty label set");
}

inline double quantize_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

inline Split generate_split(const std::string& name, size_t size, const RegionProfile& region,
                            const std::vector<ImageTensor>& protos, const GeneratorConfig& cfg,
                            Rng& rng) {
  Split split;
  split.reserve(size);
  for (size_t i = 0; i < size; ++i) {
    Sample s;
    char id[64];
    std::snprintf(id, sizeof(id), "%s_%05zu", name.c_str(), i);
    s.sample_id = id;
    s.region_id = region.region_id;
    s.labels = draw_labels(region, rng, cfg.allow_empty_labels);
    ImageTensor img(cfg.height, cfg.width, cfg.channels, 0.0);
    for (int c : s.labels) {
      const ImageTensor& p = protos[static_cast<size_t>(c)];
      for (size_t k = 0; k < img.size(); ++k) img.data[k] += p.data[k];
    }
    if (cfg.background_noise_sigma > 0.0)
      for (size_t k = 0; k < img.size(); ++k)
        img.data[k] += rng.normal(0.0, cfg.background_noise_sigma);
    img.clamp01();
    // Pixels are stored as float32 in the container; quantize now so the
    // on-disk roundtrip is the identity.
    for (double& v : img.data) v = quantize_f32(v);
    s.image = std::move(img);
    split.push_back(std::move(s));
  }
  return split;
}

}  // namespace detail

/// Synthetic geographic-shift bundle: label priors differ per region while
/// class appearance stays fixed. Identical seeds give byte-identical
/// bundles.
inline DatasetBundle generate(const GeneratorConfig& cfg) {
  detail::validate_generator_config(cfg);
  Rng rng = make_rng(cfg.seed);
  const auto protos = generate_prototypes(cfg, rng);

  DatasetBundle b;
  b.vocab = ClassVocabulary::canonical(cfg.num_classes);
  b.source_train = detail::generate_split("source_train", cfg.source_train_size,
                                          cfg.source_region, protos, cfg, rng);
  b.source_val =
      detail::generate_split("source_val", cfg.source_val_size, cfg.source_region, protos, cfg, rng);
  b.target_tuning = detail::generate_split("target_tuning", cfg.target_tuning_size,
                                           cfg.target_region, protos, cfg, rng);
  b.target_eval = detail::generate_split("target_eval", cfg.target_eval_size, cfg.target_region,
                                         protos, cfg, rng);
  b.target_hidden = detail::generate_split("target_hidden", cfg.target_hidden_size,
                                           cfg.hidden_region, protos, cfg, rng);
  validate_bundle(b);
  return b;
}

/// Flattens sample images into one row per sample (row-major pixels).
inline Matrix flatten_images(const std::vector<const Sample*>& samples) {
  if (samples.empty()) throw empty_input_error("flatten_images: no samples");
  const size_t dim = samples[0]->image.size();
  Matrix x(samples.size(), dim);
  for (size_t i = 0; i < samples.size(); ++i) {
    if (samples[i]->image.size() != dim) throw shape_error("flatten_images: ragged images");
    std::copy(samples[i]->image.data.begin(), samples[i]->image.data.end(),
              x.data.begin() + static_cast<std::ptrdiff_t>(i * dim));
  }
  return x;
}

inline Matrix flatten_images(const Split& split) {
  std::vector<const Sample*> ptrs;
  ptrs.reserve(split.size());
  for (const Sample& s : split) ptrs.push_back(&s);
  return flatten_images(ptrs);
}

/// 0/1 target matrix, one row per sample.
inline Matrix labels_matrix(const std::vector<const Sample*>& samples, size_t num_classes) {
  Matrix y(samples.size(), num_classes, 0.0);
  for (size_t i = 0; i < samples.size(); ++i)
    for (int c : samples[i]->labels) y.at(i, static_cast<size_t>(c)) = 1.0;
  return y;
}

inline Matrix labels_matrix(const Split& split, size_t num_classes) {
  std::vector<const Sample*> ptrs;
  ptrs.reserve(split.size());
  for (const Sample& s : split) ptrs.push_back(&s);
  return labels_matrix(ptrs, num_classes);
}

inline std::vector<LabelSet> truth_sets(const Split& split) {
  std::vector<LabelSet> t;
  t.reserve(split.size());
  for (const Sample& s : split) t.push_back(s.labels);
  return t;
}

}  // namespace geoshift
