#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "geoshift/augment.hpp"
#include "geoshift/checkpoint.hpp"
#include "geoshift/dataset.hpp"
#include "geoshift/optimize.hpp"

namespace geoshift {

struct TuningFolds {
  int k = 0;
  std::vector<std::vector<std::string>> fold_ids;  // disjoint, sizes differ by <= 1
};

/// Shuffle then deal round-robin: fold i receives every k-th shuffled id.
inline TuningFolds make_folds(const Split& tuning, int k, Rng& rng) {
  if (k < 2) throw config_error("make_folds: k must be >= 2");
  if (static_cast<size_t>(k) > tuning.size())
    throw config_error("make_folds: k exceeds tuning size");
  std::vector<std::string> ids;
  ids.reserve(tuning.size());
  for (const Sample& s : tuning) ids.push_back(s.sample_id);
  shuffle(rng, ids);
  TuningFolds folds;
  folds.k = k;
  folds.fold_ids.resize(static_cast<size_t>(k));
  for (size_t i = 0; i < ids.size(); ++i)
    folds.fold_ids[i % static_cast<size_t>(k)].push_back(std::move(ids[i]));
  return folds;
}

struct AdaptConfig {
  double alpha = 0.0;
  int epochs = 40;             // an adaptation "epoch" is a fixed batch count
  int batches_per_epoch = 50;
  size_t batch_size = 16;
  double lr = 0.001;
  bool reinit_head = true;
  bool use_augmentations = true;
  bool recompute_bn = true;
  int bn_batches = 20;
  uint64_t seed = 42;
  double eval_threshold = 0.5;
  AugmentConfig aug;

  void validate() const {
    if (alpha < 0.0 || alpha > 1.0) throw config_error("adapt: alpha outside [0,1]");
    if (epochs < 1 || batches_per_epoch < 1) throw config_error("adapt: epochs/batches < 1");
    if (batch_size < 1) throw config_error("adapt: batch_size < 1");
    if (lr <= 0.0) throw config_error("adapt: lr must be positive");
    aug.validate();
  }
};

/// The k per-fold adapted models produced from one base model and one
/// alpha; predictions are averaged.
struct FoldModels {
  uint32_t base_crc = 0;
  AdaptConfig cfg;
  std::vector<Parameters> models;
};

namespace detail {

inline std::vector<const Sample*> split_ptrs(const Split& split) {
  std::vector<const Sample*> ptrs;
  ptrs.reserve(split.size());
  for (const Sample& s : split) ptrs.push_back(&s);
  return ptrs;
}

inline Matrix assemble_batch(const std::vector<const Sample*>& batch, const AdaptConfig& cfg,
                             Rng& rng, bool augment) {
  std::vector<ImageTensor> images;
  images.reserve(batch.size());
  for (const Sample* s : batch)
    images.push_back(augment && cfg.use_augmentations ? apply_pipeline(s->image, cfg.aug, rng)
                                                      : s->image);
  const size_t dim = images[0].size();
  Matrix x(batch.size(), dim);
  for (size_t i = 0; i < images.size(); ++i)
    std::copy(images[i].data.begin(), images[i].data.end(),
              x.data.begin() + static_cast<std::ptrdiff_t>(i * dim));
  return x;
}

}  // namespace detail

/// Re-fits the head on an alpha-mixture of source-validation and tuning
/// data (minus the held-out fold), augmenting every drawn sample. Trunk
/// weights and running statistics stay byte-frozen during head training;
/// if recompute_bn is set, running statistics are re-estimated on the same
/// mixture afterwards. The head snapshot with the best held-out-fold F2 is
/// returned. Fold index `i` always sees the same child stream, so folds
/// can run in any order (or in parallel) with identical results.
inline Parameters adapt_fold(const Parameters& base, int fold_index, const TuningFolds& folds,
                             const DatasetBundle& bundle, const AdaptConfig& cfg) {
  cfg.validate();
  if (fold_index < 0 || fold_index >= folds.k) throw config_error("adapt_fold: bad fold index");

  Rng seeder = make_rng(cfg.seed);
  Rng rng(Rng::mix(seeder.next_raw() ^ static_cast<uint64_t>(fold_index)));

  std::map<std::string, const Sample*> by_id;
  for (const Sample& s : bundle.target_tuning) by_id[s.sample_id] = &s;
  const auto& held_ids = folds.fold_ids[static_cast<size_t>(fold_index)];
  std::vector<const Sample*> held_out, train_pool;
  held_out.reserve(held_ids.size());
  for (const std::string& id : held_ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw config_error("adapt_fold: fold id not in tuning split: " + id);
    held_out.push_back(it->second);
  }
  {
    std::vector<std::string> sorted_held = held_ids;
    std::sort(sorted_held.begin(), sorted_held.end());
    for (const Sample& s : bundle.target_tuning)
      if (!std::binary_search(sorted_held.begin(), sorted_held.end(), s.sample_id))
        train_pool.push_back(&s);
  }

  Parameters params = cfg.reinit_head ? reinit_head(base, rng) : base;
  MixedSampler sampler(cfg.alpha, detail::split_ptrs(bundle.source_val), train_pool,
                       cfg.batch_size, Rng(rng.next_raw()));
  AdamState adam = make_adam_state(params, ParamSet::head_only, cfg.lr);

  const Matrix held_x = flatten_images(held_out);
  const auto held_truth = [&] {
    std::vector<LabelSet> t;
    for (const Sample* s : held_out) t.push_back(s->labels);
    return t;
  }();

  Parameters best = params;
  double best_f2 = -1.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int b = 0; b < cfg.batches_per_epoch; ++b) {
      const auto batch = sampler.next_batch();
      const Matrix x = detail::assemble_batch(batch, cfg, rng, /*augment=*/true);
      const Matrix y = labels_matrix(batch, params.config.num_classes);
      ForwardCache cache;
      forward_train(params, x, rng, cache, /*update_running_stats=*/false);
      auto [loss, grad_logits] = bce_loss_logits(cache.logits, y);
      (void)loss;
      const Gradients grads = backward(params, cache, grad_logits);
      adam_step(params, grads, adam);
    }
    const double f2 = evaluate(forward(params, held_x), held_truth, cfg.eval_threshold).mean_f2;
    if (f2 > best_f2) {
      best_f2 = f2;
      best.head = params.head;
    }
  }
  params.head = best.head;

  if (cfg.recompute_bn) {
    // Statistics are measured on the clean alpha-mixture: evaluation sees
    // unaugmented images, and stats taken under geometric augmentation
    // drift away from that distribution.
    std::vector<Matrix> stream;
    stream.reserve(static_cast<size_t>(cfg.bn_batches));
    for (int b = 0; b < cfg.bn_batches; ++b)
      stream.push_back(detail::assemble_batch(sampler.next_batch(), cfg, rng, /*augment=*/false));
    recompute_bn_stats(params, stream);
  }
  return params;
}

/// All k folds; with jobs > 1 the folds run on worker threads and the
/// result is bit-identical to the sequential order.
inline FoldModels adapt_all(const Parameters& base, const TuningFolds& folds,
                            const DatasetBundle& bundle, const AdaptConfig& cfg, int jobs = 1) {
  cfg.validate();
  FoldModels fm;
  fm.base_crc = checkpoint_crc(base);
  fm.cfg = cfg;
  fm.models.resize(static_cast<size_t>(folds.k));
  if (jobs <= 1) {
    for (int i = 0; i < folds.k; ++i)
      fm.models[static_cast<size_t>(i)] = adapt_fold(base, i, folds, bundle, cfg);
    return fm;
  }
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next.fetch_add(1); i < folds.k; i = next.fetch_add(1))
      fm.models[static_cast<size_t>(i)] = adapt_fold(base, i, folds, bundle, cfg);
  };
  std::vector<std::thread> threads;
  const int nthreads = std::min(jobs, folds.k);
  threads.reserve(static_cast<size_t>(nthreads));
  for (int t = 0; t < nthreads; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  return fm;
}

/// Arithmetic mean of the k eval-mode score matrices, folds summed in
/// ascending index order.
inline Matrix predict_fold_averaged(const FoldModels& fm, const Matrix& images) {
  if (fm.models.empty()) throw config_error("predict_fold_averaged: no models");
  Matrix sum = forward(fm.models[0], images);
  for (size_t i = 1; i < fm.models.size(); ++i) {
    const Matrix s = forward(fm.models[i], images);
    if (s.rows != sum.rows || s.cols != sum.cols)
      throw shape_error("predict_fold_averaged: score shape mismatch");
    for (size_t j = 0; j < sum.data.size(); ++j) sum.data[j] += s.data[j];
  }
  const double k = static_cast<double>(fm.models.size());
  for (double& v : sum.data) v /= k;
  return sum;
}

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

/// Directory layout: fold_<i>.gsck checkpoints plus a manifest recording
/// k, alpha, seed and the base checkpoint CRC.
inline void save_fold_models(const FoldModels& fm, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (size_t i = 0; i < fm.models.size(); ++i)
    save_checkpoint(fm.models[i], dir / ("fold_" + std::to_string(i) + ".gsck"));
  std::string manifest;
  manifest += "k = " + std::to_string(fm.models.size()) + "\n";
  manifest += "alpha = " + detail::format_double(fm.cfg.alpha) + "\n";
  manifest += "seed = " + std::to_string(fm.cfg.seed) + "\n";
  char crc[16];
  std::snprintf(crc, sizeof(crc), "%08x", fm.base_crc);
  manifest += "base_checkpoint_crc = " + std::string(crc) + "\n";
  write_file(dir / "manifest.txt", manifest);
}

inline FoldModels load_fold_models(const std::filesystem::path& dir) {
  const std::string manifest = read_file(dir / "manifest.txt");
  FoldModels fm;
  size_t k = 0;
  size_t pos = 0;
  while (pos < manifest.size()) {
    size_t eol = manifest.find('\n', pos);
    if (eol == std::string::npos) eol = manifest.size();
    const std::string line = manifest.substr(pos, eol - pos);
    pos = eol + 1;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "k")
      k = std::stoul(value);
    else if (key == "alpha")
      fm.cfg.alpha = std::stod(value);
    else if (key == "seed")
      fm.cfg.seed = std::stoull(value);
    else if (key == "base_checkpoint_crc")
      fm.base_crc = static_cast<uint32_t>(std::stoul(value, nullptr, 16));
  }
  if (k == 0) throw io_error("fold manifest: missing or zero k");
  fm.models.reserve(k);
  for (size_t i = 0; i < k; ++i)
    fm.models.push_back(load_checkpoint(dir / ("fold_" + std::to_string(i) + ".gsck")));
  return fm;
}

}  // namespace geoshift
