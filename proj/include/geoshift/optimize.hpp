#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "geoshift/dataset.hpp"
#include "geoshift/errors.hpp"
#include "geoshift/metrics.hpp"
#include "geoshift/model.hpp"
#include "geoshift/rng.hpp"

namespace geoshift {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected Adam update on a flat array. `t` is the step count
/// after incrementing (t >= 1).
inline void adam_update(std::span<double> theta, std::span<const double> grad,
                        std::span<double> m, std::span<double> v, long t, double lr,
                        const AdamHyper& h = {}) {
  if (theta.size() != grad.size() || theta.size() != m.size() || theta.size() != v.size())
    throw shape_error("adam_update: array sizes differ");
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
  for (size_t i = 0; i < theta.size(); ++i) {
    m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * grad[i];
    v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * grad[i] * grad[i];
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    theta[i] -= lr * mhat / (std::sqrt(vhat) + h.epsilon);
  }
}

enum class ParamSet { all, head_only };

/// Moment arrays mirroring the trainable parameters of one ParamSet.
/// Trunk running statistics never appear here; they are not trained.
struct AdamState {
  ParamSet set = ParamSet::all;
  AdamHyper hyper;
  double lr = 0.001;
  long t = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

namespace detail {

inline std::vector<std::span<double>> trainable_views(Parameters& p, ParamSet set) {
  std::vector<std::span<double>> views;
  if (set == ParamSet::all) {
    for (LayerParams& l : p.layers) {
      views.emplace_back(l.weight.data);
      views.emplace_back(l.bias);
      views.emplace_back(l.bn_gamma);
      views.emplace_back(l.bn_beta);
    }
  }
  views.emplace_back(p.head.weight.data);
  views.emplace_back(p.head.bias);
  return views;
}

inline std::vector<std::span<const double>> gradient_views(const Gradients& g, ParamSet set) {
  std::vector<std::span<const double>> views;
  if (set == ParamSet::all) {
    for (const LayerGrads& l : g.layers) {
      views.emplace_back(l.weight.data);
      views.emplace_back(l.bias);
      views.emplace_back(l.bn_gamma);
      views.emplace_back(l.bn_beta);
    }
  }
  views.emplace_back(g.head.weight.data);
  views.emplace_back(g.head.bias);
  return views;
}

}  // namespace detail

inline AdamState make_adam_state(Parameters& p, ParamSet set, double lr) {
  AdamState s;
  s.set = set;
  s.lr = lr;
  for (const auto& view : detail::trainable_views(p, set)) {
    s.m.emplace_back(view.size(), 0.0);
    s.v.emplace_back(view.size(), 0.0);
  }
  return s;
}

inline void adam_step(Parameters& p, const Gradients& g, AdamState& s) {
  auto params = detail::trainable_views(p, s.set);
  auto grads = detail::gradient_views(g, s.set);
  if (params.size() != s.m.size() || grads.size() != s.m.size())
    throw shape_error("adam_step: state does not match parameters");
  s.t += 1;
  for (size_t i = 0; i < params.size(); ++i)
    adam_update(params[i], grads[i], s.m[i], s.v[i], s.t, s.lr, s.hyper);
}

/// Reduce-on-plateau in "max" mode: a score counts as an improvement when
/// it beats the best seen by more than 1e-8. After `patience` consecutive
/// bad epochs the caller's lr should be multiplied by `factor`; the
/// bad-epoch counter then freezes for `cooldown` epochs.
struct PlateauScheduler {
  double factor = 0.5;
  int patience = 2;
  int cooldown = 2;
  double best_score = -std::numeric_limits<double>::infinity();
  int bad_epochs = 0;
  int cooldown_remaining = 0;
  double improvement_eps = 1e-8;
};

/// Feeds one epoch score; returns true when the learning rate should be
/// reduced by `factor` now.
inline bool scheduler_update(PlateauScheduler& s, double epoch_score) {
  const bool improved = epoch_score > s.best_score + s.improvement_eps;
  if (improved) {
    s.best_score = epoch_score;
    s.bad_epochs = 0;
  }
  if (s.cooldown_remaining > 0) {
    s.cooldown_remaining -= 1;
  } else if (!improved) {
    s.bad_epochs += 1;
  }
  if (s.bad_epochs > s.patience) {
    s.bad_epochs = 0;
    s.cooldown_remaining = s.cooldown;
    return true;
  }
  return false;
}

/// Per-slot pool choice: source-validation with probability alpha, tuning
/// otherwise; then a uniform draw from the chosen pool (with replacement).
class MixedSampler {
 public:
  MixedSampler(double alpha, std::vector<const Sample*> source_pool,
               std::vector<const Sample*> tuning_pool, size_t batch_size, Rng rng)
      : alpha_(alpha),
        source_(std::move(source_pool)),
        tuning_(std::move(tuning_pool)),
        batch_size_(batch_size),
        rng_(rng) {
    if (alpha_ < 0.0 || alpha_ > 1.0) throw config_error("sampler: alpha outside [0,1]");
    if (batch_size_ < 1) throw config_error("sampler: batch_size must be >= 1");
    if (alpha_ > 0.0 && source_.empty()) throw sampler_error("sampler: source pool empty");
    if (alpha_ < 1.0 && tuning_.empty()) throw sampler_error("sampler: tuning pool empty");
  }

  std::vector<const Sample*> next_batch() {
    std::vector<const Sample*> batch;
    batch.reserve(batch_size_);
    for (size_t i = 0; i < batch_size_; ++i) {
      const auto& pool = rng_.bernoulli(alpha_) ? source_ : tuning_;
      batch.push_back(pool[rng_.int_below(pool.size())]);
    }
    return batch;
  }

  Rng& rng() { return rng_; }

 private:
  double alpha_;
  std::vector<const Sample*> source_;
  std::vector<const Sample*> tuning_;
  size_t batch_size_;
  Rng rng_;
};

struct TrainConfig {
  size_t batch_size = 128;
  int max_epochs = 30;
  uint64_t seed = 42;
  int early_stop_patience = 10;
  double lr = 0.001;
  double lr_floor = 1e-6;
  double scheduler_factor = 0.5;
  int scheduler_patience = 2;
  int scheduler_cooldown = 2;
  double eval_threshold = 0.5;

  void validate() const {
    if (batch_size < 1) throw config_error("train: batch_size must be >= 1");
    if (max_epochs < 1) throw config_error("train: max_epochs must be >= 1");
    if (lr <= 0.0 || lr_floor <= 0.0) throw config_error("train: lr must be positive");
  }
};

struct EpochStats {
  int epoch = 0;       // 1-based
  double loss = 0.0;   // mean train BCE over the epoch's batches
  double val_f2 = 0.0;
  double lr = 0.0;     // rate in force during this epoch
};

struct TrainResult {
  Parameters params;  // best validation-F2 snapshot
  std::vector<EpochStats> history;
};

/// Mean F2 of eval-mode predictions on a split.
inline MetricsReport evaluate_params(const Parameters& p, const Split& split, double threshold) {
  const Matrix scores = forward(p, flatten_images(split));
  return evaluate(scores, truth_sets(split), threshold);
}

/// Epochs of shuffled minibatch Adam with BCE on source_train, validation
/// F2 on source_val after every epoch feeding the plateau scheduler, early
/// stop on stalled validation. No augmentation at this stage. Returns the
/// best-validation snapshot; fully determined by (configs, seed).
inline TrainResult train_base(const ModelConfig& model_cfg, const DatasetBundle& bundle,
                              const TrainConfig& cfg) {
  cfg.validate();
  if (bundle.source_train.empty() || bundle.source_val.empty())
    throw empty_input_error("train_base: bundle lacks source splits");

  Rng rng = make_rng(cfg.seed);
  Parameters params = init(model_cfg, rng);
  AdamState adam = make_adam_state(params, ParamSet::all, cfg.lr);
  PlateauScheduler sched;
  sched.factor = cfg.scheduler_factor;
  sched.patience = cfg.scheduler_patience;
  sched.cooldown = cfg.scheduler_cooldown;

  const size_t n = bundle.source_train.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  double best_f2 = -1.0;
  int stale_epochs = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffle(rng, order);
    double loss_sum = 0.0;
    size_t batches = 0;
    for (size_t start = 0; start < n; start += cfg.batch_size) {
      const size_t stop = std::min(n, start + cfg.batch_size);
      std::vector<const Sample*> batch;
      batch.reserve(stop - start);
      for (size_t i = start; i < stop; ++i) batch.push_back(&bundle.source_train[order[i]]);
      const Matrix x = flatten_images(batch);
      const Matrix y = labels_matrix(batch, model_cfg.num_classes);
      ForwardCache cache;
      forward_train(params, x, rng, cache);
      auto [loss, grad_logits] = bce_loss_logits(cache.logits, y);
      const Gradients grads = backward(params, cache, grad_logits);
      adam_step(params, grads, adam);
      loss_sum += loss;
      ++batches;
    }

    const double val_f2 = evaluate_params(params, bundle.source_val, cfg.eval_threshold).mean_f2;
    result.history.push_back(
        {epoch, loss_sum / static_cast<double>(batches), val_f2, adam.lr});

    if (val_f2 > best_f2 + 1e-8) {
      best_f2 = val_f2;
      result.params = params;
      stale_epochs = 0;
    } else {
      stale_epochs += 1;
    }
    if (scheduler_update(sched, val_f2))
      adam.lr = std::max(cfg.lr_floor, adam.lr * sched.factor);
    if (stale_epochs >= cfg.early_stop_patience) break;
  }
  if (result.history.empty() || result.params.layers.empty()) result.params = params;
  return result;
}

}  // namespace geoshift
