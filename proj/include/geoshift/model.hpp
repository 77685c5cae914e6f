#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "geoshift/errors.hpp"
#include "geoshift/rng.hpp"
#include "geoshift/tensor.hpp"

namespace geoshift {

struct ModelConfig {
  size_t input_dim = 0;
  std::vector<size_t> hidden_dims = {64, 32};
  size_t num_classes = 0;
  double dropout_p = 0.3;
  double bn_momentum = 0.1;
  double bn_epsilon = 1e-5;

  void validate() const {
    if (input_dim < 1 || num_classes < 1) throw config_error("model: zero input/output dim");
    if (hidden_dims.empty()) throw config_error("model: needs at least one hidden layer");
    for (size_t d : hidden_dims)
      if (d < 1) throw config_error("model: zero hidden dim");
    if (dropout_p < 0.0 || dropout_p >= 1.0) throw config_error("model: dropout_p outside [0,1)");
    if (bn_epsilon <= 0.0) throw config_error("model: bn_epsilon must be positive");
  }

  bool operator==(const ModelConfig&) const = default;
};

/// One trunk layer: linear -> batchnorm -> ReLU.
struct LayerParams {
  Matrix weight;  // in x out
  std::vector<double> bias;
  std::vector<double> bn_gamma;
  std::vector<double> bn_beta;
  std::vector<double> bn_running_mean;
  std::vector<double> bn_running_var;

  bool operator==(const LayerParams&) const = default;
};

struct HeadParams {
  Matrix weight;  // last_hidden x num_classes
  std::vector<double> bias;

  bool operator==(const HeadParams&) const = default;
};

/// Full model state. Value type: copies are cheap enough at desk scale and
/// make checkpoint/selection logic trivial.
struct Parameters {
  ModelConfig config;
  std::vector<LayerParams> layers;
  HeadParams head;

  bool operator==(const Parameters&) const = default;
};

struct LayerGrads {
  Matrix weight;
  std::vector<double> bias;
  std::vector<double> bn_gamma;
  std::vector<double> bn_beta;
};

struct Gradients {
  std::vector<LayerGrads> layers;
  HeadParams head;
};

/// Everything backward() needs from a train-mode forward.
struct LayerCache {
  Matrix input;         // activations entering the layer
  Matrix z;             // linear output, pre-normalization
  std::vector<double> mu;
  std::vector<double> var;  // biased (population) batch variance
  Matrix xhat;          // normalized pre-affine output
  Matrix bn_out;        // gamma * xhat + beta (pre-ReLU)
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  Matrix last_hidden;   // input to the head (after dropout)
  Matrix dropout_mask;  // 0/1 mask on the last hidden activation
  Matrix logits;
  Matrix scores;
};

/// He-normal weights, zero biases, identity batchnorm affine, unit running
/// variance. Draw order: trunk layers in order (weights row-major), head
/// last.
inline Parameters init(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  Parameters p;
  p.config = cfg;
  size_t in_dim = cfg.input_dim;
  for (size_t out_dim : cfg.hidden_dims) {
    LayerParams layer;
    layer.weight = Matrix(in_dim, out_dim);
    const double std = std::sqrt(2.0 / static_cast<double>(in_dim));
    for (double& w : layer.weight.data) w = rng.normal(0.0, std);
    layer.bias.assign(out_dim, 0.0);
    layer.bn_gamma.assign(out_dim, 1.0);
    layer.bn_beta.assign(out_dim, 0.0);
    layer.bn_running_mean.assign(out_dim, 0.0);
    layer.bn_running_var.assign(out_dim, 1.0);
    p.layers.push_back(std::move(layer));
    in_dim = out_dim;
  }
  p.head.weight = Matrix(in_dim, cfg.num_classes);
  const double std = std::sqrt(2.0 / static_cast<double>(in_dim));
  for (double& w : p.head.weight.data) w = rng.normal(0.0, std);
  p.head.bias.assign(cfg.num_classes, 0.0);
  return p;
}

/// Fresh head, untouched trunk (weights and running statistics included).
inline Parameters reinit_head(const Parameters& params, Rng& rng) {
  Parameters p = params;
  const size_t in_dim = p.head.weight.rows;
  const double std = std::sqrt(2.0 / static_cast<double>(in_dim));
  for (double& w : p.head.weight.data) w = rng.normal(0.0, std);
  for (double& b : p.head.bias) b = 0.0;
  return p;
}

namespace detail {

inline void add_bias_rows(Matrix& m, const std::vector<double>& bias) {
  for (size_t i = 0; i < m.rows; ++i)
    for (size_t j = 0; j < m.cols; ++j) m.data[i * m.cols + j] += bias[j];
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace detail

/// Eval-mode forward: running statistics, no dropout, no cache. Pure in
/// (params, batch).
inline Matrix forward(const Parameters& p, const Matrix& batch) {
  if (batch.cols != p.config.input_dim) throw shape_error("forward: batch.cols != input_dim");
  Matrix a = batch;
  for (const LayerParams& layer : p.layers) {
    Matrix z = matmul(a, layer.weight);
    detail::add_bias_rows(z, layer.bias);
    const size_t out_dim = z.cols;
    for (size_t i = 0; i < z.rows; ++i)
      for (size_t j = 0; j < out_dim; ++j) {
        const double xhat = (z.at(i, j) - layer.bn_running_mean[j]) /
                            std::sqrt(layer.bn_running_var[j] + p.config.bn_epsilon);
        const double y = layer.bn_gamma[j] * xhat + layer.bn_beta[j];
        z.at(i, j) = y > 0.0 ? y : 0.0;
      }
    a = std::move(z);
  }
  Matrix logits = matmul(a, p.head.weight);
  detail::add_bias_rows(logits, p.head.bias);
  for (double& v : logits.data) v = detail::sigmoid(v);
  return logits;
}

/// Train-mode forward: batch statistics, dropout on the last hidden
/// activation (inverted scaling). Updates running statistics with
/// momentum unless `update_running_stats` is off (head-only adaptation
/// keeps the trunk byte-frozen). Returns sigmoid scores; `cache` receives
/// everything backward() needs.
inline Matrix forward_train(Parameters& p, const Matrix& batch, Rng& rng, ForwardCache& cache,
                            bool update_running_stats = true) {
  if (batch.cols != p.config.input_dim) throw shape_error("forward: batch.cols != input_dim");
  if (batch.rows == 0) throw empty_input_error("forward: empty batch");
  cache.layers.clear();
  cache.layers.reserve(p.layers.size());
  const double eps = p.config.bn_epsilon;
  const double mom = p.config.bn_momentum;
  const double n = static_cast<double>(batch.rows);

  Matrix a = batch;
  for (size_t li = 0; li < p.layers.size(); ++li) {
    LayerParams& layer = p.layers[li];
    LayerCache lc;
    lc.input = a;
    Matrix z = matmul(a, layer.weight);
    detail::add_bias_rows(z, layer.bias);
    const size_t out_dim = z.cols;

    lc.mu.assign(out_dim, 0.0);
    for (size_t i = 0; i < z.rows; ++i)
      for (size_t j = 0; j < out_dim; ++j) lc.mu[j] += z.at(i, j);
    for (double& m : lc.mu) m /= n;
    lc.var.assign(out_dim, 0.0);
    for (size_t i = 0; i < z.rows; ++i)
      for (size_t j = 0; j < out_dim; ++j) {
        const double d = z.at(i, j) - lc.mu[j];
        lc.var[j] += d * d;
      }
    for (double& v : lc.var) v /= n;

    if (update_running_stats) {
      for (size_t j = 0; j < out_dim; ++j) {
        layer.bn_running_mean[j] = (1.0 - mom) * layer.bn_running_mean[j] + mom * lc.mu[j];
        layer.bn_running_var[j] = (1.0 - mom) * layer.bn_running_var[j] + mom * lc.var[j];
      }
    }

    lc.xhat = Matrix(z.rows, out_dim);
    lc.bn_out = Matrix(z.rows, out_dim);
    Matrix act(z.rows, out_dim);
    for (size_t i = 0; i < z.rows; ++i)
      for (size_t j = 0; j < out_dim; ++j) {
        const double xhat = (z.at(i, j) - lc.mu[j]) / std::sqrt(lc.var[j] + eps);
        const double y = layer.bn_gamma[j] * xhat + layer.bn_beta[j];
        lc.xhat.at(i, j) = xhat;
        lc.bn_out.at(i, j) = y;
        act.at(i, j) = y > 0.0 ? y : 0.0;
      }
    lc.z = std::move(z);
    cache.layers.push_back(std::move(lc));
    a = std::move(act);
  }

  // Dropout before the head, inverted scaling so eval needs no rescale.
  const double pdrop = p.config.dropout_p;
  cache.dropout_mask = Matrix(a.rows, a.cols, 1.0);
  if (pdrop > 0.0) {
    const double keep = 1.0 - pdrop;
    for (size_t i = 0; i < a.data.size(); ++i) {
      const double m = rng.bernoulli(keep) ? 1.0 : 0.0;
      cache.dropout_mask.data[i] = m;
      a.data[i] = a.data[i] * m / keep;
    }
  }
  cache.last_hidden = a;

  Matrix logits = matmul(a, p.head.weight);
  detail::add_bias_rows(logits, p.head.bias);
  cache.logits = logits;
  Matrix scores = logits;
  for (double& v : scores.data) v = detail::sigmoid(v);
  cache.scores = scores;
  return scores;
}

/// Mean binary cross-entropy over batch x classes in the numerically
/// stable logit form; gradient is (sigmoid(z) - y) / (batch * classes).
inline std::pair<double, Matrix> bce_loss_logits(const Matrix& logits, const Matrix& targets) {
  if (logits.rows != targets.rows || logits.cols != targets.cols)
    throw shape_error("bce: shape mismatch");
  const double scale = 1.0 / static_cast<double>(logits.rows * logits.cols);
  double loss = 0.0;
  Matrix grad(logits.rows, logits.cols);
  for (size_t i = 0; i < logits.data.size(); ++i) {
    const double z = logits.data[i];
    const double y = targets.data[i];
    loss += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    grad.data[i] = (detail::sigmoid(z) - y) * scale;
  }
  loss *= scale;
  if (!std::isfinite(loss)) throw numeric_error("bce: non-finite loss");
  return {loss, std::move(grad)};
}

/// Convenience wrapper taking sigmoid scores in (0,1).
inline std::pair<double, Matrix> bce_loss(const Matrix& scores, const Matrix& targets) {
  Matrix logits = scores;
  for (double& s : logits.data) {
    const double c = std::clamp(s, 1e-300, 1.0 - 1e-16);
    s = std::log(c / (1.0 - c));
  }
  return bce_loss_logits(logits, targets);
}

namespace detail {

inline std::vector<double> column_sums(const Matrix& m) {
  std::vector<double> s(m.cols, 0.0);
  for (size_t i = 0; i < m.rows; ++i)
    for (size_t j = 0; j < m.cols; ++j) s[j] += m.at(i, j);
  return s;
}

}  // namespace detail

/// Exact gradients for every parameter, including the batchnorm affine and
/// the path through the batch statistics.
inline Gradients backward(const Parameters& p, const ForwardCache& cache,
                          const Matrix& grad_logits) {
  if (cache.layers.size() != p.layers.size())
    throw error("backward: cache does not match a train-mode forward");
  if (grad_logits.rows != cache.logits.rows || grad_logits.cols != cache.logits.cols)
    throw shape_error("backward: grad_logits shape mismatch");
  const double eps = p.config.bn_epsilon;
  const double n = static_cast<double>(grad_logits.rows);

  Gradients g;
  g.layers.resize(p.layers.size());

  g.head.weight = matmul(transpose(cache.last_hidden), grad_logits);
  g.head.bias = detail::column_sums(grad_logits);
  Matrix da = matmul(grad_logits, transpose(p.head.weight));

  for (size_t li = p.layers.size(); li-- > 0;) {
    const LayerParams& layer = p.layers[li];
    const LayerCache& lc = cache.layers[li];
    const size_t out_dim = lc.z.cols;

    if (li + 1 == p.layers.size()) {
      const double keep = 1.0 - p.config.dropout_p;
      if (p.config.dropout_p > 0.0)
        for (size_t i = 0; i < da.data.size(); ++i)
          da.data[i] *= cache.dropout_mask.data[i] / keep;
    }

    // ReLU
    Matrix dy = da;
    for (size_t i = 0; i < dy.data.size(); ++i)
      if (lc.bn_out.data[i] <= 0.0) dy.data[i] = 0.0;

    // Batchnorm backward through batch statistics.
    LayerGrads& lg = g.layers[li];
    lg.bn_gamma.assign(out_dim, 0.0);
    lg.bn_beta.assign(out_dim, 0.0);
    for (size_t i = 0; i < dy.rows; ++i)
      for (size_t j = 0; j < out_dim; ++j) {
        lg.bn_gamma[j] += dy.at(i, j) * lc.xhat.at(i, j);
        lg.bn_beta[j] += dy.at(i, j);
      }

    std::vector<double> inv_std(out_dim);
    for (size_t j = 0; j < out_dim; ++j) inv_std[j] = 1.0 / std::sqrt(lc.var[j] + eps);

    std::vector<double> dvar(out_dim, 0.0), dmu(out_dim, 0.0), sum_zc(out_dim, 0.0),
        sum_dxhat(out_dim, 0.0);
    for (size_t i = 0; i < dy.rows; ++i)
      for (size_t j = 0; j < out_dim; ++j) {
        const double dxhat = dy.at(i, j) * layer.bn_gamma[j];
        const double zc = lc.z.at(i, j) - lc.mu[j];
        dvar[j] += dxhat * zc;
        sum_dxhat[j] += dxhat;
        sum_zc[j] += zc;
      }
    for (size_t j = 0; j < out_dim; ++j) {
      dvar[j] *= -0.5 * inv_std[j] * inv_std[j] * inv_std[j];
      dmu[j] = -inv_std[j] * sum_dxhat[j] + dvar[j] * (-2.0 / n) * sum_zc[j];
    }

    Matrix dz(dy.rows, out_dim);
    for (size_t i = 0; i < dy.rows; ++i)
      for (size_t j = 0; j < out_dim; ++j) {
        const double dxhat = dy.at(i, j) * layer.bn_gamma[j];
        const double zc = lc.z.at(i, j) - lc.mu[j];
        dz.at(i, j) = dxhat * inv_std[j] + dvar[j] * 2.0 * zc / n + dmu[j] / n;
      }

    lg.weight = matmul(transpose(lc.input), dz);
    lg.bias = detail::column_sums(dz);
    if (li > 0) da = matmul(dz, transpose(layer.weight));
  }
  return g;
}

/// Replaces the running statistics with exact per-feature mean/variance of
/// each layer's linear outputs measured over the whole stream (single
/// pass, Welford). The pass propagates with the pre-existing statistics;
/// weights are untouched.
inline void recompute_bn_stats(Parameters& p, const std::vector<Matrix>& batches) {
  size_t total_rows = 0;
  for (const Matrix& b : batches) total_rows += b.rows;
  if (total_rows == 0) throw empty_input_error("recompute_bn_stats: empty stream");

  struct Welford {
    std::vector<double> mean, m2;
    double count = 0.0;
  };
  std::vector<Welford> acc(p.layers.size());
  for (size_t li = 0; li < p.layers.size(); ++li) {
    acc[li].mean.assign(p.layers[li].bias.size(), 0.0);
    acc[li].m2.assign(p.layers[li].bias.size(), 0.0);
  }

  const double eps = p.config.bn_epsilon;
  for (const Matrix& batch : batches) {
    if (batch.cols != p.config.input_dim)
      throw shape_error("recompute_bn_stats: batch.cols != input_dim");
    Matrix a = batch;
    for (size_t li = 0; li < p.layers.size(); ++li) {
      const LayerParams& layer = p.layers[li];
      Matrix z = matmul(a, layer.weight);
      detail::add_bias_rows(z, layer.bias);
      Welford& w = acc[li];
      for (size_t i = 0; i < z.rows; ++i) {
        w.count += 1.0;
        for (size_t j = 0; j < z.cols; ++j) {
          const double x = z.at(i, j);
          const double d = x - w.mean[j];
          w.mean[j] += d / w.count;
          w.m2[j] += d * (x - w.mean[j]);
        }
      }
      // Propagate with the statistics in force before this call.
      for (size_t i = 0; i < z.rows; ++i)
        for (size_t j = 0; j < z.cols; ++j) {
          const double xhat = (z.at(i, j) - layer.bn_running_mean[j]) /
                              std::sqrt(layer.bn_running_var[j] + eps);
          const double y = layer.bn_gamma[j] * xhat + layer.bn_beta[j];
          z.at(i, j) = y > 0.0 ? y : 0.0;
        }
      a = std::move(z);
    }
  }

  for (size_t li = 0; li < p.layers.size(); ++li) {
    LayerParams& layer = p.layers[li];
    for (size_t j = 0; j < layer.bn_running_mean.size(); ++j) {
      layer.bn_running_mean[j] = acc[li].mean[j];
      layer.bn_running_var[j] = acc[li].m2[j] / acc[li].count;  // population variance
    }
  }
}

}  // namespace geoshift
