#pragma once

#include <algorithm>
#include <vector>

#include "geoshift/errors.hpp"
#include "geoshift/tensor.hpp"

namespace geoshift {

using LabelSet = std::vector<int>;  // sorted ascending, unique

struct MetricsReport {
  double mean_f2 = 0.0;
  double mean_precision = 0.0;
  double mean_recall = 0.0;
  double threshold = 0.5;
};

/// Class c is predicted for a sample iff score >= t (boundary included).
inline std::vector<LabelSet> threshold_scores(const Matrix& scores, double t) {
  if (!(t > 0.0 && t < 1.0)) throw config_error("threshold must lie in (0,1)");
  std::vector<LabelSet> out(scores.rows);
  for (size_t i = 0; i < scores.rows; ++i)
    for (size_t c = 0; c < scores.cols; ++c)
      if (scores.at(i, c) >= t) out[i].push_back(static_cast<int>(c));
  return out;
}

inline size_t intersection_size(const LabelSet& a, const LabelSet& b) {
  size_t n = 0, i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] < b[j])
      ++i;
    else if (a[i] > b[j])
      ++j;
    else
      ++n, ++i, ++j;
  }
  return n;
}

/// F2 = 5PR / (4P + R), recall weighted twice as heavily as precision.
/// Edge conventions: both sets empty -> 1; exactly one empty -> 0.
inline double f2_sample(const LabelSet& pred, const LabelSet& truth) {
  if (pred.empty() && truth.empty()) return 1.0;
  if (pred.empty() || truth.empty()) return 0.0;
  const double tp = static_cast<double>(intersection_size(pred, truth));
  const double p = tp / static_cast<double>(pred.size());
  const double r = tp / static_cast<double>(truth.size());
  if (p == 0.0 && r == 0.0) return 0.0;
  return 5.0 * p * r / (4.0 * p + r);
}

inline double precision_sample(const LabelSet& pred, const LabelSet& truth) {
  if (pred.empty() && truth.empty()) return 1.0;
  if (pred.empty() || truth.empty()) return 0.0;
  return static_cast<double>(intersection_size(pred, truth)) / static_cast<double>(pred.size());
}

inline double recall_sample(const LabelSet& pred, const LabelSet& truth) {
  if (pred.empty() && truth.empty()) return 1.0;
  if (pred.empty() || truth.empty()) return 0.0;
  return static_cast<double>(intersection_size(pred, truth)) / static_cast<double>(truth.size());
}

/// Macro-over-samples averaging: per-sample F2/precision/recall, then the
/// mean over samples in row order.
inline MetricsReport evaluate(const Matrix& scores, const std::vector<LabelSet>& truths,
                              double t) {
  if (scores.rows != truths.size()) throw shape_error("evaluate: row count != truth count");
  MetricsReport rep;
  rep.threshold = t;
  if (truths.empty()) return rep;
  const auto preds = threshold_scores(scores, t);
  double f2 = 0.0, prec = 0.0, rec = 0.0;
  for (size_t i = 0; i < preds.size(); ++i) {
    f2 += f2_sample(preds[i], truths[i]);
    prec += precision_sample(preds[i], truths[i]);
    rec += recall_sample(preds[i], truths[i]);
  }
  const double n = static_cast<double>(preds.size());
  rep.mean_f2 = f2 / n;
  rep.mean_precision = prec / n;
  rep.mean_recall = rec / n;
  return rep;
}

/// Grid point maximizing mean F2; ties resolved toward the smallest
/// threshold (the recall-favoring side).
inline double tune_threshold(const Matrix& scores, const std::vector<LabelSet>& truths,
                             const std::vector<double>& grid) {
  if (grid.empty()) throw config_error("tune_threshold: empty grid");
  double best_t = 0.0, best_f2 = -1.0;
  std::vector<double> sorted = grid;
  std::sort(sorted.begin(), sorted.end());
  for (double t : sorted) {
    if (!(t > 0.0 && t < 1.0)) throw config_error("tune_threshold: grid value outside (0,1)");
    const double f2 = evaluate(scores, truths, t).mean_f2;
    if (f2 > best_f2) {
      best_f2 = f2;
      best_t = t;
    }
  }
  return best_t;
}

}  // namespace geoshift
