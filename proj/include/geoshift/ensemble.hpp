#pragma once

#include <cmath>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "geoshift/adapt.hpp"
#include "geoshift/dataset.hpp"
#include "geoshift/metrics.hpp"

namespace geoshift {

/// A family of fold-model sets sharing one alpha; the untuned group wraps
/// the base model (alpha_tag < 0).
struct Group {
  std::string name;
  std::vector<FoldModels> members;
  double alpha_tag = -1.0;
};

/// Equal-weight mean of a list of score matrices, summed in list order.
inline Matrix mean_scores(const std::vector<Matrix>& scores) {
  if (scores.empty()) throw config_error("mean_scores: empty list");
  Matrix sum = scores[0];
  for (size_t i = 1; i < scores.size(); ++i) {
    if (scores[i].rows != sum.rows || scores[i].cols != sum.cols)
      throw shape_error("mean_scores: shape mismatch");
    for (size_t j = 0; j < sum.data.size(); ++j) sum.data[j] += scores[i].data[j];
  }
  const double n = static_cast<double>(scores.size());
  for (double& v : sum.data) v /= n;
  return sum;
}

/// Equal-weight mean of the members' fold-averaged scores.
inline Matrix group_scores(const Group& g, const Matrix& images) {
  if (g.members.empty()) throw config_error("group_scores: empty group");
  std::vector<Matrix> member_scores;
  member_scores.reserve(g.members.size());
  for (const FoldModels& fm : g.members) member_scores.push_back(predict_fold_averaged(fm, images));
  return mean_scores(member_scores);
}

/// Sum of w_i * scores_i over groups, in group order.
inline Matrix weighted_scores(const std::vector<Matrix>& per_group_scores,
                              const std::vector<double>& weights) {
  if (per_group_scores.size() != weights.size())
    throw config_error("weighted_scores: weight/group count mismatch");
  if (per_group_scores.empty()) throw config_error("weighted_scores: no groups");
  double wsum = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw config_error("weighted_scores: negative weight");
    wsum += w;
  }
  if (std::abs(wsum - 1.0) > 1e-9) throw config_error("weighted_scores: weights must sum to 1");
  Matrix out(per_group_scores[0].rows, per_group_scores[0].cols, 0.0);
  for (size_t g = 0; g < per_group_scores.size(); ++g) {
    if (per_group_scores[g].rows != out.rows || per_group_scores[g].cols != out.cols)
      throw shape_error("weighted_scores: shape mismatch");
    for (size_t j = 0; j < out.data.size(); ++j)
      out.data[j] += weights[g] * per_group_scores[g].data[j];
  }
  return out;
}

inline Matrix weighted_scores(const std::vector<Group>& groups, const std::vector<double>& weights,
                              const Matrix& images) {
  std::vector<Matrix> per_group;
  per_group.reserve(groups.size());
  for (const Group& g : groups) per_group.push_back(group_scores(g, images));
  return weighted_scores(per_group, weights);
}

struct EnsembleSpec {
  std::vector<std::string> group_names;
  std::vector<double> weights;
  std::vector<std::string> member_paths;  // one manifest path per group

  void validate() const {
    if (group_names.size() != weights.size())
      throw config_error("ensemble spec: name/weight count mismatch");
    double sum = 0.0;
    for (double w : weights) {
      if (w < 0.0) throw config_error("ensemble spec: negative weight");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw config_error("ensemble spec: weights must sum to 1");
  }
};

struct WeightSearchConfig {
  double grid_step = 0.05;  // must divide 1
  double epsilon = 0.002;   // stage-1 feasibility slack
  double threshold = 0.5;   // binarization threshold for both metrics
};

struct GridPoint {
  std::vector<double> weights;
  double stage1_f2 = 0.0;
  double local_f2 = 0.0;
  bool feasible = false;
};

struct SearchResult {
  std::vector<double> weights;
  double stage1_f2 = 0.0;
  double local_f2 = 0.0;
  double best_stage1_f2 = 0.0;  // grid maximum defining the feasibility bar
  std::vector<GridPoint> grid;
};

namespace detail {

inline void enumerate_compositions(int remaining, int parts, std::vector<int>& current,
                                   std::vector<std::vector<int>>& out) {
  if (parts == 1) {
    current.push_back(remaining);
    out.push_back(current);
    current.pop_back();
    return;
  }
  for (int i = 0; i <= remaining; ++i) {
    current.push_back(i);
    enumerate_compositions(remaining - i, parts - 1, current, out);
    current.pop_back();
  }
}

}  // namespace detail

/// Stage 1 of the search declares every grid point feasible whose
/// stage1-proxy F2 is within epsilon of the grid maximum; stage 2 picks
/// the feasible point with the best local-validation F2. Ties break
/// toward higher stage-1 F2, then the lexicographically smallest vector
/// (which the ascending enumeration order already yields).
inline SearchResult search_weights(const std::vector<Matrix>& stage1_scores,
                                   const std::vector<LabelSet>& stage1_truth,
                                   const std::vector<Matrix>& local_scores,
                                   const std::vector<LabelSet>& local_truth,
                                   const WeightSearchConfig& cfg) {
  const size_t n_groups = stage1_scores.size();
  if (n_groups < 2) throw config_error("search_weights: need at least 2 groups");
  if (local_scores.size() != n_groups) throw config_error("search_weights: split group mismatch");
  if (cfg.grid_step <= 0.0 || cfg.grid_step > 1.0) throw config_error("search_weights: bad step");
  const int steps = static_cast<int>(std::lround(1.0 / cfg.grid_step));
  if (std::abs(steps * cfg.grid_step - 1.0) > 1e-9)
    throw config_error("search_weights: grid step must divide 1");
  if (cfg.epsilon < 0.0) throw config_error("search_weights: epsilon must be >= 0");

  std::vector<std::vector<int>> compositions;
  std::vector<int> current;
  detail::enumerate_compositions(steps, static_cast<int>(n_groups), current, compositions);
  if (compositions.empty()) throw config_error("search_weights: empty grid");

  SearchResult res;
  res.grid.reserve(compositions.size());
  double best_stage1 = -1.0;
  for (const auto& comp : compositions) {
    GridPoint pt;
    pt.weights.reserve(n_groups);
    for (int c : comp) pt.weights.push_back(static_cast<double>(c) / static_cast<double>(steps));
    const Matrix s1 = weighted_scores(stage1_scores, pt.weights);
    const Matrix lo = weighted_scores(local_scores, pt.weights);
    pt.stage1_f2 = evaluate(s1, stage1_truth, cfg.threshold).mean_f2;
    pt.local_f2 = evaluate(lo, local_truth, cfg.threshold).mean_f2;
    best_stage1 = std::max(best_stage1, pt.stage1_f2);
    res.grid.push_back(std::move(pt));
  }
  res.best_stage1_f2 = best_stage1;

  const double bar = std::isinf(cfg.epsilon)
                         ? -std::numeric_limits<double>::infinity()
                         : best_stage1 - cfg.epsilon;
  long best_idx = -1;
  for (size_t i = 0; i < res.grid.size(); ++i) {
    GridPoint& pt = res.grid[i];
    pt.feasible = pt.stage1_f2 >= bar;
    if (!pt.feasible) continue;
    if (best_idx < 0 || pt.local_f2 > res.grid[static_cast<size_t>(best_idx)].local_f2 ||
        (pt.local_f2 == res.grid[static_cast<size_t>(best_idx)].local_f2 &&
         pt.stage1_f2 > res.grid[static_cast<size_t>(best_idx)].stage1_f2))
      best_idx = static_cast<long>(i);
  }
  const GridPoint& chosen = res.grid[static_cast<size_t>(best_idx)];
  res.weights = chosen.weights;
  res.stage1_f2 = chosen.stage1_f2;
  res.local_f2 = chosen.local_f2;
  return res;
}

/// Group-level convenience: computes each group's scores on both splits
/// once, then runs the grid search.
inline SearchResult search_weights(const std::vector<Group>& groups, const Split& stage1_split,
                                   const Split& local_split, const WeightSearchConfig& cfg) {
  const Matrix stage1_x = flatten_images(stage1_split);
  const Matrix local_x = flatten_images(local_split);
  std::vector<Matrix> stage1_scores, local_scores;
  stage1_scores.reserve(groups.size());
  local_scores.reserve(groups.size());
  for (const Group& g : groups) {
    stage1_scores.push_back(group_scores(g, stage1_x));
    local_scores.push_back(group_scores(g, local_x));
  }
  return search_weights(stage1_scores, truth_sets(stage1_split), local_scores,
                        truth_sets(local_split), cfg);
}

inline std::string format_ensemble_spec(const EnsembleSpec& spec) {
  spec.validate();
  std::string out;
  for (size_t i = 0; i < spec.group_names.size(); ++i) {
    out += "group." + spec.group_names[i] + ".weight = " + detail::format_double(spec.weights[i]) +
           "\n";
    if (i < spec.member_paths.size())
      out += "group." + spec.group_names[i] + ".members = " + spec.member_paths[i] + "\n";
  }
  return out;
}

inline void write_ensemble_spec(const EnsembleSpec& spec, const std::filesystem::path& path) {
  write_file(path, format_ensemble_spec(spec));
}

inline EnsembleSpec read_ensemble_spec(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  EnsembleSpec spec;
  size_t pos = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (pos < text.size()) {
    size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    const std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.rfind("group.", 0) != 0) throw io_error("ensemble spec: unknown key " + key);
    const size_t dot = key.rfind('.');
    const std::string name = key.substr(6, dot - 6);
    const std::string field = key.substr(dot + 1);
    size_t idx = spec.group_names.size();
    for (size_t i = 0; i < spec.group_names.size(); ++i)
      if (spec.group_names[i] == name) idx = i;
    if (idx == spec.group_names.size()) {
      spec.group_names.push_back(name);
      spec.weights.push_back(0.0);
      spec.member_paths.emplace_back();
    }
    if (field == "weight")
      spec.weights[idx] = std::stod(value);
    else if (field == "members")
      spec.member_paths[idx] = value;
    else
      throw io_error("ensemble spec: unknown field " + field);
  }
  spec.validate();
  return spec;
}

}  // namespace geoshift
