#pragma once

#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "geoshift/adapt.hpp"
#include "geoshift/augment.hpp"
#include "geoshift/dataset.hpp"
#include "geoshift/ensemble.hpp"
#include "geoshift/model.hpp"
#include "geoshift/optimize.hpp"
#include "geoshift/serialize.hpp"

namespace geoshift {

/// Flat key=value experiment configuration. Every key has a default;
/// unknown keys are rejected. Precedence: CLI --set > file > default.
class ExperimentConfig {
 public:
  static const std::vector<std::pair<std::string, std::string>>& defaults() {
    static const std::vector<std::pair<std::string, std::string>> kDefaults = {
        {"seed", "42"},
        {"jobs", "1"},
        {"gen.height", "16"},
        {"gen.width", "16"},
        {"gen.channels", "3"},
        {"gen.num_classes", "20"},
        {"gen.source_train", "5000"},
        {"gen.source_val", "1000"},
        {"gen.target_tuning", "1000"},
        {"gen.target_eval", "1000"},
        {"gen.target_hidden", "1000"},
        {"gen.source_prior_head", "0.30"},
        {"gen.source_prior_tail", "0.02"},
        {"gen.target_prior_head", "0.05"},
        {"gen.target_prior_tail", "0.35"},
        {"gen.hidden_interp", "0.2"},
        {"gen.proto_noise_sigma", "0.05"},
        {"gen.background_noise_sigma", "0.25"},
        {"gen.min_shift_delta", "0.3"},
        {"model.hidden_dims", "64,32"},
        {"model.dropout_p", "0.3"},
        {"model.bn_momentum", "0.1"},
        {"model.bn_epsilon", "1e-5"},
        {"train.batch_size", "128"},
        {"train.max_epochs", "30"},
        {"train.lr", "0.001"},
        {"train.lr_floor", "1e-6"},
        {"train.early_stop_patience", "10"},
        {"train.scheduler_factor", "0.5"},
        {"train.scheduler_patience", "2"},
        {"train.scheduler_cooldown", "2"},
        {"adapt.k", "10"},
        {"adapt.epochs", "40"},
        {"adapt.batches_per_epoch", "50"},
        {"adapt.batch_size", "16"},
        {"adapt.lr", "0.001"},
        {"adapt.reinit_head", "true"},
        {"adapt.use_augmentations", "true"},
        {"adapt.recompute_bn", "true"},
        {"adapt.bn_batches", "20"},
        {"aug.rotate90.prob", "0.5"},
        {"aug.flip.prob", "0.5"},
        {"aug.transpose.prob", "0.5"},
        {"aug.gauss_noise.prob", "0.1"},
        {"aug.median_blur.prob", "0.2"},
        {"aug.shift.prob", "0.5"},
        {"aug.rotate.prob", "0.5"},
        {"aug.scale.prob", "0.5"},
        {"aug.brightness.prob", "0.15"},
        {"aug.hsv.prob", "0.5"},
        {"ensemble.alphas", "0,0.5,0.9"},
        {"ensemble.weights", "0.05,0.6,0.3,0.05"},
        {"ensemble.grid_step", "0.05"},
        {"ensemble.epsilon", "0.002"},
        {"metrics.threshold", "0.5"},
    };
    return kDefaults;
  }

  ExperimentConfig() {
    for (const auto& [k, v] : defaults()) values_[k] = v;
  }

  void set(const std::string& key, const std::string& value) {
    if (!values_.count(key)) throw config_error("unknown config key: " + key);
    values_[key] = value;
  }

  /// `key=value` as passed to --set.
  void apply_override(const std::string& kv) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos) throw config_error("--set expects key=value, got: " + kv);
    set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }

  /// Lines of `key = value`; '#' starts a comment; blank lines ignored.
  void load_file(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    size_t pos = 0;
    int line_no = 0;
    while (pos < text.size()) {
      size_t eol = text.find('\n', pos);
      if (eol == std::string::npos) eol = text.size();
      std::string line = text.substr(pos, eol - pos);
      pos = eol + 1;
      ++line_no;
      const size_t hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      const size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw config_error("config line " + std::to_string(line_no) + " lacks '='");
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
  }

  const std::string& get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw config_error("unknown config key: " + key);
    return it->second;
  }

  long get_int(const std::string& key) const {
    try {
      size_t used = 0;
      const long v = std::stol(get(key), &used);
      if (used != get(key).size()) throw std::invalid_argument(key);
      return v;
    } catch (const std::exception&) {
      throw config_error("config key " + key + " is not an integer: " + get(key));
    }
  }

  uint64_t get_u64(const std::string& key) const {
    try {
      size_t used = 0;
      const uint64_t v = std::stoull(get(key), &used);
      if (used != get(key).size()) throw std::invalid_argument(key);
      return v;
    } catch (const std::exception&) {
      throw config_error("config key " + key + " is not an unsigned integer: " + get(key));
    }
  }

  double get_double(const std::string& key) const {
    try {
      size_t used = 0;
      const double v = std::stod(get(key), &used);
      if (used != get(key).size()) throw std::invalid_argument(key);
      return v;
    } catch (const std::exception&) {
      throw config_error("config key " + key + " is not a number: " + get(key));
    }
  }

  bool get_bool(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw config_error("config key " + key + " is not a bool: " + v);
  }

  std::vector<double> get_double_list(const std::string& key) const {
    std::vector<double> out;
    std::stringstream ss(get(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item.empty()) continue;
      try {
        out.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw config_error("config key " + key + " has a non-numeric item: " + item);
      }
    }
    if (out.empty()) throw config_error("config key " + key + " is an empty list");
    return out;
  }

  std::vector<size_t> get_size_list(const std::string& key) const {
    std::vector<size_t> out;
    for (double v : get_double_list(key)) {
      if (v < 1 || v != std::floor(v))
        throw config_error("config key " + key + " needs positive integers");
      out.push_back(static_cast<size_t>(v));
    }
    return out;
  }

  /// Canonical dump in declaration order; hashed into the workspace
  /// manifest so reruns can detect a changed configuration.
  std::string dump() const {
    std::string out;
    for (const auto& [k, unused] : defaults()) {
      (void)unused;
      out += k + " = " + values_.at(k) + "\n";
    }
    return out;
  }

  uint32_t hash() const { return crc32(dump()); }

  GeneratorConfig generator_config() const {
    GeneratorConfig cfg = GeneratorConfig::desk_default(
        static_cast<size_t>(get_int("gen.num_classes")), get_double("gen.source_prior_head"),
        get_double("gen.source_prior_tail"), get_double("gen.target_prior_head"),
        get_double("gen.target_prior_tail"), get_double("gen.hidden_interp"));
    cfg.height = static_cast<size_t>(get_int("gen.height"));
    cfg.width = static_cast<size_t>(get_int("gen.width"));
    cfg.channels = static_cast<size_t>(get_int("gen.channels"));
    cfg.source_train_size = static_cast<size_t>(get_int("gen.source_train"));
    cfg.source_val_size = static_cast<size_t>(get_int("gen.source_val"));
    cfg.target_tuning_size = static_cast<size_t>(get_int("gen.target_tuning"));
    cfg.target_eval_size = static_cast<size_t>(get_int("gen.target_eval"));
    cfg.target_hidden_size = static_cast<size_t>(get_int("gen.target_hidden"));
    cfg.proto_noise_sigma = get_double("gen.proto_noise_sigma");
    cfg.background_noise_sigma = get_double("gen.background_noise_sigma");
    cfg.min_shift_delta = get_double("gen.min_shift_delta");
    cfg.seed = get_u64("seed");
    return cfg;
  }

  ModelConfig model_config() const {
    ModelConfig cfg;
    cfg.input_dim = static_cast<size_t>(get_int("gen.height")) *
                    static_cast<size_t>(get_int("gen.width")) *
                    static_cast<size_t>(get_int("gen.channels"));
    cfg.hidden_dims = get_size_list("model.hidden_dims");
    cfg.num_classes = static_cast<size_t>(get_int("gen.num_classes"));
    cfg.dropout_p = get_double("model.dropout_p");
    cfg.bn_momentum = get_double("model.bn_momentum");
    cfg.bn_epsilon = get_double("model.bn_epsilon");
    return cfg;
  }

  TrainConfig train_config() const {
    TrainConfig cfg;
    cfg.batch_size = static_cast<size_t>(get_int("train.batch_size"));
    cfg.max_epochs = static_cast<int>(get_int("train.max_epochs"));
    cfg.seed = get_u64("seed");
    cfg.early_stop_patience = static_cast<int>(get_int("train.early_stop_patience"));
    cfg.lr = get_double("train.lr");
    cfg.lr_floor = get_double("train.lr_floor");
    cfg.scheduler_factor = get_double("train.scheduler_factor");
    cfg.scheduler_patience = static_cast<int>(get_int("train.scheduler_patience"));
    cfg.scheduler_cooldown = static_cast<int>(get_int("train.scheduler_cooldown"));
    cfg.eval_threshold = get_double("metrics.threshold");
    return cfg;
  }

  AugmentConfig augment_config() const {
    AugmentConfig cfg;
    for (size_t i = 0; i < kNumTransformKinds; ++i) {
      const std::string key =
          "aug." + std::string(transform_kind_name(static_cast<TransformKind>(i))) + ".prob";
      cfg.probs[i] = get_double(key);
    }
    cfg.validate();
    return cfg;
  }

  AdaptConfig adapt_config(double alpha) const {
    AdaptConfig cfg;
    cfg.alpha = alpha;
    cfg.epochs = static_cast<int>(get_int("adapt.epochs"));
    cfg.batches_per_epoch = static_cast<int>(get_int("adapt.batches_per_epoch"));
    cfg.batch_size = static_cast<size_t>(get_int("adapt.batch_size"));
    cfg.lr = get_double("adapt.lr");
    cfg.reinit_head = get_bool("adapt.reinit_head");
    cfg.use_augmentations = get_bool("adapt.use_augmentations");
    cfg.recompute_bn = get_bool("adapt.recompute_bn");
    cfg.bn_batches = static_cast<int>(get_int("adapt.bn_batches"));
    cfg.seed = get_u64("seed");
    cfg.eval_threshold = get_double("metrics.threshold");
    cfg.aug = augment_config();
    return cfg;
  }

  int fold_count() const { return static_cast<int>(get_int("adapt.k")); }

  WeightSearchConfig search_config() const {
    WeightSearchConfig cfg;
    cfg.grid_step = get_double("ensemble.grid_step");
    cfg.epsilon = get_double("ensemble.epsilon");
    cfg.threshold = get_double("metrics.threshold");
    return cfg;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> values_;
};

}  // namespace geoshift
