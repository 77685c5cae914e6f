// Experiment driver: dataset generation, base training, alpha-mixed
// adaptation sweeps, ensemble weight search, evaluation and prediction.
// All artifacts live under one --out workspace; identical config + seed
// reproduce every output byte.

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "geoshift/bundle_io.hpp"
#include "geoshift/config.hpp"
#include "geoshift/ensemble.hpp"

namespace fs = std::filesystem;
using namespace geoshift;

namespace {

struct CommonArgs {
  std::string config_file;
  std::string out_dir;
  std::vector<std::string> sets;
  int jobs = 0;  // 0: take from config
};

ExperimentConfig resolve_config(const CommonArgs& args) {
  ExperimentConfig cfg;
  if (!args.config_file.empty()) cfg.load_file(args.config_file);
  for (const std::string& kv : args.sets) cfg.apply_override(kv);
  return cfg;
}

int effective_jobs(const CommonArgs& args, const ExperimentConfig& cfg) {
  return args.jobs > 0 ? args.jobs : static_cast<int>(cfg.get_int("jobs"));
}

std::string fmt(double v) { return detail::format_double(v); }

std::string alpha_token(double alpha) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", alpha);
  return buf;
}

/// Creates the workspace and pins its config. A second run with the same
/// config overwrites outputs byte-identically; a different config is
/// rejected instead of silently mixing artifacts.
void ensure_workspace(const fs::path& out, const ExperimentConfig& cfg) {
  fs::create_directories(out);
  const fs::path manifest_path = out / "manifest.txt";
  char line[64];
  std::snprintf(line, sizeof(line), "config_crc = %08x\n", cfg.hash());
  const std::string manifest = std::string(line) + "seed = " + cfg.get("seed") + "\n";
  if (fs::exists(manifest_path)) {
    if (read_file(manifest_path) != manifest)
      throw io_error("workspace " + out.string() + " was created with a different config");
  } else {
    write_file(manifest_path, manifest);
  }
  write_file(out / "config.cfg", cfg.dump());
}

DatasetBundle load_workspace_bundle(const fs::path& out) {
  const fs::path p = out / "bundle.gsd";
  if (!fs::exists(p)) throw io_error("no bundle in workspace; run `gen` first");
  return read_bundle(p);
}

Parameters load_base(const fs::path& out, const ModelConfig& expected) {
  const fs::path p = out / "base.gsck";
  if (!fs::exists(p)) throw io_error("no base checkpoint in workspace; run `train` first");
  return load_checkpoint(p, expected);
}

uint64_t fold_seed(const ExperimentConfig& cfg) {
  return Rng::mix(cfg.get_u64("seed") ^ 0x464F4C44ULL);  // "FOLD"
}

uint64_t adapt_seed(const ExperimentConfig& cfg, double alpha) {
  return Rng::mix(cfg.get_u64("seed") ^ std::bit_cast<uint64_t>(alpha));
}

TuningFolds workspace_folds(const ExperimentConfig& cfg, const DatasetBundle& bundle) {
  Rng rng = make_rng(fold_seed(cfg));
  return make_folds(bundle.target_tuning, cfg.fold_count(), rng);
}

fs::path adapt_dir(const fs::path& out, double alpha) {
  return out / ("adapt_a" + alpha_token(alpha));
}

/// Loads the fold models for one alpha, adapting and saving them first if
/// the workspace does not have them yet.
FoldModels obtain_fold_models(const fs::path& out, const ExperimentConfig& cfg,
                              const DatasetBundle& bundle, const Parameters& base, double alpha,
                              int jobs) {
  const fs::path dir = adapt_dir(out, alpha);
  if (fs::exists(dir / "manifest.txt")) {
    FoldModels fm = load_fold_models(dir);
    if (fm.base_crc == checkpoint_crc(base)) return fm;
    // Stale relative to the current base model: redo.
  }
  AdaptConfig acfg = cfg.adapt_config(alpha);
  acfg.seed = adapt_seed(cfg, alpha);
  const TuningFolds folds = workspace_folds(cfg, bundle);
  FoldModels fm = adapt_all(base, folds, bundle, acfg, jobs);
  save_fold_models(fm, dir);
  return fm;
}

struct NamedGroup {
  std::string name;
  Group group;
  std::string member_path;
};

std::vector<NamedGroup> build_groups(const fs::path& out, const ExperimentConfig& cfg,
                                     const DatasetBundle& bundle, const Parameters& base,
                                     int jobs) {
  std::vector<NamedGroup> groups;
  {
    NamedGroup g;
    g.name = "no_tuned";
    FoldModels fm;
    fm.base_crc = checkpoint_crc(base);
    fm.models.push_back(base);
    g.group = Group{g.name, {std::move(fm)}, -1.0};
    g.member_path = (out / "base.gsck").string();
    groups.push_back(std::move(g));
  }
  for (double alpha : cfg.get_double_list("ensemble.alphas")) {
    NamedGroup g;
    g.name = "alpha_" + alpha_token(alpha);
    g.group =
        Group{g.name, {obtain_fold_models(out, cfg, bundle, base, alpha, jobs)}, alpha};
    g.member_path = adapt_dir(out, alpha).string();
    groups.push_back(std::move(g));
  }
  return groups;
}

MetricsReport eval_scores(const Matrix& scores, const Split& split, double threshold) {
  return evaluate(scores, truth_sets(split), threshold);
}

// ---- commands -------------------------------------------------------------

int cmd_gen(const CommonArgs& args) {
  const ExperimentConfig cfg = resolve_config(args);
  const fs::path out(args.out_dir);
  ensure_workspace(out, cfg);
  const DatasetBundle bundle = generate(cfg.generator_config());
  write_bundle(bundle, out / "bundle.gsd");
  write_labels_csv(bundle, out / "labels.csv");
  std::printf("gen: bundle with %zu+%zu source and %zu+%zu+%zu target samples -> %s\n",
              bundle.source_train.size(), bundle.source_val.size(), bundle.target_tuning.size(),
              bundle.target_eval.size(), bundle.target_hidden.size(),
              (out / "bundle.gsd").string().c_str());
  return 0;
}

int cmd_train(const CommonArgs& args) {
  const ExperimentConfig cfg = resolve_config(args);
  const fs::path out(args.out_dir);
  ensure_workspace(out, cfg);
  const DatasetBundle bundle = load_workspace_bundle(out);
  const TrainResult result = train_base(cfg.model_config(), bundle, cfg.train_config());
  save_checkpoint(result.params, out / "base.gsck");
  std::string csv = "epoch,loss,val_f2,lr\n";
  for (const EpochStats& e : result.history)
    csv += std::to_string(e.epoch) + "," + fmt(e.loss) + "," + fmt(e.val_f2) + "," + fmt(e.lr) +
           "\n";
  write_file(out / "train_history.csv", csv);
  std::printf("train: %zu epochs, best val F2 %.4f -> %s\n", result.history.size(),
              evaluate_params(result.params, bundle.source_val, cfg.get_double("metrics.threshold"))
                  .mean_f2,
              (out / "base.gsck").string().c_str());
  return 0;
}

int cmd_adapt(const CommonArgs& args, double alpha) {
  const ExperimentConfig cfg = resolve_config(args);
  const fs::path out(args.out_dir);
  ensure_workspace(out, cfg);
  const DatasetBundle bundle = load_workspace_bundle(out);
  const Parameters base = load_base(out, cfg.model_config());

  AdaptConfig acfg = cfg.adapt_config(alpha);
  acfg.seed = adapt_seed(cfg, alpha);
  const TuningFolds folds = workspace_folds(cfg, bundle);
  const FoldModels fm = adapt_all(base, folds, bundle, acfg, effective_jobs(args, cfg));
  save_fold_models(fm, adapt_dir(out, alpha));
  const double t = cfg.get_double("metrics.threshold");
  const Matrix eval_scores_m = predict_fold_averaged(fm, flatten_images(bundle.target_eval));
  std::printf("adapt: alpha=%s, k=%d, target_eval F2 %.4f -> %s\n", alpha_token(alpha).c_str(),
              folds.k, eval_scores(eval_scores_m, bundle.target_eval, t).mean_f2,
              adapt_dir(out, alpha).string().c_str());
  return 0;
}

int cmd_sweep(const CommonArgs& args, const std::string& alphas_csv) {
  const ExperimentConfig cfg = resolve_config(args);
  const fs::path out(args.out_dir);
  ensure_workspace(out, cfg);
  const DatasetBundle bundle = load_workspace_bundle(out);
  const Parameters base = load_base(out, cfg.model_config());
  const int jobs = effective_jobs(args, cfg);
  const double t = cfg.get_double("metrics.threshold");

  std::vector<double> alphas;
  {
    std::stringstream ss(alphas_csv);
    std::string item;
    while (std::getline(ss, item, ','))
      if (!item.empty()) alphas.push_back(std::stod(item));
  }
  if (alphas.empty()) throw config_error("sweep-alpha: empty alpha list");

  const Matrix val_x = flatten_images(bundle.source_val);
  const Matrix eval_x = flatten_images(bundle.target_eval);
  const Matrix hidden_x = flatten_images(bundle.target_hidden);

  std::string csv = "alpha,val_f2,stage1_f2,hidden_f2\n";
  for (double alpha : alphas) {
    const FoldModels fm = obtain_fold_models(out, cfg, bundle, base, alpha, jobs);
    const double val_f2 =
        eval_scores(predict_fold_averaged(fm, val_x), bundle.source_val, t).mean_f2;
    const double stage1_f2 =
        eval_scores(predict_fold_averaged(fm, eval_x), bundle.target_eval, t).mean_f2;
    const double hidden_f2 =
        eval_scores(predict_fold_averaged(fm, hidden_x), bundle.target_hidden, t).mean_f2;
    csv += fmt(alpha) + "," + fmt(val_f2) + "," + fmt(stage1_f2) + "," + fmt(hidden_f2) + "\n";
    std::printf("sweep: alpha=%s val=%.4f stage1=%.4f hidden=%.4f\n", alpha_token(alpha).c_str(),
                val_f2, stage1_f2, hidden_f2);
  }
  write_file(out / "alpha_sweep.csv", csv);
  return 0;
}

int cmd_ensemble(const CommonArgs& args) {
  const ExperimentConfig cfg = resolve_config(args);
  const fs::path out(args.out_dir);
  ensure_workspace(out, cfg);
  const DatasetBundle bundle = load_workspace_bundle(out);
  const Parameters base = load_base(out, cfg.model_config());
  const auto named = build_groups(out, cfg, bundle, base, effective_jobs(args, cfg));

  std::vector<Group> groups;
  for (const auto& ng : named) groups.push_back(ng.group);
  const SearchResult res =
      search_weights(groups, bundle.target_eval, bundle.source_val, cfg.search_config());

  EnsembleSpec spec;
  for (size_t i = 0; i < named.size(); ++i) {
    spec.group_names.push_back(named[i].name);
    spec.weights.push_back(res.weights[i]);
    spec.member_paths.push_back(named[i].member_path);
  }
  write_ensemble_spec(spec, out / "ensemble_spec.txt");

  std::string csv;
  for (size_t g = 1; g <= groups.size(); ++g) csv += "w" + std::to_string(g) + ",";
  csv += "stage1_f2,local_f2,feasible\n";
  for (const GridPoint& pt : res.grid) {
    for (double w : pt.weights) csv += fmt(w) + ",";
    csv += fmt(pt.stage1_f2) + "," + fmt(pt.local_f2) + "," + (pt.feasible ? "1" : "0") + "\n";
  }
  write_file(out / "ensemble_grid.csv", csv);

  std::printf("ensemble: chose weights");
  for (double w : res.weights) std::printf(" %s", alpha_token(w).c_str());
  std::printf(" (stage1 F2 %.4f, local F2 %.4f) -> %s\n", res.stage1_f2, res.local_f2,
              (out / "ensemble_spec.txt").string().c_str());
  return 0;
}

/// Resolves --model into per-group score producers. Accepts "base",
/// "alpha<value>" or "ensemble".
Matrix model_scores(const fs::path& out, const ExperimentConfig& cfg, const DatasetBundle& bundle,
                    const std::string& model, const Matrix& images) {
  if (model == "base") {
    const Parameters base = load_base(out, cfg.model_config());
    return forward(base, images);
  }
  if (model.rfind("alpha", 0) == 0) {
    const double alpha = std::stod(model.substr(5));
    const fs::path dir = adapt_dir(out, alpha);
    if (!fs::exists(dir / "manifest.txt"))
      throw io_error("no adaptation for " + model + "; run `adapt --alpha " + alpha_token(alpha) +
                     "` first");
    return predict_fold_averaged(load_fold_models(dir), images);
  }
  if (model == "ensemble") {
    const fs::path spec_path = out / "ensemble_spec.txt";
    if (!fs::exists(spec_path)) throw io_error("no ensemble spec; run `ensemble` first");
    const EnsembleSpec spec = read_ensemble_spec(spec_path);
    std::vector<Matrix> per_group;
    for (size_t i = 0; i < spec.group_names.size(); ++i) {
      const fs::path member(spec.member_paths[i]);
      if (member.extension() == ".gsck") {
        per_group.push_back(forward(load_checkpoint(member), images));
      } else {
        per_group.push_back(predict_fold_averaged(load_fold_models(member), images));
      }
    }
    return weighted_scores(per_group, spec.weights);
  }
  throw config_error("unknown --model: " + model + " (expected base, alpha<value> or ensemble)");
}

int cmd_eval(const CommonArgs& args, const std::string& model, double threshold_override) {
  const ExperimentConfig cfg = resolve_config(args);
  const fs::path out(args.out_dir);
  ensure_workspace(out, cfg);
  const DatasetBundle bundle = load_workspace_bundle(out);
  const double t =
      threshold_override > 0.0 ? threshold_override : cfg.get_double("metrics.threshold");

  const std::vector<std::pair<std::string, const Split*>> splits = {
      {"source_val", &bundle.source_val},
      {"target_eval", &bundle.target_eval},
      {"target_hidden", &bundle.target_hidden},
  };
  std::string csv = "split,f2,precision,recall,threshold\n";
  std::vector<double> f2s;
  for (const auto& [name, split] : splits) {
    const MetricsReport rep = eval_scores(model_scores(out, cfg, bundle, model, flatten_images(*split)),
                                          *split, t);
    csv += name + "," + fmt(rep.mean_f2) + "," + fmt(rep.mean_precision) + "," +
           fmt(rep.mean_recall) + "," + fmt(t) + "\n";
    f2s.push_back(rep.mean_f2);
  }
  write_file(out / ("eval_" + model + ".csv"), csv);

  char table[256];
  std::snprintf(table, sizeof(table),
                "%-16s %-12s %-12s %-12s\n%-16s %-12.4f %-12.4f %-12.4f\n", "network",
                "validation", "stage1", "stage2", model.c_str(), f2s[0], f2s[1], f2s[2]);
  write_file(out / ("eval_" + model + ".txt"), table);
  std::fputs(table, stdout);
  return 0;
}

int cmd_predict(const CommonArgs& args, const std::string& model, const std::string& split_name) {
  const ExperimentConfig cfg = resolve_config(args);
  const fs::path out(args.out_dir);
  ensure_workspace(out, cfg);
  const DatasetBundle bundle = load_workspace_bundle(out);
  const Split& split = bundle.split(split_name);
  const double t = cfg.get_double("metrics.threshold");

  const Matrix scores = model_scores(out, cfg, bundle, model, flatten_images(split));

  std::string scores_csv = "sample_id";
  for (const std::string& name : bundle.vocab.names) scores_csv += "," + name;
  scores_csv += "\n";
  for (size_t i = 0; i < split.size(); ++i) {
    scores_csv += split[i].sample_id;
    for (size_t c = 0; c < scores.cols; ++c) scores_csv += "," + fmt(scores.at(i, c));
    scores_csv += "\n";
  }
  const std::string tag = "_" + model + "_" + split_name;
  write_file(out / ("scores" + tag + ".csv"), scores_csv);

  const auto preds = threshold_scores(scores, t);
  std::string submission = "sample_id,labels\n";
  for (size_t i = 0; i < split.size(); ++i) {
    submission += split[i].sample_id + ",";
    for (size_t j = 0; j < preds[i].size(); ++j) {
      if (j) submission += ' ';
      submission += std::to_string(preds[i][j]);
    }
    submission += "\n";
  }
  write_file(out / ("submission" + tag + ".csv"), submission);
  std::printf("predict: %zu rows -> %s\n", split.size(),
              (out / ("submission" + tag + ".csv")).string().c_str());
  return 0;
}

void add_common(CLI::App* sub, CommonArgs& args) {
  sub->add_option("--config", args.config_file, "experiment config file (key = value lines)");
  sub->add_option("--out", args.out_dir, "workspace directory")->required();
  sub->add_option("--set", args.sets, "override a config key, e.g. --set seed=7");
  sub->add_option("--jobs", args.jobs, "worker threads for fold adaptation");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale label-shift adaptation pipeline"};
  app.require_subcommand(1);

  CommonArgs args;
  double alpha = 0.0;
  std::string alphas_csv = "0,0.25,0.5,0.75,1";
  std::string model = "base";
  std::string split_name = "target_hidden";
  double threshold_override = 0.0;

  CLI::App* gen = app.add_subcommand("gen", "generate the synthetic shift bundle");
  add_common(gen, args);
  CLI::App* train = app.add_subcommand("train", "train the base model on source data");
  add_common(train, args);
  CLI::App* adapt = app.add_subcommand("adapt", "adapt the head for one mixing coefficient");
  add_common(adapt, args);
  adapt->add_option("--alpha", alpha, "mixing coefficient")->required();
  CLI::App* sweep = app.add_subcommand("sweep-alpha", "adapt over an alpha list, emit curve CSV");
  add_common(sweep, args);
  sweep->add_option("--alphas", alphas_csv, "comma-separated alpha list");
  CLI::App* ens = app.add_subcommand("ensemble", "constrained ensemble weight search");
  add_common(ens, args);
  CLI::App* eval_cmd = app.add_subcommand("eval", "score a model on the evaluation splits");
  add_common(eval_cmd, args);
  eval_cmd->add_option("--model", model, "base | alpha<value> | ensemble");
  eval_cmd->add_option("--threshold", threshold_override, "override the decision threshold");
  CLI::App* predict = app.add_subcommand("predict", "emit scores and a submission CSV");
  add_common(predict, args);
  predict->add_option("--model", model, "base | alpha<value> | ensemble");
  predict->add_option("--split", split_name, "bundle split to predict on");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return cmd_gen(args);
    if (train->parsed()) return cmd_train(args);
    if (adapt->parsed()) return cmd_adapt(args, alpha);
    if (sweep->parsed()) return cmd_sweep(args, alphas_csv);
    if (ens->parsed()) return cmd_ensemble(args);
    if (eval_cmd->parsed()) return cmd_eval(args, model, threshold_override);
    if (predict->parsed()) return cmd_predict(args, model, split_name);
    std::fprintf(stderr, "no subcommand\n");
    return 1;
  } catch (const numeric_error& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
