// Command-line driver: dataset generation, detector training, feature
// extraction, classifier fitting and the experiment runners.
//
// Every subcommand accepts --seed, --out-dir and --config <file>. Settings
// resolve as: built-in defaults, then the config file, then flags.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "graspfs/config_file.hpp"
#include "graspfs/errors.hpp"
#include "graspfs/experiment.hpp"
#include "graspfs/fewshot.hpp"
#include "graspfs/refiner.hpp"
#include "graspfs/scene.hpp"
#include "graspfs/train.hpp"

namespace fs = std::filesystem;
using namespace graspfs;

namespace {

struct Command {
  CLI::App* app = nullptr;
  std::vector<std::string> keys;
  std::map<std::string, std::string> flags;
  std::string config_path;
  std::string out_dir = ".";
};

std::string flag_name(const std::string& key) {
  std::string out = "--";
  for (char c : key) out += c == '_' ? '-' : c;
  return out;
}

// Registers one string option per key; "seed" is shared by every command.
Command& add_command(CLI::App& root, std::vector<Command>& commands, const std::string& name,
                     const std::string& help, std::vector<std::string> keys) {
  Command& cmd = commands.emplace_back();
  cmd.app = root.add_subcommand(name, help);
  keys.insert(keys.begin(), "seed");
  cmd.keys = std::move(keys);
  cmd.app->add_option("--config", cmd.config_path, "key = value settings file");
  cmd.app->add_option("--out-dir", cmd.out_dir, "output directory")->capture_default_str();
  for (const auto& key : cmd.keys) cmd.app->add_option(flag_name(key), cmd.flags[key]);
  return cmd;
}

KeyValueConfig resolve(const Command& cmd) {
  KeyValueConfig kv;
  if (!cmd.config_path.empty()) kv = KeyValueConfig::load(cmd.config_path);
  kv.require_known(cmd.keys);
  for (const auto& key : cmd.keys) {
    if (cmd.app->count(flag_name(key)) > 0) kv.set(key, cmd.flags.at(key));
  }
  return kv;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

const std::vector<std::string> kDatasetKeys{"num_scenes", "objects_per_scene", "mixed",    "kinds",
                                            "required_kinds", "image_size",   "noise_sigma", "schedule"};

DatasetConfig dataset_config(const KeyValueConfig& kv, std::size_t default_scenes) {
  DatasetConfig d;
  d.num_scenes = default_scenes;
  if (kv.has("seed")) d.seed = kv.get_u64("seed");
  if (kv.has("num_scenes")) d.num_scenes = kv.get_size("num_scenes");
  if (kv.has("objects_per_scene")) d.objects_per_scene = kv.get_size("objects_per_scene");
  if (kv.has("mixed")) d.mixed = kv.get_bool("mixed");
  if (kv.has("kinds")) d.allowed_kinds = parse_shape_kinds(kv.get_string("kinds"));
  if (kv.has("required_kinds")) {
    const auto s = kv.get_string("required_kinds");
    if (!s.empty() && s != "none") d.required_kinds = parse_shape_kinds(s);
  }
  if (kv.has("image_size")) d.image_size = kv.get_size("image_size");
  if (kv.has("noise_sigma")) d.noise_sigma = kv.get_double("noise_sigma");
  if (kv.has("schedule")) {
    const auto s = kv.get_string("schedule");
    if (s == "random") d.schedule = KindSchedule::Random;
    else if (s == "cyclic") d.schedule = KindSchedule::Cyclic;
    else throw ConfigError("schedule must be random or cyclic, got '" + s + "'");
  }
  return d;
}

int gen_data(const Command& cmd) {
  const auto kv = resolve(cmd);
  const auto scenes = sample_dataset(dataset_config(kv, 500));
  save_dataset(cmd.out_dir, scenes);
  std::printf("wrote %zu scenes to %s\n", scenes.size(), cmd.out_dir.c_str());
  return 0;
}

int train(const Command& cmd) {
  const auto kv = resolve(cmd);
  std::vector<LabeledScene> scenes;
  if (kv.has("data")) {
    scenes = load_dataset(kv.get_string("data"));
  } else {
    DatasetConfig d = dataset_config(kv, 500);
    d.schedule = kv.has("schedule") ? d.schedule : KindSchedule::Cyclic;
    d.seed = derive_seed(d.seed, "train-data");
    scenes = sample_dataset(d);
  }
  TrainConfig tc;
  if (kv.has("seed")) tc.seed = kv.get_u64("seed");
  if (kv.has("epochs")) tc.epochs = kv.get_size("epochs");
  if (kv.has("batch_size")) tc.batch_size = kv.get_size("batch_size");
  if (kv.has("lr")) tc.lr = kv.get_double("lr");
  if (kv.has("image_size")) tc.arch.image_size = kv.get_size("image_size");
  const auto samples = detector_samples(scenes);
  const auto result = train_detector(samples, tc, [](const EpochLog& e) {
    std::printf("epoch %3zu  class %.4f  regression %.4f  total %.4f\n", e.epoch, e.class_loss,
                e.regression_loss, e.total);
    std::fflush(stdout);
  });
  fs::create_directories(cmd.out_dir);
  save_checkpoint(fs::path(cmd.out_dir) / "detector.ckpt", result.detector);
  write_training_log(fs::path(cmd.out_dir) / "training_log.jsonl", result.log);
  std::printf("wrote %s\n", (fs::path(cmd.out_dir) / "detector.ckpt").c_str());
  return 0;
}

int extract(const Command& cmd) {
  const auto kv = resolve(cmd);
  if (!kv.has("checkpoint") || !kv.has("data")) throw ConfigError("extract-features needs --checkpoint and --data");
  ExperimentConfig defaults;
  ExtractConfig ec;
  ec.refine = {defaults.feature_source, defaults.feature_view, defaults.feature_smoothing,
               defaults.feature_root, defaults.feature_unit_norm};
  if (kv.has("score_threshold")) ec.score_threshold = kv.get_double("score_threshold");
  if (kv.has("nms_iou")) ec.nms_iou = kv.get_double("nms_iou");
  if (kv.has("association_iou")) ec.association_iou = kv.get_double("association_iou");
  if (kv.has("feature_source")) ec.refine.source = parse_feature_source(kv.get_string("feature_source"));
  if (kv.has("feature_view")) ec.refine.view = parse_feature_view(kv.get_string("feature_view"));
  if (kv.has("feature_smoothing")) ec.refine.smoothing_radius = kv.get_size("feature_smoothing");
  if (kv.has("feature_root")) ec.refine.root_transform = kv.get_bool("feature_root");
  if (kv.has("feature_unit_norm")) ec.refine.unit_norm = kv.get_bool("feature_unit_norm");
  const auto detector = load_checkpoint(kv.get_string("checkpoint"));
  const auto scenes = load_dataset(kv.get_string("data"));
  const auto features = extract_all(detector, scenes, ec);
  std::size_t associated = 0;
  for (const auto& f : features) associated += f.true_shape.has_value();
  fs::create_directories(cmd.out_dir);
  const fs::path out = fs::path(cmd.out_dir) / "features.gfc";
  save_cache(out, features);
  std::printf("%zu scenes, %zu detections (%zu associated) -> %s\n", scenes.size(), features.size(),
              associated, out.c_str());
  return 0;
}

int fit(const Command& cmd) {
  const auto kv = resolve(cmd);
  if (!kv.has("support")) throw ConfigError("fit-classifier needs --support <feature cache>");
  FewshotConfig fc;
  if (kv.has("pca_k")) fc.k = kv.get_size("pca_k");
  if (kv.has("pca_fit_scope")) fc.scope = parse_pca_fit_scope(kv.get_string("pca_fit_scope"));
  if (kv.has("c_grid")) fc.c_grid = kv.get_doubles("c_grid");
  if (kv.has("cv_folds")) fc.folds = kv.get_size("cv_folds");
  const auto support = load_cache(kv.get_string("support"));
  std::vector<RefinedFeatureSet> test;
  if (kv.has("test")) test = load_cache(kv.get_string("test"));
  if (fc.scope == PcaFitScope::Joint && test.empty()) {
    throw ConfigError("pca_fit_scope=joint needs --test <feature cache>");
  }
  const FewshotModel model = fit_all_layers(support, test, fc);
  fs::create_directories(cmd.out_dir);
  save_classifier(fs::path(cmd.out_dir) / "classifier.gfs", model);

  std::printf("layer   support   C\n");
  for (const auto& l : model.layers) {
    std::printf("%-6s  %.3f     %g%s\n", l.layer_id.c_str(), l.support_accuracy, l.svm.C,
                l.layer_id == model.selection.chosen_layer_id ? "  *" : "");
  }
  for (const auto& w : model.warnings) std::printf("warning: %s\n", w.c_str());
  if (!test.empty()) {
    const auto predictions = classify(model, test);
    std::ostringstream lines;
    std::size_t associated = 0, correct = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
      nlohmann::ordered_json j;
      j["scene_id"] = test[i].source_scene_id;
      j["anchor"] = test[i].detection.anchor_index;
      j["predicted"] = std::string(to_string(predictions[i].predicted));
      j["truth"] = test[i].true_shape ? nlohmann::ordered_json(std::string(to_string(*test[i].true_shape)))
                                      : nlohmann::ordered_json(nullptr);
      lines << j.dump() << '\n';
      if (test[i].true_shape) {
        ++associated;
        correct += *test[i].true_shape == predictions[i].predicted;
      }
    }
    write_text(fs::path(cmd.out_dir) / "predictions.jsonl", lines.str());
    if (associated > 0) {
      std::printf("test accuracy %.4f (%zu / %zu associated)\n",
                  static_cast<double>(correct) / static_cast<double>(associated), correct, associated);
    }
  }
  return 0;
}

ExperimentConfig experiment_from(const KeyValueConfig& kv, const std::string& default_id) {
  ExperimentConfig c = default_experiment_config(kv.has("experiment_id") ? kv.get_string("experiment_id")
                                                                           : default_id);
  apply_config(c, kv);
  return c;
}

template <class Report>
void emit(const Command& cmd, const Report& report) {
  fs::create_directories(cmd.out_dir);
  write_text(fs::path(cmd.out_dir) / "report.jsonl", report_records(report));
  const std::string table = report_table(report);
  write_text(fs::path(cmd.out_dir) / "report.txt", table);
  std::fputs(table.c_str(), stdout);
}

int experiment(const Command& cmd) {
  const auto config = experiment_from(resolve(cmd), "2");
  emit(cmd, run_experiment(config));
  return 0;
}

int sweep(const Command& cmd) {
  const auto config = experiment_from(resolve(cmd), "1");
  if (config.checkpoint.empty()) throw ConfigError("checkpoint path is not set");
  emit(cmd, run_sweep(config, load_checkpoint(config.checkpoint)));
  return 0;
}

int ablation(const Command& cmd) {
  const auto config = experiment_from(resolve(cmd), "ablation");
  if (config.checkpoint.empty()) throw ConfigError("checkpoint path is not set");
  emit(cmd, run_ablation(config, load_checkpoint(config.checkpoint)));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Grasp-detector feature refinement and few-shot shape classification"};
  app.require_subcommand(1);
  std::vector<Command> commands;
  commands.reserve(7);

  auto experiment_keys = experiment_config_keys();
  experiment_keys.erase(std::remove(experiment_keys.begin(), experiment_keys.end(), "seed"),
                        experiment_keys.end());

  std::vector<std::string> train_keys = kDatasetKeys;
  train_keys.insert(train_keys.end(), {"data", "epochs", "batch_size", "lr"});

  Command& c_gen = add_command(app, commands, "gen-data", "sample a labelled scene dataset", kDatasetKeys);
  Command& c_train = add_command(app, commands, "train-detector", "train the grasp detector", train_keys);
  Command& c_extract = add_command(app, commands, "extract-features", "detect and refine features for a dataset",
                                   {"checkpoint", "data", "score_threshold", "nms_iou", "association_iou",
                                    "feature_source", "feature_view", "feature_smoothing", "feature_root",
                                    "feature_unit_norm"});
  Command& c_fit = add_command(app, commands, "fit-classifier", "fit per-layer PCA + SVM classifiers",
                               {"support", "test", "pca_k", "pca_fit_scope", "c_grid", "cv_folds"});
  Command& c_exp = add_command(app, commands, "run-experiment", "run one experiment end to end", experiment_keys);
  Command& c_sweep = add_command(app, commands, "run-sweep", "support size x PCA dimension sweep", experiment_keys);
  Command& c_abl = add_command(app, commands, "run-ablation", "refined vs raw feature arms", experiment_keys);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*c_gen.app) return gen_data(c_gen);
    if (*c_train.app) return train(c_train);
    if (*c_extract.app) return extract(c_extract);
    if (*c_fit.app) return fit(c_fit);
    if (*c_exp.app) return experiment(c_exp);
    if (*c_sweep.app) return sweep(c_sweep);
    if (*c_abl.app) return ablation(c_abl);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
