#include "graspfs/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

#include "graspfs/errors.hpp"

namespace graspfs {

namespace {

using nlohmann::ordered_json;

std::string kinds_string(const std::vector<ShapeKind>& kinds) {
  std::string out;
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    if (i) out += ",";
    out += to_string(kinds[i]);
  }
  return out;
}

template <class T>
std::string list_string(const std::vector<T>& values) {
  std::ostringstream out;
  out << std::setprecision(17);
  for (std::size_t i = 0; i < values.size(); ++i) out << (i ? "," : "") << values[i];
  return out.str();
}

std::string number_string(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

}  // namespace

ExperimentConfig default_experiment_config(const std::string& experiment_id) {
  ExperimentConfig c;
  c.experiment_id = experiment_id;
  if (experiment_id == "1" || experiment_id == "2") {
    return c;
  }
  if (experiment_id == "3") {
    c.objects_per_scene = 4;
    return c;
  }
  if (experiment_id == "4" || experiment_id == "ablation") {
    c.num_test_scenes = 50;
    c.objects_per_scene = 4;
    c.mixed = true;
    return c;
  }
  if (experiment_id == "5") {
    c.num_test_scenes = 50;
    c.objects_per_scene = 3;
    c.mixed = true;
    c.required_kinds = {ShapeKind::Ring};
    c.support_kinds.assign(kAllKinds.begin(), kAllKinds.end());
    return c;
  }
  throw ConfigError("unknown experiment_id '" + experiment_id + "' (1, 2, 3, 4, 5, ablation)");
}

std::vector<std::string> experiment_config_keys() {
  return {"experiment_id",   "checkpoint",      "seed",          "support_per_class",
          "pca_k",           "pca_fit_scope",   "support_kinds", "num_test_scenes",
          "objects_per_scene", "mixed",         "kinds",         "required_kinds",
          "image_size",      "noise_sigma",     "score_threshold", "nms_iou",
          "association_iou", "feature_source",  "feature_view",  "feature_smoothing", "feature_root", "feature_unit_norm", "c_grid",
          "cv_folds",        "support_grid",    "k_grid"};
}

void apply_config(ExperimentConfig& c, const KeyValueConfig& v) {
  v.require_known(experiment_config_keys());
  if (v.has("experiment_id") && v.get_string("experiment_id") != c.experiment_id) {
    c = default_experiment_config(v.get_string("experiment_id"));
  }
  if (v.has("checkpoint")) c.checkpoint = v.get_string("checkpoint");
  if (v.has("seed")) c.seed = v.get_u64("seed");
  if (v.has("support_per_class")) c.support_per_class = v.get_size("support_per_class");
  if (v.has("pca_k")) c.pca_k = v.get_size("pca_k");
  if (v.has("pca_fit_scope")) c.pca_fit_scope = parse_pca_fit_scope(v.get_string("pca_fit_scope"));
  if (v.has("support_kinds")) c.support_kinds = parse_shape_kinds(v.get_string("support_kinds"));
  if (v.has("num_test_scenes")) c.num_test_scenes = v.get_size("num_test_scenes");
  if (v.has("objects_per_scene")) c.objects_per_scene = v.get_size("objects_per_scene");
  if (v.has("mixed")) c.mixed = v.get_bool("mixed");
  if (v.has("kinds")) c.kinds = parse_shape_kinds(v.get_string("kinds"));
  if (v.has("required_kinds")) {
    const std::string s = v.get_string("required_kinds");
    c.required_kinds = s.empty() || s == "none" ? std::vector<ShapeKind>{} : parse_shape_kinds(s);
  }
  if (v.has("image_size")) c.image_size = v.get_size("image_size");
  if (v.has("noise_sigma")) c.noise_sigma = v.get_double("noise_sigma");
  if (v.has("score_threshold")) c.score_threshold = v.get_double("score_threshold");
  if (v.has("nms_iou")) c.nms_iou = v.get_double("nms_iou");
  if (v.has("association_iou")) c.association_iou = v.get_double("association_iou");
  if (v.has("feature_source")) c.feature_source = parse_feature_source(v.get_string("feature_source"));
  if (v.has("feature_view")) c.feature_view = parse_feature_view(v.get_string("feature_view"));
  if (v.has("feature_smoothing")) c.feature_smoothing = v.get_size("feature_smoothing");
  if (v.has("feature_root")) c.feature_root = v.get_bool("feature_root");
  if (v.has("feature_unit_norm")) c.feature_unit_norm = v.get_bool("feature_unit_norm");
  if (v.has("c_grid")) c.c_grid = v.get_doubles("c_grid");
  if (v.has("cv_folds")) c.cv_folds = v.get_size("cv_folds");
  if (v.has("support_grid")) c.support_grid = v.get_sizes("support_grid");
  if (v.has("k_grid")) c.k_grid = v.get_sizes("k_grid");
}

std::vector<std::pair<std::string, std::string>> config_echo(const ExperimentConfig& c) {
  return {
      {"experiment_id", c.experiment_id},
      {"checkpoint", c.checkpoint.string()},
      {"seed", std::to_string(c.seed)},
      {"support_per_class", std::to_string(c.support_per_class)},
      {"pca_k", std::to_string(c.pca_k)},
      {"pca_fit_scope", std::string(to_string(c.pca_fit_scope))},
      {"support_kinds", kinds_string(c.support_kinds)},
      {"num_test_scenes", std::to_string(c.num_test_scenes)},
      {"objects_per_scene", std::to_string(c.objects_per_scene)},
      {"mixed", c.mixed ? "true" : "false"},
      {"kinds", kinds_string(c.kinds)},
      {"required_kinds", c.required_kinds.empty() ? "none" : kinds_string(c.required_kinds)},
      {"image_size", std::to_string(c.image_size)},
      {"noise_sigma", number_string(c.noise_sigma)},
      {"score_threshold", number_string(c.score_threshold)},
      {"nms_iou", number_string(c.nms_iou)},
      {"association_iou", number_string(c.association_iou)},
      {"feature_source", std::string(to_string(c.feature_source))},
      {"feature_view", std::string(to_string(c.feature_view))},
      {"feature_smoothing", std::to_string(c.feature_smoothing)},
      {"feature_root", c.feature_root ? "true" : "false"},
      {"feature_unit_norm", c.feature_unit_norm ? "true" : "false"},
      {"c_grid", list_string(c.c_grid)},
      {"cv_folds", std::to_string(c.cv_folds)},
      {"support_grid", list_string(c.support_grid)},
      {"k_grid", list_string(c.k_grid)},
  };
}

std::vector<LabeledScene> support_scenes(const ExperimentConfig& c) {
  if (c.support_kinds.size() < 2) throw ConfigError("support_kinds needs at least two kinds");
  DatasetConfig d;
  d.num_scenes = c.support_per_class * c.support_kinds.size();
  d.objects_per_scene = 1;
  d.allowed_kinds = c.support_kinds;
  d.schedule = KindSchedule::Cyclic;
  d.seed = derive_seed(c.seed, "support");
  d.image_size = c.image_size;
  d.noise_sigma = c.noise_sigma;
  d.id_prefix = "support";
  if (d.num_scenes == 0) throw ConfigError("support_per_class must be >= 1");
  return sample_dataset(d);
}

std::vector<LabeledScene> test_scenes(const ExperimentConfig& c) {
  DatasetConfig d;
  d.num_scenes = c.num_test_scenes;
  d.objects_per_scene = c.objects_per_scene;
  d.allowed_kinds = c.kinds;
  d.required_kinds = c.required_kinds;
  d.mixed = c.mixed;
  d.schedule = KindSchedule::Cyclic;
  d.seed = derive_seed(c.seed, "test");
  d.image_size = c.image_size;
  d.noise_sigma = c.noise_sigma;
  d.id_prefix = "test";
  return sample_dataset(d);
}

namespace {

ExtractConfig extract_config(const ExperimentConfig& c, FeatureSource source) {
  ExtractConfig e;
  e.score_threshold = c.score_threshold;
  e.nms_iou = c.nms_iou;
  e.association_iou = c.association_iou;
  e.refine = {source, c.feature_view, c.feature_smoothing, c.feature_root, c.feature_unit_norm};
  return e;
}

FewshotConfig fewshot_config(const ExperimentConfig& c, std::size_t k) {
  FewshotConfig f;
  f.k = k;
  f.c_grid = c.c_grid;
  f.folds = c.cv_folds;
  f.scope = c.pca_fit_scope;
  return f;
}

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Detect-refine-classify on prepared scenes with one feature source.
ExperimentReport evaluate(const ExperimentConfig& config, const DetectorNetwork& detector,
                          std::span<const LabeledScene> support, std::span<const LabeledScene> test,
                          FeatureSource source) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentReport r;
  r.config = config;
  r.config.feature_source = source;
  r.arm = std::string(to_string(source));
  r.num_test_scenes = test.size();

  const ExtractConfig ec = extract_config(config, source);
  const auto support_features = extract_all(detector, support, ec);
  const auto test_features = extract_all(detector, test, ec);
  for (const auto& f : support_features) r.support_features += f.true_shape.has_value();
  r.detections_count = test_features.size();
  for (const auto& f : test_features) r.associated_count += f.true_shape.has_value();
  r.unassociated_count = r.detections_count - r.associated_count;

  if (test_features.empty()) {
    r.warnings.push_back("no detections on the test scenes; accuracy undefined");
    if (!config.required_kinds.empty() && !test.empty()) r.required_kind_detection_rate = 0.0;
    r.wall_seconds = elapsed(t0);
    return r;
  }
  const FewshotModel model =
      fit_all_layers(support_features, test_features, fewshot_config(config, config.pca_k));
  r.warnings = model.warnings;
  r.selected_layer = model.selection.chosen_layer_id;

  const auto predictions = classify(model, test_features);
  for (std::size_t i = 0; i < test_features.size(); ++i) {
    const auto& truth = test_features[i].true_shape;
    if (truth && *truth == predictions[i].predicted) ++r.correct_count;
  }
  if (r.associated_count > 0) {
    r.accuracy = static_cast<double>(r.correct_count) / static_cast<double>(r.associated_count);
  } else {
    r.warnings.push_back("no associated detections; accuracy undefined");
  }
  for (const auto& lc : model.layers) {
    LayerRow row{lc.layer_id, lc.support_accuracy, std::nullopt};
    if (r.associated_count > 0) {
      const auto labels = predict_layer(model, lc.layer_id, test_features);
      std::size_t correct = 0;
      for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto& truth = test_features[i].true_shape;
        if (truth && *truth == labels[i]) ++correct;
      }
      row.test_accuracy = static_cast<double>(correct) / static_cast<double>(r.associated_count);
    }
    r.layers.push_back(row);
  }

  if (!config.required_kinds.empty()) {
    std::map<std::string, bool> hit;
    for (const auto& s : test) hit[s.id] = false;
    for (const auto& f : test_features) {
      if (!f.true_shape) continue;
      for (ShapeKind k : config.required_kinds) {
        if (*f.true_shape == k) hit[f.source_scene_id] = true;
      }
    }
    std::size_t with = 0;
    for (const auto& [id, h] : hit) with += h;
    if (!test.empty()) {
      r.required_kind_detection_rate = static_cast<double>(with) / static_cast<double>(test.size());
    }
  }
  r.wall_seconds = elapsed(t0);
  return r;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& config, const DetectorNetwork& detector) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto support = support_scenes(config);
  const auto test = test_scenes(config);
  ExperimentReport r = evaluate(config, detector, support, test, config.feature_source);
  r.wall_seconds = elapsed(t0);
  return r;
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
  if (config.checkpoint.empty()) throw ConfigError("checkpoint path is not set");
  return run_experiment(config, load_checkpoint(config.checkpoint));
}

AblationReport run_ablation(const ExperimentConfig& config, const DetectorNetwork& detector) {
  const auto support = support_scenes(config);
  const auto test = test_scenes(config);
  return {evaluate(config, detector, support, test, FeatureSource::Refined),
          evaluate(config, detector, support, test, FeatureSource::Raw)};
}

SweepReport run_sweep(const ExperimentConfig& config, const DetectorNetwork& detector) {
  if (config.support_grid.empty() || config.k_grid.empty()) {
    throw ConfigError("support_grid and k_grid must be non-empty");
  }
  SweepReport r;
  r.config = config;
  r.support_grid = config.support_grid;
  r.k_grid = config.k_grid;
  ExperimentConfig big = config;
  big.support_per_class = *std::max_element(config.support_grid.begin(), config.support_grid.end());
  // Support scenes are generated in a fixed cyclic order, so the set for s
  // images per class is the first s * K scenes of the largest set.
  const auto support = support_scenes(big);
  const auto test = test_scenes(config);
  const ExtractConfig ec = extract_config(config, config.feature_source);
  const auto support_features = extract_all(detector, support, ec);
  const auto test_features = extract_all(detector, test, ec);
  std::map<std::string, std::size_t> scene_index;
  for (std::size_t i = 0; i < support.size(); ++i) scene_index[support[i].id] = i;

  r.cells.assign(r.k_grid.size(), std::vector<std::optional<double>>(r.support_grid.size()));
  for (std::size_t si = 0; si < r.support_grid.size(); ++si) {
    const std::size_t limit = r.support_grid[si] * config.support_kinds.size();
    std::vector<RefinedFeatureSet> subset;
    std::size_t labelled = 0;
    for (const auto& f : support_features) {
      if (scene_index.at(f.source_scene_id) < limit) {
        subset.push_back(f);
        labelled += f.true_shape.has_value();
      }
    }
    const std::size_t fit_rows =
        labelled + (config.pca_fit_scope == PcaFitScope::Joint ? test_features.size() : 0);
    for (std::size_t ki = 0; ki < r.k_grid.size(); ++ki) {
      const std::size_t k = r.k_grid[ki];
      if (k == 0 || fit_rows < 2 || k > fit_rows - 1) continue;
      try {
        const FewshotModel model = fit_all_layers(subset, test_features, fewshot_config(config, k));
        const auto predictions = classify(model, test_features);
        std::size_t correct = 0, associated = 0;
        for (std::size_t i = 0; i < test_features.size(); ++i) {
          if (!test_features[i].true_shape) continue;
          ++associated;
          correct += *test_features[i].true_shape == predictions[i].predicted;
        }
        if (associated > 0) {
          r.cells[ki][si] = static_cast<double>(correct) / static_cast<double>(associated);
        }
      } catch (const ConfigError&) {
        // infeasible cell (too few samples for this k or fold count): left absent
      }
    }
  }
  return r;
}

namespace {

ordered_json metric(const std::string& arm, const std::string& name, const ordered_json& value) {
  ordered_json j;
  j["arm"] = arm;
  j["metric"] = name;
  j["value"] = value;
  return j;
}

ordered_json optional_value(const std::optional<double>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

// correct / all detections, unassociated ones included
std::optional<double> over_detections(const ExperimentReport& r) {
  if (r.detections_count == 0) return std::nullopt;
  return static_cast<double>(r.correct_count) / static_cast<double>(r.detections_count);
}

void append_config(std::ostringstream& out, const ExperimentConfig& c) {
  for (const auto& [key, value] : config_echo(c)) {
    ordered_json j;
    j["metric"] = "config";
    j["key"] = key;
    j["value"] = value;
    out << j.dump() << '\n';
  }
}

void append_metrics(std::ostringstream& out, const ExperimentReport& r) {
  const std::string& a = r.arm;
  out << metric(a, "feature_source", r.arm).dump() << '\n';
  out << metric(a, "num_test_scenes", r.num_test_scenes).dump() << '\n';
  out << metric(a, "support_features", r.support_features).dump() << '\n';
  out << metric(a, "detections_count", r.detections_count).dump() << '\n';
  out << metric(a, "associated_count", r.associated_count).dump() << '\n';
  out << metric(a, "unassociated_count", r.unassociated_count).dump() << '\n';
  out << metric(a, "correct_count", r.correct_count).dump() << '\n';
  out << metric(a, "accuracy", optional_value(r.accuracy)).dump() << '\n';
  out << metric(a, "accuracy_defined", r.accuracy.has_value()).dump() << '\n';
  out << metric(a, "accuracy_over_detections", optional_value(over_detections(r))).dump() << '\n';
  out << metric(a, "selected_layer", r.selected_layer).dump() << '\n';
  if (r.required_kind_detection_rate) {
    out << metric(a, "required_kind_detection_rate", *r.required_kind_detection_rate).dump() << '\n';
  }
  for (const auto& row : r.layers) {
    ordered_json s = metric(a, "layer_support_accuracy", row.support_accuracy);
    s["layer"] = row.layer_id;
    out << s.dump() << '\n';
    ordered_json t = metric(a, "layer_test_accuracy", optional_value(row.test_accuracy));
    t["layer"] = row.layer_id;
    out << t.dump() << '\n';
  }
  for (const auto& w : r.warnings) out << metric(a, "warning", w).dump() << '\n';
}

std::string fmt(const std::optional<double>& v, int precision = 3) {
  if (!v) return "-";
  std::ostringstream out;
  out << std::fixed << std::setprecision(precision) << *v;
  return out.str();
}

void table_rows(std::ostringstream& out, const std::vector<std::pair<std::string, std::string>>& rows) {
  std::size_t width = 0;
  for (const auto& [k, v] : rows) width = std::max(width, k.size());
  for (const auto& [k, v] : rows) out << "  " << std::left << std::setw(static_cast<int>(width)) << k << "  " << v << '\n';
}

void append_table(std::ostringstream& out, const ExperimentReport& r) {
  out << "experiment " << r.config.experiment_id << " (" << r.arm << " features, pca scope "
      << to_string(r.config.pca_fit_scope) << ")\n";
  std::vector<std::pair<std::string, std::string>> rows{
      {"test scenes", std::to_string(r.num_test_scenes)},
      {"support features", std::to_string(r.support_features)},
      {"detections", std::to_string(r.detections_count)},
      {"associated", std::to_string(r.associated_count)},
      {"unassociated", std::to_string(r.unassociated_count)},
      {"correct", std::to_string(r.correct_count)},
      {"accuracy", r.accuracy ? fmt(r.accuracy) : "undefined (no associated detections)"},
      {"accuracy incl. unassociated", fmt(over_detections(r))},
      {"selected layer", r.selected_layer},
  };
  if (r.required_kind_detection_rate) {
    rows.emplace_back("required-kind scenes detected", fmt(r.required_kind_detection_rate));
  }
  rows.emplace_back("wall seconds", fmt(r.wall_seconds, 1));
  table_rows(out, rows);
  out << "\n  layer   support  test\n";
  for (const auto& row : r.layers) {
    out << "  " << std::left << std::setw(6) << row.layer_id << "  " << fmt(row.support_accuracy)
        << "    " << fmt(row.test_accuracy) << (row.layer_id == r.selected_layer ? "  *" : "") << '\n';
  }
  for (const auto& w : r.warnings) out << "  warning: " << w << '\n';
}

}  // namespace

std::string report_records(const ExperimentReport& r) {
  std::ostringstream out;
  append_config(out, r.config);
  append_metrics(out, r);
  return out.str();
}

std::string report_records(const AblationReport& r) {
  std::ostringstream out;
  ExperimentConfig c = r.refined.config;
  append_config(out, c);
  append_metrics(out, r.refined);
  append_metrics(out, r.unrefined);
  if (r.refined.accuracy && r.unrefined.accuracy) {
    out << metric("both", "accuracy_gap", *r.refined.accuracy - *r.unrefined.accuracy).dump() << '\n';
  }
  return out.str();
}

std::string report_records(const SweepReport& r) {
  std::ostringstream out;
  append_config(out, r.config);
  for (std::size_t ki = 0; ki < r.k_grid.size(); ++ki) {
    for (std::size_t si = 0; si < r.support_grid.size(); ++si) {
      ordered_json j = metric(std::string(to_string(r.config.feature_source)), "sweep_accuracy",
                              optional_value(r.cells[ki][si]));
      j["support_per_class"] = r.support_grid[si];
      j["pca_k"] = r.k_grid[ki];
      out << j.dump() << '\n';
    }
  }
  return out.str();
}

std::string report_table(const ExperimentReport& r) {
  std::ostringstream out;
  append_table(out, r);
  return out.str();
}

std::string report_table(const AblationReport& r) {
  std::ostringstream out;
  append_table(out, r.refined);
  out << '\n';
  append_table(out, r.unrefined);
  if (r.refined.accuracy && r.unrefined.accuracy) {
    out << "\naccuracy gap (refined - raw): " << fmt(*r.refined.accuracy - *r.unrefined.accuracy) << '\n';
  }
  return out.str();
}

std::string report_table(const SweepReport& r) {
  std::ostringstream out;
  out << "sweep: accuracy by PCA dimensions (rows) and support images per class (columns)\n";
  out << "  dims ";
  for (std::size_t s : r.support_grid) out << std::right << std::setw(7) << s;
  out << '\n';
  for (std::size_t ki = 0; ki < r.k_grid.size(); ++ki) {
    out << "  " << std::left << std::setw(5) << r.k_grid[ki];
    for (std::size_t si = 0; si < r.support_grid.size(); ++si) {
      out << std::right << std::setw(7) << fmt(r.cells[ki][si]);
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace graspfs
