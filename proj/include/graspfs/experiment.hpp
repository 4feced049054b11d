#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "graspfs/config_file.hpp"
#include "graspfs/fewshot.hpp"
#include "graspfs/refiner.hpp"
#include "graspfs/scene.hpp"

namespace graspfs {

// Every knob that changes a result. Key names in config files equal the
// field names.
struct ExperimentConfig {
  std::string experiment_id = "2";  // 1..5 or "ablation"
  std::filesystem::path checkpoint;
  std::uint64_t seed = 0;
  std::size_t support_per_class = 30;
  std::size_t pca_k = 20;
  PcaFitScope pca_fit_scope = PcaFitScope::Joint;
  std::vector<ShapeKind> support_kinds{kTrainedKinds.begin(), kTrainedKinds.end()};

  // test scene composition
  std::size_t num_test_scenes = 200;
  std::size_t objects_per_scene = 1;
  bool mixed = false;
  std::vector<ShapeKind> kinds{kTrainedKinds.begin(), kTrainedKinds.end()};
  std::vector<ShapeKind> required_kinds;
  std::size_t image_size = 64;
  double noise_sigma = 0.0;

  double score_threshold = 0.5;
  double nms_iou = 0.3;
  double association_iou = 0.3;
  FeatureSource feature_source = FeatureSource::Refined;
  FeatureView feature_view = FeatureView::GraspFrame;
  std::size_t feature_smoothing = 1;  // box-sum radius on each map
  bool feature_root = true;           // sqrt of the positive part
  bool feature_unit_norm = true;      // scale each layer vector to unit L2 norm
  std::vector<double> c_grid{0.1, 1, 10, 100, 1000};
  std::size_t cv_folds = 5;

  // run-sweep only
  std::vector<std::size_t> support_grid{3, 5, 10, 20, 30, 40};
  std::vector<std::size_t> k_grid{3, 5, 10, 20, 30, 40};
};

// Defaults for "1".."5" and "ablation" (which uses the experiment 4 scenes).
ExperimentConfig default_experiment_config(const std::string& experiment_id);
// Overrides fields from key = value pairs; unknown keys are errors.
void apply_config(ExperimentConfig& config, const KeyValueConfig& values);
std::vector<std::string> experiment_config_keys();
// Ordered (key, value) pairs for the config echo.
std::vector<std::pair<std::string, std::string>> config_echo(const ExperimentConfig& config);

struct LayerRow {
  std::string layer_id;
  double support_accuracy = 0;
  std::optional<double> test_accuracy;  // absent without associated detections
};

struct ExperimentReport {
  ExperimentConfig config;
  std::string arm = "refined";
  std::size_t num_test_scenes = 0;
  std::size_t support_features = 0;
  std::size_t detections_count = 0;
  std::size_t associated_count = 0;
  std::size_t unassociated_count = 0;
  std::size_t correct_count = 0;
  std::optional<double> accuracy;  // correct / associated
  std::string selected_layer;
  std::vector<LayerRow> layers;
  // Scenes holding a required kind (e.g. Ring) with at least one detection
  // associated to an object of that kind, over such scenes.
  std::optional<double> required_kind_detection_rate;
  std::vector<std::string> warnings;
  double wall_seconds = 0;  // human-readable table only
};

// Scenes a run uses; deterministic in the config seed.
std::vector<LabeledScene> support_scenes(const ExperimentConfig& config);
std::vector<LabeledScene> test_scenes(const ExperimentConfig& config);

ExperimentReport run_experiment(const ExperimentConfig& config, const DetectorNetwork& detector);
ExperimentReport run_experiment(const ExperimentConfig& config);  // loads config.checkpoint

struct AblationReport {
  ExperimentReport refined;
  ExperimentReport unrefined;
};
AblationReport run_ablation(const ExperimentConfig& config, const DetectorNetwork& detector);

struct SweepReport {
  ExperimentConfig config;
  std::vector<std::size_t> support_grid;
  std::vector<std::size_t> k_grid;
  // cells[k index][support index]; absent when k exceeds the feasible rank
  std::vector<std::vector<std::optional<double>>> cells;
};
SweepReport run_sweep(const ExperimentConfig& config, const DetectorNetwork& detector);

// Machine-readable form: one JSON object per line, one metric per record,
// no timing. Identical inputs give byte-identical output.
std::string report_records(const ExperimentReport& report);
std::string report_records(const AblationReport& report);
std::string report_records(const SweepReport& report);
// Aligned plain-text tables.
std::string report_table(const ExperimentReport& report);
std::string report_table(const AblationReport& report);
std::string report_table(const SweepReport& report);

}  // namespace graspfs
