#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "graspfs/pca.hpp"
#include "graspfs/refiner.hpp"
#include "graspfs/svm.hpp"

namespace graspfs {

enum class PcaFitScope {
  Joint,        // support and (unlabelled) test vectors together
  SupportOnly,  // support vectors alone
};

std::string_view to_string(PcaFitScope scope);
PcaFitScope parse_pca_fit_scope(std::string_view name);

struct FewshotConfig {
  std::size_t k = 20;
  std::vector<double> c_grid{0.1, 1, 10, 100, 1000};
  std::size_t folds = 5;
  PcaFitScope scope = PcaFitScope::Joint;
  SvmOptions svm;
};

struct LayerClassifier {
  std::string layer_id;
  PcaProjection pca;
  SvmModel svm;
  double support_accuracy = 0;  // cross-validated accuracy at the chosen C
  std::size_t folds_used = 0;
  std::vector<double> cv_accuracies;  // per C grid entry
};

struct LayerSelection {
  std::string chosen_layer_id;
  std::vector<std::pair<std::string, double>> per_layer;  // network order
};

// Highest accuracy wins; ties go to the earliest layer.
LayerSelection select_layer(std::vector<std::pair<std::string, double>> per_layer);

struct FewshotModel {
  PcaFitScope scope = PcaFitScope::Joint;
  std::size_t k = 0;
  std::vector<LayerClassifier> layers;
  LayerSelection selection;
  std::vector<std::string> warnings;

  const LayerClassifier& layer(std::string_view layer_id) const;
};

// Feature sets without a true shape are left out of the support set. Throws
// ConfigError naming the layer when k exceeds what PCA can fit there.
FewshotModel fit_all_layers(std::span<const RefinedFeatureSet> support,
                            std::span<const RefinedFeatureSet> test, const FewshotConfig& config);

struct Prediction {
  Detection detection;
  ShapeKind predicted = ShapeKind::Cylinder;
};

// Predictions of the selected layer, one per test feature set.
std::vector<Prediction> classify(const FewshotModel& model, std::span<const RefinedFeatureSet> test);
// Predictions of an arbitrary layer's classifier.
std::vector<ShapeKind> predict_layer(const FewshotModel& model, std::string_view layer_id,
                                     std::span<const RefinedFeatureSet> test);

// Versioned binary bundle with a CRC-32 trailer.
void save_classifier(const std::filesystem::path& path, const FewshotModel& model);
FewshotModel load_classifier(const std::filesystem::path& path);

}  // namespace graspfs
