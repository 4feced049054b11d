#include "graspfs/fewshot.hpp"

#include <algorithm>

#include "graspfs/binary_io.hpp"
#include "graspfs/errors.hpp"
#include "graspfs/parallel.hpp"

namespace graspfs {

std::string_view to_string(PcaFitScope scope) {
  return scope == PcaFitScope::Joint ? "joint" : "support_only";
}

PcaFitScope parse_pca_fit_scope(std::string_view name) {
  if (name == "joint") return PcaFitScope::Joint;
  if (name == "support_only" || name == "support-only") return PcaFitScope::SupportOnly;
  throw ConfigError("unknown pca_fit_scope '" + std::string(name) + "' (joint, support_only)");
}

LayerSelection select_layer(std::vector<std::pair<std::string, double>> per_layer) {
  if (per_layer.empty()) throw ConfigError("no layers to select from");
  LayerSelection s;
  std::size_t best = 0;
  for (std::size_t i = 1; i < per_layer.size(); ++i) {
    if (per_layer[i].second > per_layer[best].second) best = i;
  }
  s.chosen_layer_id = per_layer[best].first;
  s.per_layer = std::move(per_layer);
  return s;
}

const LayerClassifier& FewshotModel::layer(std::string_view layer_id) const {
  for (const auto& l : layers) {
    if (l.layer_id == layer_id) return l;
  }
  throw ConfigError("classifier has no layer '" + std::string(layer_id) + "'");
}

namespace {

Eigen::MatrixXd stack(std::span<const RefinedFeatureSet* const> rows, std::string_view layer_id) {
  if (rows.empty()) return {};
  const std::size_t d = rows.front()->layer(layer_id).size();
  Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& v = rows[i]->layer(layer_id);
    if (v.size() != d) {
      throw ConfigError("layer " + std::string(layer_id) + " vectors differ in length (" +
                        std::to_string(v.size()) + " vs " + std::to_string(d) + ")");
    }
    X.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(v.data(), v.size());
  }
  return X;
}

std::vector<const RefinedFeatureSet*> pointers(std::span<const RefinedFeatureSet> sets) {
  std::vector<const RefinedFeatureSet*> out;
  for (const auto& s : sets) out.push_back(&s);
  return out;
}

}  // namespace

FewshotModel fit_all_layers(std::span<const RefinedFeatureSet> support,
                            std::span<const RefinedFeatureSet> test, const FewshotConfig& config) {
  std::vector<const RefinedFeatureSet*> labelled;
  std::vector<int> y;
  for (const auto& s : support) {
    if (!s.true_shape) continue;
    labelled.push_back(&s);
    y.push_back(static_cast<int>(*s.true_shape));
  }
  if (labelled.empty()) throw ConfigError("support set has no labelled feature sets");
  {
    std::vector<int> classes = y;
    std::sort(classes.begin(), classes.end());
    if (std::unique(classes.begin(), classes.end()) - classes.begin() < 2) {
      throw ConfigError("support set needs at least two shape classes");
    }
  }
  const std::vector<std::string> layer_ids = labelled.front()->layer_ids;
  for (const auto* s : labelled) {
    if (s->layer_ids != layer_ids) throw ConfigError("support feature sets disagree on layer ids");
  }
  const auto test_rows = pointers(test);
  for (const auto* s : test_rows) {
    if (s->layer_ids != layer_ids) throw ConfigError("test feature sets disagree on layer ids");
  }

  FewshotModel model;
  model.scope = config.scope;
  model.k = config.k;
  model.layers.resize(layer_ids.size());
  parallel_for(layer_ids.size(), [&](std::size_t l) {
    const std::string& id = layer_ids[l];
    LayerClassifier& lc = model.layers[l];
    lc.layer_id = id;
    const Eigen::MatrixXd Xs = stack(labelled, id);
    try {
      if (config.scope == PcaFitScope::Joint && !test_rows.empty()) {
        const Eigen::MatrixXd Xt = stack(test_rows, id);
        Eigen::MatrixXd joint(Xs.rows() + Xt.rows(), Xs.cols());
        joint << Xs, Xt;
        lc.pca = pca_fit(joint, config.k);
      } else {
        lc.pca = pca_fit(Xs, config.k);
      }
    } catch (const ConfigError& e) {
      throw ConfigError("layer " + id + ": " + e.what());
    }
    const Eigen::MatrixXd Z = pca_transform(lc.pca, Xs);
    const double mean = Z.mean();
    const double var = (Z.array() - mean).square().mean();
    const double gamma = var > 0 ? 1.0 / (static_cast<double>(config.k) * var) : 1.0;
    const GridSearchResult gs = grid_search_C(Z, y, config.c_grid, config.folds, gamma, config.svm);
    lc.support_accuracy = gs.best_accuracy;
    lc.folds_used = gs.folds_used;
    lc.cv_accuracies = gs.accuracies;
    lc.svm = svm_train(Z, y, gs.best_C, gamma, config.svm);
    if (!gs.warning.empty() && l == 0) model.warnings.push_back(gs.warning);
  });
  std::vector<std::pair<std::string, double>> acc;
  for (const auto& lc : model.layers) acc.emplace_back(lc.layer_id, lc.support_accuracy);
  model.selection = select_layer(std::move(acc));
  return model;
}

std::vector<ShapeKind> predict_layer(const FewshotModel& model, std::string_view layer_id,
                                     std::span<const RefinedFeatureSet> test) {
  if (test.empty()) return {};
  const LayerClassifier& lc = model.layer(layer_id);
  const auto rows = pointers(test);
  const Eigen::MatrixXd Z = pca_transform(lc.pca, stack(rows, layer_id));
  std::vector<ShapeKind> out;
  for (int label : lc.svm.predict_all(Z)) out.push_back(static_cast<ShapeKind>(label));
  return out;
}

std::vector<Prediction> classify(const FewshotModel& model, std::span<const RefinedFeatureSet> test) {
  const auto labels = predict_layer(model, model.selection.chosen_layer_id, test);
  std::vector<Prediction> out;
  for (std::size_t i = 0; i < labels.size(); ++i) out.push_back({test[i].detection, labels[i]});
  return out;
}

// Bundle layout (little-endian, CRC-32 trailer):
//   "GFSCLSF1" | u32 version | u8 scope | u64 k | u32 n_layers, per layer:
//   str id, pca (mean, components, variance), svm, f64 support accuracy,
//   u64 folds, cv accuracies | str chosen layer

namespace {

constexpr std::string_view kMagic = "GFSCLSF1";
constexpr std::uint32_t kVersion = 1;

void write_matrix(io::Writer& w, const Eigen::MatrixXd& m) {
  w.u64(static_cast<std::uint64_t>(m.rows()));
  w.u64(static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) w.f64(m(i, j));
  }
}

Eigen::MatrixXd read_matrix(io::Reader& r) {
  const std::uint64_t rows = r.u64(), cols = r.u64();
  if (cols != 0 && rows > r.remaining() / 8 / cols) r.fail("matrix exceeds file");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = r.f64();
  }
  return m;
}

void write_vector(io::Writer& w, const std::vector<double>& v) {
  w.u64(v.size());
  w.f64s(v);
}

std::vector<double> read_vector(io::Reader& r) { return r.f64s(r.u64()); }

}  // namespace

void save_classifier(const std::filesystem::path& path, const FewshotModel& model) {
  io::Writer w;
  w.raw(kMagic);
  w.u32(kVersion);
  w.u8(static_cast<std::uint8_t>(model.scope));
  w.u64(model.k);
  w.u32(static_cast<std::uint32_t>(model.layers.size()));
  for (const auto& lc : model.layers) {
    w.str(lc.layer_id);
    write_matrix(w, lc.pca.mean.transpose());
    write_matrix(w, lc.pca.components);
    write_matrix(w, lc.pca.explained_variance.transpose());
    w.f64(lc.svm.C);
    w.f64(lc.svm.gamma);
    w.u32(static_cast<std::uint32_t>(lc.svm.classes.size()));
    for (int c : lc.svm.classes) w.i32(c);
    w.u32(static_cast<std::uint32_t>(lc.svm.machines.size()));
    for (const auto& m : lc.svm.machines) {
      w.i32(m.positive);
      w.i32(m.negative);
      write_matrix(w, m.support_vectors);
      write_vector(w, m.coef);
      w.u64(m.sv_indices.size());
      for (auto i : m.sv_indices) w.u64(i);
      w.f64(m.rho);
      w.f64(m.kkt_residual);
      w.u64(m.iterations);
    }
    w.f64(lc.support_accuracy);
    w.u64(lc.folds_used);
    write_vector(w, lc.cv_accuracies);
  }
  w.str(model.selection.chosen_layer_id);
  io::write_file(path, io::seal(w));
}

FewshotModel load_classifier(const std::filesystem::path& path) {
  const std::string bytes = io::read_file(path);
  const std::string what = "classifier " + path.string();
  io::Reader r(io::unseal(bytes, what), what);
  if (r.raw(kMagic.size()) != kMagic) r.fail("not a classifier bundle");
  if (const auto v = r.u32(); v != kVersion) r.fail("unsupported version " + std::to_string(v));
  FewshotModel model;
  const std::uint8_t scope = r.u8();
  if (scope > 1) r.fail("bad pca scope");
  model.scope = static_cast<PcaFitScope>(scope);
  model.k = r.u64();
  model.layers.resize(r.u32());
  std::vector<std::pair<std::string, double>> acc;
  for (auto& lc : model.layers) {
    lc.layer_id = r.str();
    lc.pca.mean = read_matrix(r).transpose();
    lc.pca.components = read_matrix(r);
    lc.pca.explained_variance = read_matrix(r).transpose();
    lc.svm.C = r.f64();
    lc.svm.gamma = r.f64();
    lc.svm.classes.resize(r.u32());
    for (int& c : lc.svm.classes) c = r.i32();
    lc.svm.machines.resize(r.u32());
    for (auto& m : lc.svm.machines) {
      m.positive = r.i32();
      m.negative = r.i32();
      m.support_vectors = read_matrix(r);
      m.coef = read_vector(r);
      m.sv_indices.resize(r.u64());
      for (auto& i : m.sv_indices) i = r.u64();
      m.rho = r.f64();
      m.kkt_residual = r.f64();
      m.iterations = r.u64();
      if (m.coef.size() != static_cast<std::size_t>(m.support_vectors.rows())) {
        r.fail("support vector count mismatch");
      }
    }
    lc.support_accuracy = r.f64();
    lc.folds_used = r.u64();
    lc.cv_accuracies = read_vector(r);
    acc.emplace_back(lc.layer_id, lc.support_accuracy);
  }
  const std::string chosen = r.str();
  if (r.remaining() != 0) r.fail("trailing bytes");
  if (!model.layers.empty()) model.selection = select_layer(std::move(acc));
  if (model.selection.chosen_layer_id != chosen) r.fail("stored layer selection is inconsistent");
  return model;
}

}  // namespace graspfs
