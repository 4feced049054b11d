// Acceptance checks. Prints one PASS/FAIL line per criterion; exit status is
// the number of failed criteria. All thresholds are fixed below.
//
// Criteria 5-11 share one detector trained on 500 single-object scenes
// without rings. It is cached under GRASPFS_ACCEPTANCE_CACHE keyed by the
// training settings, together with the time the training took.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "graspfs/binary_io.hpp"
#include "graspfs/experiment.hpp"
#include "graspfs/kernels.hpp"
#include "graspfs/pca.hpp"
#include "graspfs/reference_kernels.hpp"
#include "graspfs/svm.hpp"
#include "graspfs/train.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace graspfs;
using Clock = std::chrono::steady_clock;

namespace {

// thresholds
constexpr double kGradRelTol = 1e-4;
constexpr double kFdStep = 1e-5;
constexpr double kPcaTol = 1e-8;
constexpr double kKktTol = 1e-3;
constexpr double kLocalityMass = 0.90;
constexpr std::size_t kLocalityNeeded = 18, kLocalityDetections = 20;
constexpr double kExp2Accuracy = 0.85;
constexpr double kAblationGap = 0.30;
constexpr double kSelectionSlack = 0.05;
constexpr std::size_t kSelectionNeeded = 4;
constexpr double kRingDetectionRate = 0.80, kRingAccuracy = 0.80;

// runtime limits, seconds
constexpr double kLimit[12] = {0, 1, 30, 10, 5, 60, 600, 600, 900, 1200, 300, 600};

constexpr std::uint64_t kSeed = 0;
constexpr std::size_t kTrainScenes = 500;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
  double extra_seconds = 0;  // time spent outside the check itself (cached training)
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& check) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("error: ") + e.what()};
  }
  const double secs = seconds_since(t0) + o.extra_seconds;
  const bool in_time = secs < kLimit[id];
  const bool pass = o.pass && in_time;
  if (!pass) ++failures;
  std::printf("criterion %2d %s  %-26s %s [%.1f s, limit %.0f s%s]\n", id, pass ? "PASS" : "FAIL",
              name.c_str(), o.detail.c_str(), secs, kLimit[id], in_time ? "" : ", exceeded");
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------- criterion 1

Outcome guided_rule() {
  const double vals[] = {-1.25, 0.0, 3.5};
  int ok = 0;
  for (double f : vals) {
    for (double r : vals) {
      const double expected = (f > 0 && r > 0) ? r : 0.0;
      const Tensor fi({1}, {f}), ri({1}, {r});
      const Tensor a = kernels::guided_relu_backward(fi, ri);
      const Tensor b = reference::guided_relu_backward(fi, ri);
      const auto bits = [](double x) { return std::bit_cast<std::uint64_t>(x); };
      ok += bits(a[0]) == bits(expected) && bits(b[0]) == bits(expected);
    }
  }
  return {ok == 9, fmt("%d/9 sign cases bit-exact", ok)};
}

// ---------------------------------------------------------------- criterion 2

Outcome gradient_fidelity() {
  double worst = 0;
  std::size_t max_params = 0, checked = 0;
  for (std::uint64_t inst = 0; inst < 5; ++inst) {
    Rng rng(derive_seed(kSeed, "gradcheck", inst));
    DetectorArch arch;
    arch.image_size = 16;
    arch.stages = {{1 + rng.below(3)}, {2 + rng.below(2)}};
    arch.anchor_scales = {5.0 + rng.uniform(0, 3)};
    arch.anchor_aspects = {0.5, 2.0};
    DetectorNetwork det(arch);
    Network& net = det.mutable_network();
    net.init_he(rng);
    for (std::size_t b = 0; b < net.num_param_blocks(); ++b)
      for (auto& v : net.mutable_params(b).bias.data()) v = rng.uniform(-0.1, 0.1);
    max_params = std::max(max_params, net.parameter_count());
    Tensor image({1, 16, 16});
    for (auto& v : image.data()) v = rng.uniform();
    std::vector<GraspRect> labels;
    for (std::size_t j = 0; j < 1 + rng.below(2); ++j)
      labels.push_back({rng.uniform(4, 12), rng.uniform(4, 12), rng.uniform(2, 4), rng.uniform(4, 7), rng.uniform(-1.5, 1.5)});
    const auto matches = match_anchors(det.anchors(), labels, 0.4, 0.3);
    auto loss = [&]() {
      const auto out = det.forward(image);
      return detection_loss(out.class_logits, out.regression, matches, labels, det.anchors()).total;
    };
    const auto out = det.forward(image);
    const auto lr = detection_loss(out.class_logits, out.regression, matches, labels, det.anchors());
    const auto br = det.backward(out.trace, lr.grad_logits, lr.grad_regression, BackwardMode::Standard, true);
    for (std::size_t b = 0; b < net.num_param_blocks(); ++b) {
      for (int which = 0; which < 2; ++which) {
        Tensor& p = which ? net.mutable_params(b).bias : net.mutable_params(b).weights;
        const Tensor& g = which ? br.param_grads[b].bias : br.param_grads[b].weights;
        for (std::size_t i = 0; i < p.size(); ++i) {
          const double keep = p[i];
          p[i] = keep + kFdStep;
          const double up = loss();
          p[i] = keep - kFdStep;
          const double down = loss();
          p[i] = keep;
          const double fd = (up - down) / (2 * kFdStep);
          const double denom = std::max({std::abs(fd), std::abs(g[i]), 1e-6});
          worst = std::max(worst, std::abs(fd - g[i]) / denom);
          ++checked;
        }
      }
    }
  }
  return {worst < kGradRelTol && max_params <= 500,
          fmt("max rel err %.2e over %zu params (<= %zu per net)", worst, checked, max_params)};
}

// ---------------------------------------------------------------- criterion 3

Outcome pca_oracle() {
  double worst = 0;
  for (std::uint64_t m = 0; m < 10; ++m) {
    Rng rng(derive_seed(kSeed, "pca", m));
    const auto n = static_cast<Eigen::Index>(10 + rng.below(41));       // 10..50
    const auto d = static_cast<Eigen::Index>(n + rng.below(201 - n));   // n..200, Gram route
    Eigen::MatrixXd X(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < d; ++j) X(i, j) = rng.uniform(-1, 1) * (1.0 + 4.0 / (1.0 + j));
    const std::size_t k = std::min<std::size_t>(8, static_cast<std::size_t>(n - 1));
    const PcaProjection p = pca_fit(X, k);
    const Eigen::MatrixXd Xc = X.rowwise() - X.colwise().mean();
    Eigen::VectorXd values;
    Eigen::MatrixXd vectors;
    oracle::jacobi_eigen(Xc.transpose() * Xc / static_cast<double>(n), values, vectors);
    for (std::size_t c = 0; c < k; ++c) {
      const auto ci = static_cast<Eigen::Index>(c);
      const Eigen::VectorXd got = p.components.row(ci).transpose();
      const double sign = got.dot(vectors.col(ci)) >= 0 ? 1.0 : -1.0;
      worst = std::max(worst, (got - sign * vectors.col(ci)).cwiseAbs().maxCoeff());
      worst = std::max(worst, std::abs(p.explained_variance(ci) - values(ci)));
    }
  }
  return {worst < kPcaTol, fmt("max deviation %.2e on 10 matrices", worst)};
}

// ---------------------------------------------------------------- criterion 4

bool svm_optimal(const SvmModel& m, const Eigen::MatrixXd& X, const std::vector<int>& y, double& worst_kkt) {
  bool ok = true;
  for (const auto& machine : m.machines) {
    std::vector<std::size_t> rows;
    std::vector<int> signs;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] == machine.positive || y[i] == machine.negative) {
        rows.push_back(i);
        signs.push_back(y[i] == machine.positive ? 1 : -1);
      }
    }
    Eigen::MatrixXd sub(static_cast<Eigen::Index>(rows.size()), X.cols());
    for (std::size_t r = 0; r < rows.size(); ++r)
      sub.row(static_cast<Eigen::Index>(r)) = X.row(static_cast<Eigen::Index>(rows[r]));
    std::vector<double> alpha(rows.size(), 0.0);
    for (std::size_t s = 0; s < machine.sv_indices.size(); ++s) {
      const auto it = std::find(rows.begin(), rows.end(), machine.sv_indices[s]);
      if (it == rows.end()) return false;
      const auto local = static_cast<std::size_t>(it - rows.begin());
      alpha[local] = machine.coef[s] * signs[local];
    }
    for (double a : alpha) ok = ok && a >= 0 && a <= m.C;
    const double kkt = kkt_residual(sub, signs, alpha, m.C, m.gamma);
    worst_kkt = std::max(worst_kkt, kkt);
    ok = ok && kkt < kKktTol;
  }
  return ok;
}

Outcome svm_optimality() {
  double worst = 0;
  bool ok = true;
  std::size_t models = 0;
  Eigen::MatrixXd xor_x(4, 2);
  xor_x << 0, 0, 1, 1, 0, 1, 1, 0;
  const std::vector<int> xor_y{1, 1, -1, -1};
  const SvmModel xm = svm_train(xor_x, xor_y, 10.0, 1.0);
  const auto pred = xm.predict_all(xor_x);
  int xor_correct = 0;
  for (std::size_t i = 0; i < 4; ++i) xor_correct += pred[i] == xor_y[i];
  ok = svm_optimal(xm, xor_x, xor_y, worst) && ok;
  ++models;
  for (std::uint64_t inst = 0; inst < 6; ++inst) {
    Rng rng(derive_seed(kSeed, "svm", inst));
    const std::size_t n = 30 + rng.below(60), classes = 2 + rng.below(3);
    Eigen::MatrixXd X(static_cast<Eigen::Index>(n), 5);
    std::vector<int> y;
    for (std::size_t i = 0; i < n; ++i) {
      const int c = static_cast<int>(i % classes);
      for (Eigen::Index j = 0; j < 5; ++j) X(static_cast<Eigen::Index>(i), j) = rng.uniform(-1, 1) + (j == c ? 0.8 : 0.0);
      y.push_back(c);
    }
    for (double C : {0.1, 10.0, 1000.0}) {
      ok = svm_optimal(svm_train(X, y, C, 0.5), X, y, worst) && ok;
      ++models;
    }
  }
  return {ok && xor_correct == 4,
          fmt("XOR %d/4, %zu models, max KKT residual %.2e, duals in [0, C]: %s", xor_correct, models, worst,
              ok ? "yes" : "no")};
}

// ----------------------------------------------------------- shared detector

struct SharedDetector {
  DetectorNetwork detector;
  fs::path checkpoint;
  double train_seconds = 0;
  bool cached = false;
};

TrainConfig acceptance_train_config() {
  TrainConfig tc;  // library defaults: 40 epochs, Adam lr 3e-3, batch 8
  tc.seed = kSeed;
  return tc;
}

SharedDetector& shared_detector() {
  static std::unique_ptr<SharedDetector> shared;
  if (shared) return *shared;
  shared = std::make_unique<SharedDetector>();
  const TrainConfig tc = acceptance_train_config();
  std::ostringstream key;
  key << kTrainScenes << '|' << tc.epochs << '|' << tc.batch_size << '|' << tc.lr << '|' << tc.seed << '|'
      << tc.arch.image_size << '|' << tc.arch.kernel_size;
  for (const auto& s : tc.arch.stages)
    for (auto w : s) key << ',' << w;
  for (double v : tc.arch.anchor_scales) key << ';' << v;
  for (double v : tc.arch.anchor_aspects) key << ':' << v;
  const fs::path dir = GRASPFS_ACCEPTANCE_CACHE;
  fs::create_directories(dir);
  const std::string tag = fmt("%016llx", static_cast<unsigned long long>(Rng::hash(key.str())));
  shared->checkpoint = dir / ("detector-" + tag + ".ckpt");
  const fs::path meta = dir / ("detector-" + tag + ".json");
  if (fs::exists(shared->checkpoint) && fs::exists(meta)) {
    try {
      shared->detector = load_checkpoint(shared->checkpoint);
      shared->train_seconds = nlohmann::json::parse(io::read_file(meta)).at("train_seconds").get<double>();
      shared->cached = true;
      return *shared;
    } catch (const std::exception&) {
      // fall through and retrain
    }
  }
  DatasetConfig dc;
  dc.num_scenes = kTrainScenes;
  dc.schedule = KindSchedule::Cyclic;
  dc.seed = derive_seed(kSeed, "train-data");
  const auto t0 = Clock::now();
  const auto samples = detector_samples(sample_dataset(dc));
  TrainResult result = train_detector(samples, tc);
  shared->train_seconds = seconds_since(t0);
  shared->detector = std::move(result.detector);
  save_checkpoint(shared->checkpoint, shared->detector);
  io::write_file(meta, nlohmann::json{{"train_seconds", shared->train_seconds},
                                      {"initial_loss", result.log.front().total},
                                      {"final_loss", result.log.back().total}}
                           .dump());
  std::printf("trained shared detector in %.1f s (loss %.3f -> %.3f)\n", shared->train_seconds,
              result.log.front().total, result.log.back().total);
  return *shared;
}

// Training is charged to criterion 6, the first one that needs it; it is
// trained up front so the per-criterion timings below stay separate.
double training_charge(bool charge) {
  const auto& s = shared_detector();
  return charge ? s.train_seconds : 0.0;
}

ExperimentConfig config_for(const std::string& id, std::uint64_t seed) {
  ExperimentConfig c = default_experiment_config(id);
  c.seed = seed;
  c.checkpoint = shared_detector().checkpoint;
  return c;
}

// ---------------------------------------------------------------- criterion 5

Outcome locality() {
  const auto& det = shared_detector().detector;
  DatasetConfig dc;
  dc.num_scenes = 40;
  dc.objects_per_scene = 2;
  dc.mixed = true;
  dc.schedule = KindSchedule::Cyclic;
  dc.seed = derive_seed(kSeed, "locality");
  const auto scenes = sample_dataset(dc);
  ExtractConfig ec;  // refined maps, untransformed full view
  const std::string layer = det.backbone_layer_ids().front();
  const ReceptiveField rf = det.network().receptive_field(layer);
  const double margin = (static_cast<double>(rf.size) - 1.0) / 2.0;
  std::size_t seen = 0, local = 0;
  double worst = 1.0;
  for (const auto& scene : scenes) {
    if (seen == kLocalityDetections) break;
    const auto feats = extract_all(det, std::span(&scene, 1), ec);
    const RefinedFeatureSet* pick = nullptr;
    for (const auto& f : feats) {
      if (f.label_index && (!pick || f.detection.score > pick->detection.score)) pick = &f;
    }
    if (!pick) continue;
    ++seen;
    const auto& pose = scene.poses[scene.grasps[*pick->label_index].object_index];
    const Box region = silhouette_bounds(pose).dilated(margin);
    const auto& v = pick->layer(layer);
    const std::size_t h = scene.image.dim(1), w = scene.image.dim(2), ch = v.size() / (h * w);
    double inside = 0, total = 0;
    for (std::size_t c = 0; c < ch; ++c)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const double m = std::abs(v[(c * h + y) * w + x]);
          total += m;
          if (region.contains(rf.start + rf.jump * x, rf.start + rf.jump * y)) inside += m;
        }
    const double frac = total > 0 ? inside / total : 0.0;
    worst = std::min(worst, frac);
    local += frac >= kLocalityMass;
  }
  return {seen == kLocalityDetections && local >= kLocalityNeeded,
          fmt("%zu/%zu detections keep >= 90%% of layer %s mass local (min %.3f)", local, seen, layer.c_str(), worst)};
}

// ---------------------------------------------------------------- criterion 6

Outcome experiment2() {
  const auto r = run_experiment(config_for("2", kSeed), shared_detector().detector);
  const double acc = r.accuracy.value_or(0.0);
  return {acc >= kExp2Accuracy,
          fmt("accuracy %.4f (%zu/%zu associated, %zu detections, layer %s)", acc, r.correct_count,
              r.associated_count, r.detections_count, r.selected_layer.c_str()),
          training_charge(true)};
}

// ---------------------------------------------------------------- criterion 7

Outcome ablation() {
  std::string detail;
  bool ok = true;
  for (const char* id : {"3", "4"}) {
    const auto r = run_ablation(config_for(id, kSeed), shared_detector().detector);
    const double a = r.refined.accuracy.value_or(0.0), b = r.unrefined.accuracy.value_or(0.0);
    ok = ok && (a - b) >= kAblationGap;
    detail += fmt("exp%s %.3f vs %.3f (gap %.3f)  ", id, a, b, a - b);
  }
  return {ok, detail};
}

// ---------------------------------------------------------------- criterion 8

Outcome support_trend() {
  double at3 = 0, at30 = 0;
  int n = 0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    ExperimentConfig c = config_for("1", seed);
    c.support_grid = {3, 30};
    c.k_grid = {20};
    const auto r = run_sweep(c, shared_detector().detector);
    if (!r.cells[0][0] || !r.cells[0][1]) return {false, fmt("seed %llu: infeasible cell", static_cast<unsigned long long>(seed))};
    at3 += *r.cells[0][0];
    at30 += *r.cells[0][1];
    ++n;
  }
  at3 /= n;
  at30 /= n;
  return {at30 > at3, fmt("mean accuracy at k=20: 30/class %.4f vs 3/class %.4f", at30, at3)};
}

// ---------------------------------------------------------------- criterion 9

Outcome layer_selection() {
  double rho_sum = 0;
  std::size_t near_best = 0;
  std::string detail;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto r = run_experiment(config_for("2", seed), shared_detector().detector);
    std::vector<double> support, test;
    double best = 0, chosen = 0;
    for (const auto& row : r.layers) {
      support.push_back(row.support_accuracy);
      test.push_back(row.test_accuracy.value_or(0.0));
      best = std::max(best, test.back());
      if (row.layer_id == r.selected_layer) chosen = test.back();
    }
    const double rho = oracle::spearman(support, test);
    rho_sum += rho;
    near_best += best - chosen <= kSelectionSlack;
    detail += fmt("%s%.2f", seed ? "," : "", rho);
  }
  const double mean_rho = rho_sum / 5.0;
  return {mean_rho > 0 && near_best >= kSelectionNeeded,
          fmt("mean Spearman %.3f (%s), selected within 0.05 of best in %zu/5", mean_rho, detail.c_str(), near_best)};
}

// --------------------------------------------------------------- criterion 10

Outcome novel_shape() {
  const auto r = run_experiment(config_for("5", kSeed), shared_detector().detector);
  const double rate = r.required_kind_detection_rate.value_or(0.0);
  const double acc = r.accuracy.value_or(0.0);
  return {rate >= kRingDetectionRate && acc >= kRingAccuracy,
          fmt("ring scenes with a ring detection %.3f, accuracy %.4f (%zu/%zu)", rate, acc, r.correct_count,
              r.associated_count)};
}

// --------------------------------------------------------------- criterion 11

Outcome determinism() {
  const fs::path base = fs::path(GRASPFS_ACCEPTANCE_CACHE) / "determinism";
  fs::remove_all(base);
  std::string reports[2];
  for (int run = 0; run < 2; ++run) {
    const fs::path out = base / ("run" + std::to_string(run));
    const std::string cmd = std::string("\"") + GRASPFS_CLI + "\" run-experiment --experiment-id 4 --seed 11 --checkpoint \"" +
                            shared_detector().checkpoint.string() + "\" --out-dir \"" + out.string() + "\" > /dev/null";
    if (std::system(cmd.c_str()) != 0) return {false, "run-experiment exited nonzero"};
    reports[run] = io::read_file(out / "report.jsonl");
  }
  const bool same = !reports[0].empty() && reports[0] == reports[1];
  return {same, fmt("report.jsonl %s (%zu bytes)", same ? "byte-identical" : "differs", reports[0].size())};
}

}  // namespace

int main() {
  report(1, "guided rule exactness", guided_rule);
  report(2, "gradient fidelity", gradient_fidelity);
  report(3, "PCA oracle equivalence", pca_oracle);
  report(4, "SVM optimality", svm_optimality);
  shared_detector();
  report(5, "refinement locality", locality);
  report(6, "experiment-2 analog", experiment2);
  report(7, "ablation reproduction", ablation);
  report(8, "support-size trend", support_trend);
  report(9, "layer-selection sanity", layer_selection);
  report(10, "novel-shape analog", novel_shape);
  report(11, "determinism", determinism);
  std::printf("%d of 11 criteria failed\n", failures);
  return failures;
}
