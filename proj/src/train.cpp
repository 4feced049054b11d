#include "graspfs/train.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "graspfs/binary_io.hpp"
#include "graspfs/errors.hpp"

namespace graspfs {

std::vector<DetectorSample> detector_samples(std::span<const LabeledScene> scenes, bool allow_ring) {
  std::vector<DetectorSample> out;
  out.reserve(scenes.size());
  for (const auto& scene : scenes) {
    if (!allow_ring) {
      for (const auto& p : scene.poses) {
        if (p.kind == ShapeKind::Ring) {
          throw ConfigError("scene " + scene.id + " contains a ring; rings are held out of training");
        }
      }
    }
    DetectorSample s{scene.image, {}};
    for (const auto& g : scene.grasps) s.grasps.push_back(g.rect);
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

struct SampleLoss {
  LossResult loss;
  BackwardResult grads;
};

SampleLoss sample_loss(const DetectorNetwork& det, const DetectorSample& s,
                       const std::vector<AnchorMatch>& matches, const TrainConfig& config,
                       bool want_grads) {
  DetectorOutput out = det.forward(s.image);
  SampleLoss r;
  r.loss = detection_loss(out.class_logits, out.regression, matches, s.grasps, det.anchors(),
                          config.loss);
  if (want_grads) {
    r.grads = det.backward(out.trace, r.loss.grad_logits, r.loss.grad_regression,
                           BackwardMode::Standard, true);
  }
  return r;
}

std::vector<std::vector<AnchorMatch>> all_matches(const DetectorNetwork& det,
                                                  std::span<const DetectorSample> samples,
                                                  const TrainConfig& config) {
  std::vector<std::vector<AnchorMatch>> m;
  m.reserve(samples.size());
  for (const auto& s : samples) {
    m.push_back(match_anchors(det.anchors(), s.grasps, config.iou_pos, config.iou_neg));
  }
  return m;
}

EpochLog mean_log(std::size_t epoch, double cls, double reg, double total, std::size_t n) {
  const double d = static_cast<double>(std::max<std::size_t>(n, 1));
  return {epoch, cls / d, reg / d, total / d};
}

}  // namespace

EpochLog evaluate_loss(const DetectorNetwork& detector, std::span<const DetectorSample> samples,
                       const TrainConfig& config) {
  const auto matches = all_matches(detector, samples, config);
  double cls = 0, reg = 0, total = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto r = sample_loss(detector, samples[i], matches[i], config, false);
    cls += r.loss.class_loss;
    reg += r.loss.regression_loss;
    total += r.loss.total;
  }
  return mean_log(0, cls, reg, total, samples.size());
}

TrainResult train_detector(std::span<const DetectorSample> samples, const TrainConfig& config,
                           const EpochCallback& on_epoch) {
  if (samples.empty()) throw ConfigError("training set is empty");
  if (config.batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(config.lr > 0)) throw ConfigError("lr must be positive");

  TrainResult result{DetectorNetwork(config.arch), {}};
  DetectorNetwork& det = result.detector;
  Rng init_rng(derive_seed(config.seed, "init"));
  det.mutable_network().init_he(init_rng);

  const auto matches = all_matches(det, samples, config);
  Network& net = det.mutable_network();
  std::vector<AdamState> w_state, b_state;
  for (std::size_t b = 0; b < net.num_param_blocks(); ++b) {
    w_state.push_back(AdamState::for_shape(net.params(b).weights.shape()));
    b_state.push_back(AdamState::for_shape(net.params(b).bias.shape()));
  }
  const AdamConfig adam{config.lr, 0.9, 0.999, 1e-8};

  auto report = [&](const EpochLog& log) {
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  };
  report(evaluate_loss(det, samples, config));

  std::vector<std::size_t> order(samples.size());
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(config.seed, "shuffle", epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    }
    double cls = 0, reg = 0, total = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      ++step;
      std::vector<ConvParams> grads;
      for (std::size_t j = start; j < end; ++j) {
        const std::size_t idx = order[j];
        auto r = sample_loss(det, samples[idx], matches[idx], config, true);
        if (!std::isfinite(r.loss.total)) {
          throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", step " +
                             std::to_string(step) + " (non-finite loss)");
        }
        cls += r.loss.class_loss;
        reg += r.loss.regression_loss;
        total += r.loss.total;
        if (grads.empty()) {
          grads = std::move(r.grads.param_grads);
        } else {
          for (std::size_t b = 0; b < grads.size(); ++b) {
            grads[b].weights += r.grads.param_grads[b].weights;
            grads[b].bias += r.grads.param_grads[b].bias;
          }
        }
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      for (std::size_t b = 0; b < grads.size(); ++b) {
        grads[b].weights *= scale;
        grads[b].bias *= scale;
        ConvParams& p = net.mutable_params(b);
        const std::string& name = net.block_name(b);
        try {
          adam_step(p.weights, grads[b].weights, w_state[b], adam, name + "/weights");
          adam_step(p.bias, grads[b].bias, b_state[b], adam, name + "/bias");
        } catch (const NumericError& e) {
          throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", step " +
                             std::to_string(step) + ": " + e.what());
        }
      }
    }
    report(mean_log(epoch, cls, reg, total, samples.size()));
  }
  return result;
}

void write_training_log(const std::filesystem::path& path, std::span<const EpochLog> log) {
  std::ostringstream out;
  for (const auto& e : log) {
    out << nlohmann::json{{"epoch", e.epoch},
                          {"class_loss", e.class_loss},
                          {"regression_loss", e.regression_loss},
                          {"total", e.total}}
               .dump()
        << '\n';
  }
  io::write_file(path, out.str());
}

}  // namespace graspfs
