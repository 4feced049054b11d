#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "graspfs/adam.hpp"
#include "graspfs/detector.hpp"
#include "graspfs/scene.hpp"

namespace graspfs {

// What the detector is allowed to see of a scene: pixels and grasp
// rectangles. Shape labels are dropped here so they cannot reach the loss.
struct DetectorSample {
  Tensor image;
  std::vector<GraspRect> grasps;
};

// Throws ConfigError when a Ring object is present and allow_ring is false.
std::vector<DetectorSample> detector_samples(std::span<const LabeledScene> scenes,
                                             bool allow_ring = false);

struct TrainConfig {
  std::size_t epochs = 40;
  std::size_t batch_size = 8;
  double lr = 3e-3;
  std::uint64_t seed = 0;
  double iou_pos = 0.5;
  double iou_neg = 0.4;
  LossConfig loss;
  DetectorArch arch;
};

struct EpochLog {
  std::size_t epoch = 0;  // 0 = before the first update
  double class_loss = 0;
  double regression_loss = 0;
  double total = 0;
};

struct TrainResult {
  DetectorNetwork detector;
  std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Mean loss over all samples with the current weights.
EpochLog evaluate_loss(const DetectorNetwork& detector, std::span<const DetectorSample> samples,
                       const TrainConfig& config);

// Adam over shuffled mini-batches; the epoch log holds the mean loss seen
// during each epoch. Throws NumericError naming epoch and step when the loss
// stops being finite.
TrainResult train_detector(std::span<const DetectorSample> samples, const TrainConfig& config,
                           const EpochCallback& on_epoch = {});

// One JSON object per line: epoch, class_loss, regression_loss, total.
void write_training_log(const std::filesystem::path& path, std::span<const EpochLog> log);

}  // namespace graspfs
