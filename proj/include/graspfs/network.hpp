#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "graspfs/rng.hpp"
#include "graspfs/tensor.hpp"

namespace graspfs {

enum class LayerKind { Conv, Relu, MaxPool };

std::string_view to_string(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::Conv;
  std::string layer_id;
  // conv
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_size = 0;
  std::size_t padding = 0;
  // conv and maxpool
  std::size_t stride = 1;
  // maxpool
  std::size_t window = 0;

  static LayerSpec conv(std::string id, std::size_t in, std::size_t out, std::size_t kernel,
                        std::size_t stride = 1, std::size_t padding = 0);
  static LayerSpec relu(std::string id);
  static LayerSpec maxpool(std::string id, std::size_t window, std::size_t stride);

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct ConvParams {
  Tensor weights;  // out x in x k x k
  Tensor bias;     // out
};

// Which rule ReLU layers apply on the way back. Training uses Standard;
// refinement passes use Guided (gradient kept only where both the forward
// input and the incoming gradient are positive).
enum class BackwardMode { Standard, Guided };

// Everything recorded by one forward pass.
struct ActivationTrace {
  std::uint64_t network_version = 0;
  Tensor input;
  std::vector<Tensor> outputs;                        // per backbone layer
  std::vector<std::vector<std::uint32_t>> argmax;     // per backbone layer; pools only
  std::vector<Tensor> head_outputs;                   // per head
  std::vector<std::string> layer_ids;                 // traced conv blocks, network order
  std::vector<std::size_t> block_conv;                // backbone index of each block's conv
  std::vector<std::optional<std::size_t>> block_relu; // backbone index of its ReLU, if any

  std::size_t block_index(std::string_view layer_id) const;
  // Post-ReLU map of a traced block (the conv output when no ReLU follows).
  const Tensor& activation(std::string_view layer_id) const;
  // Input of the block's ReLU, i.e. the raw conv output.
  const Tensor& pre_activation(std::string_view layer_id) const;
};

struct BackwardResult {
  // One entry per parameter block (backbone convs, then heads); empty when
  // parameter gradients were not requested.
  std::vector<ConvParams> param_grads;
  Tensor input_grad;
  // Per traced block: gradient with respect to the conv output after the
  // block's ReLU rule has been applied.
  std::vector<Tensor> block_grads;
};

struct ReceptiveField {
  std::size_t size = 1;   // extent in input pixels
  std::size_t jump = 1;   // input pixels between adjacent units
  double start = 0.5;     // input coordinate of the first unit's centre
};

// A chain of conv / ReLU / max-pool layers followed by conv heads that all
// read the last backbone map.
class Network {
 public:
  Network() = default;
  Network(Shape input_shape, std::vector<LayerSpec> backbone, std::vector<LayerSpec> heads);

  const Shape& input_shape() const { return input_shape_; }
  const std::vector<LayerSpec>& backbone() const { return backbone_; }
  const std::vector<LayerSpec>& heads() const { return heads_; }
  const Shape& output_shape(std::size_t backbone_index) const { return shapes_.at(backbone_index); }
  Shape head_output_shape(std::size_t head) const;

  // Conv ids of the backbone in network order.
  std::vector<std::string> traced_layer_ids() const;

  std::size_t num_param_blocks() const { return params_.size(); }
  const ConvParams& params(std::size_t block) const { return params_.at(block); }
  // Mutable access invalidates every trace taken before the call.
  ConvParams& mutable_params(std::size_t block);
  const std::string& block_name(std::size_t block) const { return block_names_.at(block); }
  std::size_t parameter_count() const;

  // He-normal weights, zero biases.
  void init_he(Rng& rng);

  std::uint64_t version() const { return version_; }

  ActivationTrace forward(const Tensor& input) const;

  // Backpropagates per-head output gradients (an empty tensor means zero for
  // that head). Throws StateError when the trace predates a parameter change.
  BackwardResult backward(const ActivationTrace& trace, std::span<const Tensor> head_grads,
                          BackwardMode mode, bool want_param_grads) const;

  ReceptiveField receptive_field(std::string_view layer_id) const;

 private:
  void touch();

  Shape input_shape_;
  std::vector<LayerSpec> backbone_;
  std::vector<LayerSpec> heads_;
  std::vector<Shape> shapes_;
  std::vector<ConvParams> params_;
  std::vector<std::string> block_names_;
  std::vector<std::optional<std::size_t>> backbone_block_;  // backbone index -> param block
  std::uint64_t version_ = 0;
};

}  // namespace graspfs
