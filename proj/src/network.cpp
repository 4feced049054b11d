#include "graspfs/network.hpp"

#include <atomic>
#include <cmath>
#include <random>
#include <set>

#include "graspfs/errors.hpp"
#include "graspfs/kernels.hpp"

namespace graspfs {

namespace {

std::atomic<std::uint64_t> g_next_version{1};

}  // namespace

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::Relu: return "relu";
    case LayerKind::MaxPool: return "maxpool";
  }
  return "unknown";
}

LayerSpec LayerSpec::conv(std::string id, std::size_t in, std::size_t out, std::size_t kernel,
                          std::size_t stride, std::size_t padding) {
  LayerSpec s;
  s.kind = LayerKind::Conv;
  s.layer_id = std::move(id);
  s.in_channels = in;
  s.out_channels = out;
  s.kernel_size = kernel;
  s.stride = stride;
  s.padding = padding;
  return s;
}

LayerSpec LayerSpec::relu(std::string id) {
  LayerSpec s;
  s.kind = LayerKind::Relu;
  s.layer_id = std::move(id);
  return s;
}

LayerSpec LayerSpec::maxpool(std::string id, std::size_t window, std::size_t stride) {
  LayerSpec s;
  s.kind = LayerKind::MaxPool;
  s.layer_id = std::move(id);
  s.window = window;
  s.stride = stride;
  return s;
}

std::size_t ActivationTrace::block_index(std::string_view layer_id) const {
  for (std::size_t i = 0; i < layer_ids.size(); ++i) {
    if (layer_ids[i] == layer_id) return i;
  }
  throw ConfigError("layer '" + std::string(layer_id) + "' is not in the trace");
}

const Tensor& ActivationTrace::activation(std::string_view layer_id) const {
  const std::size_t b = block_index(layer_id);
  return outputs.at(block_relu[b] ? *block_relu[b] : block_conv[b]);
}

const Tensor& ActivationTrace::pre_activation(std::string_view layer_id) const {
  return outputs.at(block_conv[block_index(layer_id)]);
}

namespace {

Shape layer_output(const LayerSpec& spec, const Shape& in) {
  switch (spec.kind) {
    case LayerKind::Conv:
      if (spec.in_channels != in[0]) {
        throw ConfigError("layer " + spec.layer_id + ": in_channels " +
                          std::to_string(spec.in_channels) + " but incoming map has " +
                          std::to_string(in[0]) + " channels");
      }
      if (spec.out_channels == 0) {
        throw ConfigError("layer " + spec.layer_id + ": out_channels must be >= 1");
      }
      return {spec.out_channels,
              window_output_extent(in[1], spec.kernel_size, spec.stride, spec.padding, "height"),
              window_output_extent(in[2], spec.kernel_size, spec.stride, spec.padding, "width")};
    case LayerKind::Relu:
      return in;
    case LayerKind::MaxPool:
      return {in[0], window_output_extent(in[1], spec.window, spec.stride, 0, "height"),
              window_output_extent(in[2], spec.window, spec.stride, 0, "width")};
  }
  return in;
}

ConvParams zero_params(const LayerSpec& spec) {
  return {Tensor({spec.out_channels, spec.in_channels, spec.kernel_size, spec.kernel_size}),
          Tensor({spec.out_channels})};
}

}  // namespace

Network::Network(Shape input_shape, std::vector<LayerSpec> backbone, std::vector<LayerSpec> heads)
    : input_shape_(std::move(input_shape)), backbone_(std::move(backbone)), heads_(std::move(heads)) {
  if (input_shape_.size() != 3) {
    throw ConfigError("network input must be rank 3, got " + shape_string(input_shape_));
  }
  std::set<std::string> ids;
  for (const auto* list : {&backbone_, &heads_}) {
    for (const auto& spec : *list) {
      if (!ids.insert(spec.layer_id).second) {
        throw ConfigError("duplicate layer_id '" + spec.layer_id + "'");
      }
    }
  }
  Shape current = input_shape_;
  for (const auto& spec : backbone_) {
    current = layer_output(spec, current);
    shapes_.push_back(current);
    if (spec.kind == LayerKind::Conv) {
      backbone_block_.push_back(params_.size());
      params_.push_back(zero_params(spec));
      block_names_.push_back(spec.layer_id);
    } else {
      backbone_block_.push_back(std::nullopt);
    }
  }
  for (const auto& spec : heads_) {
    if (spec.kind != LayerKind::Conv) {
      throw ConfigError("head " + spec.layer_id + " must be a conv layer");
    }
    layer_output(spec, current);
    params_.push_back(zero_params(spec));
    block_names_.push_back(spec.layer_id);
  }
  touch();
}

void Network::touch() { version_ = g_next_version.fetch_add(1); }

Shape Network::head_output_shape(std::size_t head) const {
  const Shape& last = backbone_.empty() ? input_shape_ : shapes_.back();
  return layer_output(heads_.at(head), last);
}

std::vector<std::string> Network::traced_layer_ids() const {
  std::vector<std::string> ids;
  for (const auto& spec : backbone_) {
    if (spec.kind == LayerKind::Conv) ids.push_back(spec.layer_id);
  }
  return ids;
}

ConvParams& Network::mutable_params(std::size_t block) {
  touch();
  return params_.at(block);
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.weights.size() + p.bias.size();
  return n;
}

void Network::init_he(Rng& rng) {
  for (auto& p : params_) {
    const double fan_in = static_cast<double>(p.weights.dim(1) * p.weights.dim(2) * p.weights.dim(3));
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (double& w : p.weights.data()) w = dist(rng);
    p.bias.fill(0.0);
  }
  touch();
}

ActivationTrace Network::forward(const Tensor& input) const {
  if (input.shape() != input_shape_) {
    throw ConfigError("network input shape " + shape_string(input.shape()) + " does not match " +
                      shape_string(input_shape_));
  }
  ActivationTrace trace;
  trace.network_version = version_;
  trace.input = input;
  trace.outputs.reserve(backbone_.size());
  trace.argmax.resize(backbone_.size());
  const Tensor* current = &trace.input;
  for (std::size_t i = 0; i < backbone_.size(); ++i) {
    const LayerSpec& spec = backbone_[i];
    switch (spec.kind) {
      case LayerKind::Conv: {
        const ConvParams& p = params_[*backbone_block_[i]];
        trace.outputs.push_back(
            kernels::conv2d_forward(*current, p.weights, p.bias, spec.stride, spec.padding));
        trace.layer_ids.push_back(spec.layer_id);
        trace.block_conv.push_back(i);
        trace.block_relu.push_back(std::nullopt);
        break;
      }
      case LayerKind::Relu:
        trace.outputs.push_back(kernels::relu_forward(*current));
        if (!trace.block_conv.empty() && trace.block_conv.back() + 1 == i) {
          trace.block_relu.back() = i;
        }
        break;
      case LayerKind::MaxPool: {
        PoolResult pooled = kernels::maxpool_forward(*current, spec.window, spec.stride);
        trace.outputs.push_back(std::move(pooled.output));
        trace.argmax[i] = std::move(pooled.argmax);
        break;
      }
    }
    current = &trace.outputs.back();
  }
  const std::size_t first_head = params_.size() - heads_.size();
  for (std::size_t h = 0; h < heads_.size(); ++h) {
    const ConvParams& p = params_[first_head + h];
    trace.head_outputs.push_back(
        kernels::conv2d_forward(*current, p.weights, p.bias, heads_[h].stride, heads_[h].padding));
  }
  return trace;
}

BackwardResult Network::backward(const ActivationTrace& trace, std::span<const Tensor> head_grads,
                                 BackwardMode mode, bool want_param_grads) const {
  if (trace.network_version != version_) {
    throw StateError("activation trace is stale: network parameters changed after the forward pass");
  }
  if (head_grads.size() != heads_.size()) {
    throw ConfigError("expected " + std::to_string(heads_.size()) + " head gradients, got " +
                      std::to_string(head_grads.size()));
  }
  BackwardResult result;
  if (want_param_grads) {
    for (const auto& p : params_) {
      result.param_grads.push_back({Tensor(p.weights.shape()), Tensor(p.bias.shape())});
    }
  }
  result.block_grads.resize(trace.layer_ids.size());

  const Tensor& last = backbone_.empty() ? trace.input : trace.outputs.back();
  Tensor grad(last.shape());
  const std::size_t first_head = params_.size() - heads_.size();
  for (std::size_t h = 0; h < heads_.size(); ++h) {
    if (head_grads[h].empty()) continue;
    if (head_grads[h].shape() != trace.head_outputs[h].shape()) {
      throw ConfigError("head " + heads_[h].layer_id + " gradient shape " +
                        shape_string(head_grads[h].shape()) + " does not match output " +
                        shape_string(trace.head_outputs[h].shape()));
    }
    const ConvParams& p = params_[first_head + h];
    if (want_param_grads) {
      auto& g = result.param_grads[first_head + h];
      kernels::conv2d_backward_params(last, head_grads[h], heads_[h].stride, heads_[h].padding,
                                      g.weights, g.bias);
    }
    grad += kernels::conv2d_backward_input(head_grads[h], p.weights, last.shape(),
                                           heads_[h].stride, heads_[h].padding);
  }

  std::size_t block = trace.layer_ids.size();
  for (std::size_t i = backbone_.size(); i-- > 0;) {
    const LayerSpec& spec = backbone_[i];
    const Tensor& layer_in = i == 0 ? trace.input : trace.outputs[i - 1];
    switch (spec.kind) {
      case LayerKind::Relu:
        grad = mode == BackwardMode::Guided ? kernels::guided_relu_backward(layer_in, grad)
                                            : kernels::relu_backward(layer_in, grad);
        break;
      case LayerKind::MaxPool:
        grad = kernels::maxpool_backward(grad, trace.argmax[i], layer_in.shape());
        break;
      case LayerKind::Conv: {
        --block;
        result.block_grads[block] = grad;
        const std::size_t pb = *backbone_block_[i];
        if (want_param_grads) {
          auto& g = result.param_grads[pb];
          kernels::conv2d_backward_params(layer_in, grad, spec.stride, spec.padding, g.weights,
                                          g.bias);
        }
        grad = kernels::conv2d_backward_input(grad, params_[pb].weights, layer_in.shape(),
                                              spec.stride, spec.padding);
        break;
      }
    }
  }
  result.input_grad = std::move(grad);
  return result;
}

ReceptiveField Network::receptive_field(std::string_view layer_id) const {
  ReceptiveField rf;
  for (const auto& spec : backbone_) {
    std::size_t k = 1, s = 1, p = 0;
    if (spec.kind == LayerKind::Conv) {
      k = spec.kernel_size;
      s = spec.stride;
      p = spec.padding;
    } else if (spec.kind == LayerKind::MaxPool) {
      k = spec.window;
      s = spec.stride;
    }
    rf.start += (static_cast<double>(k - 1) / 2.0 - static_cast<double>(p)) * static_cast<double>(rf.jump);
    rf.size += (k - 1) * rf.jump;
    rf.jump *= s;
    if (spec.layer_id == layer_id) return rf;
  }
  throw ConfigError("layer '" + std::string(layer_id) + "' is not in the backbone");
}

}  // namespace graspfs
