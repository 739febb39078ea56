#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bitconv/binary.hpp"
#include "bitconv/netspec.hpp"
#include "bitconv/tensor.hpp"

namespace bitconv {

/// Trainable tensors of one layer, ordered as param_shapes() lists them.
struct LayerWeights {
  std::vector<Tensor> tensors;
  bool operator==(const LayerWeights&) const = default;
};

struct Weights {
  std::vector<LayerWeights> layers;
  bool operator==(const Weights&) const = default;
};

/// Glorot-uniform weights in +/-sqrt(6/(fan_in+fan_out)), zero biases,
/// PReLU slopes at their configured init. Deterministic in `seed`.
Weights init_weights(const NetworkSpec& spec, std::uint64_t seed);

/// Throws ShapeError unless every tensor matches param_shapes(spec).
void check_weights(const NetworkSpec& spec, const Weights& weights);

/// Weight file: "BCV1", u32 layer count, then per layer a u64 float count
/// followed by the floats, all little-endian.
void save_weights(const NetworkSpec& spec, const Weights& weights, const std::string& path);
Weights load_weights(const NetworkSpec& spec, const std::string& path);

std::vector<std::uint8_t> serialize_weights(const NetworkSpec& spec, const Weights& weights);
Weights deserialize_weights(const NetworkSpec& spec, std::span<const std::uint8_t> bytes);

/// Wall time spent in each layer of one forward pass.
struct LayerTimings {
  std::vector<double> ms;
};

/// Ready-to-run network: spec, weights, and binarized filter banks for
/// binary-flagged layers. Immutable after construction; `run` keeps its
/// scratch on the stack so concurrent calls are safe.
class InferenceModel {
 public:
  InferenceModel(NetworkSpec spec, Weights weights);

  /// Class probabilities (or the flattened final activation when the net
  /// has no softmax). With `use_binary` false every layer runs in float.
  Tensor run(const Tensor& input, bool use_binary = true, LayerTimings* timings = nullptr) const;

  const NetworkSpec& spec() const { return spec_; }
  const Weights& weights() const { return weights_; }

  /// Filter banks of a binary layer, one per internal convolution; empty
  /// for float layers.
  const std::vector<BinarizedFilterBank>& banks(std::size_t layer) const { return banks_[layer]; }

  /// Float parameters of the k-th convolution inside a layer.
  ConvParams conv_params(std::size_t layer, std::size_t k) const;

  /// Runs one layer on its input activation.
  Tensor run_layer(std::size_t layer, const Tensor& x, bool use_binary) const;

 private:
  NetworkSpec spec_;
  Weights weights_;
  std::vector<int> in_channels_;
  std::vector<std::vector<BinarizedFilterBank>> banks_;
};

Tensor forward(const NetworkSpec& spec, const Weights& weights, const Tensor& input);

}  // namespace bitconv
