#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "bitconv/kernels.hpp"
#include "bitconv/tensor.hpp"

namespace bitconv {

enum class LayerKind {
  Conv,
  Fire,
  ExtendedFire,
  MaxPool,
  PRelu,
  Relu,
  FullyConnected,
  Softmax,
};

std::string_view kind_name(LayerKind kind);

/// One line of a network description. Only the fields that belong to
/// `kind` are meaningful.
struct LayerSpec {
  LayerKind kind = LayerKind::Relu;

  int out = 0;  // conv, fc
  int kernel = 0;  // conv, maxpool
  int stride = 1;
  int pad = 0;

  int squeeze = 0;  // fire kinds
  int expand1 = 0;
  int expand3 = 0;
  int expand5 = 0;  // extended fire only
  bool fire_prelu = false;  // fire internals use PReLU instead of ReLU

  float slope_init = 0.25f;  // prelu

  bool binary = false;        // conv and fire kinds only
  bool input_scaling = true;  // meaningful only when binary

  int line = 0;  // source line, 0 when built in code

  bool conv_bearing() const {
    return kind == LayerKind::Conv || kind == LayerKind::Fire || kind == LayerKind::ExtendedFire;
  }
  bool is_fire() const { return kind == LayerKind::Fire || kind == LayerKind::ExtendedFire; }

  bool operator==(const LayerSpec& other) const;
};

/// Activation shape between layers (batch of one).
struct ActShape {
  int c = 1;
  int h = 1;
  int w = 1;
  std::size_t size() const { return static_cast<std::size_t>(c) * h * w; }
  bool operator==(const ActShape&) const = default;
};

struct NetworkSpec {
  ActShape input;
  std::vector<LayerSpec> layers;
  int classes = 0;

  bool operator==(const NetworkSpec& other) const {
    return input == other.input && layers == other.layers && classes == other.classes;
  }
};

/// Parses the line-oriented description format. Every error carries the
/// offending line number; shape incompatibilities raise ShapeError.
NetworkSpec parse_netspec(std::string_view text);
NetworkSpec load_netspec(const std::string& path);

/// Canonical text; parse_netspec(to_text(s)) == s.
std::string to_text(const NetworkSpec& spec);

/// Output shape of each layer in order. Throws ShapeError naming the layer
/// when something does not fit or the class count is not met.
std::vector<ActShape> propagate_shapes(const NetworkSpec& spec);

/// Re-runs all structural checks (hyperparameter ranges, flags, shapes).
void validate(const NetworkSpec& spec);

/// Human-readable warnings for binary flags on the first or last
/// convolution-bearing layer.
std::vector<std::string> validate_binarization(const NetworkSpec& spec);

/// Shapes of the trainable tensors of each layer, in serialization order:
/// weights, then biases, then PReLU slopes.
std::vector<std::vector<Shape>> param_shapes(const NetworkSpec& spec);

std::int64_t count_params(const NetworkSpec& spec);
std::int64_t estimate_macs(const NetworkSpec& spec);

/// Geometry of each convolution a layer runs, in weight order
/// (squeeze, expand 1x1, expand 3x3, expand 5x5 for fire kinds).
std::vector<ConvGeometry> layer_convs(const LayerSpec& layer, int in_channels);

/// Human label for error messages, e.g. "layer 3 (fire, line 7)".
std::string layer_label(const NetworkSpec& spec, std::size_t index);

}  // namespace bitconv
