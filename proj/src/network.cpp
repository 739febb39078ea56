#include "bitconv/network.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>

#include "bitconv/error.hpp"

namespace bitconv {

namespace {

constexpr char kMagic[4] = {'B', 'C', 'V', '1'};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  if (bytes.size() - pos < sizeof(T)) throw FormatError("weight file truncated at byte " + std::to_string(pos));
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes[pos + i]) << (8 * i);
  pos += sizeof(T);
  return v;
}

Tensor as_batch(const NetworkSpec& spec, const Tensor& x) {
  const ActShape& in = spec.input;
  if (x.size() != in.size() || (x.rank() >= 3 && (x.c() != in.c || x.h() != in.h || x.w() != in.w)) ||
      x.n() != 1) {
    throw ShapeError("input " + shape_to_string(x.shape()) + " does not match declared input " +
                     std::to_string(in.c) + "x" + std::to_string(in.h) + "x" + std::to_string(in.w));
  }
  return x.reshaped({1, in.c, in.h, in.w});
}

}  // namespace

Weights init_weights(const NetworkSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Weights w;
  const auto shapes = param_shapes(spec);
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    LayerWeights lw;
    const std::size_t n_conv_tensors = l.conv_bearing() ? shapes[i].size() - (l.fire_prelu && l.is_fire() ? 2 : 0) : 0;
    for (std::size_t t = 0; t < shapes[i].size(); ++t) {
      const Shape& s = shapes[i][t];
      Tensor tensor = Tensor::zeros(s);
      const bool is_weight = s.size() >= 2;
      const bool is_slope = l.kind == LayerKind::PRelu || (l.is_fire() && t >= n_conv_tensors);
      if (is_weight) {
        const int receptive = s.size() == 4 ? s[2] * s[3] : 1;
        const double fan_in = static_cast<double>(s[1]) * receptive;
        const double fan_out = static_cast<double>(s[0]) * receptive;
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (float& v : tensor.data()) v = static_cast<float>(dist(rng));
      } else if (is_slope) {
        for (float& v : tensor.data()) v = l.slope_init;
      }
      lw.tensors.push_back(std::move(tensor));
    }
    w.layers.push_back(std::move(lw));
  }
  return w;
}

void check_weights(const NetworkSpec& spec, const Weights& weights) {
  const auto shapes = param_shapes(spec);
  if (weights.layers.size() != shapes.size()) {
    throw ShapeError("weights describe " + std::to_string(weights.layers.size()) + " layers, network has " +
                     std::to_string(shapes.size()));
  }
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto& t = weights.layers[i].tensors;
    if (t.size() != shapes[i].size()) {
      throw ShapeError(layer_label(spec, i) + ": expected " + std::to_string(shapes[i].size()) +
                       " weight tensors, got " + std::to_string(t.size()));
    }
    for (std::size_t k = 0; k < t.size(); ++k) {
      if (t[k].shape() != shapes[i][k]) {
        throw ShapeError(layer_label(spec, i) + ": weight tensor " + std::to_string(k) + " has shape " +
                         shape_to_string(t[k].shape()) + ", expected " + shape_to_string(shapes[i][k]));
      }
    }
  }
}

std::vector<std::uint8_t> serialize_weights(const NetworkSpec& spec, const Weights& weights) {
  check_weights(spec, weights);
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(weights.layers.size()));
  for (const LayerWeights& layer : weights.layers) {
    std::uint64_t count = 0;
    for (const Tensor& t : layer.tensors) count += t.size();
    put_le<std::uint64_t>(out, count);
    for (const Tensor& t : layer.tensors) {
      for (float v : t.data()) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        put_le<std::uint32_t>(out, bits);
      }
    }
  }
  return out;
}

Weights deserialize_weights(const NetworkSpec& spec, std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 3) != 0) {
    throw FormatError("not a weight file (bad magic)");
  }
  if (bytes[3] != static_cast<std::uint8_t>(kMagic[3])) {
    throw FormatError("unsupported weight file version '" + std::string(1, static_cast<char>(bytes[3])) + "'");
  }
  std::size_t pos = 4;
  const auto shapes = param_shapes(spec);
  const auto layer_count = get_le<std::uint32_t>(bytes, pos);
  if (layer_count != shapes.size()) {
    throw FormatError("layer count mismatch: file has " + std::to_string(layer_count) + ", network has " +
                      std::to_string(shapes.size()));
  }

  // Validate the whole layout before building any tensor.
  std::vector<std::uint64_t> counts;
  std::size_t scan = pos;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    std::uint64_t expected = 0;
    for (const Shape& s : shapes[i]) expected += checked_element_count(s);
    const auto count = get_le<std::uint64_t>(bytes, scan);
    if (count != expected) {
      throw FormatError("float count mismatch in " + layer_label(spec, i) + ": file has " +
                        std::to_string(count) + ", expected " + std::to_string(expected));
    }
    if ((bytes.size() - scan) / 4 < count) throw FormatError("weight file truncated in " + layer_label(spec, i));
    scan += static_cast<std::size_t>(count) * 4;
    counts.push_back(count);
  }
  if (scan != bytes.size()) {
    throw FormatError("weight file has " + std::to_string(bytes.size() - scan) + " trailing bytes");
  }

  Weights w;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    pos += 8;
    LayerWeights lw;
    for (const Shape& s : shapes[i]) {
      std::vector<float> data(checked_element_count(s));
      for (float& v : data) {
        const auto bits = get_le<std::uint32_t>(bytes, pos);
        std::memcpy(&v, &bits, sizeof v);
      }
      lw.tensors.emplace_back(s, std::move(data));
    }
    w.layers.push_back(std::move(lw));
  }
  return w;
}

void save_weights(const NetworkSpec& spec, const Weights& weights, const std::string& path) {
  const auto bytes = serialize_weights(spec, weights);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write weights to '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing weights to '" + path + "'");
}

Weights load_weights(const NetworkSpec& spec, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read weights from '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_weights(spec, bytes);
}

InferenceModel::InferenceModel(NetworkSpec spec, Weights weights)
    : spec_(std::move(spec)), weights_(std::move(weights)) {
  validate(spec_);
  check_weights(spec_, weights_);
  const auto shapes = propagate_shapes(spec_);
  banks_.resize(spec_.layers.size());
  int channels = spec_.input.c;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    in_channels_.push_back(channels);
    const LayerSpec& l = spec_.layers[i];
    if (l.binary) {
      const std::size_t n = layer_convs(l, channels).size();
      for (std::size_t k = 0; k < n; ++k) banks_[i].push_back(binarize_weights(conv_params(i, k)));
    }
    channels = shapes[i].c;
  }
}

ConvParams InferenceModel::conv_params(std::size_t layer, std::size_t k) const {
  const auto convs = layer_convs(spec_.layers[layer], in_channels_[layer]);
  const auto& t = weights_.layers[layer].tensors;
  return ConvParams{convs.at(k), t[k], t[convs.size() + k]};
}

Tensor InferenceModel::run_layer(std::size_t i, const Tensor& x, bool use_binary) const {
  const LayerSpec& l = spec_.layers[i];
  const auto& t = weights_.layers[i].tensors;
  const bool binary = use_binary && l.binary;
  auto conv = [&](std::size_t k, const Tensor& in) {
    return binary ? xnor_conv_forward(in, banks_[i][k], l.input_scaling) : conv_forward(in, conv_params(i, k));
  };

  switch (l.kind) {
    case LayerKind::Conv:
      return conv(0, x);
    case LayerKind::Fire:
    case LayerKind::ExtendedFire: {
      const std::size_t n = l.kind == LayerKind::ExtendedFire ? 4 : 3;
      Tensor squeezed = conv(0, x);
      squeezed = l.fire_prelu ? prelu(squeezed, t[2 * n].data()) : relu(squeezed);
      std::vector<Tensor> branches;
      for (std::size_t k = 1; k < n; ++k) branches.push_back(conv(k, squeezed));
      Tensor joined = channel_concat(branches);
      return l.fire_prelu ? prelu(joined, t[2 * n + 1].data()) : relu(joined);
    }
    case LayerKind::MaxPool:
      return maxpool(x, l.kernel, l.stride);
    case LayerKind::PRelu:
      return prelu(x, t[0].data());
    case LayerKind::Relu:
      return relu(x);
    case LayerKind::FullyConnected:
      return fully_connected(x, t[0], t[1]);
    case LayerKind::Softmax: {
      Tensor p = softmax(x);
      return p.reshaped({1, static_cast<int>(p.size()), 1, 1});
    }
  }
  throw Error(ErrorCode::Internal, "unhandled layer kind");
}

Tensor InferenceModel::run(const Tensor& input, bool use_binary, LayerTimings* timings) const {
  Tensor x = as_batch(spec_, input);
  if (timings) timings->ms.assign(spec_.layers.size(), 0.0);
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    try {
      x = run_layer(i, x, use_binary);
    } catch (const ShapeError& e) {
      throw ShapeError(layer_label(spec_, i) + ": " + e.what());
    }
    if (timings) {
      timings->ms[i] =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    }
  }
  return x.reshaped({static_cast<int>(x.size())});
}

Tensor forward(const NetworkSpec& spec, const Weights& weights, const Tensor& input) {
  return InferenceModel(spec, weights).run(input);
}

}  // namespace bitconv
