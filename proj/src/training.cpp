#include "bitconv/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "bitconv/error.hpp"
#include "bitconv/kernels.hpp"
#include "bitconv/pnm.hpp"

namespace bitconv {

namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// Forward pass with the intermediates backprop needs.

struct ConvCache {
  Matrix cols;
  int in_c = 0, in_h = 0, in_w = 0;
};

struct LayerCache {
  Tensor input;
  std::vector<int> argmax;
  std::vector<ConvCache> convs;
  Tensor squeeze_pre;  // fire only
  Tensor squeeze_act;
  Tensor expand_pre;
  Tensor pre;  // conv/fc/act: value before this layer's nonlinearity (= input for activations)
};

Tensor conv_cached(const Tensor& x, const ConvGeometry& g, const Tensor& w, const Tensor& b, ConvCache& cache) {
  cache.in_c = x.c();
  cache.in_h = x.h();
  cache.in_w = x.w();
  cache.cols = im2col(x, g.kernel, g.stride, g.pad);
  const int positions = cache.cols.cols;
  Tensor out = Tensor::zeros({1, g.out_channels, g.output_extent(x.h()), g.output_extent(x.w())});
  for (int f = 0; f < g.out_channels; ++f) {
    std::fill_n(out.raw() + static_cast<std::size_t>(f) * positions, positions, b[f]);
  }
  gemm_accumulate(false, false, g.out_channels, positions, cache.cols.rows, w.raw(), cache.cols.data.data(),
                  out.raw());
  return out;
}

// Accumulates dW, db and returns dx (when wanted).
Tensor conv_backward(const Tensor& dy, const ConvCache& cache, const ConvGeometry& g, const Tensor& w,
                     Tensor& dw, Tensor& db, bool want_dx) {
  const int positions = cache.cols.cols;
  const int rows = cache.cols.rows;
  gemm_accumulate(false, true, g.out_channels, rows, positions, dy.raw(), cache.cols.data.data(), dw.raw());
  for (int f = 0; f < g.out_channels; ++f) {
    const float* d = dy.raw() + static_cast<std::size_t>(f) * positions;
    double s = 0.0;
    for (int j = 0; j < positions; ++j) s += d[j];
    db[static_cast<std::size_t>(f)] += static_cast<float>(s);
  }
  if (!want_dx) return Tensor();
  Matrix dcols(rows, positions);
  gemm_accumulate(true, false, rows, positions, g.out_channels, w.raw(), dy.raw(), dcols.data.data());
  return col2im(dcols, cache.in_c, cache.in_h, cache.in_w, g.kernel, g.stride, g.pad);
}

Tensor relu_backward(const Tensor& dy, const Tensor& pre) {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (!(pre[i] > 0.0f)) dx[i] = 0.0f;
  }
  return dx;
}

Tensor prelu_backward(const Tensor& dy, const Tensor& pre, const Tensor& slopes, Tensor& dslopes) {
  Tensor dx = dy;
  const std::size_t plane = static_cast<std::size_t>(pre.h()) * pre.w();
  for (int c = 0; c < pre.c(); ++c) {
    const float a = slopes[static_cast<std::size_t>(c)];
    double da = 0.0;
    for (std::size_t i = c * plane; i < (c + 1) * plane; ++i) {
      if (!(pre[i] > 0.0f)) {
        da += static_cast<double>(dy[i]) * pre[i];
        dx[i] = dy[i] * a;
      }
    }
    dslopes[static_cast<std::size_t>(c)] += static_cast<float>(da);
  }
  return dx;
}

Tensor channel_block(const Tensor& t, int c0, int count) {
  const std::size_t plane = static_cast<std::size_t>(t.h()) * t.w();
  std::vector<float> data(t.raw() + c0 * plane, t.raw() + (c0 + count) * plane);
  return Tensor({1, count, t.h(), t.w()}, std::move(data));
}

void add_into(Tensor& dst, const Tensor& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

std::vector<int> input_channels(const NetworkSpec& spec) {
  const auto shapes = propagate_shapes(spec);
  std::vector<int> in;
  int c = spec.input.c;
  for (const ActShape& s : shapes) {
    in.push_back(c);
    c = s.c;
  }
  return in;
}

Tensor as_input(const NetworkSpec& spec, const Tensor& x) {
  if (x.size() != spec.input.size()) {
    throw ShapeError("sample " + shape_to_string(x.shape()) + " does not match network input");
  }
  return x.reshaped({1, spec.input.c, spec.input.h, spec.input.w});
}

// Runs every layer except the final softmax; returns the logits.
Tensor forward_cached(const NetworkSpec& spec, const Weights& weights, const std::vector<int>& in_c,
                      const Tensor& input, std::vector<LayerCache>& caches) {
  const std::size_t n_layers = spec.layers.size();
  caches.assign(n_layers, {});
  Tensor x = as_input(spec, input);
  for (std::size_t i = 0; i + 1 < n_layers; ++i) {
    const LayerSpec& l = spec.layers[i];
    const auto& t = weights.layers[i].tensors;
    LayerCache& c = caches[i];
    c.input = x;
    switch (l.kind) {
      case LayerKind::Conv: {
        c.convs.resize(1);
        x = conv_cached(x, layer_convs(l, in_c[i])[0], t[0], t[1], c.convs[0]);
        break;
      }
      case LayerKind::Fire:
      case LayerKind::ExtendedFire: {
        const auto g = layer_convs(l, in_c[i]);
        const std::size_t n = g.size();
        c.convs.resize(n);
        c.squeeze_pre = conv_cached(x, g[0], t[0], t[n], c.convs[0]);
        c.squeeze_act = l.fire_prelu ? prelu(c.squeeze_pre, t[2 * n].data()) : relu(c.squeeze_pre);
        std::vector<Tensor> branches;
        for (std::size_t k = 1; k < n; ++k) branches.push_back(conv_cached(c.squeeze_act, g[k], t[k], t[n + k], c.convs[k]));
        c.expand_pre = channel_concat(branches);
        x = l.fire_prelu ? prelu(c.expand_pre, t[2 * n + 1].data()) : relu(c.expand_pre);
        break;
      }
      case LayerKind::MaxPool:
        x = maxpool(x, l.kernel, l.stride, c.argmax);
        break;
      case LayerKind::PRelu:
        x = prelu(x, t[0].data());
        break;
      case LayerKind::Relu:
        x = relu(x);
        break;
      case LayerKind::FullyConnected:
        x = fully_connected(x, t[0], t[1]);
        break;
      case LayerKind::Softmax:
        throw ShapeError("softmax must be the final layer");
    }
  }
  return x;
}

void add_scaled(Weights& dst, const Weights& src, float scale) {
  for (std::size_t i = 0; i < dst.layers.size(); ++i) {
    for (std::size_t k = 0; k < dst.layers[i].tensors.size(); ++k) {
      Tensor& d = dst.layers[i].tensors[k];
      const Tensor& s = src.layers[i].tensors[k];
      for (std::size_t e = 0; e < d.size(); ++e) d[e] += scale * s[e];
    }
  }
}

double log_sum_exp(const Tensor& z) {
  double peak = -INFINITY;
  for (float v : z.data()) peak = std::max(peak, static_cast<double>(v));
  double s = 0.0;
  for (float v : z.data()) s += std::exp(v - peak);
  return peak + std::log(s);
}

void require_softmax_head(const NetworkSpec& spec) {
  if (spec.layers.empty() || spec.layers.back().kind != LayerKind::Softmax) {
    throw ArgumentError("training needs a network whose final layer is softmax");
  }
}

bool is_image_file(const fs::path& p) {
  const auto ext = p.extension().string();
  return ext == ".pgm" || ext == ".ppm" || ext == ".pnm";
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0f) || !std::isfinite(learning_rate)) throw ArgumentError("learning rate must be >= 0");
  if (!(momentum >= 0.0f && momentum < 1.0f)) throw ArgumentError("momentum must be in [0,1)");
  if (epochs < 1) throw ArgumentError("epochs must be >= 1");
  if (batch_size < 1) throw ArgumentError("batch size must be >= 1");
}

Dataset load_dataset(const std::string& root) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw IoError("dataset directory '" + root + "' does not exist");

  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) throw IoError("dataset directory '" + root + "' has no class subdirectories");

  Dataset ds;
  bool have_shape = false;
  for (std::size_t label = 0; label < class_dirs.size(); ++label) {
    ds.class_names.push_back(class_dirs[label].filename().string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(class_dirs[label])) {
      if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("class directory '" + class_dirs[label].string() + "' holds no images");
    for (const auto& file : files) {
      Tensor img = to_tensor(read_pnm(file.string()));
      const ActShape shape{img.c(), img.h(), img.w()};
      if (!have_shape) {
        ds.image_shape = shape;
        have_shape = true;
      } else if (!(shape == ds.image_shape)) {
        throw ShapeError("mixed image shapes: '" + file.string() + "' is " + std::to_string(shape.c) + "x" +
                         std::to_string(shape.h) + "x" + std::to_string(shape.w) + ", expected " +
                         std::to_string(ds.image_shape.c) + "x" + std::to_string(ds.image_shape.h) + "x" +
                         std::to_string(ds.image_shape.w));
      }
      ds.items.push_back({std::move(img), static_cast<int>(label)});
    }
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& root) {
  std::vector<int> counters(ds.class_names.size(), 0);
  for (const auto& name : ds.class_names) {
    std::error_code ec;
    fs::create_directories(fs::path(root) / name, ec);
    if (ec) throw IoError("cannot create '" + (fs::path(root) / name).string() + "': " + ec.message());
  }
  for (const Sample& s : ds.items) {
    PnmImage img;
    img.channels = s.image.c();
    img.height = s.image.h();
    img.width = s.image.w();
    img.pixels.resize(s.image.size());
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        for (int k = 0; k < img.channels; ++k) {
          const float v = s.image[(static_cast<std::size_t>(k) * img.height + y) * img.width + x];
          img.pixels[(static_cast<std::size_t>(y) * img.width + x) * img.channels + k] =
              static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
        }
      }
    }
    std::ostringstream name;
    name << std::setw(6) << std::setfill('0') << counters[static_cast<std::size_t>(s.label)]++
         << (img.channels == 1 ? ".pgm" : ".ppm");
    write_pnm(img, (fs::path(root) / ds.class_names[static_cast<std::size_t>(s.label)] / name.str()).string());
  }
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double validation_fraction, std::uint64_t seed) {
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ArgumentError("validation fraction must be in [0,1)");
  }
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(ds.size())));

  Dataset train{{}, ds.class_names, ds.image_shape};
  Dataset val{{}, ds.class_names, ds.image_shape};
  for (std::size_t i = 0; i < order.size(); ++i) (i < n_val ? val : train).items.push_back(ds.items[order[i]]);
  return {std::move(train), std::move(val)};
}

Dataset resize_dataset(const Dataset& ds, ActShape shape) {
  if (shape == ds.image_shape) return ds;
  if (shape.c != ds.image_shape.c) throw ShapeError("cannot resize across channel counts");
  Dataset out{{}, ds.class_names, shape};
  out.items.reserve(ds.size());
  for (const Sample& s : ds.items) out.items.push_back({resize_bilinear(s.image, shape.h, shape.w), s.label});
  return out;
}

float sample_loss(const NetworkSpec& spec, const Weights& weights, const Tensor& x, int label) {
  require_softmax_head(spec);
  const InferenceModel model(spec, weights);
  Tensor z = as_input(spec, x);
  for (std::size_t i = 0; i + 1 < spec.layers.size(); ++i) z = model.run_layer(i, z, false);
  return static_cast<float>(log_sum_exp(z) - z[static_cast<std::size_t>(label)]);
}

Weights zeros_like(const Weights& w) {
  Weights z;
  for (const auto& layer : w.layers) {
    LayerWeights lw;
    for (const Tensor& t : layer.tensors) lw.tensors.push_back(Tensor::zeros(t.shape()));
    z.layers.push_back(std::move(lw));
  }
  return z;
}

Backprop backward(const NetworkSpec& spec, const Weights& weights, const Tensor& x, int label) {
  require_softmax_head(spec);
  check_weights(spec, weights);
  if (label < 0 || label >= spec.classes) throw ArgumentError("label " + std::to_string(label) + " out of range");

  const auto in_c = input_channels(spec);
  std::vector<LayerCache> caches;
  const Tensor logits = forward_cached(spec, weights, in_c, x, caches);

  Backprop out;
  out.grads = zeros_like(weights);
  const double lse = log_sum_exp(logits);
  out.loss = static_cast<float>(lse - logits[static_cast<std::size_t>(label)]);

  // d(-log softmax)/dz = p - onehot.
  Tensor dy = logits;
  std::vector<float> probs(logits.size());
  for (std::size_t i = 0; i < dy.size(); ++i) {
    probs[i] = static_cast<float>(std::exp(logits[i] - lse));
    dy[i] = probs[i] - (static_cast<int>(i) == label ? 1.0f : 0.0f);
  }
  const int n_probs = static_cast<int>(probs.size());
  out.probs = Tensor({n_probs}, std::move(probs));

  for (std::size_t ii = spec.layers.size() - 1; ii-- > 0;) {
    const LayerSpec& l = spec.layers[ii];
    const auto& t = weights.layers[ii].tensors;
    auto& g = out.grads.layers[ii].tensors;
    const LayerCache& c = caches[ii];
    const bool want_dx = ii > 0;
    switch (l.kind) {
      case LayerKind::Conv:
        dy = conv_backward(dy, c.convs[0], layer_convs(l, in_c[ii])[0], t[0], g[0], g[1], want_dx);
        break;
      case LayerKind::Fire:
      case LayerKind::ExtendedFire: {
        const auto geo = layer_convs(l, in_c[ii]);
        const std::size_t n = geo.size();
        Tensor d_expand = l.fire_prelu ? prelu_backward(dy, c.expand_pre, t[2 * n + 1], g[2 * n + 1])
                                       : relu_backward(dy, c.expand_pre);
        Tensor d_squeeze = Tensor::zeros(c.squeeze_act.shape());
        int c0 = 0;
        for (std::size_t k = 1; k < n; ++k) {
          const Tensor block = channel_block(d_expand, c0, geo[k].out_channels);
          c0 += geo[k].out_channels;
          add_into(d_squeeze, conv_backward(block, c.convs[k], geo[k], t[k], g[k], g[n + k], true));
        }
        Tensor d_sq_pre = l.fire_prelu ? prelu_backward(d_squeeze, c.squeeze_pre, t[2 * n], g[2 * n])
                                       : relu_backward(d_squeeze, c.squeeze_pre);
        dy = conv_backward(d_sq_pre, c.convs[0], geo[0], t[0], g[0], g[n], want_dx);
        break;
      }
      case LayerKind::MaxPool: {
        Tensor dx = Tensor::zeros(c.input.shape());
        for (std::size_t o = 0; o < c.argmax.size(); ++o) dx[static_cast<std::size_t>(c.argmax[o])] += dy[o];
        dy = std::move(dx);
        break;
      }
      case LayerKind::PRelu:
        dy = prelu_backward(dy, c.input, t[0], g[0]);
        break;
      case LayerKind::Relu:
        dy = relu_backward(dy, c.input);
        break;
      case LayerKind::FullyConnected: {
        const int n_out = l.out;
        const int n_in = static_cast<int>(c.input.size());
        for (int o = 0; o < n_out; ++o) {
          const float d = dy[static_cast<std::size_t>(o)];
          g[1][static_cast<std::size_t>(o)] += d;
          float* row = g[0].raw() + static_cast<std::size_t>(o) * n_in;
          for (int k = 0; k < n_in; ++k) row[k] += d * c.input[static_cast<std::size_t>(k)];
        }
        if (want_dx) {
          Tensor dx = Tensor::zeros(c.input.shape());
          for (int o = 0; o < n_out; ++o) {
            const float d = dy[static_cast<std::size_t>(o)];
            const float* row = t[0].raw() + static_cast<std::size_t>(o) * n_in;
            for (int k = 0; k < n_in; ++k) dx[static_cast<std::size_t>(k)] += d * row[k];
          }
          dy = std::move(dx);
        }
        break;
      }
      case LayerKind::Softmax:
        break;
    }
  }
  return out;
}

void sgd_step(Weights& weights, const Weights& grads, Weights& velocity, const TrainConfig& cfg) {
  for (std::size_t i = 0; i < weights.layers.size(); ++i) {
    for (std::size_t k = 0; k < weights.layers[i].tensors.size(); ++k) {
      Tensor& w = weights.layers[i].tensors[k];
      Tensor& v = velocity.layers[i].tensors[k];
      const Tensor& g = grads.layers[i].tensors[k];
      if (w.size() != g.size() || w.size() != v.size()) throw ShapeError("sgd_step: tensor sizes differ");
      for (std::size_t e = 0; e < w.size(); ++e) {
        v[e] = cfg.momentum * v[e] - cfg.learning_rate * g[e];
        w[e] += v[e];
      }
    }
  }
}

TrainResult train(const NetworkSpec& spec, const Dataset& train_set, const TrainConfig& cfg,
                  const Dataset* validation) {
  cfg.validate();
  require_softmax_head(spec);
  if (train_set.size() == 0) throw ArgumentError("training set is empty");
  if (!(train_set.image_shape == spec.input)) {
    throw ShapeError("dataset images are " + std::to_string(train_set.image_shape.c) + "x" +
                     std::to_string(train_set.image_shape.h) + "x" + std::to_string(train_set.image_shape.w) +
                     " but the network expects " + std::to_string(spec.input.c) + "x" +
                     std::to_string(spec.input.h) + "x" + std::to_string(spec.input.w));
  }

  TrainResult result;
  result.weights = init_weights(spec, cfg.seed);
  Weights velocity = zeros_like(result.weights);
  std::mt19937_64 rng(cfg.seed ^ 0x5DEECE66DULL);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      Weights batch_grad = zeros_like(result.weights);
      for (std::size_t b = start; b < end; ++b) {
        const Sample& s = train_set.items[order[b]];
        Backprop bp = backward(spec, result.weights, s.image, s.label);
        loss_sum += bp.loss;
        if (argmax(bp.probs.data()) == s.label) ++correct;
        add_scaled(batch_grad, bp.grads, 1.0f);
      }
      Weights scaled = zeros_like(batch_grad);
      add_scaled(scaled, batch_grad, 1.0f / static_cast<float>(end - start));
      sgd_step(result.weights, scaled, velocity, cfg);
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.loss = loss_sum / static_cast<double>(order.size());
    stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    if (validation && validation->size() > 0) {
      stats.val_accuracy = evaluate(InferenceModel(spec, result.weights), *validation, false).accuracy;
    }
    result.history.push_back(stats);
  }
  return result;
}

std::string history_csv(const std::vector<EpochStats>& history) {
  std::ostringstream os;
  os << "epoch,loss,train_acc,val_acc\n";
  os << std::setprecision(6);
  for (const EpochStats& s : history) {
    os << s.epoch << ',' << s.loss << ',' << s.train_accuracy << ',';
    if (s.val_accuracy >= 0.0) os << s.val_accuracy;
    os << '\n';
  }
  return os.str();
}

int argmax(std::span<const float> values) {
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

Evaluation score_predictions(std::span<const int> predicted, std::span<const int> labels, int classes) {
  if (labels.empty()) throw ArgumentError("cannot evaluate an empty dataset");
  if (predicted.size() != labels.size()) throw ShapeError("prediction and label counts differ");
  Evaluation e;
  e.confusion.assign(static_cast<std::size_t>(classes), std::vector<int>(static_cast<std::size_t>(classes), 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ++e.confusion.at(static_cast<std::size_t>(labels[i])).at(static_cast<std::size_t>(predicted[i]));
    if (labels[i] == predicted[i]) ++correct;
  }
  e.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
  return e;
}

Evaluation evaluate(const InferenceModel& model, const Dataset& ds, bool use_binary) {
  if (ds.size() == 0) throw ArgumentError("cannot evaluate an empty dataset");
  std::vector<int> predicted, labels;
  for (const Sample& s : ds.items) {
    predicted.push_back(argmax(model.run(s.image, use_binary).data()));
    labels.push_back(s.label);
  }
  return score_predictions(predicted, labels, std::max(model.spec().classes, ds.classes()));
}

Evaluation evaluate(const NetworkSpec& spec, const Weights& weights, const Dataset& ds) {
  return evaluate(InferenceModel(spec, weights), ds);
}

}  // namespace bitconv
