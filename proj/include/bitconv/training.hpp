#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bitconv/netspec.hpp"
#include "bitconv/network.hpp"

namespace bitconv {

struct Sample {
  Tensor image;  // [C,H,W], values in [0,1]
  int label = 0;
};

struct Dataset {
  std::vector<Sample> items;
  std::vector<std::string> class_names;
  ActShape image_shape;

  std::size_t size() const { return items.size(); }
  int classes() const { return static_cast<int>(class_names.size()); }
};

/// One subdirectory per class (lexicographic order gives the label), each
/// holding P5 or P6 images. Items are ordered by path.
Dataset load_dataset(const std::string& root);

/// Writes `ds` in the layout load_dataset reads.
void save_dataset(const Dataset& ds, const std::string& root);

/// Deterministic shuffle-and-split into (train, validation).
std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double validation_fraction, std::uint64_t seed);

/// Bilinearly resamples every image to `shape` (channel count must match).
Dataset resize_dataset(const Dataset& ds, ActShape shape);

struct TrainConfig {
  float learning_rate = 0.05f;
  float momentum = 0.9f;
  int epochs = 10;
  int batch_size = 16;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Cross-entropy loss of one sample through the float path.
float sample_loss(const NetworkSpec& spec, const Weights& weights, const Tensor& x, int label);

struct Backprop {
  float loss = 0.0f;
  Weights grads;  // same layout as the weights
  Tensor probs;
};

/// Gradients of -log p(label) for every trainable tensor. The final layer
/// must be softmax. Binary flags are ignored: training is full precision.
Backprop backward(const NetworkSpec& spec, const Weights& weights, const Tensor& x, int label);

/// v <- momentum * v - lr * g;  w <- w + v.
void sgd_step(Weights& weights, const Weights& grads, Weights& velocity, const TrainConfig& cfg);

/// Zero tensors shaped like `w`.
Weights zeros_like(const Weights& w);

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = -1.0;  // negative when no validation set was given
};

struct TrainResult {
  Weights weights;
  std::vector<EpochStats> history;
};

/// Seeded minibatch SGD from init_weights(spec, cfg.seed).
TrainResult train(const NetworkSpec& spec, const Dataset& train_set, const TrainConfig& cfg,
                  const Dataset* validation = nullptr);

/// CSV `epoch,loss,train_acc,val_acc`; val_acc is empty without validation.
std::string history_csv(const std::vector<EpochStats>& history);

struct Evaluation {
  double accuracy = 0.0;
  std::vector<std::vector<int>> confusion;  // [true][predicted]
};

/// Index of the largest value; ties go to the lower index.
int argmax(std::span<const float> values);

Evaluation score_predictions(std::span<const int> predicted, std::span<const int> labels, int classes);
Evaluation evaluate(const InferenceModel& model, const Dataset& ds, bool use_binary = true);
Evaluation evaluate(const NetworkSpec& spec, const Weights& weights, const Dataset& ds);

}  // namespace bitconv
