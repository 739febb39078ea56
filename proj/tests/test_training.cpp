#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "bitconv/error.hpp"
#include "bitconv/pnm.hpp"
#include "bitconv/training.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace bitconv;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("bitconv_train_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void write_gray(const fs::path& path, int w, int h, std::uint8_t value) {
  PnmImage img{w, h, 1, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h, value)};
  write_pnm(img, path.string());
}

// Constant-intensity images: class 0 dark, class 1 bright.
Dataset brightness_set(std::size_t per_class, std::uint64_t seed, int side = 6) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dark(0.0f, 0.4f), bright(0.6f, 1.0f);
  Dataset ds{{}, {"dark", "bright"}, ActShape{1, side, side}};
  for (std::size_t i = 0; i < per_class; ++i) {
    ds.items.push_back({Tensor::filled({1, side, side}, dark(rng)), 0});
    ds.items.push_back({Tensor::filled({1, side, side}, bright(rng)), 1});
  }
  return ds;
}

}  // namespace

TEST(Dataset, LoadsClassDirectories) {
  TempDir dir;
  for (const char* cls : {"pos", "neg"}) {
    fs::create_directories(dir.path() / cls);
    for (int i = 0; i < 3; ++i) write_gray(dir.path() / cls / ("img" + std::to_string(i) + ".pgm"), 24, 24, 255);
  }
  const Dataset ds = load_dataset(dir.path().string());
  EXPECT_EQ(ds.size(), 6u);
  EXPECT_EQ(ds.class_names, (std::vector<std::string>{"neg", "pos"}));
  EXPECT_EQ(ds.image_shape, (ActShape{1, 24, 24}));
  EXPECT_EQ(ds.items[0].label, 0);
  EXPECT_EQ(ds.items[5].label, 1);
}

TEST(Dataset, PixelMapping) {
  TempDir dir;
  fs::create_directories(dir.path() / "a");
  PnmImage img{2, 1, 1, {0, 255}};
  write_pnm(img, (dir.path() / "a" / "x.pgm").string());
  const Dataset ds = load_dataset(dir.path().string());
  EXPECT_EQ(ds.items[0].image[0], 0.0f);
  EXPECT_EQ(ds.items[0].image[1], 1.0f);
}

TEST(Dataset, MixedShapes) {
  TempDir dir;
  fs::create_directories(dir.path() / "a");
  write_gray(dir.path() / "a" / "1.pgm", 24, 24, 1);
  write_gray(dir.path() / "a" / "2.pgm", 23, 24, 1);
  EXPECT_THROW(load_dataset(dir.path().string()), ShapeError);
}

TEST(Dataset, MissingOrEmpty) {
  TempDir dir;
  try {
    load_dataset((dir.path() / "nope").string());
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("nope"), std::string::npos);
  }
  EXPECT_THROW(load_dataset(dir.path().string()), IoError);
  fs::create_directories(dir.path() / "empty");
  EXPECT_THROW(load_dataset(dir.path().string()), IoError);
}

TEST(Dataset, SaveLoadRoundTrip) {
  TempDir dir;
  Dataset ds{{}, {"a", "b"}, ActShape{3, 2, 2}};
  std::mt19937_64 rng(1);
  for (int i = 0; i < 4; ++i) {
    Tensor t = oracle::random_tensor({3, 2, 2}, rng, 0.0f, 1.0f);
    for (float& v : t.data()) v = std::round(v * 255.0f) / 255.0f;
    ds.items.push_back({t, i % 2});
  }
  save_dataset(ds, dir.path().string());
  const Dataset back = load_dataset(dir.path().string());
  ASSERT_EQ(back.size(), 4u);
  EXPECT_EQ(back.class_names, ds.class_names);
  EXPECT_EQ(back.items[0].image, ds.items[0].image);
}

TEST(Dataset, SplitIsDeterministicPartition) {
  const Dataset ds = brightness_set(10, 1);
  const auto [a1, b1] = split_dataset(ds, 0.25, 9);
  const auto [a2, b2] = split_dataset(ds, 0.25, 9);
  EXPECT_EQ(a1.size() + b1.size(), ds.size());
  EXPECT_EQ(b1.size(), 5u);
  for (std::size_t i = 0; i < b1.size(); ++i) EXPECT_EQ(b1.items[i].image, b2.items[i].image);
}

TEST(Backward, UniformPredictionLoss) {
  const NetworkSpec s = parse_netspec("input 1x2x2\nfc out=2\nsoftmax\n");
  Weights w = init_weights(s, 1);
  for (auto& t : w.layers[0].tensors) std::fill(t.data().begin(), t.data().end(), 0.0f);
  const Backprop bp = backward(s, w, Tensor::filled({1, 2, 2}, 0.3f), 1);
  EXPECT_NEAR(bp.loss, std::log(2.0f), 1e-6);
  EXPECT_NEAR(sample_loss(s, w, Tensor::filled({1, 2, 2}, 0.3f), 0), 0.6931f, 1e-4);
}

TEST(Backward, PReluSlopeGradient) {
  // y = a*x for x = -2; logits (0, 2y); d loss/d y = 2 * p1, so d loss/d a = 2 * p1 * x.
  const NetworkSpec s = parse_netspec("input 1x1x1\nprelu\nfc out=2\nsoftmax\n");
  Weights w = init_weights(s, 1);
  w.layers[1].tensors[0] = Tensor({2, 1}, {0.0f, 2.0f});
  const Backprop bp = backward(s, w, Tensor({1, 1, 1}, {-2.0f}), 0);
  const float y = -2.0f * 0.25f;
  const float p1 = 1.0f / (1.0f + std::exp(-2.0f * y));
  EXPECT_NEAR(bp.grads.layers[0].tensors[0][0], 2.0f * p1 * -2.0f, 1e-6);
}

TEST(Backward, MatchesFiniteDifferencesForEveryLayerKind) {
  std::mt19937_64 rng(2024);
  for (LayerKind kind : gradcheck::kAllKinds) {
    for (int trial = 0; trial < 3; ++trial) {
      const NetworkSpec s = gradcheck::tiny_net(kind, rng);
      ASSERT_LE(count_params(s), 500) << to_text(s);
      Weights w = init_weights(s, rng());
      gradcheck::randomize(s, w, rng);
      const Tensor x = oracle::random_tensor({s.input.c, s.input.h, s.input.w}, rng);
      const int label = static_cast<int>(rng() % static_cast<std::uint64_t>(s.classes));
      const gradcheck::Report r = gradcheck::check(s, w, x, label);
      EXPECT_EQ(r.failures, 0u) << to_text(s) << r.first_failure;
      EXPECT_LE(r.kinks * 20, r.checked) << to_text(s);
    }
  }
}

TEST(Backward, MaxPoolRoutesToFirstMaximum) {
  const NetworkSpec s = parse_netspec("input 1x2x2\nmaxpool k=2 s=2\nfc out=2\nsoftmax\n");
  Weights w = init_weights(s, 1);
  w.layers[1].tensors[0] = Tensor({2, 1}, {1.0f, -1.0f});
  const Tensor x({1, 2, 2}, {0.5f, 0.5f, 0.1f, 0.5f});
  const Backprop bp = backward(s, w, x, 0);
  const float p0 = 1.0f / (1.0f + std::exp(-1.0f));
  EXPECT_NEAR(bp.grads.layers[1].tensors[0][0], (p0 - 1.0f) * 0.5f, 1e-6);
}

TEST(Backward, RequiresSoftmaxHead) {
  const NetworkSpec s = parse_netspec("input 1x2x2\nfc out=2\n");
  EXPECT_THROW(backward(s, init_weights(s, 1), Tensor::zeros({1, 2, 2}), 0), ArgumentError);
}

TEST(Sgd, SingleStep) {
  const NetworkSpec s = parse_netspec("input 1x1x1\nfc out=1\n");
  Weights w = init_weights(s, 1), g = zeros_like(w), v = zeros_like(w);
  w.layers[0].tensors[0][0] = 1.0f;
  g.layers[0].tensors[0][0] = 2.0f;
  TrainConfig cfg;
  cfg.learning_rate = 0.1f;
  cfg.momentum = 0.0f;
  sgd_step(w, g, v, cfg);
  EXPECT_FLOAT_EQ(w.layers[0].tensors[0][0], 0.8f);
}

TEST(Sgd, ZeroGradientLeavesWeights) {
  const NetworkSpec s = parse_netspec("input 2x3x3\nconv out=2 k=3\nfc out=2\nsoftmax\n");
  Weights w = init_weights(s, 1);
  const Weights before = w;
  Weights v = zeros_like(w);
  TrainConfig cfg;
  cfg.momentum = 0.0f;
  sgd_step(w, zeros_like(w), v, cfg);
  EXPECT_EQ(w, before);
}

TEST(Sgd, MomentumRecurrence) {
  const NetworkSpec s = parse_netspec("input 1x1x1\nfc out=1\n");
  Weights w = init_weights(s, 1), g = zeros_like(w), v = zeros_like(w);
  g.layers[0].tensors[0][0] = 2.0f;
  TrainConfig cfg;
  cfg.learning_rate = 0.1f;
  cfg.momentum = 0.9f;
  sgd_step(w, g, v, cfg);
  sgd_step(w, g, v, cfg);
  EXPECT_NEAR(v.layers[0].tensors[0][0], -0.1f * 2.0f * 1.9f, 1e-6);
}

TEST(Training, InitLossNearLogClasses) {
  std::mt19937_64 rng(3);
  for (int classes : {2, 3, 5, 10}) {
    const NetworkSpec s = parse_netspec("input 3x12x12\nconv out=8 k=3\nrelu\nmaxpool k=2 s=2\nconv out=8 k=3\nrelu\nfc out=" +
                                        std::to_string(classes) + "\nsoftmax\n");
    double total = 0.0;
    const int n = 20;
    for (int i = 0; i < n; ++i) {
      const Weights w = init_weights(s, rng());
      total += sample_loss(s, w, oracle::random_tensor({3, 12, 12}, rng, 0.0f, 1.0f), i % classes);
    }
    EXPECT_NEAR(total / n, std::log(static_cast<double>(classes)), 0.2 * std::log(static_cast<double>(classes)));
  }
}

TEST(Training, SmallStepDescends) {
  const NetworkSpec s = parse_netspec("input 2x6x6\nconv out=3 k=3\nprelu\nfire s=2 e1=2 e3=2\nfc out=2\nsoftmax\n");
  std::mt19937_64 rng(4);
  Weights w = init_weights(s, 4);
  std::vector<std::pair<Tensor, int>> batch;
  for (int i = 0; i < 4; ++i) batch.emplace_back(oracle::random_tensor({2, 6, 6}, rng), i % 2);
  auto batch_loss = [&](const Weights& ww) {
    double l = 0.0;
    for (const auto& [x, y] : batch) l += sample_loss(s, ww, x, y);
    return l;
  };
  Weights g = zeros_like(w);
  for (const auto& [x, y] : batch) {
    const Backprop bp = backward(s, w, x, y);
    for (std::size_t l = 0; l < g.layers.size(); ++l)
      for (std::size_t t = 0; t < g.layers[l].tensors.size(); ++t)
        for (std::size_t i = 0; i < g.layers[l].tensors[t].size(); ++i)
          g.layers[l].tensors[t][i] += bp.grads.layers[l].tensors[t][i];
  }
  const double before = batch_loss(w);
  Weights v = zeros_like(w);
  TrainConfig cfg;
  cfg.learning_rate = 1e-4f;
  cfg.momentum = 0.0f;
  sgd_step(w, g, v, cfg);
  EXPECT_LT(batch_loss(w), before);
}

TEST(Training, SeparableToyReachesFullAccuracy) {
  const NetworkSpec s = parse_netspec("input 1x6x6\nconv out=2 k=3\nrelu\nfc out=2\nsoftmax\n");
  const Dataset ds = brightness_set(20, 5);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.batch_size = 4;
  cfg.seed = 3;
  const TrainResult r = train(s, ds, cfg);
  ASSERT_EQ(r.history.size(), 20u);
  EXPECT_EQ(r.history.back().train_accuracy, 1.0);
  EXPECT_EQ(evaluate(s, r.weights, ds).accuracy, 1.0);
}

TEST(Training, ZeroLearningRateKeepsInit) {
  const NetworkSpec s = parse_netspec("input 1x6x6\nconv out=2 k=3\nrelu\nfc out=2\nsoftmax\n");
  const Dataset ds = brightness_set(5, 6);
  TrainConfig cfg;
  cfg.learning_rate = 0.0f;
  cfg.epochs = 2;
  const TrainResult r = train(s, ds, cfg);
  const Weights init = init_weights(s, cfg.seed);
  EXPECT_EQ(r.weights, init);
  EXPECT_EQ(evaluate(s, r.weights, ds).accuracy, evaluate(s, init, ds).accuracy);
}

TEST(Training, SameSeedSameWeights) {
  const NetworkSpec s = parse_netspec("input 1x6x6\nconv out=2 k=3\nrelu\nmaxpool k=2 s=2\nfc out=2\nsoftmax\n");
  const Dataset ds = brightness_set(8, 7);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 11;
  EXPECT_EQ(train(s, ds, cfg).weights, train(s, ds, cfg).weights);
  TrainConfig other = cfg;
  other.seed = 12;
  EXPECT_NE(train(s, ds, cfg).weights, train(s, ds, other).weights);
}

TEST(Training, ShapeMismatchAndBadConfig) {
  const NetworkSpec s = parse_netspec("input 1x5x5\nfc out=2\nsoftmax\n");
  const Dataset ds = brightness_set(2, 1);
  EXPECT_THROW(train(s, ds, TrainConfig{}), ShapeError);
  TrainConfig bad;
  bad.epochs = 0;
  EXPECT_THROW(bad.validate(), ArgumentError);
}

TEST(Training, HistoryCsv) {
  std::vector<EpochStats> h{{1, 0.5, 0.75, -1.0}, {2, 0.25, 1.0, 0.5}};
  EXPECT_EQ(history_csv(h), "epoch,loss,train_acc,val_acc\n1,0.5,0.75,\n2,0.25,1,0.5\n");
}

TEST(Evaluate, PerfectPredictor) {
  const std::vector<int> labels{0, 1, 2, 0, 1, 2};
  const Evaluation e = score_predictions(labels, labels, 3);
  EXPECT_EQ(e.accuracy, 1.0);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_EQ(e.confusion[i][j], i == j ? 2 : 0);
}

TEST(Evaluate, ConstantPredictor) {
  const std::vector<int> labels{0, 1, 0, 1}, pred{1, 1, 1, 1};
  EXPECT_EQ(score_predictions(pred, labels, 2).accuracy, 0.5);
}

TEST(Evaluate, HandCheckedSet) {
  const std::vector<int> labels{0, 1, 1, 0}, pred{0, 1, 0, 1};
  // correct: items 0 and 1 -> 2 of 4.
  const Evaluation e = score_predictions(pred, labels, 2);
  EXPECT_EQ(e.accuracy, 0.5);
  EXPECT_EQ(e.confusion[1][0], 1);
  EXPECT_EQ(e.confusion[0][1], 1);
  EXPECT_THROW(score_predictions(std::vector<int>{}, std::vector<int>{}, 2), ArgumentError);
}

TEST(Evaluate, ArgmaxTiesGoLow) {
  const float v[] = {0.2f, 0.4f, 0.4f};
  EXPECT_EQ(argmax(v), 1);
}
