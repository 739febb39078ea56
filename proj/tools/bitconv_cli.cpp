#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bitconv/bitconv.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitUser = 2;
constexpr int kExitInternal = 3;

struct Failure {
  bc_status status;
  std::string message;
};

void check(bc_status s) {
  if (s != BC_OK) throw Failure{s, bc_last_error()};
}

void user_error(const std::string& message) { throw Failure{BC_ERR_ARGUMENT, message}; }

struct OwnedString {
  char* p = nullptr;
  ~OwnedString() { bc_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

using Network = std::unique_ptr<bc_network, decltype(&bc_network_free)>;
using WeightsPtr = std::unique_ptr<bc_weights, decltype(&bc_weights_free)>;
using DatasetPtr = std::unique_ptr<bc_dataset, decltype(&bc_dataset_free)>;

Network load_network(const std::string& path) {
  bc_network* n = nullptr;
  check(bc_network_load(path.c_str(), &n));
  Network net(n, bc_network_free);
  OwnedString warnings;
  check(bc_network_warnings(net.get(), &warnings.p));
  if (!warnings.str().empty()) std::cerr << "warning: " << warnings.str();
  return net;
}

WeightsPtr load_weights(const bc_network* net, const std::string& path) {
  bc_weights* w = nullptr;
  check(bc_weights_load(net, path.c_str(), &w));
  return WeightsPtr(w, bc_weights_free);
}

WeightsPtr fresh_weights(const bc_network* net, std::uint64_t seed) {
  bc_weights* w = nullptr;
  check(bc_weights_init(net, seed, &w));
  return WeightsPtr(w, bc_weights_free);
}

DatasetPtr load_dataset(const std::string& path) {
  bc_dataset* d = nullptr;
  check(bc_dataset_load(path.c_str(), &d));
  return DatasetPtr(d, bc_dataset_free);
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out || !(out << text)) throw Failure{BC_ERR_IO, "cannot write '" + path.string() + "'"};
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Failure{BC_ERR_IO, "cannot create '" + dir.string() + "': " + ec.message()};
}

std::uint64_t default_seed() { return 1; }

struct Common {
  std::uint64_t seed = default_seed();
};

void add_seed(CLI::App* sub, Common& common) {
  sub->add_option("--seed", common.seed, "Random seed")->envname("BITCONV_SEED")->capture_default_str();
}

// train ---------------------------------------------------------------------

struct TrainArgs {
  std::string netspec, dataset, out_dir = ".", weights, log;
  bc_train_config cfg{};
  Common common;
};

void run_train(TrainArgs& a) {
  auto net = load_network(a.netspec);
  auto ds = load_dataset(a.dataset);
  a.cfg.seed = a.common.seed;
  bc_weights* w = nullptr;
  OwnedString log;
  check(bc_train(net.get(), ds.get(), &a.cfg, &w, &log.p));
  WeightsPtr weights(w, bc_weights_free);
  ensure_dir(a.out_dir);
  const fs::path weights_path = a.weights.empty() ? fs::path(a.out_dir) / "model.weights" : fs::path(a.weights);
  const fs::path log_path = a.log.empty() ? fs::path(a.out_dir) / "train.csv" : fs::path(a.log);
  check(bc_weights_save(net.get(), weights.get(), weights_path.string().c_str()));
  write_file(log_path, log.str());
  std::cout << "wrote " << weights_path.string() << " and " << log_path.string() << "\n";
}

// eval ----------------------------------------------------------------------

struct EvalArgs {
  std::string netspec, weights, dataset;
  bool float_path = false;
};

void run_eval(const EvalArgs& a) {
  auto net = load_network(a.netspec);
  auto w = load_weights(net.get(), a.weights);
  auto ds = load_dataset(a.dataset);
  double accuracy = 0.0;
  OwnedString confusion;
  check(bc_evaluate(net.get(), w.get(), ds.get(), a.float_path ? 0 : 1, &accuracy, &confusion.p));
  std::printf("accuracy,%.6f\n", accuracy);
  std::cout << confusion.str();
}

// bench ---------------------------------------------------------------------

struct BenchArgs {
  std::string netspec, weights, binary = "on";
  int reps = 20;
  bool compare = false;
  Common common;
};

void run_bench(const BenchArgs& a) {
  auto net = load_network(a.netspec);
  auto w = a.weights.empty() ? fresh_weights(net.get(), a.common.seed) : load_weights(net.get(), a.weights);
  OwnedString csv;
  check(bc_bench(net.get(), w.get(), a.reps, a.binary == "on", a.compare, &csv.p));
  std::cout << csv.str();
}

// search --------------------------------------------------------------------

struct SearchArgs {
  std::string netspec, dataset, out_dir = "search_out", timing = "measured";
  bool no_remedies = false;
  bool float_path = false;
  bc_search_config cfg{};
  Common common;
};

void run_search(SearchArgs& a) {
  auto net = load_network(a.netspec);
  auto ds = load_dataset(a.dataset);
  a.cfg.seed = a.common.seed;
  a.cfg.remedies = a.no_remedies ? 0 : 1;
  a.cfg.use_binary = a.float_path ? 0 : 1;
  a.cfg.mac_timing = a.timing == "macs" ? 1 : 0;
  std::size_t front = 0, evaluated = 0;
  check(bc_search(net.get(), ds.get(), &a.cfg, a.out_dir.c_str(), &front, &evaluated));
  if (front == 0) {
    std::cerr << "warning: no candidate met the " << a.cfg.threshold_ms << " ms threshold; front is empty\n";
  }
  std::cout << "evaluated " << evaluated << " candidates, front has " << front << " members; results in "
            << a.out_dir << "\n";
}

// detect --------------------------------------------------------------------

struct DetectArgs {
  std::string input, netspec, weights;
  bool float_path = false;
  bc_detect_config cfg{};
};

void run_detect(DetectArgs& a) {
  auto net = load_network(a.netspec);
  auto w = load_weights(net.get(), a.weights);
  a.cfg.use_binary = a.float_path ? 0 : 1;

  std::vector<fs::path> images;
  const bool is_dir = fs::is_directory(a.input);
  if (is_dir) {
    for (const auto& entry : fs::directory_iterator(a.input)) {
      if (entry.is_regular_file() && entry.path().extension() == ".ppm") images.push_back(entry.path());
    }
    std::sort(images.begin(), images.end());
    if (images.empty()) user_error("no .ppm images in '" + a.input + "'");
  } else {
    images.emplace_back(a.input);
  }
  for (const auto& path : images) {
    OwnedString lines, json;
    check(bc_detect_file(net.get(), w.get(), path.string().c_str(), &a.cfg, &lines.p, &json.p));
    if (is_dir) std::cout << "# " << path.string() << "\n";
    std::cout << lines.str() << json.str() << "\n";
  }
}

// binarize ------------------------------------------------------------------

struct BinarizeArgs {
  std::string netspec, weights;
};

void run_binarize(const BinarizeArgs& a) {
  auto net = load_network(a.netspec);
  auto w = load_weights(net.get(), a.weights);
  OwnedString csv;
  check(bc_binarize_report(net.get(), w.get(), &csv.p));
  std::cout << csv.str();
}

// synth ---------------------------------------------------------------------

struct SynthArgs {
  std::string dir;
  std::size_t count = 1000;
  int side = 24;
  Common common;
};

void run_synth_patches(const SynthArgs& a) {
  check(bc_synth_patches(a.dir.c_str(), a.count, a.common.seed, a.side));
  std::cout << "wrote " << a.count << " patches to " << a.dir << "\n";
}

void run_synth_scenes(const SynthArgs& a) {
  OwnedString truth;
  check(bc_synth_scenes(a.dir.c_str(), a.count, a.common.seed, &truth.p));
  write_file(fs::path(a.dir) / "truth.csv", truth.str());
  std::cout << "wrote " << a.count << " scenes to " << a.dir << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bitconv: binary convolution toolkit"};
  app.require_subcommand(1, 1);
  app.set_config("--config", "", "TOML/INI file with option defaults");
  app.set_version_flag("--version", std::string(bc_version()));

  TrainArgs train;
  bc_train_config_default(&train.cfg);
  auto* t = app.add_subcommand("train", "Train a network on a dataset directory");
  t->add_option("netspec", train.netspec, "Network description")->required();
  t->add_option("dataset", train.dataset, "Dataset root (one subdirectory per class)")->required();
  t->add_option("--out-dir", train.out_dir, "Directory for model.weights and train.csv")->capture_default_str();
  t->add_option("--weights", train.weights, "Weights output path (overrides --out-dir)");
  t->add_option("--log", train.log, "CSV log path (overrides --out-dir)");
  t->add_option("--epochs", train.cfg.epochs)->capture_default_str();
  t->add_option("--lr", train.cfg.learning_rate)->capture_default_str();
  t->add_option("--momentum", train.cfg.momentum)->capture_default_str();
  t->add_option("--batch", train.cfg.batch_size)->capture_default_str();
  t->add_option("--val-fraction", train.cfg.validation_fraction, "Held-out share reported in the log")
      ->capture_default_str();
  add_seed(t, train.common);
  t->callback([&] { run_train(train); });

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Accuracy and confusion matrix on a dataset");
  e->add_option("netspec", eval.netspec)->required();
  e->add_option("weights", eval.weights)->required();
  e->add_option("dataset", eval.dataset)->required();
  e->add_flag("--float", eval.float_path, "Ignore binary flags and run in full precision");
  e->callback([&] { run_eval(eval); });

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "Per-layer median forward times as CSV");
  b->add_option("netspec", bench.netspec)->required();
  b->add_option("weights", bench.weights, "Weights file (seeded init when omitted)");
  b->add_option("--reps", bench.reps)->capture_default_str()->check(CLI::Range(5, 1000000));
  b->add_option("--binary", bench.binary)->check(CLI::IsMember({"on", "off"}))->capture_default_str();
  b->add_flag("--compare", bench.compare, "Float vs binary ratio per binary layer");
  add_seed(b, bench.common);
  b->callback([&] { run_bench(bench); });

  SearchArgs search;
  bc_search_config_default(&search.cfg);
  auto* s = app.add_subcommand("search", "Pareto search over resized variants of a base network");
  s->add_option("netspec", search.netspec)->required();
  s->add_option("dataset", search.dataset)->required();
  s->add_option("--threshold-ms", search.cfg.threshold_ms)->capture_default_str();
  s->add_option("--budget", search.cfg.budget, "Candidate evaluations, base included")->capture_default_str();
  s->add_option("--out-dir", search.out_dir)->capture_default_str();
  s->add_option("--jobs", search.cfg.jobs, "Candidates evaluated in parallel")->capture_default_str();
  s->add_option("--patience", search.cfg.patience)->capture_default_str();
  s->add_option("--accuracy-drop", search.cfg.accuracy_drop)->capture_default_str();
  s->add_option("--noise-band", search.cfg.noise_band)->capture_default_str();
  s->add_option("--val-fraction", search.cfg.validation_fraction)->capture_default_str();
  s->add_option("--epochs", search.cfg.epochs)->capture_default_str();
  s->add_option("--lr", search.cfg.learning_rate)->capture_default_str();
  s->add_option("--momentum", search.cfg.momentum)->capture_default_str();
  s->add_option("--batch", search.cfg.batch_size)->capture_default_str();
  s->add_option("--reps", search.cfg.timing_reps)->capture_default_str();
  s->add_option("--timing", search.timing, "measured (wall clock) or macs (deterministic)")
      ->check(CLI::IsMember({"measured", "macs"}))
      ->capture_default_str();
  s->add_option("--ns-per-mac", search.cfg.ns_per_mac)->capture_default_str();
  s->add_flag("--no-remedies", search.no_remedies, "Skip PReLU / extended fire after accuracy drops");
  s->add_flag("--float", search.float_path, "Score accuracy in full precision");
  add_seed(s, search.common);
  s->callback([&] { run_search(search); });

  DetectArgs detect;
  bc_detect_config_default(&detect.cfg);
  auto* d = app.add_subcommand("detect", "Proposals plus classification on a PPM image or directory");
  d->add_option("input", detect.input, "P6 image or directory of .ppm files")->required();
  d->add_option("netspec", detect.netspec)->required();
  d->add_option("weights", detect.weights)->required();
  d->add_option("--spacing", detect.cfg.spacing)->capture_default_str();
  d->add_option("--min-run", detect.cfg.min_run)->capture_default_str();
  d->add_option("--margin", detect.cfg.margin_px)->capture_default_str();
  d->add_option("--min-box", detect.cfg.min_box)->capture_default_str();
  d->add_option("--green-margin", detect.cfg.green_margin)->capture_default_str();
  d->add_option("--min-brightness", detect.cfg.min_brightness)->capture_default_str();
  d->add_option("--side", detect.cfg.side, "Crop side fed to the network")->capture_default_str();
  d->add_option("--threshold", detect.cfg.threshold)->capture_default_str();
  d->add_option("--positive-label", detect.cfg.positive_label)->capture_default_str();
  d->add_flag("--float", detect.float_path);
  d->callback([&] { run_detect(detect); });

  BinarizeArgs binarize;
  auto* z = app.add_subcommand("binarize", "Per-layer alpha statistics and memory ratio");
  z->add_option("netspec", binarize.netspec)->required();
  z->add_option("weights", binarize.weights)->required();
  z->callback([&] { run_binarize(binarize); });

  SynthArgs synth;
  auto* y = app.add_subcommand("synth", "Generate synthetic demo data");
  y->require_subcommand(1, 1);
  auto* yp = y->add_subcommand("patches", "Two-class disk/square patch dataset");
  yp->add_option("dir", synth.dir)->required();
  yp->add_option("--count", synth.count)->capture_default_str();
  yp->add_option("--side", synth.side)->capture_default_str();
  add_seed(yp, synth.common);
  yp->callback([&] { run_synth_patches(synth); });
  auto* ys = y->add_subcommand("scenes", "Green-field scenes with planted objects");
  ys->add_option("dir", synth.dir)->required();
  ys->add_option("--count", synth.count)->capture_default_str();
  add_seed(ys, synth.common);
  ys->callback([&] { run_synth_scenes(synth); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForVersion& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return kExitUser;
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << "\n";
    return f.status == BC_ERR_INTERNAL ? kExitInternal : kExitUser;
  } catch (const std::exception& ex) {
    std::cerr << "internal error: " << ex.what() << "\n";
    return kExitInternal;
  }
  return 0;
}
