#include "bitconv/bitconv.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <iomanip>
#include <memory>
#include <new>
#include <random>
#include <sstream>
#include <string>

#include "bitconv/error.hpp"
#include "bitconv/network.hpp"
#include "bitconv/pareto.hpp"
#include "bitconv/proposals.hpp"
#include "bitconv/synth.hpp"
#include "bitconv/training.hpp"

struct bc_network {
  bitconv::NetworkSpec spec;
};

struct bc_weights {
  bitconv::Weights weights;
};

struct bc_dataset {
  bitconv::Dataset data;
};

namespace {

thread_local std::string g_last_error;

bc_status code_for(bitconv::ErrorCode code) {
  switch (code) {
    case bitconv::ErrorCode::Shape: return BC_ERR_SHAPE;
    case bitconv::ErrorCode::Index: return BC_ERR_INDEX;
    case bitconv::ErrorCode::Argument: return BC_ERR_ARGUMENT;
    case bitconv::ErrorCode::Parse: return BC_ERR_PARSE;
    case bitconv::ErrorCode::Format: return BC_ERR_FORMAT;
    case bitconv::ErrorCode::Io: return BC_ERR_IO;
    case bitconv::ErrorCode::Numeric: return BC_ERR_NUMERIC;
    case bitconv::ErrorCode::Internal: return BC_ERR_INTERNAL;
  }
  return BC_ERR_INTERNAL;
}

bc_status fail(bc_status status, std::string message) {
  g_last_error = std::move(message);
  return status;
}

template <class F>
bc_status guarded(F&& body) {
  try {
    body();
    return BC_OK;
  } catch (const bitconv::Error& e) {
    return fail(code_for(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(BC_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(BC_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(BC_ERR_INTERNAL, "unknown error");
  }
}

char* duplicate(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void put(char** out, const std::string& s) {
  if (out) *out = duplicate(s);
}

template <class T>
void require(const T* p, const char* what) {
  if (!p) throw bitconv::ArgumentError(std::string(what) + " must not be null");
}

bitconv::DetectConfig to_detect_config(const bc_detect_config& c) {
  bitconv::DetectConfig d;
  d.proposals.spacing = c.spacing;
  d.proposals.min_run = c.min_run;
  d.proposals.margin_px = c.margin_px;
  d.proposals.min_box = c.min_box;
  d.proposals.green.margin = c.green_margin;
  d.proposals.green.min_brightness = c.min_brightness;
  d.side = c.side;
  d.threshold = c.threshold;
  d.positive_label = c.positive_label;
  d.use_binary = c.use_binary != 0;
  return d;
}

struct Summary {
  double min = 0.0, mean = 0.0, max = 0.0;
};

Summary summarize(const std::vector<float>& v) {
  Summary s;
  if (v.empty()) return s;
  s.min = s.max = v.front();
  double sum = 0.0;
  for (float a : v) {
    s.min = std::min<double>(s.min, a);
    s.max = std::max<double>(s.max, a);
    sum += a;
  }
  s.mean = sum / static_cast<double>(v.size());
  return s;
}

std::vector<std::vector<double>> layer_samples(const bitconv::InferenceModel& model, const bitconv::Tensor& x,
                                               int reps, bool use_binary) {
  std::vector<std::vector<double>> samples(model.spec().layers.size());
  bitconv::LayerTimings t;
  for (int i = 0; i < 2; ++i) (void)model.run(x, use_binary, &t);
  for (int r = 0; r < reps; ++r) {
    (void)model.run(x, use_binary, &t);
    for (std::size_t l = 0; l < samples.size(); ++l) samples[l].push_back(t.ms[l]);
  }
  return samples;
}

}  // namespace

extern "C" {

const char* bc_last_error(void) { return g_last_error.c_str(); }

const char* bc_version(void) { return "0.1.0"; }

const char* bc_status_name(bc_status status) {
  switch (status) {
    case BC_OK: return "ok";
    case BC_ERR_SHAPE: return "shape error";
    case BC_ERR_INDEX: return "index error";
    case BC_ERR_ARGUMENT: return "argument error";
    case BC_ERR_PARSE: return "parse error";
    case BC_ERR_FORMAT: return "format error";
    case BC_ERR_IO: return "i/o error";
    case BC_ERR_NUMERIC: return "numeric error";
    case BC_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void bc_string_free(char* s) { std::free(s); }

bc_status bc_network_parse(const char* text, bc_network** out) {
  return guarded([&] {
    require(text, "text");
    require(out, "out");
    *out = new bc_network{bitconv::parse_netspec(text)};
  });
}

bc_status bc_network_load(const char* path, bc_network** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new bc_network{bitconv::load_netspec(path)};
  });
}

void bc_network_free(bc_network* net) { delete net; }

bc_status bc_network_to_text(const bc_network* net, char** out) {
  return guarded([&] {
    require(net, "network");
    require(out, "out");
    *out = duplicate(bitconv::to_text(net->spec));
  });
}

bc_status bc_network_info_get(const bc_network* net, bc_network_info* out) {
  return guarded([&] {
    require(net, "network");
    require(out, "out");
    out->input_c = net->spec.input.c;
    out->input_h = net->spec.input.h;
    out->input_w = net->spec.input.w;
    out->classes = net->spec.classes;
    out->layers = static_cast<int>(net->spec.layers.size());
    out->params = bitconv::count_params(net->spec);
    out->macs = bitconv::estimate_macs(net->spec);
  });
}

bc_status bc_network_warnings(const bc_network* net, char** out) {
  return guarded([&] {
    require(net, "network");
    require(out, "out");
    std::string text;
    for (const auto& w : bitconv::validate_binarization(net->spec)) text += w + "\n";
    *out = duplicate(text);
  });
}

bc_status bc_weights_init(const bc_network* net, uint64_t seed, bc_weights** out) {
  return guarded([&] {
    require(net, "network");
    require(out, "out");
    *out = new bc_weights{bitconv::init_weights(net->spec, seed)};
  });
}

bc_status bc_weights_load(const bc_network* net, const char* path, bc_weights** out) {
  return guarded([&] {
    require(net, "network");
    require(path, "path");
    require(out, "out");
    *out = new bc_weights{bitconv::load_weights(net->spec, path)};
  });
}

bc_status bc_weights_save(const bc_network* net, const bc_weights* weights, const char* path) {
  return guarded([&] {
    require(net, "network");
    require(weights, "weights");
    require(path, "path");
    bitconv::save_weights(net->spec, weights->weights, path);
  });
}

void bc_weights_free(bc_weights* weights) { delete weights; }

bc_status bc_forward(const bc_network* net, const bc_weights* weights, const float* input, size_t input_len,
                     int use_binary, float* output, size_t output_len, size_t* written) {
  return guarded([&] {
    require(net, "network");
    require(weights, "weights");
    require(input, "input");
    const auto& in = net->spec.input;
    if (input_len != in.size()) {
      throw bitconv::ShapeError("input has " + std::to_string(input_len) + " values, network expects " +
                                std::to_string(in.size()));
    }
    const bitconv::Tensor x({in.c, in.h, in.w}, std::vector<float>(input, input + input_len));
    const bitconv::InferenceModel model(net->spec, weights->weights);
    const bitconv::Tensor y = model.run(x, use_binary != 0);
    if (written) *written = y.size();
    if (output) std::memcpy(output, y.raw(), std::min(output_len, y.size()) * sizeof(float));
  });
}

bc_status bc_dataset_load(const char* root, bc_dataset** out) {
  return guarded([&] {
    require(root, "root");
    require(out, "out");
    *out = new bc_dataset{bitconv::load_dataset(root)};
  });
}

bc_status bc_dataset_info_get(const bc_dataset* ds, bc_dataset_info* out) {
  return guarded([&] {
    require(ds, "dataset");
    require(out, "out");
    out->count = ds->data.size();
    out->classes = ds->data.classes();
    out->c = ds->data.image_shape.c;
    out->h = ds->data.image_shape.h;
    out->w = ds->data.image_shape.w;
  });
}

void bc_dataset_free(bc_dataset* ds) { delete ds; }

void bc_train_config_default(bc_train_config* cfg) {
  if (!cfg) return;
  const bitconv::TrainConfig d;
  cfg->learning_rate = d.learning_rate;
  cfg->momentum = d.momentum;
  cfg->epochs = d.epochs;
  cfg->batch_size = d.batch_size;
  cfg->seed = d.seed;
  cfg->validation_fraction = 0.0;
}

bc_status bc_train(const bc_network* net, const bc_dataset* ds, const bc_train_config* cfg, bc_weights** out,
                   char** log_csv) {
  return guarded([&] {
    require(net, "network");
    require(ds, "dataset");
    require(cfg, "config");
    require(out, "out");
    bitconv::TrainConfig tc;
    tc.learning_rate = cfg->learning_rate;
    tc.momentum = cfg->momentum;
    tc.epochs = cfg->epochs;
    tc.batch_size = cfg->batch_size;
    tc.seed = cfg->seed;
    if (!(cfg->validation_fraction >= 0.0 && cfg->validation_fraction < 1.0)) {
      throw bitconv::ArgumentError("validation fraction must be in [0,1)");
    }
    bitconv::TrainResult result;
    if (cfg->validation_fraction > 0.0) {
      const auto [train_set, val_set] = bitconv::split_dataset(ds->data, cfg->validation_fraction, cfg->seed);
      result = bitconv::train(net->spec, train_set, tc, &val_set);
    } else {
      result = bitconv::train(net->spec, ds->data, tc);
    }
    auto w = std::make_unique<bc_weights>(bc_weights{std::move(result.weights)});
    put(log_csv, bitconv::history_csv(result.history));
    *out = w.release();
  });
}

bc_status bc_evaluate(const bc_network* net, const bc_weights* weights, const bc_dataset* ds, int use_binary,
                      double* accuracy, char** confusion_csv) {
  return guarded([&] {
    require(net, "network");
    require(weights, "weights");
    require(ds, "dataset");
    const bitconv::InferenceModel model(net->spec, weights->weights);
    const bitconv::Evaluation e = bitconv::evaluate(model, ds->data, use_binary != 0);
    if (accuracy) *accuracy = e.accuracy;
    if (confusion_csv) {
      std::ostringstream os;
      os << "true\\predicted";
      for (const auto& name : ds->data.class_names) os << ',' << name;
      os << '\n';
      for (std::size_t i = 0; i < e.confusion.size(); ++i) {
        os << (i < ds->data.class_names.size() ? ds->data.class_names[i] : std::to_string(i));
        for (int v : e.confusion[i]) os << ',' << v;
        os << '\n';
      }
      *confusion_csv = duplicate(os.str());
    }
  });
}

bc_status bc_bench(const bc_network* net, const bc_weights* weights, int reps, int use_binary, int compare,
                   char** csv) {
  return guarded([&] {
    require(net, "network");
    require(weights, "weights");
    require(csv, "csv");
    if (reps < 5) throw bitconv::ArgumentError("reps must be at least 5");
    const bitconv::InferenceModel model(net->spec, weights->weights);
    const auto& in = net->spec.input;
    std::mt19937 rng(0);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    std::vector<float> data(in.size());
    for (float& v : data) v = dist(rng);
    const bitconv::Tensor x({in.c, in.h, in.w}, std::move(data));

    std::ostringstream os;
    os << std::setprecision(6);
    const auto& layers = net->spec.layers;
    if (compare) {
      const auto fl = layer_samples(model, x, reps, false);
      const auto bi = layer_samples(model, x, reps, true);
      os << "layer,kind,float_ms,binary_ms,ratio\n";
      for (std::size_t l = 0; l < layers.size(); ++l) {
        if (!layers[l].binary) continue;
        const double f = bitconv::median(fl[l]);
        const double b = std::max(bitconv::median(bi[l]), 1e-9);
        os << l << ',' << bitconv::kind_name(layers[l].kind) << ',' << f << ',' << b << ',' << f / b << '\n';
      }
    } else {
      const auto samples = layer_samples(model, x, reps, use_binary != 0);
      std::vector<double> totals(static_cast<std::size_t>(reps), 0.0);
      os << "layer,kind,median_ms\n";
      for (std::size_t l = 0; l < layers.size(); ++l) {
        for (int r = 0; r < reps; ++r) totals[static_cast<std::size_t>(r)] += samples[l][static_cast<std::size_t>(r)];
        os << l << ',' << bitconv::kind_name(layers[l].kind) << ',' << bitconv::median(samples[l]) << '\n';
      }
      os << "total,," << bitconv::median(totals) << '\n';
    }
    *csv = duplicate(os.str());
  });
}

bc_status bc_binarize_report(const bc_network* net, const bc_weights* weights, char** csv) {
  return guarded([&] {
    require(net, "network");
    require(weights, "weights");
    require(csv, "csv");
    const bitconv::InferenceModel model(net->spec, weights->weights);
    std::ostringstream os;
    os << std::setprecision(6);
    os << "layer,kind,conv,binary,filters,alpha_min,alpha_mean,alpha_max,float_bytes,packed_bytes,memory_ratio\n";
    std::size_t float_total = 0, packed_total = 0;
    const auto& layers = net->spec.layers;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      if (!layers[l].conv_bearing()) continue;
      const std::size_t n_convs = layers[l].kind == bitconv::LayerKind::Conv ? 1
                                  : layers[l].kind == bitconv::LayerKind::Fire ? 3
                                                                              : 4;
      for (std::size_t k = 0; k < n_convs; ++k) {
        const bitconv::BinarizedFilterBank bank = bitconv::binarize_weights(model.conv_params(l, k));
        const Summary s = summarize(bank.alpha);
        const std::size_t float_bytes = bank.geometry.weight_count() * sizeof(float);
        const std::size_t packed = bank.storage_bytes();
        float_total += float_bytes;
        packed_total += packed;
        os << l << ',' << bitconv::kind_name(layers[l].kind) << ',' << k << ',' << (layers[l].binary ? 1 : 0) << ','
           << bank.alpha.size() << ',' << s.min << ',' << s.mean << ',' << s.max << ',' << float_bytes << ',' << packed
           << ',' << static_cast<double>(packed) / static_cast<double>(float_bytes) << '\n';
      }
    }
    if (float_total > 0) {
      os << "total,,,,,,,," << float_total << ',' << packed_total << ','
         << static_cast<double>(packed_total) / static_cast<double>(float_total) << '\n';
    }
    *csv = duplicate(os.str());
  });
}

void bc_search_config_default(bc_search_config* cfg) {
  if (!cfg) return;
  const bitconv::SearchConfig s;
  const bitconv::EvaluatorOptions e;
  cfg->threshold_ms = s.threshold_ms;
  cfg->budget = s.budget;
  cfg->seed = s.seed;
  cfg->jobs = s.jobs;
  cfg->patience = s.patience;
  cfg->remedies = s.remedies ? 1 : 0;
  cfg->accuracy_drop = s.accuracy_drop;
  cfg->noise_band = s.noise_band;
  cfg->validation_fraction = 0.25;
  cfg->epochs = e.train.epochs;
  cfg->learning_rate = e.train.learning_rate;
  cfg->momentum = e.train.momentum;
  cfg->batch_size = e.train.batch_size;
  cfg->timing_reps = e.timing_reps;
  cfg->mac_timing = 0;
  cfg->ns_per_mac = e.ns_per_mac;
  cfg->use_binary = e.use_binary ? 1 : 0;
}

bc_status bc_search(const bc_network* base, const bc_dataset* ds, const bc_search_config* cfg, const char* out_dir,
                    size_t* front_size, size_t* evaluated) {
  return guarded([&] {
    require(base, "network");
    require(ds, "dataset");
    require(cfg, "config");
    require(out_dir, "out_dir");
    bitconv::SearchConfig sc;
    sc.threshold_ms = cfg->threshold_ms;
    sc.budget = cfg->budget;
    sc.seed = cfg->seed;
    sc.jobs = cfg->jobs;
    sc.patience = cfg->patience;
    sc.remedies = cfg->remedies != 0;
    sc.accuracy_drop = cfg->accuracy_drop;
    sc.noise_band = cfg->noise_band;
    bitconv::EvaluatorOptions opts;
    opts.train.epochs = cfg->epochs;
    opts.train.learning_rate = cfg->learning_rate;
    opts.train.momentum = cfg->momentum;
    opts.train.batch_size = cfg->batch_size;
    opts.timing_reps = cfg->timing_reps;
    opts.timing = cfg->mac_timing ? bitconv::TimingSource::MacModel : bitconv::TimingSource::Measured;
    opts.ns_per_mac = cfg->ns_per_mac;
    opts.use_binary = cfg->use_binary != 0;
    if (!(cfg->validation_fraction > 0.0 && cfg->validation_fraction < 1.0)) {
      throw bitconv::ArgumentError("validation fraction must be in (0,1)");
    }
    const bitconv::SearchResult result = bitconv::search(base->spec, ds->data, sc, opts, cfg->validation_fraction);
    bitconv::write_search_outputs(result, out_dir);
    if (front_size) *front_size = result.front.size();
    if (evaluated) *evaluated = result.ledger.size();
  });
}

void bc_detect_config_default(bc_detect_config* cfg) {
  if (!cfg) return;
  const bitconv::DetectConfig d;
  cfg->spacing = d.proposals.spacing;
  cfg->min_run = d.proposals.min_run;
  cfg->margin_px = d.proposals.margin_px;
  cfg->min_box = d.proposals.min_box;
  cfg->green_margin = d.proposals.green.margin;
  cfg->min_brightness = d.proposals.green.min_brightness;
  cfg->side = d.side;
  cfg->threshold = d.threshold;
  cfg->positive_label = d.positive_label;
  cfg->use_binary = d.use_binary ? 1 : 0;
}

bc_status bc_detect_file(const bc_network* net, const bc_weights* weights, const char* image_path,
                         const bc_detect_config* cfg, char** detections, char** timing_json) {
  return guarded([&] {
    require(net, "network");
    require(weights, "weights");
    require(image_path, "image path");
    bc_detect_config defaults;
    bc_detect_config_default(&defaults);
    const bitconv::DetectConfig dc = to_detect_config(cfg ? *cfg : defaults);
    dc.proposals.validate();
    const bitconv::Image image = bitconv::read_ppm(image_path);
    const bitconv::InferenceModel model(net->spec, weights->weights);
    const bitconv::DetectResult r = bitconv::detect(image, model, dc);
    std::string lines = bitconv::detections_text(r);
    std::string json = bitconv::timing_json(r.timing);
    char* d = detections ? duplicate(lines) : nullptr;
    if (timing_json) {
      try {
        *timing_json = duplicate(json);
      } catch (...) {
        std::free(d);
        throw;
      }
    }
    if (detections) *detections = d;
  });
}

double bc_total_time(double t_prop_ms, double t_inf_ms, double avg_proposals) {
  return bitconv::total_time({t_prop_ms, t_inf_ms, avg_proposals});
}

bc_status bc_synth_patches(const char* root, size_t count, uint64_t seed, int side) {
  return guarded([&] {
    require(root, "root");
    if (count == 0) throw bitconv::ArgumentError("count must be positive");
    if (side < 4) throw bitconv::ArgumentError("side must be at least 4");
    bitconv::save_dataset(bitconv::synth::make_patch_dataset(count, seed, side), root);
  });
}

bc_status bc_synth_scenes(const char* dir, size_t count, uint64_t seed, char** truth_csv) {
  return guarded([&] {
    require(dir, "dir");
    if (count == 0) throw bitconv::ArgumentError("count must be positive");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw bitconv::IoError("cannot create '" + std::string(dir) + "': " + ec.message());
    std::mt19937_64 rng(seed);
    std::ostringstream os;
    os << "image,shape,x0,y0,x1,y1\n";
    for (std::size_t i = 0; i < count; ++i) {
      const bitconv::synth::Scene scene = bitconv::synth::make_scene({}, rng);
      std::ostringstream name;
      name << "scene_" << std::setw(4) << std::setfill('0') << i << ".ppm";
      bitconv::write_ppm(scene.image, (std::filesystem::path(dir) / name.str()).string());
      for (const auto& o : scene.objects) {
        os << name.str() << ',' << (o.shape == bitconv::synth::ObjectShape::Square ? "square" : "disk") << ','
           << o.box.x0 << ',' << o.box.y0 << ',' << o.box.x1 << ',' << o.box.y1 << '\n';
      }
    }
    put(truth_csv, os.str());
  });
}

}  // extern "C"
