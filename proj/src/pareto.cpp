#include "bitconv/pareto.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <iomanip>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "bitconv/error.hpp"

namespace bitconv {

namespace fs = std::filesystem;

namespace {

constexpr TransformKind kAllKinds[] = {
    TransformKind::RemoveLayer,    TransformKind::ScaleFilters,       TransformKind::ReluToPrelu,
    TransformKind::FireToExtended, TransformKind::NonOverlappingPool, TransformKind::ShrinkInput,
};

struct KindName {
  TransformKind kind;
  std::string_view name;
  bool per_layer;
};

constexpr KindName kKindNames[] = {
    {TransformKind::RemoveLayer, "remove", true},  {TransformKind::ScaleFilters, "scale", true},
    {TransformKind::ReluToPrelu, "prelu", true},   {TransformKind::FireToExtended, "extend", true},
    {TransformKind::NonOverlappingPool, "pool", false}, {TransformKind::ShrinkInput, "shrink", false},
};

// Index of the last layer carrying class-producing parameters; it is never
// removed or resized.
int head_index(const NetworkSpec& spec) {
  for (int i = static_cast<int>(spec.layers.size()) - 1; i >= 0; --i) {
    const LayerSpec& l = spec.layers[static_cast<std::size_t>(i)];
    if (l.conv_bearing() || l.kind == LayerKind::FullyConnected) return i;
  }
  return -1;
}

int first_conv_index(const NetworkSpec& spec) {
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (spec.layers[i].conv_bearing()) return static_cast<int>(i);
  }
  return -1;
}

bool is_activation(const LayerSpec& l) { return l.kind == LayerKind::Relu || l.kind == LayerKind::PRelu; }

std::optional<NetworkSpec> checked(NetworkSpec spec) {
  for (LayerSpec& l : spec.layers) l.line = 0;
  try {
    validate(spec);
  } catch (const ShapeError&) {
    return std::nullopt;
  }
  return spec;
}

int scaled(int v, double factor, int floor_value) {
  const int s = static_cast<int>(std::ceil(v * factor - 1e-9));
  return std::min(v, std::max(s, floor_value));
}

}  // namespace

std::string to_string(const Transform& t) {
  for (const auto& k : kKindNames) {
    if (k.kind == t.kind) return k.per_layer ? std::string(k.name) + "@" + std::to_string(t.layer) : std::string(k.name);
  }
  return "?";
}

Transform parse_transform(std::string_view text) {
  const auto at = text.find('@');
  const std::string_view name = text.substr(0, at);
  for (const auto& k : kKindNames) {
    if (k.name != name) continue;
    Transform t{k.kind, -1};
    if (k.per_layer) {
      if (at == std::string_view::npos) throw ArgumentError("transform '" + std::string(text) + "' needs a layer");
      const std::string idx(text.substr(at + 1));
      try {
        std::size_t used = 0;
        t.layer = std::stoi(idx, &used);
        if (used != idx.size()) throw std::invalid_argument(idx);
      } catch (const std::exception&) {
        throw ArgumentError("bad layer index in transform '" + std::string(text) + "'");
      }
    } else if (at != std::string_view::npos) {
      throw ArgumentError("transform '" + std::string(name) + "' takes no layer");
    }
    return t;
  }
  throw ArgumentError("unknown transform '" + std::string(text) + "'");
}

std::string lineage_to_string(std::span<const Transform> lineage) {
  std::string s;
  for (const Transform& t : lineage) {
    if (!s.empty()) s += ';';
    s += to_string(t);
  }
  return s;
}

std::vector<Transform> parse_lineage(std::string_view text) {
  std::vector<Transform> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find(';', pos);
    if (end == std::string_view::npos) end = text.size();
    if (end > pos) out.push_back(parse_transform(text.substr(pos, end - pos)));
    pos = end + 1;
  }
  return out;
}

std::optional<NetworkSpec> apply_transform(const NetworkSpec& spec, const Transform& t,
                                           const TransformSettings& settings) {
  NetworkSpec out = spec;
  const int n = static_cast<int>(spec.layers.size());
  const bool layer_ok = t.layer >= 0 && t.layer < n;
  LayerSpec* layer = layer_ok ? &out.layers[static_cast<std::size_t>(t.layer)] : nullptr;

  switch (t.kind) {
    case TransformKind::RemoveLayer: {
      if (!layer) return std::nullopt;
      const bool kind_ok = layer->conv_bearing() || layer->kind == LayerKind::FullyConnected;
      if (!kind_ok || t.layer == first_conv_index(spec) || t.layer == head_index(spec)) return std::nullopt;
      auto first = out.layers.begin() + t.layer;
      auto last = first + 1;
      if (last != out.layers.end() && is_activation(*last)) ++last;
      out.layers.erase(first, last);
      break;
    }
    case TransformKind::ScaleFilters: {
      if (!layer || t.layer == head_index(spec)) return std::nullopt;
      const double f = settings.filter_scale;
      const int lo = settings.min_filters;
      if (layer->kind == LayerKind::Conv || layer->kind == LayerKind::FullyConnected) {
        layer->out = scaled(layer->out, f, lo);
      } else if (layer->is_fire()) {
        layer->squeeze = scaled(layer->squeeze, f, lo);
        layer->expand1 = scaled(layer->expand1, f, lo);
        layer->expand3 = scaled(layer->expand3, f, lo);
        if (layer->kind == LayerKind::ExtendedFire) layer->expand5 = scaled(layer->expand5, f, lo);
      } else {
        return std::nullopt;
      }
      if (*layer == spec.layers[static_cast<std::size_t>(t.layer)]) return std::nullopt;
      break;
    }
    case TransformKind::ReluToPrelu: {
      int first = -1;
      for (int i = 0; i < n && first < 0; ++i) {
        const LayerSpec& l = spec.layers[static_cast<std::size_t>(i)];
        if (is_activation(l) || l.is_fire()) first = i;
      }
      if (first < 0 || t.layer != first) return std::nullopt;
      if (layer->kind == LayerKind::Relu) {
        layer->kind = LayerKind::PRelu;
        layer->slope_init = 0.25f;
      } else if (layer->is_fire() && !layer->fire_prelu) {
        layer->fire_prelu = true;
      } else {
        return std::nullopt;
      }
      break;
    }
    case TransformKind::FireToExtended:
      if (!layer || layer->kind != LayerKind::Fire) return std::nullopt;
      layer->kind = LayerKind::ExtendedFire;
      layer->expand5 = layer->expand3;
      break;
    case TransformKind::NonOverlappingPool: {
      bool changed = false;
      for (LayerSpec& l : out.layers) {
        if (l.kind == LayerKind::MaxPool && l.stride != l.kernel) {
          l.stride = l.kernel;
          changed = true;
        }
      }
      if (!changed) return std::nullopt;
      break;
    }
    case TransformKind::ShrinkInput: {
      const int h = std::max(settings.min_input, out.input.h - settings.shrink_step);
      const int w = std::max(settings.min_input, out.input.w - settings.shrink_step);
      if (h >= out.input.h && w >= out.input.w) return std::nullopt;
      out.input.h = std::min(h, out.input.h);
      out.input.w = std::min(w, out.input.w);
      break;
    }
  }
  return checked(std::move(out));
}

std::vector<Candidate> transforms(const NetworkSpec& spec, const TransformSettings& settings,
                                  std::span<const TransformKind> kinds) {
  if (kinds.empty()) kinds = kAllKinds;
  std::vector<Candidate> out;
  const std::int64_t params = count_params(spec);
  for (TransformKind kind : kinds) {
    const bool per_layer = kind == TransformKind::RemoveLayer || kind == TransformKind::ScaleFilters ||
                           kind == TransformKind::ReluToPrelu || kind == TransformKind::FireToExtended;
    const int last = per_layer ? static_cast<int>(spec.layers.size()) : 0;
    for (int i = per_layer ? 0 : -1; i < last || (!per_layer && i == -1); ++i) {
      const Transform t{kind, per_layer ? i : -1};
      auto next = apply_transform(spec, t, settings);
      if (!next) {
        if (!per_layer) break;
        continue;
      }
      const bool shrinking = kind == TransformKind::RemoveLayer || kind == TransformKind::ScaleFilters;
      if (shrinking && count_params(*next) >= params) continue;
      out.push_back({t, std::move(*next)});
      if (!per_layer) break;
    }
  }
  return out;
}

NetworkSpec replay(const NetworkSpec& base, std::span<const Transform> lineage, const TransformSettings& settings) {
  NetworkSpec cur = base;
  for (const Transform& t : lineage) {
    auto next = apply_transform(cur, t, settings);
    if (!next) throw ArgumentError("transform '" + to_string(t) + "' does not apply during replay");
    cur = std::move(*next);
  }
  return cur;
}

long time_bucket(double time_ms, double band) {
  return static_cast<long>(std::floor(std::log(time_ms) / std::log1p(band)));
}

bool dominates(const ParetoPoint& p, const ParetoPoint& q, double band) {
  const long bp = time_bucket(p.time_ms, band), bq = time_bucket(q.time_ms, band);
  if (bp > bq || p.accuracy < q.accuracy) return false;
  return bp < bq || p.accuracy > q.accuracy;
}

std::vector<ParetoPoint> pareto_front(std::span<const ParetoPoint> points, double threshold_ms, double band) {
  std::vector<ParetoPoint> feasible;
  for (const auto& p : points) {
    if (p.time_ms <= threshold_ms) feasible.push_back(p);
  }
  std::vector<ParetoPoint> front;
  for (const auto& p : feasible) {
    const bool beaten = std::any_of(feasible.begin(), feasible.end(), [&](const ParetoPoint& q) { return dominates(q, p, band); });
    if (!beaten) front.push_back(p);
  }
  return front;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ArgumentError("median of an empty sample");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

TimingStats summarize_durations(std::vector<double> durations_ms) {
  TimingStats s;
  s.median_ms = median(durations_ms);
  s.min_ms = *std::min_element(durations_ms.begin(), durations_ms.end());
  s.max_ms = *std::max_element(durations_ms.begin(), durations_ms.end());
  return s;
}

TimingStats measure_time(const InferenceModel& model, int reps, bool use_binary) {
  if (reps < 5) throw ArgumentError("timing needs at least 5 repetitions, got " + std::to_string(reps));
  const ActShape& in = model.spec().input;
  std::mt19937 rng(0);
  std::uniform_real_distribution<float> dist(0.0f, 1.0f);
  std::vector<float> data(in.size());
  for (float& v : data) v = dist(rng);
  const Tensor x({in.c, in.h, in.w}, std::move(data));

  for (int i = 0; i < 2; ++i) (void)model.run(x, use_binary);
  std::vector<double> durations;
  durations.reserve(static_cast<std::size_t>(reps));
  for (int i = 0; i < reps; ++i) {
    const auto start = std::chrono::steady_clock::now();
    const Tensor out = model.run(x, use_binary);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    // A resolution floor keeps the median strictly positive for trivial nets.
    durations.push_back(std::max(ms, 1e-6));
    (void)out;
  }
  return summarize_durations(std::move(durations));
}

Evaluator make_training_evaluator(Dataset train_set, Dataset validation, EvaluatorOptions options) {
  struct State {
    Dataset train_set;
    Dataset validation;
    EvaluatorOptions options;
    std::mutex timing_mutex;
    std::mutex cache_mutex;
    std::map<std::tuple<int, int, int>, std::pair<Dataset, Dataset>> resized;
  };
  auto state = std::make_shared<State>();
  state->train_set = std::move(train_set);
  state->validation = std::move(validation);
  state->options = std::move(options);
  if (state->validation.size() == 0) throw ArgumentError("search needs a non-empty validation split");

  return [state](const NetworkSpec& spec) {
    const Dataset* train_ds = &state->train_set;
    const Dataset* val_ds = &state->validation;
    if (!(spec.input == state->train_set.image_shape)) {
      std::lock_guard lock(state->cache_mutex);
      const auto key = std::make_tuple(spec.input.c, spec.input.h, spec.input.w);
      auto it = state->resized.find(key);
      if (it == state->resized.end()) {
        it = state->resized
                 .emplace(key, std::make_pair(resize_dataset(state->train_set, spec.input),
                                              resize_dataset(state->validation, spec.input)))
                 .first;
      }
      train_ds = &it->second.first;
      val_ds = &it->second.second;
    }
    const TrainResult trained = train(spec, *train_ds, state->options.train);
    const InferenceModel model(spec, trained.weights);
    CandidateScore score;
    score.accuracy = evaluate(model, *val_ds, state->options.use_binary).accuracy;
    if (state->options.timing == TimingSource::MacModel) {
      score.time_ms = 1e-3 + static_cast<double>(estimate_macs(spec)) * state->options.ns_per_mac * 1e-6;
    } else {
      std::lock_guard lock(state->timing_mutex);
      score.time_ms = measure_time(model, state->options.timing_reps, state->options.use_binary).median_ms;
    }
    return score;
  };
}

void SearchConfig::validate() const {
  if (!(threshold_ms > 0.0)) throw ArgumentError("threshold must be > 0 ms");
  if (budget < 1) throw ArgumentError("budget must be >= 1");
  if (patience < 1) throw ArgumentError("patience must be >= 1");
  if (jobs < 1) throw ArgumentError("jobs must be >= 1");
  if (!(settings.filter_scale > 0.0 && settings.filter_scale < 1.0)) throw ArgumentError("filter scale must be in (0,1)");
  if (settings.shrink_step < 1 || settings.min_input < 1 || settings.min_filters < 1) {
    throw ArgumentError("transform settings must be positive");
  }
}

namespace {

class SearchRun {
 public:
  SearchRun(const Evaluator& evaluate, const SearchConfig& cfg) : evaluate_(evaluate), cfg_(cfg) {}

  struct Pending {
    NetworkSpec spec;
    int parent = -1;
    std::string transform;
    std::vector<Transform> lineage;
  };

  bool budget_left() const { return static_cast<int>(ledger_.size()) < cfg_.budget; }

  // Evaluates specs not seen before (up to the budget), in parallel when
  // allowed. Returns the ledger id per input (-1 when skipped for budget) and
  // appends the ids evaluated now to `fresh`.
  std::vector<int> evaluate_batch(std::vector<Pending> batch, std::vector<int>& fresh) {
    std::vector<int> ids(batch.size(), -1);
    std::vector<std::size_t> todo;
    std::map<std::string, std::size_t> in_batch;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const std::string key = to_text(batch[i].spec);
      if (auto it = seen_.find(key); it != seen_.end()) {
        ids[i] = it->second;
      } else if (auto jt = in_batch.find(key); jt != in_batch.end()) {
        continue;  // duplicate inside the batch; resolved below
      } else if (static_cast<int>(ledger_.size() + todo.size()) < cfg_.budget) {
        in_batch.emplace(key, i);
        todo.push_back(i);
      }
    }

    std::vector<CandidateScore> scores(todo.size());
    std::vector<std::exception_ptr> errors(todo.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t k = next++; k < todo.size(); k = next++) {
        try {
          scores[k] = evaluate_(batch[todo[k]].spec);
        } catch (...) {
          errors[k] = std::current_exception();
        }
      }
    };
    const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(cfg_.jobs), todo.size());
    if (threads <= 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
      for (auto& th : pool) th.join();
    }
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }

    for (std::size_t k = 0; k < todo.size(); ++k) {
      Pending& p = batch[todo[k]];
      LedgerEntry e;
      e.id = static_cast<int>(ledger_.size());
      e.parent_id = p.parent;
      e.transform = p.transform;
      e.lineage = std::move(p.lineage);
      e.params = count_params(p.spec);
      e.macs = estimate_macs(p.spec);
      if (!(scores[k].time_ms > 0.0) || !std::isfinite(scores[k].time_ms)) {
        throw NumericError("evaluator returned a non-positive time");
      }
      e.time_ms = scores[k].time_ms;
      e.accuracy = std::clamp(scores[k].accuracy, 0.0, 1.0);
      e.feasible = e.time_ms <= cfg_.threshold_ms;
      seen_.emplace(to_text(p.spec), e.id);
      e.spec = std::move(p.spec);
      ids[todo[k]] = e.id;
      fresh.push_back(e.id);
      ledger_.push_back(std::move(e));
    }
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (ids[i] < 0) {
        if (auto it = seen_.find(to_text(batch[i].spec)); it != seen_.end()) ids[i] = it->second;
      }
    }
    return ids;
  }

  int evaluate_one(Pending p, std::vector<int>& fresh) {
    std::vector<Pending> batch;
    batch.push_back(std::move(p));
    return evaluate_batch(std::move(batch), fresh).front();
  }

  ParetoPoint point(int id) const {
    const LedgerEntry& e = ledger_[static_cast<std::size_t>(id)];
    return {e.spec, e.time_ms, e.accuracy, e.lineage, e.id};
  }

  bool dominated(int id) const {
    const ParetoPoint p = point(id);
    for (const LedgerEntry& e : ledger_) {
      if (e.id != id && dominates(point(e.id), p, cfg_.noise_band)) return true;
    }
    return false;
  }

  // Next point to expand: non-dominated feasible points by accuracy, then
  // non-dominated infeasible ones by speed, then anything left by accuracy.
  std::optional<int> pick() const {
    std::optional<int> best;
    auto rank = [&](int id) {
      const LedgerEntry& e = ledger_[static_cast<std::size_t>(id)];
      const int tier = dominated(id) ? 2 : (e.feasible ? 0 : 1);
      const double key = tier == 1 ? e.time_ms : -e.accuracy;
      return std::make_tuple(tier, key, e.time_ms, id);
    };
    for (const LedgerEntry& e : ledger_) {
      if (expanded_.count(e.id)) continue;
      if (!best || rank(e.id) < rank(*best)) best = e.id;
    }
    return best;
  }

  void expand(int parent_id, std::vector<int>& fresh) {
    expanded_.insert(parent_id);
    const LedgerEntry parent = ledger_[static_cast<std::size_t>(parent_id)];
    std::vector<Pending> batch;
    for (auto& c : transforms(parent.spec, cfg_.settings, cfg_.resize_kinds)) {
      auto lineage = parent.lineage;
      lineage.push_back(c.transform);
      batch.push_back({std::move(c.spec), parent_id, to_string(c.transform), std::move(lineage)});
    }
    const std::size_t before = fresh.size();
    evaluate_batch(std::move(batch), fresh);
    if (!cfg_.remedies) return;

    const double desired = parent.accuracy - cfg_.accuracy_drop;
    const std::vector<int> children(fresh.begin() + static_cast<std::ptrdiff_t>(before), fresh.end());
    for (int child : children) {
      const LedgerEntry c = ledger_[static_cast<std::size_t>(child)];
      if (c.accuracy >= desired || !budget_left()) continue;

      bool prelu_helped = false;
      for (const auto& cand : transforms(c.spec, cfg_.settings, std::array{TransformKind::ReluToPrelu})) {
        auto lineage = c.lineage;
        lineage.push_back(cand.transform);
        const int id = evaluate_one({cand.spec, child, to_string(cand.transform), std::move(lineage)}, fresh);
        if (id >= 0) {
          const double acc = ledger_[static_cast<std::size_t>(id)].accuracy;
          prelu_helped = acc >= desired || acc > c.accuracy;
        }
      }
      if (prelu_helped || !budget_left()) continue;
      const auto fires = transforms(c.spec, cfg_.settings, std::array{TransformKind::FireToExtended});
      if (!fires.empty()) {
        auto lineage = c.lineage;
        lineage.push_back(fires.front().transform);
        evaluate_one({fires.front().spec, child, to_string(fires.front().transform), std::move(lineage)}, fresh);
      }
    }
  }

  SearchResult run(const NetworkSpec& base) {
    std::vector<int> fresh;
    evaluate_one({base, -1, "base", {}}, fresh);

    int stall = 0;
    while (budget_left()) {
      const auto next = pick();
      if (!next) break;
      fresh.clear();
      expand(*next, fresh);
      const bool any_survivor = std::any_of(fresh.begin(), fresh.end(), [&](int id) { return !dominated(id); });
      stall = any_survivor ? 0 : stall + 1;
      if (stall >= cfg_.patience) break;
    }

    std::vector<ParetoPoint> points;
    for (const LedgerEntry& e : ledger_) points.push_back(point(e.id));
    SearchResult result;
    result.front = pareto_front(points, cfg_.threshold_ms, cfg_.noise_band);
    std::sort(result.front.begin(), result.front.end(),
              [](const ParetoPoint& a, const ParetoPoint& b) { return std::tie(a.time_ms, a.id) < std::tie(b.time_ms, b.id); });
    for (const ParetoPoint& p : result.front) ledger_[static_cast<std::size_t>(p.id)].on_front = true;
    result.ledger = std::move(ledger_);
    return result;
  }

 private:
  const Evaluator& evaluate_;
  const SearchConfig& cfg_;
  std::vector<LedgerEntry> ledger_;
  std::map<std::string, int> seen_;
  std::set<int> expanded_;
};

}  // namespace

SearchResult search(const NetworkSpec& base, const Evaluator& evaluate, const SearchConfig& cfg) {
  cfg.validate();
  validate(base);
  return SearchRun(evaluate, cfg).run(base);
}

SearchResult search(const NetworkSpec& base, const Dataset& dataset, const SearchConfig& cfg,
                    const EvaluatorOptions& options, double validation_fraction) {
  if (!(dataset.image_shape == base.input)) throw ShapeError("dataset images do not match the base network input");
  auto [train_set, val_set] = split_dataset(dataset, validation_fraction, cfg.seed);
  EvaluatorOptions opts = options;
  opts.train.seed = cfg.seed;
  return search(base, make_training_evaluator(std::move(train_set), std::move(val_set), opts), cfg);
}

std::vector<std::pair<NetworkSpec, std::vector<Transform>>> enumerate_space(
    const NetworkSpec& base, std::span<const TransformKind> kinds, const TransformSettings& settings,
    std::size_t limit) {
  std::vector<std::pair<NetworkSpec, std::vector<Transform>>> out{{base, {}}};
  std::set<std::string> seen{to_text(base)};
  for (std::size_t i = 0; i < out.size() && out.size() < limit; ++i) {
    const auto current = out[i];
    for (auto& c : transforms(current.first, settings, kinds)) {
      if (!seen.insert(to_text(c.spec)).second) continue;
      auto lineage = current.second;
      lineage.push_back(c.transform);
      out.emplace_back(std::move(c.spec), std::move(lineage));
    }
  }
  return out;
}

std::string front_name(const ParetoPoint& p) { return "candidate_" + std::to_string(p.id); }

std::string ledger_csv(const SearchResult& result) {
  std::ostringstream os;
  os << std::setprecision(9);
  os << "candidate_id,parent_id,transform,params,macs,time_ms,accuracy,feasible,on_front\n";
  for (const LedgerEntry& e : result.ledger) {
    os << e.id << ',' << e.parent_id << ',' << e.transform << ',' << e.params << ',' << e.macs << ',' << e.time_ms
       << ',' << e.accuracy << ',' << (e.feasible ? 1 : 0) << ',' << (e.on_front ? 1 : 0) << '\n';
  }
  return os.str();
}

std::string front_csv(const SearchResult& result) {
  std::ostringstream os;
  os << std::setprecision(9);
  os << "name,time_ms,accuracy_pct\n";
  for (const ParetoPoint& p : result.front) os << front_name(p) << ',' << p.time_ms << ',' << 100.0 * p.accuracy << '\n';
  return os.str();
}

void write_search_outputs(const SearchResult& result, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create results directory '" + dir + "': " + ec.message());
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream out(fs::path(dir) / name);
    if (!out) throw IoError("cannot write '" + (fs::path(dir) / name).string() + "'");
    out << text;
  };
  write("ledger.csv", ledger_csv(result));
  write("front.csv", front_csv(result));
  for (const ParetoPoint& p : result.front) {
    write(front_name(p) + ".netspec", "# lineage: " + (p.lineage.empty() ? std::string("base") : lineage_to_string(p.lineage)) +
                                          "\n" + to_text(p.spec));
  }
}

}  // namespace bitconv
