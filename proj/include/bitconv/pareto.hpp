#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bitconv/netspec.hpp"
#include "bitconv/network.hpp"
#include "bitconv/training.hpp"

namespace bitconv {

// ---------------------------------------------------------------------------
// Architecture transforms

enum class TransformKind {
  RemoveLayer,         // drop a conv/fire/fc layer (and its activation)
  ScaleFilters,        // multiply a layer's filter counts by filter_scale, rounding up
  ReluToPrelu,         // first activation-bearing layer switches to PReLU
  FireToExtended,      // add a 5x5 expand branch with e5 = e3
  NonOverlappingPool,  // every maxpool gets stride = k
  ShrinkInput,         // input side minus shrink_step, floored at min_input
};

struct Transform {
  TransformKind kind = TransformKind::RemoveLayer;
  int layer = -1;  // -1 for whole-network transforms

  bool operator==(const Transform&) const = default;
};

/// e.g. "remove@3", "scale@0", "prelu@1", "extend@2", "pool", "shrink".
std::string to_string(const Transform& t);
Transform parse_transform(std::string_view text);
std::string lineage_to_string(std::span<const Transform> lineage);
std::vector<Transform> parse_lineage(std::string_view text);

struct TransformSettings {
  double filter_scale = 0.75;
  int shrink_step = 4;
  int min_input = 16;
  int min_filters = 2;
};

/// The transformed spec, or nothing when the transform does not apply or
/// would produce an invalid network.
std::optional<NetworkSpec> apply_transform(const NetworkSpec& spec, const Transform& t,
                                           const TransformSettings& settings = {});

struct Candidate {
  Transform transform;
  NetworkSpec spec;
};

/// All applicable transforms of the requested kinds, in kind order then layer
/// order. Removal and filter scaling are only emitted when they strictly
/// reduce the parameter count.
std::vector<Candidate> transforms(const NetworkSpec& spec, const TransformSettings& settings = {},
                                  std::span<const TransformKind> kinds = {});

/// Re-applies a lineage to the base; throws ArgumentError if a step no longer applies.
NetworkSpec replay(const NetworkSpec& base, std::span<const Transform> lineage,
                   const TransformSettings& settings = {});

// ---------------------------------------------------------------------------
// Pareto bookkeeping

struct ParetoPoint {
  NetworkSpec spec;
  double time_ms = 0.0;
  double accuracy = 0.0;
  std::vector<Transform> lineage;
  int id = 0;
};

/// Times are compared on a geometric grid of `band`-wide buckets; equal
/// buckets count as ties. This keeps dominance a strict partial order.
long time_bucket(double time_ms, double band = 0.05);

/// p is no slower and no less accurate than q, and strictly better in one.
bool dominates(const ParetoPoint& p, const ParetoPoint& q, double band = 0.05);

/// Mutually non-dominated members of `points` with time_ms <= threshold_ms.
std::vector<ParetoPoint> pareto_front(std::span<const ParetoPoint> points, double threshold_ms,
                                      double band = 0.05);

// ---------------------------------------------------------------------------
// Timing

struct TimingStats {
  double median_ms = 0.0;
  double min_ms = 0.0;
  double max_ms = 0.0;
  double spread() const { return min_ms > 0.0 ? max_ms / min_ms : 0.0; }
};

double median(std::vector<double> values);
TimingStats summarize_durations(std::vector<double> durations_ms);

/// Median of `reps` single-threaded forward passes after two discarded
/// warm-up runs. reps must be at least 5.
TimingStats measure_time(const InferenceModel& model, int reps, bool use_binary = true);

// ---------------------------------------------------------------------------
// Search

struct CandidateScore {
  double time_ms = 0.0;
  double accuracy = 0.0;
};

/// Scores a spec. Must be safe to call from several threads at once.
using Evaluator = std::function<CandidateScore(const NetworkSpec&)>;

enum class TimingSource {
  Measured,  // wall-clock median of forward passes
  MacModel,  // ns_per_mac * estimate_macs, deterministic
};

struct EvaluatorOptions {
  TrainConfig train;
  int timing_reps = 20;
  TimingSource timing = TimingSource::Measured;
  double ns_per_mac = 1.0;
  bool use_binary = true;
};

/// Trains each candidate from its own seeded init and scores validation
/// accuracy; images are resampled when a candidate shrinks the input.
/// Timing runs are serialized across threads.
Evaluator make_training_evaluator(Dataset train_set, Dataset validation, EvaluatorOptions options);

struct SearchConfig {
  double threshold_ms = 2.0;
  int budget = 20;  // evaluations, base included
  std::uint64_t seed = 1;
  TransformSettings settings;
  std::vector<TransformKind> resize_kinds = {TransformKind::RemoveLayer, TransformKind::ScaleFilters,
                                             TransformKind::NonOverlappingPool, TransformKind::ShrinkInput};
  bool remedies = true;          // PReLU, then extended fire, after an accuracy drop
  double accuracy_drop = 0.005;  // "lower than desired": below parent minus this
  int patience = 3;              // expansions in a row without a surviving candidate
  double noise_band = 0.05;
  int jobs = 1;

  void validate() const;
};

struct LedgerEntry {
  int id = 0;
  int parent_id = -1;
  std::string transform;  // "base" for the seed point
  std::vector<Transform> lineage;
  NetworkSpec spec;
  std::int64_t params = 0;
  std::int64_t macs = 0;
  double time_ms = 0.0;
  double accuracy = 0.0;
  bool feasible = false;
  bool on_front = false;
};

struct SearchResult {
  std::vector<ParetoPoint> front;
  std::vector<LedgerEntry> ledger;
};

SearchResult search(const NetworkSpec& base, const Evaluator& evaluate, const SearchConfig& cfg);

/// Convenience overload: splits `dataset` (validation_fraction) and uses the
/// training evaluator with measured timing.
SearchResult search(const NetworkSpec& base, const Dataset& dataset, const SearchConfig& cfg,
                    const EvaluatorOptions& options = {}, double validation_fraction = 0.25);

/// Every spec reachable from `base` through `kinds`, deduplicated.
std::vector<std::pair<NetworkSpec, std::vector<Transform>>> enumerate_space(
    const NetworkSpec& base, std::span<const TransformKind> kinds, const TransformSettings& settings = {},
    std::size_t limit = 10000);

/// candidate_id,parent_id,transform,params,macs,time_ms,accuracy,feasible,on_front
std::string ledger_csv(const SearchResult& result);
/// name,time_ms,accuracy_pct
std::string front_csv(const SearchResult& result);
/// Writes ledger.csv, front.csv and one <name>.netspec per front member.
void write_search_outputs(const SearchResult& result, const std::string& dir);

std::string front_name(const ParetoPoint& p);

}  // namespace bitconv
