#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nfs/dataset.hpp"
#include "nfs/training.hpp"

namespace nfs {

struct PipelineOptions {
    std::size_t k_selected = 1;
    double test_fraction = 0.2;
    bool chronological_split = false;  // for windowed series
    bool standardize_features = true;
    bool run_oracle = false;           // exhaustive subset search (small d only)
    bool run_baseline = false;         // correlation filter
};

struct StageTimings {
    double train_full_s = 0.0;
    double train_compact_s = 0.0;
    double total_s = 0.0;
};

// One full select-then-retrain pass for one seed.
struct SeedRun {
    std::uint64_t seed = 0;
    Metrics full_metrics;
    ImportanceScores scores;
    FeatureMask mask;
    Metrics compact_metrics;
    TrainHistory full_history;
    TrainHistory compact_history;
    StageTimings timings;
};

struct SelectionReport {
    MetricKind metric = MetricKind::Rmse;
    std::size_t d = 0;
    std::size_t k_selected = 0;
    std::vector<std::string> feature_names;
    std::vector<SeedRun> runs;
    std::optional<std::pair<FeatureMask, Metrics>> oracle_best;
    std::optional<std::pair<FeatureMask, Metrics>> baseline;
    double oracle_s = 0.0;
    double baseline_s = 0.0;
};

// Train full -> rank scores -> keep top k -> retrain compact on the
// column-restricted data -> evaluate both on the held-out split. Seed comes
// from train_config; every stage derives its own RNG stream from it.
SelectionReport run_pipeline(const MtsDataset& dataset, const NfsConfig& nfs_config,
                             const HeadConfig& head_config, const TrainConfig& train_config,
                             const PipelineOptions& options);

// Same pipeline repeated per seed; oracle/baseline (if enabled) run once with
// the first seed.
SelectionReport run_pipeline_seeds(const MtsDataset& dataset, const NfsConfig& nfs_config,
                                   const HeadConfig& head_config, const TrainConfig& train_config,
                                   const PipelineOptions& options,
                                   std::span<const std::uint64_t> seeds);

// Trains one compact model per k-subset (single fixed seed) and returns the
// metric-optimal subset. Guarded to C(d, k) <= 64.
std::pair<FeatureMask, Metrics> exhaustive_oracle(const MtsDataset& dataset,
                                                  const NfsConfig& nfs_config,
                                                  const HeadConfig& head_config,
                                                  const TrainConfig& train_config,
                                                  std::size_t k_selected, double test_fraction);

// Streams ranked by |Pearson correlation| between their per-sample means and
// the target; ties to the lower index.
FeatureMask correlation_filter(const MtsDataset& dataset, std::size_t k_selected);

// Exposed for tests: subset enumeration (lexicographic) and the
// order-invariant reduction the oracle uses.
std::vector<std::vector<std::size_t>> enumerate_subsets(std::size_t d, std::size_t k);
struct SubsetResult {
    std::vector<std::size_t> subset;
    double metric = 0.0;
};
std::size_t pick_best_index(std::span<const SubsetResult> results, MetricKind kind);

// Report serialization. Timings go to their own file so the report tables
// stay byte-identical across reruns of the same seed.
void write_report_text(const SelectionReport& report, const std::string& path);
void write_report_csv(const SelectionReport& report, const std::string& path);
void write_timings(const SelectionReport& report, const std::string& path);

}  // namespace nfs
