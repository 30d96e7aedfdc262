#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nfs/dataset.hpp"
#include "nfs/heads.hpp"

namespace nfs {

enum class MetricKind { Rmse, Mae, Auc, Accuracy };

std::string metric_name(MetricKind kind);
bool metric_lower_is_better(MetricKind kind);

struct Metrics {
    MetricKind kind = MetricKind::Rmse;
    double value = 0.0;
};

struct TrainConfig {
    double gamma = 0.001;        // architecture penalty on BN scales
    double temporal_l2 = 0.01;   // weight penalty on temporal conv kernels
    double aggregate_l1 = 0.01;  // weight penalty on aggregating conv kernel
    std::size_t epochs = 30;
    std::size_t batch_size = 128;
    double lr = 1e-3;
    std::uint64_t seed = 1;
    MetricKind metric = MetricKind::Rmse;

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;        // 1-based
    double train_loss = 0.0;      // mean task loss over the epoch's batches
    double penalty = 0.0;         // gamma * sum |alpha| at epoch end
    double val_metric = 0.0;
    double sparsity_fraction = 0.0;  // fraction of BN scales with |alpha| < 0.01
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    void write_csv(const std::string& path) const;
};

// Task loss plus the architecture penalty gamma*sum|alpha| over all BN scales
// and the per-layer weight penalties (l2 on temporal kernels, l1 on the
// aggregating kernel). Runs the model in train mode.
Tensor objective(ComposedModel& model, const MtsDataset::Batch& batch, const TrainConfig& config);

// Seeded mini-batch training; BN in train mode; one history record per epoch.
// The validation set is informational only (no early stopping).
TrainHistory train(ComposedModel& model, const MtsDataset& train_set, const MtsDataset& val_set,
                   const TrainConfig& config);

// Eval-mode metrics on a dataset. AUC requires a binary task with both
// classes present.
Metrics evaluate(ComposedModel& model, const MtsDataset& dataset, MetricKind kind);

// Metric primitives, exposed so tests can cross-check them independently.
double rmse(std::span<const double> pred, std::span<const double> target);
double mae(std::span<const double> pred, std::span<const double> target);
double accuracy(std::span<const int> pred, std::span<const int> target);
// Rank-based AUC with tied scores counted half; equals brute-force pair counting.
double auc_ranked(std::span<const double> scores, std::span<const int> labels);

}  // namespace nfs
