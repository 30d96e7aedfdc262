#include "nfs/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "nfs/errors.hpp"
#include "nfs/optimizer.hpp"
#include "nfs/rng.hpp"

namespace nfs {

std::string metric_name(MetricKind kind) {
    switch (kind) {
        case MetricKind::Rmse: return "rmse";
        case MetricKind::Mae: return "mae";
        case MetricKind::Auc: return "auc";
        case MetricKind::Accuracy: return "accuracy";
    }
    return "unknown";
}

bool metric_lower_is_better(MetricKind kind) {
    return kind == MetricKind::Rmse || kind == MetricKind::Mae;
}

void TrainConfig::validate() const {
    if (gamma < 0.0 || temporal_l2 < 0.0 || aggregate_l1 < 0.0) {
        throw ConfigError("TrainConfig: penalty coefficients must be non-negative");
    }
    if (epochs < 1) throw ConfigError("TrainConfig: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("TrainConfig: learning rate must be positive");
}

void TrainHistory::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("TrainHistory: cannot open " + path + " for writing");
    out << "epoch,loss,penalty,val_metric,sparsity_fraction\n";
    char buf[160];
    for (const auto& e : epochs) {
        std::snprintf(buf, sizeof(buf), "%zu,%.10g,%.10g,%.10g,%.10g\n", e.epoch, e.train_loss,
                      e.penalty, e.val_metric, e.sparsity_fraction);
        out << buf;
    }
}

namespace {

Tensor task_loss(ComposedModel& model, const MtsDataset::Batch& batch) {
    Tensor pred = model_forward(model, batch.x, Mode::Train);
    if (model.task == TaskKind::Regression) {
        if (batch.reg_targets.empty()) {
            throw ConfigError("objective: regression model given a classification batch");
        }
        return mse_loss(pred, batch.reg_targets);
    }
    if (batch.cls_targets.empty()) {
        throw ConfigError("objective: classification model given a regression batch");
    }
    return cross_entropy_loss(pred, batch.cls_targets);
}

Tensor objective_with_parts(ComposedModel& model, const MtsDataset::Batch& batch,
                            const TrainConfig& config, double* task_value) {
    Tensor loss = task_loss(model, batch);
    if (task_value) *task_value = loss.scalar();
    if (config.gamma > 0.0) {
        loss = add(loss, l1_penalty(model.nfs.bn_scale, config.gamma));
    }
    if (config.temporal_l2 > 0.0) {
        for (const auto& bank : model.nfs.banks)
            for (const auto& branch : bank.branches)
                loss = add(loss, l2_penalty(branch.weight, config.temporal_l2));
    }
    if (config.aggregate_l1 > 0.0) {
        loss = add(loss, l1_penalty(model.nfs.aggregate.weight, config.aggregate_l1));
    }
    return loss;
}

double bn_sparsity_fraction(const ComposedModel& model) {
    auto alpha = model.nfs.bn_scale.value();
    std::size_t small = 0;
    for (double a : alpha) {
        if (std::abs(a) < 0.01) ++small;
    }
    return static_cast<double>(small) / static_cast<double>(alpha.size());
}

double bn_penalty_value(const ComposedModel& model, double gamma) {
    double total = 0.0;
    for (double a : model.nfs.bn_scale.value()) total += std::abs(a);
    return gamma * total;
}

}  // namespace

Tensor objective(ComposedModel& model, const MtsDataset::Batch& batch, const TrainConfig& config) {
    return objective_with_parts(model, batch, config, nullptr);
}

TrainHistory train(ComposedModel& model, const MtsDataset& train_set, const MtsDataset& val_set,
                   const TrainConfig& config) {
    config.validate();
    train_set.validate();
    if (train_set.task != model.task || val_set.task != model.task) {
        throw ConfigError("train: dataset task does not match the model's task");
    }
    AdamOptimizer optimizer(model.parameters(), config.lr);
    Rng shuffle_rng(derive_seed(config.seed, "epoch-shuffle"));

    std::vector<std::size_t> order(train_set.n);
    std::iota(order.begin(), order.end(), 0);

    TrainHistory history;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0, batch_idx = 0; start < order.size();
             start += config.batch_size, ++batch_idx) {
            const std::size_t count = std::min(config.batch_size, order.size() - start);
            auto batch = train_set.make_batch({order.data() + start, count});
            optimizer.zero_grads();
            double task_value = 0.0;
            Tensor loss = objective_with_parts(model, batch, config, &task_value);
            if (!std::isfinite(loss.scalar())) {
                throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                   ", batch " + std::to_string(batch_idx));
            }
            backward(loss);
            optimizer.step();
            loss_sum += task_value * static_cast<double>(count);
        }
        EpochRecord record;
        record.epoch = epoch;
        record.train_loss = loss_sum / static_cast<double>(train_set.n);
        record.penalty = bn_penalty_value(model, config.gamma);
        record.val_metric = evaluate(model, val_set, config.metric).value;
        record.sparsity_fraction = bn_sparsity_fraction(model);
        history.epochs.push_back(record);
    }
    return history;
}

Metrics evaluate(ComposedModel& model, const MtsDataset& dataset, MetricKind kind) {
    dataset.validate();
    if (dataset.task != model.task) {
        throw ConfigError("evaluate: dataset task does not match the model's task");
    }
    const bool regression = model.task == TaskKind::Regression;
    if (regression && (kind == MetricKind::Auc || kind == MetricKind::Accuracy)) {
        throw ConfigError("evaluate: " + metric_name(kind) + " is undefined for regression");
    }
    if (!regression && (kind == MetricKind::Rmse || kind == MetricKind::Mae)) {
        throw ConfigError("evaluate: " + metric_name(kind) + " is undefined for classification");
    }

    const std::size_t eval_batch = 256;
    std::vector<double> reg_preds;
    std::vector<int> cls_preds;
    std::vector<double> pos_scores;
    std::vector<std::size_t> indices(dataset.n);
    std::iota(indices.begin(), indices.end(), 0);
    for (std::size_t start = 0; start < dataset.n; start += eval_batch) {
        const std::size_t count = std::min(eval_batch, dataset.n - start);
        auto batch = dataset.make_batch({indices.data() + start, count});
        Tensor pred = model_forward(model, batch.x, Mode::Eval);
        if (regression) {
            reg_preds.insert(reg_preds.end(), pred.value().begin(), pred.value().end());
        } else {
            const std::size_t K = pred.dim(1);
            for (std::size_t i = 0; i < count; ++i) {
                auto row = pred.value().subspan(i * K, K);
                cls_preds.push_back(static_cast<int>(
                    std::max_element(row.begin(), row.end()) - row.begin()));
                if (K == 2) {
                    // two-class softmax probability of class 1
                    const double diff = row[1] - row[0];
                    pos_scores.push_back(diff >= 0.0 ? 1.0 / (1.0 + std::exp(-diff))
                                                     : std::exp(diff) / (1.0 + std::exp(diff)));
                }
            }
        }
    }

    Metrics metrics;
    metrics.kind = kind;
    switch (kind) {
        case MetricKind::Rmse:
            metrics.value = rmse(reg_preds, dataset.reg_targets);
            break;
        case MetricKind::Mae:
            metrics.value = mae(reg_preds, dataset.reg_targets);
            break;
        case MetricKind::Accuracy:
            metrics.value = accuracy(cls_preds, dataset.cls_targets);
            break;
        case MetricKind::Auc: {
            if (dataset.class_count != 2) {
                throw DataError("evaluate: AUC requires a binary task, got " +
                                std::to_string(dataset.class_count) + " classes");
            }
            metrics.value = auc_ranked(pos_scores, dataset.cls_targets);
            break;
        }
    }
    return metrics;
}

double rmse(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size() || pred.empty()) {
        throw DataError("rmse: size mismatch or empty input");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(pred.size()));
}

double mae(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size() || pred.empty()) {
        throw DataError("mae: size mismatch or empty input");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred[i] - target[i]);
    return acc / static_cast<double>(pred.size());
}

double accuracy(std::span<const int> pred, std::span<const int> target) {
    if (pred.size() != target.size() || pred.empty()) {
        throw DataError("accuracy: size mismatch or empty input");
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] == target[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double auc_ranked(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size() || scores.empty()) {
        throw DataError("auc: size mismatch or empty input");
    }
    std::size_t positives = 0;
    for (int y : labels) {
        if (y != 0 && y != 1) throw DataError("auc: labels must be 0/1");
        positives += static_cast<std::size_t>(y);
    }
    const std::size_t negatives = scores.size() - positives;
    if (positives == 0 || negatives == 0) {
        throw DataError("auc: undefined for a single-class label set");
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] < scores[b];
        return a < b;
    });
    // Average ranks over tie groups, then the Mann-Whitney identity.
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t idx = i; idx <= j; ++idx) {
            if (labels[order[idx]] == 1) rank_sum_pos += avg_rank;
        }
        i = j + 1;
    }
    const double p = static_cast<double>(positives);
    return (rank_sum_pos - p * (p + 1.0) / 2.0) / (p * static_cast<double>(negatives));
}

}  // namespace nfs
