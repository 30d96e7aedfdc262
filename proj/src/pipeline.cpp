#include "nfs/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "nfs/errors.hpp"
#include "nfs/rng.hpp"

namespace nfs {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

// Rethrows stage failures with the stage name prefixed, preserving the type.
template <typename F>
auto stage(const char* name, F&& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("stage '") + name + "': " + e.what());
    } catch (const DataError& e) {
        throw DataError(std::string("stage '") + name + "': " + e.what());
    } catch (const DimensionError& e) {
        throw DimensionError(std::string("stage '") + name + "': " + e.what());
    } catch (const NumericError& e) {
        throw NumericError(std::string("stage '") + name + "': " + e.what());
    }
}

struct SplitData {
    MtsDataset train;
    MtsDataset test;
};

SplitData prepare_split(const MtsDataset& dataset, const PipelineOptions& options,
                        std::uint64_t seed) {
    SplitData split_data;
    auto [train_set, test_set] =
        options.chronological_split
            ? split_chronological(dataset, options.test_fraction)
            : split(dataset, options.test_fraction, derive_seed(seed, "split"));
    split_data.train = std::move(train_set);
    split_data.test = std::move(test_set);
    if (options.standardize_features) standardize(split_data.train, split_data.test);
    return split_data;
}

struct TrainedModel {
    ComposedModel model;
    TrainHistory history;
};

TrainedModel train_fresh(const SplitData& data, const NfsConfig& nfs_config,
                         const HeadConfig& head_config, const TrainConfig& train_config,
                         std::uint64_t seed, const char* role) {
    NfsConfig cfg = nfs_config;
    cfg.stream_count = data.train.d;
    NfsModule module = build_nfs(cfg, derive_seed(seed, std::string("nfs-") + role));
    Head head = build_head(head_config, data.train.t, derive_seed(seed, std::string("head-") + role));
    TrainedModel out{compose(std::move(module), std::move(head)), {}};
    TrainConfig tc = train_config;
    tc.seed = derive_seed(seed, std::string("train-") + role);
    out.history = train(out.model, data.train, data.test, tc);
    return out;
}

}  // namespace

std::vector<std::vector<std::size_t>> enumerate_subsets(std::size_t d, std::size_t k) {
    std::vector<std::vector<std::size_t>> subsets;
    std::vector<std::size_t> current(k);
    std::iota(current.begin(), current.end(), 0);
    while (true) {
        subsets.push_back(current);
        // next lexicographic k-combination of [0, d)
        std::size_t i = k;
        while (i > 0 && current[i - 1] == d - k + i - 1) --i;
        if (i == 0) break;
        ++current[i - 1];
        for (std::size_t j = i; j < k; ++j) current[j] = current[j - 1] + 1;
    }
    return subsets;
}

std::size_t pick_best_index(std::span<const SubsetResult> results, MetricKind kind) {
    if (results.empty()) throw ConfigError("pick_best_index: no subset results");
    const bool lower = metric_lower_is_better(kind);
    std::size_t best = 0;
    for (std::size_t i = 1; i < results.size(); ++i) {
        const double a = results[i].metric, b = results[best].metric;
        if (a == b) {
            // exact metric tie: the lexicographically smaller subset wins,
            // which makes the reduction independent of evaluation order
            if (results[i].subset < results[best].subset) best = i;
        } else if (lower ? a < b : a > b) {
            best = i;
        }
    }
    return best;
}

FeatureMask correlation_filter(const MtsDataset& dataset, std::size_t k_selected) {
    dataset.validate();
    if (k_selected < 1 || k_selected > dataset.d) {
        throw ConfigError("correlation_filter: k_selected out of range");
    }
    std::vector<double> target(dataset.n);
    if (dataset.task == TaskKind::Regression) {
        target = dataset.reg_targets;
    } else {
        for (std::size_t i = 0; i < dataset.n; ++i)
            target[i] = static_cast<double>(dataset.cls_targets[i]);
    }
    double ty = 0.0;
    for (double y : target) ty += y;
    ty /= static_cast<double>(dataset.n);
    double var_y = 0.0;
    for (double y : target) var_y += (y - ty) * (y - ty);
    if (var_y == 0.0) throw DataError("correlation_filter: zero-variance target");

    ImportanceScores ranked;
    ranked.per_stream.resize(dataset.d);
    for (std::size_t j = 0; j < dataset.d; ++j) {
        // feature summary: per-sample mean of the stream
        std::vector<double> feat(dataset.n);
        for (std::size_t i = 0; i < dataset.n; ++i) {
            double m = 0.0;
            for (std::size_t s = 0; s < dataset.t; ++s) m += dataset.at(i, s, j);
            feat[i] = m / static_cast<double>(dataset.t);
        }
        double fm = 0.0;
        for (double f : feat) fm += f;
        fm /= static_cast<double>(dataset.n);
        double var_f = 0.0, cov = 0.0;
        for (std::size_t i = 0; i < dataset.n; ++i) {
            var_f += (feat[i] - fm) * (feat[i] - fm);
            cov += (feat[i] - fm) * (target[i] - ty);
        }
        ranked.per_stream[j] = var_f == 0.0 ? 0.0 : std::abs(cov / std::sqrt(var_f * var_y));
    }
    return select_top_k(ranked, k_selected);
}

std::pair<FeatureMask, Metrics> exhaustive_oracle(const MtsDataset& dataset,
                                                  const NfsConfig& nfs_config,
                                                  const HeadConfig& head_config,
                                                  const TrainConfig& train_config,
                                                  std::size_t k_selected, double test_fraction) {
    dataset.validate();
    if (k_selected < 1 || k_selected > dataset.d) {
        throw ConfigError("exhaustive_oracle: k_selected out of range");
    }
    // C(d, k) with early bail-out against the combinatorial guard.
    double combos = 1.0;
    for (std::size_t i = 0; i < k_selected; ++i) {
        combos *= static_cast<double>(dataset.d - i) / static_cast<double>(i + 1);
        if (combos > 64.0) break;
    }
    if (combos > 64.0) {
        throw ConfigError("exhaustive_oracle: C(" + std::to_string(dataset.d) + ", " +
                          std::to_string(k_selected) + ") exceeds the guard of 64 subsets");
    }

    PipelineOptions options;
    options.test_fraction = test_fraction;
    SplitData data = prepare_split(dataset, options, train_config.seed);

    std::vector<SubsetResult> results;
    for (const auto& subset : enumerate_subsets(dataset.d, k_selected)) {
        FeatureMask mask;
        mask.indices = subset;
        mask.original_d = dataset.d;
        SplitData restricted{data.train.restrict_columns(mask), data.test.restrict_columns(mask)};
        TrainedModel candidate = train_fresh(restricted, nfs_config, head_config, train_config,
                                             train_config.seed, "oracle");
        const double value =
            evaluate(candidate.model, restricted.test, train_config.metric).value;
        results.push_back({subset, value});
    }
    const std::size_t best = pick_best_index(results, train_config.metric);
    FeatureMask best_mask;
    best_mask.indices = results[best].subset;
    best_mask.original_d = dataset.d;
    return {best_mask, Metrics{train_config.metric, results[best].metric}};
}

SelectionReport run_pipeline(const MtsDataset& dataset, const NfsConfig& nfs_config,
                             const HeadConfig& head_config, const TrainConfig& train_config,
                             const PipelineOptions& options) {
    std::vector<std::uint64_t> seeds = {train_config.seed};
    return run_pipeline_seeds(dataset, nfs_config, head_config, train_config, options, seeds);
}

SelectionReport run_pipeline_seeds(const MtsDataset& dataset, const NfsConfig& nfs_config,
                                   const HeadConfig& head_config, const TrainConfig& train_config,
                                   const PipelineOptions& options,
                                   std::span<const std::uint64_t> seeds) {
    dataset.validate();
    if (seeds.empty()) throw ConfigError("run_pipeline: seeds must be nonempty");
    if (options.k_selected < 1 || options.k_selected > dataset.d) {
        throw ConfigError("run_pipeline: k_selected " + std::to_string(options.k_selected) +
                          " out of range [1, " + std::to_string(dataset.d) + "]");
    }

    SelectionReport report;
    report.metric = train_config.metric;
    report.d = dataset.d;
    report.k_selected = options.k_selected;
    report.feature_names = dataset.feature_names;

    for (std::uint64_t seed : seeds) {
        SeedRun run;
        run.seed = seed;
        const auto t0 = Clock::now();

        SplitData data = stage("split", [&] { return prepare_split(dataset, options, seed); });

        const auto t_full = Clock::now();
        TrainedModel full = stage("train-full", [&] {
            return train_fresh(data, nfs_config, head_config, train_config, seed, "full");
        });
        run.timings.train_full_s = seconds_since(t_full);
        run.full_history = std::move(full.history);
        run.full_metrics =
            stage("evaluate-full", [&] { return evaluate(full.model, data.test, train_config.metric); });

        run.scores = stream_scores(full.model.nfs);
        run.mask = stage("select", [&] { return select_top_k(run.scores, options.k_selected); });

        // The compact model only ever sees the column-restricted data.
        SplitData restricted = stage("restrict", [&] {
            return SplitData{data.train.restrict_columns(run.mask),
                             data.test.restrict_columns(run.mask)};
        });

        const auto t_compact = Clock::now();
        TrainedModel compact_model = stage("train-compact", [&] {
            return train_fresh(restricted, nfs_config, head_config, train_config, seed, "compact");
        });
        run.timings.train_compact_s = seconds_since(t_compact);
        run.compact_history = std::move(compact_model.history);
        run.compact_metrics = stage("evaluate-compact", [&] {
            return evaluate(compact_model.model, restricted.test, train_config.metric);
        });

        run.timings.total_s = seconds_since(t0);
        report.runs.push_back(std::move(run));
    }

    if (options.run_oracle) {
        const auto t0 = Clock::now();
        TrainConfig oracle_config = train_config;
        oracle_config.seed = seeds.front();
        report.oracle_best = stage("oracle", [&] {
            return exhaustive_oracle(dataset, nfs_config, head_config, oracle_config,
                                     options.k_selected, options.test_fraction);
        });
        report.oracle_s = seconds_since(t0);
    }

    if (options.run_baseline) {
        const auto t0 = Clock::now();
        const std::uint64_t seed = seeds.front();
        SplitData data = stage("baseline-split",
                               [&] { return prepare_split(dataset, options, seed); });
        FeatureMask mask = stage("baseline-filter",
                                 [&] { return correlation_filter(data.train, options.k_selected); });
        SplitData restricted{data.train.restrict_columns(mask), data.test.restrict_columns(mask)};
        TrainedModel model = stage("baseline-train", [&] {
            return train_fresh(restricted, nfs_config, head_config, train_config, seed, "baseline");
        });
        Metrics metrics = evaluate(model.model, restricted.test, train_config.metric);
        report.baseline = {std::move(mask), metrics};
        report.baseline_s = seconds_since(t0);
    }

    return report;
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::string mask_str(const SelectionReport& report, const FeatureMask& mask) {
    std::string out;
    for (std::size_t i = 0; i < mask.indices.size(); ++i) {
        if (i) out += " ";
        const std::size_t j = mask.indices[i];
        out += std::to_string(j);
        if (j < report.feature_names.size() && !report.feature_names[j].empty()) {
            out += "(" + report.feature_names[j] + ")";
        }
    }
    return out;
}

struct Aggregate {
    double mean = 0.0, lo = 0.0, hi = 0.0;
};

Aggregate aggregate(const std::vector<double>& values) {
    Aggregate a;
    a.lo = *std::min_element(values.begin(), values.end());
    a.hi = *std::max_element(values.begin(), values.end());
    for (double v : values) a.mean += v;
    a.mean /= static_cast<double>(values.size());
    return a;
}

}  // namespace

void write_report_text(const SelectionReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("write_report_text: cannot open " + path);
    out << "== feature selection report ==\n";
    out << "metric: " << metric_name(report.metric) << "\n";
    out << "streams: " << report.d << ", selected: " << report.k_selected << "\n";

    for (const auto& run : report.runs) {
        out << "\n-- seed " << run.seed << " --\n";
        out << "full model     " << metric_name(report.metric) << " = "
            << fmt(run.full_metrics.value) << "\n";
        out << "scores:";
        for (std::size_t j = 0; j < run.scores.per_stream.size(); ++j) {
            out << " " << j << "=" << fmt(run.scores.per_stream[j]);
        }
        out << "\n";
        out << "selected:      " << mask_str(report, run.mask) << "\n";
        out << "compact model  " << metric_name(report.metric) << " = "
            << fmt(run.compact_metrics.value) << "\n";
    }

    if (report.runs.size() > 1) {
        std::vector<double> full_values, compact_values;
        std::vector<std::size_t> counts(report.d, 0);
        for (const auto& run : report.runs) {
            full_values.push_back(run.full_metrics.value);
            compact_values.push_back(run.compact_metrics.value);
            for (std::size_t j : run.mask.indices) ++counts[j];
        }
        const Aggregate full = aggregate(full_values);
        const Aggregate compact = aggregate(compact_values);
        out << "\n-- aggregate over " << report.runs.size() << " seeds --\n";
        out << "full     mean=" << fmt(full.mean) << " min=" << fmt(full.lo)
            << " max=" << fmt(full.hi) << "\n";
        out << "compact  mean=" << fmt(compact.mean) << " min=" << fmt(compact.lo)
            << " max=" << fmt(compact.hi) << "\n";
        out << "selection counts:";
        for (std::size_t j = 0; j < report.d; ++j) {
            if (counts[j] > 0) {
                out << " " << j << ":" << counts[j] << "/" << report.runs.size();
            }
        }
        out << "\n";
    }

    if (report.oracle_best) {
        out << "\noracle best subset: " << mask_str(report, report.oracle_best->first) << " | "
            << metric_name(report.metric) << " = " << fmt(report.oracle_best->second.value) << "\n";
    }
    if (report.baseline) {
        out << "correlation baseline: " << mask_str(report, report.baseline->first) << " | "
            << metric_name(report.metric) << " = " << fmt(report.baseline->second.value) << "\n";
    }
}

void write_report_csv(const SelectionReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("write_report_csv: cannot open " + path);
    out << "variant,metric,value,seed\n";
    char buf[120];
    for (const auto& run : report.runs) {
        std::snprintf(buf, sizeof(buf), "full,%s,%.10g,%llu\n", metric_name(report.metric).c_str(),
                      run.full_metrics.value, static_cast<unsigned long long>(run.seed));
        out << buf;
        std::snprintf(buf, sizeof(buf), "compact,%s,%.10g,%llu\n",
                      metric_name(report.metric).c_str(), run.compact_metrics.value,
                      static_cast<unsigned long long>(run.seed));
        out << buf;
    }
    const unsigned long long base_seed =
        report.runs.empty() ? 0ULL : static_cast<unsigned long long>(report.runs.front().seed);
    if (report.oracle_best) {
        std::snprintf(buf, sizeof(buf), "oracle_best,%s,%.10g,%llu\n",
                      metric_name(report.metric).c_str(), report.oracle_best->second.value,
                      base_seed);
        out << buf;
    }
    if (report.baseline) {
        std::snprintf(buf, sizeof(buf), "correlation_filter,%s,%.10g,%llu\n",
                      metric_name(report.metric).c_str(), report.baseline->second.value, base_seed);
        out << buf;
    }
}

void write_timings(const SelectionReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("write_timings: cannot open " + path);
    out << "stage,seed,seconds\n";
    char buf[120];
    for (const auto& run : report.runs) {
        const auto seed = static_cast<unsigned long long>(run.seed);
        std::snprintf(buf, sizeof(buf), "train_full,%llu,%.3f\n", seed, run.timings.train_full_s);
        out << buf;
        std::snprintf(buf, sizeof(buf), "train_compact,%llu,%.3f\n", seed,
                      run.timings.train_compact_s);
        out << buf;
        std::snprintf(buf, sizeof(buf), "total,%llu,%.3f\n", seed, run.timings.total_s);
        out << buf;
    }
    if (report.oracle_best) {
        std::snprintf(buf, sizeof(buf), "oracle,,%.3f\n", report.oracle_s);
        out << buf;
    }
    if (report.baseline) {
        std::snprintf(buf, sizeof(buf), "baseline,,%.3f\n", report.baseline_s);
        out << buf;
    }
}

}  // namespace nfs
