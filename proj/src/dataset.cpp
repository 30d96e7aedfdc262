#include "nfs/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "nfs/errors.hpp"
#include "nfs/rng.hpp"

namespace nfs {

void MtsDataset::validate() const {
    if (values.size() != n * t * d) {
        throw DataError("dataset: value buffer has " + std::to_string(values.size()) +
                        " entries, expected " + std::to_string(n * t * d));
    }
    const std::size_t targets =
        task == TaskKind::Regression ? reg_targets.size() : cls_targets.size();
    if (targets != n) {
        throw DataError("dataset: " + std::to_string(targets) + " targets for " +
                        std::to_string(n) + " samples");
    }
    for (double v : values) {
        if (!std::isfinite(v)) throw DataError("dataset: non-finite feature value");
    }
    if (task == TaskKind::Regression) {
        for (double y : reg_targets) {
            if (!std::isfinite(y)) throw DataError("dataset: non-finite target");
        }
    } else {
        for (int y : cls_targets) {
            if (y < 0 || static_cast<std::size_t>(y) >= class_count) {
                throw DataError("dataset: class label " + std::to_string(y) +
                                " outside [0, " + std::to_string(class_count) + ")");
            }
        }
    }
    if (feature_names.size() != d) {
        throw DataError("dataset: " + std::to_string(feature_names.size()) + " names for " +
                        std::to_string(d) + " features");
    }
}

MtsDataset::Batch MtsDataset::make_batch(std::span<const std::size_t> indices) const {
    Batch batch;
    std::vector<double> data(indices.size() * t * d);
    for (std::size_t b = 0; b < indices.size(); ++b) {
        const std::size_t i = indices[b];
        std::copy(values.begin() + static_cast<std::ptrdiff_t>(i * t * d),
                  values.begin() + static_cast<std::ptrdiff_t>((i + 1) * t * d),
                  data.begin() + static_cast<std::ptrdiff_t>(b * t * d));
        if (task == TaskKind::Regression) {
            batch.reg_targets.push_back(reg_targets[i]);
        } else {
            batch.cls_targets.push_back(cls_targets[i]);
        }
    }
    batch.x = Tensor::from_data({indices.size(), t, d}, std::move(data));
    return batch;
}

MtsDataset MtsDataset::restrict_columns(const FeatureMask& mask) const {
    if (mask.original_d != d) {
        throw DataError("restrict_columns: mask built for " + std::to_string(mask.original_d) +
                        " streams, dataset has " + std::to_string(d));
    }
    mask.validate();
    MtsDataset out;
    out.n = n;
    out.t = t;
    out.d = mask.k_selected();
    out.task = task;
    out.reg_targets = reg_targets;
    out.cls_targets = cls_targets;
    out.class_count = class_count;
    out.values.resize(n * t * out.d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t s = 0; s < t; ++s)
            for (std::size_t j = 0; j < out.d; ++j)
                out.values[(i * t + s) * out.d + j] = at(i, s, mask.indices[j]);
    for (std::size_t j : mask.indices) out.feature_names.push_back(feature_names[j]);
    // Remap surviving planted indices into the restricted column space.
    for (std::size_t p : planted) {
        auto it = std::find(mask.indices.begin(), mask.indices.end(), p);
        if (it != mask.indices.end()) {
            out.planted.push_back(static_cast<std::size_t>(it - mask.indices.begin()));
        }
    }
    return out;
}

void SyntheticSpec::validate() const {
    if (n < 1 || t < 1 || d < 1) throw ConfigError("SyntheticSpec: n, t, d must be >= 1");
    if (informative.empty()) throw ConfigError("SyntheticSpec: need at least one informative stream");
    if (informative.size() > d) {
        throw ConfigError("SyntheticSpec: " + std::to_string(informative.size()) +
                          " informative streams exceed d=" + std::to_string(d));
    }
    for (std::size_t i = 0; i < informative.size(); ++i) {
        if (informative[i] >= d) {
            throw ConfigError("SyntheticSpec: informative index " +
                              std::to_string(informative[i]) + " out of range");
        }
        if (i > 0 && informative[i] <= informative[i - 1]) {
            throw ConfigError("SyntheticSpec: informative indices must be strictly ascending");
        }
    }
    if (families.empty()) throw ConfigError("SyntheticSpec: families must be nonempty");
    if (noise_sigma_rel < 0.0) throw ConfigError("SyntheticSpec: noise_sigma_rel must be >= 0");
    if (redundant_copy) {
        const auto [copy_idx, source_idx] = *redundant_copy;
        if (copy_idx >= d || source_idx >= d || source_idx >= copy_idx) {
            throw ConfigError("SyntheticSpec: redundant copy needs source < copy, both < d");
        }
        if (!std::binary_search(informative.begin(), informative.end(), source_idx)) {
            throw ConfigError("SyntheticSpec: redundant source must be informative");
        }
        if (std::binary_search(informative.begin(), informative.end(), copy_idx)) {
            throw ConfigError("SyntheticSpec: redundant copy slot must not be informative");
        }
    }
}

double SyntheticSpec::readout_weight(std::size_t m) {
    const double magnitude = 1.0 / (1.0 + 0.25 * static_cast<double>(m));
    return (m % 2 == 0) ? magnitude : -magnitude;
}

MtsDataset generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng(mix_seed(spec.seed));

    MtsDataset ds;
    ds.n = spec.n;
    ds.t = spec.t;
    ds.d = spec.d;
    ds.task = spec.task;
    ds.planted = spec.informative;
    ds.values.resize(spec.n * spec.t * spec.d);
    for (std::size_t j = 0; j < spec.d; ++j) ds.feature_names.push_back("s" + std::to_string(j));

    std::vector<double> readout(spec.n);
    const double step_frac = spec.t > 1 ? 1.0 / static_cast<double>(spec.t - 1) : 0.0;
    for (std::size_t i = 0; i < spec.n; ++i) {
        double* sample = ds.values.data() + i * spec.t * spec.d;
        for (std::size_t j = 0; j < spec.d; ++j) {
            auto pos = std::lower_bound(spec.informative.begin(), spec.informative.end(), j);
            const bool is_informative = pos != spec.informative.end() && *pos == j;
            if (is_informative) {
                const std::size_t m = static_cast<std::size_t>(pos - spec.informative.begin());
                switch (spec.families[m % spec.families.size()]) {
                    case SignalFamily::Sinusoid: {
                        const double level = gaussian(rng);
                        const double amp = uniform(rng, 0.5, 1.5);
                        const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
                        for (std::size_t s = 0; s < spec.t; ++s) {
                            const double arg = 2.0 * std::numbers::pi * 2.0 *
                                                   static_cast<double>(s) /
                                                   static_cast<double>(spec.t) +
                                               phase;
                            sample[s * spec.d + j] = level + amp * std::sin(arg);
                        }
                        break;
                    }
                    case SignalFamily::Ar1: {
                        const double level = gaussian(rng);
                        double prev = level + 0.3 * gaussian(rng);
                        sample[j] = prev;
                        for (std::size_t s = 1; s < spec.t; ++s) {
                            prev = level + 0.8 * (prev - level) + 0.3 * gaussian(rng);
                            sample[s * spec.d + j] = prev;
                        }
                        break;
                    }
                    case SignalFamily::Trend: {
                        const double level = gaussian(rng);
                        const double slope = uniform(rng, -1.5, 1.5);
                        for (std::size_t s = 0; s < spec.t; ++s) {
                            sample[s * spec.d + j] =
                                level + slope * (static_cast<double>(s) * step_frac - 0.5);
                        }
                        break;
                    }
                }
            } else if (spec.redundant_copy && spec.redundant_copy->first == j) {
                const std::size_t src = spec.redundant_copy->second;  // src < j: already filled
                for (std::size_t s = 0; s < spec.t; ++s) {
                    sample[s * spec.d + j] = sample[s * spec.d + src] + 0.5 * gaussian(rng);
                }
            } else {
                for (std::size_t s = 0; s < spec.t; ++s) sample[s * spec.d + j] = gaussian(rng);
            }
        }
        double acc = 0.0;
        for (std::size_t m = 0; m < spec.informative.size(); ++m) {
            const std::size_t j = spec.informative[m];
            double mean = 0.0;
            for (std::size_t s = 0; s < spec.t; ++s) mean += sample[s * spec.d + j];
            mean /= static_cast<double>(spec.t);
            acc += SyntheticSpec::readout_weight(m) * mean;
        }
        readout[i] = acc;
    }

    double mean_r = 0.0;
    for (double r : readout) mean_r += r;
    mean_r /= static_cast<double>(spec.n);
    double var_r = 0.0;
    for (double r : readout) var_r += (r - mean_r) * (r - mean_r);
    var_r /= static_cast<double>(spec.n);
    const double sigma = spec.noise_sigma_rel * std::sqrt(var_r);

    if (spec.task == TaskKind::Regression) {
        ds.reg_targets.resize(spec.n);
        for (std::size_t i = 0; i < spec.n; ++i) {
            ds.reg_targets[i] = readout[i] + sigma * gaussian(rng);
        }
    } else {
        ds.class_count = 2;
        ds.cls_targets.resize(spec.n);
        for (std::size_t i = 0; i < spec.n; ++i) {
            ds.cls_targets[i] = (readout[i] + sigma * gaussian(rng)) > 0.0 ? 1 : 0;
        }
    }
    ds.validate();
    return ds;
}

namespace {

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

double parse_cell(const std::string& cell, std::size_t line_no, const std::string& column) {
    std::size_t consumed = 0;
    double v = 0.0;
    try {
        v = std::stod(cell, &consumed);
    } catch (const std::exception&) {
        throw DataError("csv line " + std::to_string(line_no) + ": non-numeric cell '" + cell +
                        "' in column " + column);
    }
    if (consumed != cell.size() || !std::isfinite(v)) {
        throw DataError("csv line " + std::to_string(line_no) + ": non-numeric cell '" + cell +
                        "' in column " + column);
    }
    return v;
}

}  // namespace

void save_csv(const MtsDataset& dataset, const std::string& path) {
    dataset.validate();
    std::ofstream out(path);
    if (!out) throw DataError("save_csv: cannot open " + path + " for writing");
    out << "sample_id,t";
    for (const auto& name : dataset.feature_names) out << "," << name;
    out << ",target\n";
    for (std::size_t i = 0; i < dataset.n; ++i) {
        const std::string target = dataset.task == TaskKind::Regression
                                       ? format_double(dataset.reg_targets[i])
                                       : std::to_string(dataset.cls_targets[i]);
        for (std::size_t s = 0; s < dataset.t; ++s) {
            out << i << "," << s;
            for (std::size_t j = 0; j < dataset.d; ++j)
                out << "," << format_double(dataset.at(i, s, j));
            out << "," << target << "\n";
        }
    }
    out.close();

    nlohmann::json meta;
    meta["task"] = dataset.task == TaskKind::Regression ? "regression" : "classification";
    meta["n"] = dataset.n;
    meta["t"] = dataset.t;
    meta["d"] = dataset.d;
    meta["feature_names"] = dataset.feature_names;
    if (dataset.task == TaskKind::Classification) meta["class_count"] = dataset.class_count;
    if (!dataset.planted.empty()) meta["planted"] = dataset.planted;
    std::ofstream meta_out(path + ".meta");
    if (!meta_out) throw DataError("save_csv: cannot open " + path + ".meta for writing");
    meta_out << meta.dump(2) << "\n";
}

MtsDataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("load_csv: cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw DataError("load_csv: " + path + " is empty");
    auto header = split_line(line);
    if (header.size() < 4 || header[0] != "sample_id" || header[1] != "t" ||
        header.back() != "target") {
        throw DataError("load_csv: header must be sample_id,t,<features...>,target");
    }
    const std::size_t d = header.size() - 3;

    struct SampleRows {
        std::vector<std::vector<double>> rows;
        double target = 0.0;
        std::size_t first_line = 0;
    };
    std::vector<std::string> order;
    std::map<std::string, SampleRows> samples;

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto cells = split_line(line);
        if (cells.size() != header.size()) {
            throw DataError("csv line " + std::to_string(line_no) + ": expected " +
                            std::to_string(header.size()) + " columns, got " +
                            std::to_string(cells.size()));
        }
        const std::string& sample_id = cells[0];
        const double t_val = parse_cell(cells[1], line_no, "t");
        auto [it, inserted] = samples.try_emplace(sample_id);
        if (inserted) {
            order.push_back(sample_id);
            it->second.first_line = line_no;
        }
        auto& rec = it->second;
        if (static_cast<double>(rec.rows.size()) != t_val) {
            throw DataError("csv line " + std::to_string(line_no) + ": sample '" + sample_id +
                            "' has timestep " + cells[1] + ", expected " +
                            std::to_string(rec.rows.size()));
        }
        std::vector<double> row(d);
        for (std::size_t j = 0; j < d; ++j) {
            row[j] = parse_cell(cells[2 + j], line_no, header[2 + j]);
        }
        const double target = parse_cell(cells.back(), line_no, "target");
        if (rec.rows.empty()) {
            rec.target = target;
        } else if (rec.target != target) {
            throw DataError("csv line " + std::to_string(line_no) + ": sample '" + sample_id +
                            "' has inconsistent target values");
        }
        rec.rows.push_back(std::move(row));
    }
    if (order.empty()) throw DataError("load_csv: " + path + " has no data rows");

    const std::size_t T = samples[order.front()].rows.size();
    for (const auto& id : order) {
        if (samples[id].rows.size() != T) {
            throw DataError("load_csv: sample '" + id + "' has " +
                            std::to_string(samples[id].rows.size()) + " timesteps, expected " +
                            std::to_string(T) + " (ragged input)");
        }
    }

    MtsDataset ds;
    ds.n = order.size();
    ds.t = T;
    ds.d = d;
    ds.feature_names.assign(header.begin() + 2, header.end() - 1);
    ds.values.reserve(ds.n * T * d);
    for (const auto& id : order) {
        for (const auto& row : samples[id].rows) {
            ds.values.insert(ds.values.end(), row.begin(), row.end());
        }
    }

    // Sidecar metadata decides the task; without one the file is regression.
    ds.task = TaskKind::Regression;
    std::ifstream meta_in(path + ".meta");
    if (meta_in) {
        nlohmann::json meta;
        try {
            meta_in >> meta;
        } catch (const std::exception& e) {
            throw DataError("load_csv: malformed sidecar " + path + ".meta: " + e.what());
        }
        if (meta.value("task", "regression") == "classification") {
            ds.task = TaskKind::Classification;
            ds.class_count = meta.value("class_count", 2u);
        }
        if (meta.contains("planted")) {
            ds.planted = meta["planted"].get<std::vector<std::size_t>>();
        }
    }
    if (ds.task == TaskKind::Regression) {
        for (const auto& id : order) ds.reg_targets.push_back(samples[id].target);
    } else {
        for (const auto& id : order) {
            const double y = samples[id].target;
            if (y != std::floor(y) || y < 0.0) {
                throw DataError("load_csv: sample '" + id + "' has non-integral class target");
            }
            ds.cls_targets.push_back(static_cast<int>(y));
        }
        if (ds.class_count == 0) {
            ds.class_count = static_cast<std::size_t>(
                                 *std::max_element(ds.cls_targets.begin(), ds.cls_targets.end())) +
                             1;
        }
    }
    ds.validate();
    return ds;
}

MtsDataset window(const LongSeries& series, std::size_t t_window, std::size_t horizon) {
    if (horizon == 0) {
        throw ConfigError("window: horizon 0 would place the target inside the input window");
    }
    if (t_window == 0) throw ConfigError("window: window length must be >= 1");
    if (series.values.size() != series.length * series.d ||
        series.target.size() != series.length) {
        throw DataError("window: series buffers do not match declared length");
    }
    if (series.length < t_window + horizon) {
        throw DataError("window: series length " + std::to_string(series.length) +
                        " too short for T=" + std::to_string(t_window) +
                        ", horizon=" + std::to_string(horizon));
    }
    const std::size_t count = series.length - t_window - horizon + 1;
    MtsDataset ds;
    ds.n = count;
    ds.t = t_window;
    ds.d = series.d;
    ds.task = TaskKind::Regression;
    ds.feature_names = series.feature_names;
    if (ds.feature_names.empty()) {
        for (std::size_t j = 0; j < series.d; ++j) ds.feature_names.push_back("s" + std::to_string(j));
    }
    ds.values.resize(count * t_window * series.d);
    ds.reg_targets.resize(count);
    for (std::size_t s = 0; s < count; ++s) {
        std::copy(series.values.begin() + static_cast<std::ptrdiff_t>(s * series.d),
                  series.values.begin() + static_cast<std::ptrdiff_t>((s + t_window) * series.d),
                  ds.values.begin() + static_cast<std::ptrdiff_t>(s * t_window * series.d));
        ds.reg_targets[s] = series.target[s + t_window - 1 + horizon];
    }
    ds.validate();
    return ds;
}

namespace {

MtsDataset take_rows(const MtsDataset& src, const std::vector<std::size_t>& rows) {
    MtsDataset out;
    out.n = rows.size();
    out.t = src.t;
    out.d = src.d;
    out.task = src.task;
    out.class_count = src.class_count;
    out.feature_names = src.feature_names;
    out.planted = src.planted;
    out.values.resize(rows.size() * src.t * src.d);
    for (std::size_t b = 0; b < rows.size(); ++b) {
        const std::size_t i = rows[b];
        std::copy(src.values.begin() + static_cast<std::ptrdiff_t>(i * src.t * src.d),
                  src.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * src.t * src.d),
                  out.values.begin() + static_cast<std::ptrdiff_t>(b * src.t * src.d));
        if (src.task == TaskKind::Regression) {
            out.reg_targets.push_back(src.reg_targets[i]);
        } else {
            out.cls_targets.push_back(src.cls_targets[i]);
        }
    }
    return out;
}

}  // namespace

std::pair<MtsDataset, MtsDataset> split(const MtsDataset& dataset, double test_fraction,
                                        std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw ConfigError("split: test_fraction must lie in (0, 1)");
    }
    const std::size_t n_test = static_cast<std::size_t>(
        std::llround(static_cast<double>(dataset.n) * test_fraction));
    if (n_test == 0 || n_test >= dataset.n) {
        throw DataError("split: fraction " + std::to_string(test_fraction) +
                        " leaves an empty side for n=" + std::to_string(dataset.n));
    }
    std::vector<std::size_t> perm(dataset.n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(mix_seed(seed));
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::size_t> test_rows(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_test));
    std::vector<std::size_t> train_rows(perm.begin() + static_cast<std::ptrdiff_t>(n_test), perm.end());
    std::sort(test_rows.begin(), test_rows.end());
    std::sort(train_rows.begin(), train_rows.end());
    return {take_rows(dataset, train_rows), take_rows(dataset, test_rows)};
}

std::pair<MtsDataset, MtsDataset> split_chronological(const MtsDataset& dataset,
                                                      double test_fraction) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw ConfigError("split: test_fraction must lie in (0, 1)");
    }
    const std::size_t n_test = static_cast<std::size_t>(
        std::llround(static_cast<double>(dataset.n) * test_fraction));
    if (n_test == 0 || n_test >= dataset.n) {
        throw DataError("split: fraction " + std::to_string(test_fraction) +
                        " leaves an empty side for n=" + std::to_string(dataset.n));
    }
    std::vector<std::size_t> train_rows(dataset.n - n_test);
    std::iota(train_rows.begin(), train_rows.end(), 0);
    std::vector<std::size_t> test_rows(n_test);
    std::iota(test_rows.begin(), test_rows.end(), dataset.n - n_test);
    return {take_rows(dataset, train_rows), take_rows(dataset, test_rows)};
}

FeatureStats standardize(MtsDataset& train, MtsDataset& test) {
    if (train.d != test.d || train.t != test.t) {
        throw DataError("standardize: train/test shape mismatch");
    }
    FeatureStats stats;
    stats.mean.resize(train.d);
    stats.stddev.resize(train.d);
    const std::size_t rows = train.n * train.t;
    for (std::size_t j = 0; j < train.d; ++j) {
        double m = 0.0;
        for (std::size_t i = 0; i < rows; ++i) m += train.values[i * train.d + j];
        m /= static_cast<double>(rows);
        double v = 0.0;
        for (std::size_t i = 0; i < rows; ++i) {
            const double dlt = train.values[i * train.d + j] - m;
            v += dlt * dlt;
        }
        v /= static_cast<double>(rows);
        double sd = std::sqrt(v);
        if (sd == 0.0) sd = 1.0;  // constant feature: leave values centered, not NaN
        stats.mean[j] = m;
        stats.stddev[j] = sd;
    }
    auto apply = [&](MtsDataset& ds) {
        const std::size_t r = ds.n * ds.t;
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < ds.d; ++j)
                ds.values[i * ds.d + j] = (ds.values[i * ds.d + j] - stats.mean[j]) / stats.stddev[j];
    };
    apply(train);
    apply(test);
    return stats;
}

MtsDataset balance_classes(const MtsDataset& dataset, std::uint64_t seed) {
    if (dataset.task != TaskKind::Classification) {
        throw DataError("balance_classes: dataset is not a classification task");
    }
    if (dataset.class_count < 2) {
        throw DataError("balance_classes: need at least two classes");
    }
    std::vector<std::vector<std::size_t>> by_class(dataset.class_count);
    for (std::size_t i = 0; i < dataset.n; ++i) {
        by_class[static_cast<std::size_t>(dataset.cls_targets[i])].push_back(i);
    }
    std::size_t present = 0;
    std::size_t majority = 0;
    for (const auto& rows : by_class) {
        if (!rows.empty()) ++present;
        majority = std::max(majority, rows.size());
    }
    if (present < 2) {
        throw DataError("balance_classes: dataset contains a single class");
    }
    std::vector<std::size_t> rows(dataset.n);
    std::iota(rows.begin(), rows.end(), 0);
    Rng rng(mix_seed(seed));
    for (std::size_t cls = 0; cls < by_class.size(); ++cls) {
        const auto& members = by_class[cls];
        if (members.empty()) continue;
        std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
        for (std::size_t extra = members.size(); extra < majority; ++extra) {
            rows.push_back(members[pick(rng)]);
        }
    }
    return take_rows(dataset, rows);
}

}  // namespace nfs
