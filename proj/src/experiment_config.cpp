#include "nfs/experiment_config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "nfs/errors.hpp"

namespace nfs {

namespace {

using Section = std::map<std::string, std::string>;
using RawConfig = std::map<std::string, Section>;

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

RawConfig read_raw(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config file not found: " + path);
    RawConfig raw;
    std::string section;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto comment = line.find_first_of("#;");
        if (comment != std::string::npos) line = line.substr(0, comment);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ConfigError(path + ":" + std::to_string(line_no) + ": malformed section");
            }
            section = trim(line.substr(1, line.size() - 2));
            raw.try_emplace(section);
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos || section.empty()) {
            throw ConfigError(path + ":" + std::to_string(line_no) +
                              ": expected `key = value` inside a [section]");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError(path + ":" + std::to_string(line_no) + ": empty key");
        }
        raw[section][key] = value;
    }
    return raw;
}

// Tracks which keys were consumed so typos surface as errors.
class SectionReader {
public:
    SectionReader(const RawConfig& raw, const std::string& name) : name_(name) {
        auto it = raw.find(name);
        if (it != raw.end()) section_ = &it->second;
    }

    bool has(const std::string& key) const {
        return section_ && section_->count(key) > 0;
    }

    std::string get(const std::string& key, const std::string& fallback) {
        consumed_.insert(key);
        if (!has(key)) return fallback;
        return section_->at(key);
    }

    double get_double(const std::string& key, double fallback) {
        if (!has(key)) {
            consumed_.insert(key);
            return fallback;
        }
        return parse_double(key, get(key, ""));
    }

    std::size_t get_size(const std::string& key, std::size_t fallback) {
        if (!has(key)) {
            consumed_.insert(key);
            return fallback;
        }
        const double v = parse_double(key, get(key, ""));
        if (v < 0 || v != std::floor(v)) {
            throw ConfigError("[" + name_ + "] " + key + ": expected a non-negative integer");
        }
        return static_cast<std::size_t>(v);
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) {
        if (!has(key)) {
            consumed_.insert(key);
            return fallback;
        }
        const std::string s = get(key, "");
        try {
            return std::stoull(s);
        } catch (const std::exception&) {
            throw ConfigError("[" + name_ + "] " + key + ": expected an unsigned integer, got '" +
                              s + "'");
        }
    }

    bool get_bool(const std::string& key, bool fallback) {
        if (!has(key)) {
            consumed_.insert(key);
            return fallback;
        }
        const std::string s = get(key, "");
        if (s == "true" || s == "1" || s == "yes") return true;
        if (s == "false" || s == "0" || s == "no") return false;
        throw ConfigError("[" + name_ + "] " + key + ": expected true/false, got '" + s + "'");
    }

    std::vector<std::string> get_list(const std::string& key) {
        std::vector<std::string> items;
        std::stringstream ss(get(key, ""));
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (!item.empty()) items.push_back(item);
        }
        return items;
    }

    std::vector<std::size_t> get_size_list(const std::string& key,
                                           std::vector<std::size_t> fallback) {
        if (!has(key)) {
            consumed_.insert(key);
            return fallback;
        }
        std::vector<std::size_t> out;
        for (const auto& item : get_list(key)) {
            const double v = parse_double(key, item);
            if (v < 0 || v != std::floor(v)) {
                throw ConfigError("[" + name_ + "] " + key + ": expected integers");
            }
            out.push_back(static_cast<std::size_t>(v));
        }
        return out;
    }

    void finish() const {
        if (!section_) return;
        for (const auto& [key, value] : *section_) {
            if (!consumed_.count(key)) {
                throw ConfigError("[" + name_ + "] unknown key '" + key + "'");
            }
        }
    }

private:
    double parse_double(const std::string& key, const std::string& s) const {
        std::size_t consumed = 0;
        double v = 0.0;
        try {
            v = std::stod(s, &consumed);
        } catch (const std::exception&) {
            throw ConfigError("[" + name_ + "] " + key + ": expected a number, got '" + s + "'");
        }
        if (consumed != s.size()) {
            throw ConfigError("[" + name_ + "] " + key + ": expected a number, got '" + s + "'");
        }
        return v;
    }

    const Section* section_ = nullptr;
    std::string name_;
    std::set<std::string> consumed_;
};

SignalFamily parse_family(const std::string& s) {
    if (s == "sin" || s == "sinusoid") return SignalFamily::Sinusoid;
    if (s == "ar" || s == "ar1") return SignalFamily::Ar1;
    if (s == "trend") return SignalFamily::Trend;
    throw ConfigError("[dataset] families: unknown family '" + s + "' (sin|ar|trend)");
}

std::string family_name(SignalFamily f) {
    switch (f) {
        case SignalFamily::Sinusoid: return "sin";
        case SignalFamily::Ar1: return "ar";
        case SignalFamily::Trend: return "trend";
    }
    return "?";
}

MetricKind parse_metric(const std::string& s) {
    if (s == "rmse") return MetricKind::Rmse;
    if (s == "mae") return MetricKind::Mae;
    if (s == "auc") return MetricKind::Auc;
    if (s == "accuracy") return MetricKind::Accuracy;
    throw ConfigError("[train] metric: unknown metric '" + s + "' (rmse|mae|auc|accuracy)");
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& path) {
    const RawConfig raw = read_raw(path);
    for (const auto& [section, keys] : raw) {
        static const std::set<std::string> known = {"dataset", "nfs", "head",
                                                    "train",   "select", "output"};
        if (!known.count(section)) {
            throw ConfigError(path + ": unknown section [" + section + "]");
        }
    }
    ExperimentConfig cfg;

    {
        SectionReader ds(raw, "dataset");
        const std::string source = ds.get("source", "synthetic");
        if (source == "synthetic") {
            cfg.dataset.kind = DatasetSource::Kind::Synthetic;
        } else if (source == "csv") {
            cfg.dataset.kind = DatasetSource::Kind::Csv;
        } else {
            throw ConfigError("[dataset] source: expected synthetic|csv, got '" + source + "'");
        }
        cfg.dataset.csv_path = ds.get("path", "");
        auto& spec = cfg.dataset.synthetic;
        spec.n = ds.get_size("n", spec.n);
        spec.t = ds.get_size("t", spec.t);
        spec.d = ds.get_size("d", spec.d);
        spec.informative = ds.get_size_list("informative", spec.informative);
        if (ds.has("families")) {
            std::vector<SignalFamily> families;
            for (const auto& item : ds.get_list("families")) families.push_back(parse_family(item));
            spec.families = std::move(families);
        } else {
            ds.get("families", "");
        }
        const std::string task = ds.get("task", "regression");
        if (task == "regression") {
            spec.task = TaskKind::Regression;
        } else if (task == "classification") {
            spec.task = TaskKind::Classification;
        } else {
            throw ConfigError("[dataset] task: expected regression|classification");
        }
        spec.noise_sigma_rel = ds.get_double("noise_sigma_rel", spec.noise_sigma_rel);
        auto redundant = ds.get_size_list("redundant_copy", {});
        if (!redundant.empty()) {
            if (redundant.size() != 2) {
                throw ConfigError("[dataset] redundant_copy: expected `copy,source`");
            }
            spec.redundant_copy = {redundant[0], redundant[1]};
        }
        spec.seed = ds.get_u64("seed", spec.seed);
        if (cfg.dataset.kind == DatasetSource::Kind::Csv && cfg.dataset.csv_path.empty()) {
            throw ConfigError("[dataset] source=csv requires `path`");
        }
        ds.finish();
    }

    {
        SectionReader nf(raw, "nfs");
        cfg.nfs.branch_widths = nf.get_size_list("branch_widths", cfg.nfs.branch_widths);
        cfg.nfs.filters_per_branch = nf.get_size("filters_per_branch", cfg.nfs.filters_per_branch);
        cfg.nfs.n_aggregate = nf.get_size("n_aggregate", cfg.nfs.n_aggregate);
        cfg.nfs.temporal_l2 = nf.get_double("temporal_l2", cfg.nfs.temporal_l2);
        cfg.nfs.aggregate_l1 = nf.get_double("aggregate_l1", cfg.nfs.aggregate_l1);
        nf.finish();
    }

    {
        SectionReader hd(raw, "head");
        const std::string kind = hd.get("kind", "conv");
        if (kind == "conv") {
            cfg.head.kind = HeadKind::Conv;
        } else if (kind == "recurrent") {
            cfg.head.kind = HeadKind::Recurrent;
        } else {
            throw ConfigError("[head] kind: expected conv|recurrent, got '" + kind + "'");
        }
        cfg.head.class_count = hd.get_size("class_count", cfg.head.class_count);
        cfg.head.input_channels = hd.get_size("input_channels", cfg.nfs.n_aggregate);
        cfg.head.conv_filters = hd.get_size_list("conv_filters", cfg.head.conv_filters);
        cfg.head.conv_widths = hd.get_size_list("conv_widths", cfg.head.conv_widths);
        cfg.head.pool_factors = hd.get_size_list("pool_factors", cfg.head.pool_factors);
        cfg.head.hidden_size = hd.get_size("hidden_size", cfg.head.hidden_size);
        hd.finish();
    }
    cfg.head.task = cfg.dataset.kind == DatasetSource::Kind::Synthetic
                        ? cfg.dataset.synthetic.task
                        : cfg.head.task;  // csv: task resolved when the file is loaded

    {
        SectionReader tr(raw, "train");
        cfg.train.gamma = tr.get_double("gamma", cfg.train.gamma);
        cfg.train.temporal_l2 = tr.get_double("temporal_l2", cfg.nfs.temporal_l2);
        cfg.train.aggregate_l1 = tr.get_double("aggregate_l1", cfg.nfs.aggregate_l1);
        cfg.train.epochs = tr.get_size("epochs", cfg.train.epochs);
        cfg.train.batch_size = tr.get_size("batch_size", cfg.train.batch_size);
        cfg.train.lr = tr.get_double("lr", cfg.train.lr);
        cfg.train.seed = tr.get_u64("seed", cfg.train.seed);
        if (tr.has("metric")) {
            cfg.train.metric = parse_metric(tr.get("metric", ""));
        } else {
            tr.get("metric", "");
            cfg.train.metric = cfg.head.task == TaskKind::Classification ? MetricKind::Accuracy
                                                                         : MetricKind::Rmse;
        }
        tr.finish();
    }

    {
        SectionReader sel(raw, "select");
        cfg.pipeline.k_selected = sel.get_size("k_selected", 1);
        cfg.pipeline.test_fraction = sel.get_double("test_fraction", cfg.pipeline.test_fraction);
        cfg.pipeline.chronological_split =
            sel.get_bool("chronological", cfg.pipeline.chronological_split);
        cfg.pipeline.standardize_features =
            sel.get_bool("standardize", cfg.pipeline.standardize_features);
        cfg.pipeline.run_oracle = sel.get_bool("with_oracle", cfg.pipeline.run_oracle);
        cfg.pipeline.run_baseline = sel.get_bool("with_baseline", cfg.pipeline.run_baseline);
        if (sel.has("seeds")) {
            std::vector<std::uint64_t> seeds;
            for (const auto& item : sel.get_list("seeds")) {
                try {
                    seeds.push_back(std::stoull(item));
                } catch (const std::exception&) {
                    throw ConfigError("[select] seeds: expected unsigned integers");
                }
            }
            if (seeds.empty()) throw ConfigError("[select] seeds: list is empty");
            std::set<std::uint64_t> unique(seeds.begin(), seeds.end());
            if (unique.size() != seeds.size()) {
                throw ConfigError("[select] seeds: duplicate seed values");
            }
            cfg.seeds = std::move(seeds);
        } else {
            sel.get("seeds", "");
            cfg.seeds = {cfg.train.seed};
        }
        sel.finish();
    }

    {
        SectionReader out(raw, "output");
        cfg.out_dir = out.get("dir", "");
        out.finish();
    }

    return cfg;
}

std::string dump_experiment_config(const ExperimentConfig& cfg) {
    std::ostringstream out;
    char buf[64];
    auto num = [&buf](double v) {
        std::snprintf(buf, sizeof(buf), "%.10g", v);
        return std::string(buf);
    };
    auto list = [](const std::vector<std::size_t>& vs) {
        std::string s;
        for (std::size_t i = 0; i < vs.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(vs[i]);
        }
        return s;
    };

    out << "[dataset]\n";
    if (cfg.dataset.kind == DatasetSource::Kind::Csv) {
        out << "source = csv\n";
        out << "path = " << cfg.dataset.csv_path << "\n";
    } else {
        const auto& spec = cfg.dataset.synthetic;
        out << "source = synthetic\n";
        out << "n = " << spec.n << "\nt = " << spec.t << "\nd = " << spec.d << "\n";
        out << "informative = " << list(spec.informative) << "\n";
        out << "families = ";
        for (std::size_t i = 0; i < spec.families.size(); ++i) {
            if (i) out << ",";
            out << family_name(spec.families[i]);
        }
        out << "\n";
        out << "task = "
            << (spec.task == TaskKind::Regression ? "regression" : "classification") << "\n";
        out << "noise_sigma_rel = " << num(spec.noise_sigma_rel) << "\n";
        if (spec.redundant_copy) {
            out << "redundant_copy = " << spec.redundant_copy->first << ","
                << spec.redundant_copy->second << "\n";
        }
        out << "seed = " << spec.seed << "\n";
    }

    out << "[nfs]\n";
    out << "branch_widths = " << list(cfg.nfs.branch_widths) << "\n";
    out << "filters_per_branch = " << cfg.nfs.filters_per_branch << "\n";
    out << "n_aggregate = " << cfg.nfs.n_aggregate << "\n";
    out << "temporal_l2 = " << num(cfg.nfs.temporal_l2) << "\n";
    out << "aggregate_l1 = " << num(cfg.nfs.aggregate_l1) << "\n";

    out << "[head]\n";
    out << "kind = " << (cfg.head.kind == HeadKind::Conv ? "conv" : "recurrent") << "\n";
    out << "class_count = " << cfg.head.class_count << "\n";
    out << "input_channels = " << cfg.head.input_channels << "\n";
    out << "conv_filters = " << list(cfg.head.conv_filters) << "\n";
    out << "conv_widths = " << list(cfg.head.conv_widths) << "\n";
    out << "pool_factors = " << list(cfg.head.pool_factors) << "\n";
    out << "hidden_size = " << cfg.head.hidden_size << "\n";

    out << "[train]\n";
    out << "gamma = " << num(cfg.train.gamma) << "\n";
    out << "temporal_l2 = " << num(cfg.train.temporal_l2) << "\n";
    out << "aggregate_l1 = " << num(cfg.train.aggregate_l1) << "\n";
    out << "epochs = " << cfg.train.epochs << "\n";
    out << "batch_size = " << cfg.train.batch_size << "\n";
    out << "lr = " << num(cfg.train.lr) << "\n";
    out << "seed = " << cfg.train.seed << "\n";
    out << "metric = " << metric_name(cfg.train.metric) << "\n";

    out << "[select]\n";
    out << "k_selected = " << cfg.pipeline.k_selected << "\n";
    out << "test_fraction = " << num(cfg.pipeline.test_fraction) << "\n";
    out << "chronological = " << (cfg.pipeline.chronological_split ? "true" : "false") << "\n";
    out << "standardize = " << (cfg.pipeline.standardize_features ? "true" : "false") << "\n";
    out << "with_oracle = " << (cfg.pipeline.run_oracle ? "true" : "false") << "\n";
    out << "with_baseline = " << (cfg.pipeline.run_baseline ? "true" : "false") << "\n";
    out << "seeds = ";
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
        if (i) out << ",";
        out << cfg.seeds[i];
    }
    out << "\n";
    return out.str();
}

MtsDataset resolve_dataset(const ExperimentConfig& config) {
    if (config.dataset.kind == DatasetSource::Kind::Csv) {
        return load_csv(config.dataset.csv_path);
    }
    return generate_synthetic(config.dataset.synthetic);
}

}  // namespace nfs
