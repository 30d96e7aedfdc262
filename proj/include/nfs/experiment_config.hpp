#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nfs/dataset.hpp"
#include "nfs/pipeline.hpp"

namespace nfs {

struct DatasetSource {
    enum class Kind { Synthetic, Csv };
    Kind kind = Kind::Synthetic;
    SyntheticSpec synthetic;
    std::string csv_path;
};

// Everything one experiment needs, resolved from a config file plus flag
// overrides.
struct ExperimentConfig {
    DatasetSource dataset;
    NfsConfig nfs;
    HeadConfig head;
    TrainConfig train;
    PipelineOptions pipeline;
    std::vector<std::uint64_t> seeds = {1};
    std::string out_dir;
    bool metric_explicit = false;  // user pinned [train] metric
};

// Parses the sectioned key=value config format (see README). Unknown
// sections or keys are errors.
ExperimentConfig parse_experiment_config(const std::string& path);

// Canonical text form of the resolved config (output directory excluded), as
// recorded in run manifests.
std::string dump_experiment_config(const ExperimentConfig& config);

MtsDataset resolve_dataset(const ExperimentConfig& config);

// Aligns head task / class count / default metric with the dataset actually
// loaded (CSV sidecars decide the task only at load time).
void finalize_for_dataset(ExperimentConfig& config, const MtsDataset& dataset);

}  // namespace nfs
