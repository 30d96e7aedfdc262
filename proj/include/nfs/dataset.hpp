#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nfs/heads.hpp"
#include "nfs/nfs_module.hpp"
#include "nfs/tensor.hpp"

namespace nfs {

// A supervised multivariate time-series dataset: N samples, each a length-T
// sequence of d-dimensional observations, with one target per sample.
struct MtsDataset {
    std::size_t n = 0, t = 0, d = 0;
    TaskKind task = TaskKind::Regression;
    std::vector<double> values;        // n*t*d, row-major (sample, time, stream)
    std::vector<double> reg_targets;   // regression
    std::vector<int> cls_targets;      // classification
    std::size_t class_count = 0;       // classification
    std::vector<std::string> feature_names;
    std::vector<std::size_t> planted;  // ground-truth informative streams, if known

    double at(std::size_t sample, std::size_t step, std::size_t stream) const {
        return values[(sample * t + step) * d + stream];
    }
    std::size_t size() const { return n; }
    void validate() const;

    // Input tensor plus matching target views for the given sample indices.
    struct Batch {
        Tensor x;  // [B x T x d]
        std::vector<double> reg_targets;
        std::vector<int> cls_targets;
    };
    Batch make_batch(std::span<const std::size_t> indices) const;

    // Physically column-restricted copy: only the masked streams survive.
    MtsDataset restrict_columns(const FeatureMask& mask) const;
};

enum class SignalFamily { Sinusoid, Ar1, Trend };

// Recipe for a planted-signal dataset: the target is a fixed linear readout
// of the informative streams' per-sample means plus optional noise, so the
// informative set is exact ground truth for selection experiments.
struct SyntheticSpec {
    std::size_t n = 2000, t = 24, d = 16;
    std::vector<std::size_t> informative = {2, 5, 9};
    std::vector<SignalFamily> families = {SignalFamily::Sinusoid, SignalFamily::Ar1,
                                          SignalFamily::Trend};  // cycled over informative
    TaskKind task = TaskKind::Regression;
    double noise_sigma_rel = 0.3;  // target noise as a fraction of readout std; 0 = noiseless
    // Optional redundancy: stream `first` becomes a noisy copy of informative
    // stream `second` (second < first).
    std::optional<std::pair<std::size_t, std::size_t>> redundant_copy;
    std::uint64_t seed = 1;

    void validate() const;
    // The fixed readout weight for the m-th informative stream.
    static double readout_weight(std::size_t m);
};

MtsDataset generate_synthetic(const SyntheticSpec& spec);

// CSV interchange: header `sample_id,t,<feature columns>,target`, rows sorted
// by (sample_id, t). A JSON sidecar `<path>.meta` carries task kind, shape,
// names and the planted set; loading without one assumes regression.
void save_csv(const MtsDataset& dataset, const std::string& path);
MtsDataset load_csv(const std::string& path);

// One long recording to be cut into supervised windows.
struct LongSeries {
    std::size_t length = 0, d = 0;
    std::vector<double> values;  // length*d row-major
    std::vector<double> target;  // length
    std::vector<std::string> feature_names;
};

// Sliding windows of length t_window; the target is the value `horizon` steps
// after the window end. horizon must be >= 1 so the target stays outside the
// input slice.
MtsDataset window(const LongSeries& series, std::size_t t_window, std::size_t horizon);

// Seeded permutation split.
std::pair<MtsDataset, MtsDataset> split(const MtsDataset& dataset, double test_fraction,
                                        std::uint64_t seed);
// Leakage-free alternative for windowed series: first samples train, last test.
std::pair<MtsDataset, MtsDataset> split_chronological(const MtsDataset& dataset,
                                                      double test_fraction);

struct FeatureStats {
    std::vector<double> mean;
    std::vector<double> stddev;  // zero-variance features recorded as 1
};

// Fits per-feature statistics on train only and applies them to both sides.
FeatureStats standardize(MtsDataset& train, MtsDataset& test);

// Upsamples every minority class to the majority count by seeded duplication.
MtsDataset balance_classes(const MtsDataset& dataset, std::uint64_t seed);

}  // namespace nfs
