#pragma once

#include <cstdint>
#include <vector>

#include "nfs/ops.hpp"
#include "nfs/tensor.hpp"

namespace nfs {

// Architecture of the feature selector: one temporal convolution bank per
// input stream, a batch-normalization layer whose per-channel scales double
// as importance signals, and a width-1 aggregating convolution.
struct NfsConfig {
    std::size_t stream_count = 1;                      // d
    std::vector<std::size_t> branch_widths = {2, 3, 4, 5};
    std::size_t filters_per_branch = 1;
    std::size_t n_aggregate = 32;
    double temporal_l2 = 0.01;
    double aggregate_l1 = 0.01;

    // k: BN channels owned by each stream.
    std::size_t channels_per_stream() const { return branch_widths.size() * filters_per_branch; }
    void validate() const;
};

struct ConvParams {
    Tensor weight;  // [F x w x C_in]
    Tensor bias;    // [F]
};

// The temporal convolutions of one stream; weights are not shared across streams.
struct StreamBank {
    std::vector<ConvParams> branches;  // one per branch width
};

struct NfsModule {
    NfsConfig config;
    std::vector<StreamBank> banks;  // config.stream_count banks
    Tensor bn_scale;                // alpha, [k*d], init 1
    Tensor bn_shift;                // beta,  [k*d], init 0
    BnState bn_state;               // running statistics
    ConvParams aggregate;           // [n x 1 x k*d], [n]
    std::uint64_t seed = 0;

    std::size_t stream_count() const { return config.stream_count; }
    std::size_t bn_channels() const { return config.channels_per_stream() * config.stream_count; }
    // Every trainable tensor, in a fixed order (banks, BN affine, aggregate).
    std::vector<Tensor> parameters() const;

    NfsModule() : bn_state(1) {}
};

// One non-negative score per stream: the mean |alpha| over the stream's k BN
// channels, plus a snapshot of the raw scales for reporting.
struct ImportanceScores {
    std::vector<double> per_stream;
    std::vector<double> raw_scales;
};

// Ordered set of surviving stream indices.
struct FeatureMask {
    std::vector<std::size_t> indices;  // unique, ascending, in [0, original_d)
    std::size_t original_d = 0;

    std::size_t k_selected() const { return indices.size(); }
    void validate() const;
    static FeatureMask all(std::size_t d);
};

enum class CompactMode { Fresh, Copy };

// d independent temporal banks initialized from the seed; BN scales 1, shifts 0.
NfsModule build_nfs(const NfsConfig& config, std::uint64_t seed);

// Per-stream temporal banks -> channel concat -> BN -> relu -> 1x1 aggregate
// -> relu. Input [B x T x d], output [B x T x n_aggregate].
Tensor nfs_forward(NfsModule& module, const Tensor& batch, Mode mode);

// The concatenated pre-BN representation [B x T x k*d]; stream j owns channel
// block [j*k, (j+1)*k).
Tensor temporal_activations(const NfsModule& module, const Tensor& batch);

// Forward with the listed streams' post-BN channels forced to zero. Test
// oracle for compaction equivalence.
Tensor masked_forward(NfsModule& module, const Tensor& batch, Mode mode,
                      const std::vector<std::size_t>& zero_streams);

ImportanceScores stream_scores(const NfsModule& module);

// Indices of the top k_selected scores, ties broken toward the lower index,
// result ascending.
FeatureMask select_top_k(const ImportanceScores& scores, std::size_t k_selected);

// New module with only the masked streams. Fresh mode re-initializes from the
// seed; Copy mode transplants surviving banks, BN channels, running stats and
// the matching aggregating-weight slices verbatim.
NfsModule compact(const NfsModule& module, const FeatureMask& mask, CompactMode mode,
                  std::uint64_t seed);

}  // namespace nfs
