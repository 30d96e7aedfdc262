#include "nfs/nfs_module.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nfs/errors.hpp"
#include "nfs/rng.hpp"

namespace nfs {

void NfsConfig::validate() const {
    if (stream_count < 1) throw ConfigError("NfsConfig: stream_count must be >= 1");
    if (branch_widths.empty()) throw ConfigError("NfsConfig: branch_widths must be nonempty");
    for (std::size_t w : branch_widths) {
        if (w < 1) throw ConfigError("NfsConfig: branch widths must be >= 1");
    }
    if (filters_per_branch < 1) throw ConfigError("NfsConfig: filters_per_branch must be >= 1");
    if (n_aggregate < 1) throw ConfigError("NfsConfig: n_aggregate must be >= 1");
    if (temporal_l2 < 0.0 || aggregate_l1 < 0.0) {
        throw ConfigError("NfsConfig: penalty coefficients must be non-negative");
    }
}

void FeatureMask::validate() const {
    if (indices.empty()) throw ConfigError("FeatureMask: empty mask");
    if (indices.size() > original_d) throw ConfigError("FeatureMask: more indices than streams");
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= original_d) {
            throw ConfigError("FeatureMask: index " + std::to_string(indices[i]) +
                              " out of range [0, " + std::to_string(original_d) + ")");
        }
        if (i > 0 && indices[i] <= indices[i - 1]) {
            throw ConfigError("FeatureMask: indices must be strictly ascending");
        }
    }
}

FeatureMask FeatureMask::all(std::size_t d) {
    FeatureMask mask;
    mask.original_d = d;
    mask.indices.resize(d);
    std::iota(mask.indices.begin(), mask.indices.end(), 0);
    return mask;
}

std::vector<Tensor> NfsModule::parameters() const {
    std::vector<Tensor> params;
    for (const auto& bank : banks) {
        for (const auto& branch : bank.branches) {
            params.push_back(branch.weight);
            params.push_back(branch.bias);
        }
    }
    params.push_back(bn_scale);
    params.push_back(bn_shift);
    params.push_back(aggregate.weight);
    params.push_back(aggregate.bias);
    return params;
}

NfsModule build_nfs(const NfsConfig& config, std::uint64_t seed) {
    config.validate();
    NfsModule m;
    m.config = config;
    m.seed = seed;
    Rng rng(mix_seed(seed));

    const std::size_t d = config.stream_count;
    const std::size_t fpb = config.filters_per_branch;
    m.banks.reserve(d);
    for (std::size_t j = 0; j < d; ++j) {
        StreamBank bank;
        for (std::size_t b = 0; b < config.branch_widths.size(); ++b) {
            const std::size_t w = config.branch_widths[b];
            const std::string base = "stream" + std::to_string(j) + ".branch" + std::to_string(b);
            ConvParams conv;
            conv.weight = Tensor::init_uniform({fpb, w, 1}, w, rng, base + ".weight");
            conv.bias = Tensor::parameter({fpb}, std::vector<double>(fpb, 0.0), base + ".bias");
            bank.branches.push_back(std::move(conv));
        }
        m.banks.push_back(std::move(bank));
    }

    const std::size_t channels = m.bn_channels();
    m.bn_scale = Tensor::parameter({channels}, std::vector<double>(channels, 1.0), "bn.scale");
    m.bn_shift = Tensor::parameter({channels}, std::vector<double>(channels, 0.0), "bn.shift");
    m.bn_state = BnState(channels);

    const std::size_t n = config.n_aggregate;
    m.aggregate.weight = Tensor::init_uniform({n, 1, channels}, channels, rng, "aggregate.weight");
    m.aggregate.bias = Tensor::parameter({n}, std::vector<double>(n, 0.0), "aggregate.bias");
    return m;
}

namespace {

void check_batch(const NfsModule& m, const Tensor& batch) {
    if (batch.rank() != 3 || batch.dim(2) != m.config.stream_count) {
        throw DimensionError("nfs_forward: batch " + shape_str(batch.shape()) + " does not have " +
                             std::to_string(m.config.stream_count) + " streams");
    }
}

}  // namespace

Tensor temporal_activations(const NfsModule& module, const Tensor& batch) {
    check_batch(module, batch);
    std::vector<Tensor> branch_outputs;
    branch_outputs.reserve(module.banks.size() * module.config.branch_widths.size());
    for (std::size_t j = 0; j < module.banks.size(); ++j) {
        Tensor stream = slice_channels(batch, j, j + 1);
        for (const auto& branch : module.banks[j].branches) {
            branch_outputs.push_back(conv1d(stream, branch.weight, branch.bias));
        }
    }
    return concat_channels(branch_outputs);
}

Tensor nfs_forward(NfsModule& module, const Tensor& batch, Mode mode) {
    Tensor stacked = temporal_activations(module, batch);
    Tensor normed = batchnorm(stacked, module.bn_scale, module.bn_shift, module.bn_state, mode);
    Tensor activated = relu(normed);
    return relu(conv1d(activated, module.aggregate.weight, module.aggregate.bias));
}

Tensor masked_forward(NfsModule& module, const Tensor& batch, Mode mode,
                      const std::vector<std::size_t>& zero_streams) {
    Tensor stacked = temporal_activations(module, batch);
    Tensor normed = batchnorm(stacked, module.bn_scale, module.bn_shift, module.bn_state, mode);
    const std::size_t k = module.config.channels_per_stream();
    const std::size_t B = normed.dim(0), T = normed.dim(1), C = normed.dim(2);
    std::vector<double> mask(C, 1.0);
    for (std::size_t j : zero_streams) {
        if (j >= module.config.stream_count) {
            throw DimensionError("masked_forward: stream index out of range");
        }
        for (std::size_t c = j * k; c < (j + 1) * k; ++c) mask[c] = 0.0;
    }
    std::vector<double> mask_full(B * T * C);
    for (std::size_t i = 0; i < B * T; ++i)
        for (std::size_t c = 0; c < C; ++c) mask_full[i * C + c] = mask[c];
    Tensor masked = mul(normed, Tensor::from_data({B, T, C}, std::move(mask_full)));
    Tensor activated = relu(masked);
    return relu(conv1d(activated, module.aggregate.weight, module.aggregate.bias));
}

ImportanceScores stream_scores(const NfsModule& module) {
    const std::size_t k = module.config.channels_per_stream();
    const std::size_t d = module.config.stream_count;
    auto alpha = module.bn_scale.value();
    ImportanceScores scores;
    scores.raw_scales.assign(alpha.begin(), alpha.end());
    scores.per_stream.resize(d);
    for (std::size_t j = 0; j < d; ++j) {
        double acc = 0.0;
        for (std::size_t c = j * k; c < (j + 1) * k; ++c) acc += std::abs(alpha[c]);
        scores.per_stream[j] = acc / static_cast<double>(k);
    }
    return scores;
}

FeatureMask select_top_k(const ImportanceScores& scores, std::size_t k_selected) {
    const std::size_t d = scores.per_stream.size();
    if (k_selected < 1 || k_selected > d) {
        throw ConfigError("select_top_k: k_selected " + std::to_string(k_selected) +
                          " out of range [1, " + std::to_string(d) + "]");
    }
    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores.per_stream[a] != scores.per_stream[b]) {
            return scores.per_stream[a] > scores.per_stream[b];
        }
        return a < b;  // ties to the lower index
    });
    FeatureMask mask;
    mask.original_d = d;
    mask.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k_selected));
    std::sort(mask.indices.begin(), mask.indices.end());
    return mask;
}

NfsModule compact(const NfsModule& module, const FeatureMask& mask, CompactMode mode,
                  std::uint64_t seed) {
    if (mask.original_d != module.config.stream_count) {
        throw ConfigError("compact: mask was built for " + std::to_string(mask.original_d) +
                          " streams, module has " + std::to_string(module.config.stream_count));
    }
    mask.validate();

    NfsConfig cfg = module.config;
    cfg.stream_count = mask.k_selected();
    if (mode == CompactMode::Fresh) return build_nfs(cfg, seed);

    // Copy mode: transplant the surviving paths verbatim.
    NfsModule m = build_nfs(cfg, seed);
    const std::size_t k = cfg.channels_per_stream();
    const std::size_t n = cfg.n_aggregate;
    const std::size_t c_old = module.bn_channels();
    const std::size_t c_new = m.bn_channels();

    for (std::size_t i = 0; i < mask.indices.size(); ++i) {
        const std::size_t j = mask.indices[i];
        for (std::size_t b = 0; b < module.banks[j].branches.size(); ++b) {
            const auto& src = module.banks[j].branches[b];
            auto& dst = m.banks[i].branches[b];
            std::copy(src.weight.value().begin(), src.weight.value().end(),
                      dst.weight.value_mut().begin());
            std::copy(src.bias.value().begin(), src.bias.value().end(),
                      dst.bias.value_mut().begin());
        }
        for (std::size_t c = 0; c < k; ++c) {
            m.bn_scale.value_mut()[i * k + c] = module.bn_scale.value()[j * k + c];
            m.bn_shift.value_mut()[i * k + c] = module.bn_shift.value()[j * k + c];
            m.bn_state.running_mean[i * k + c] = module.bn_state.running_mean[j * k + c];
            m.bn_state.running_var[i * k + c] = module.bn_state.running_var[j * k + c];
        }
        for (std::size_t f = 0; f < n; ++f)
            for (std::size_t c = 0; c < k; ++c) {
                m.aggregate.weight.value_mut()[f * c_new + i * k + c] =
                    module.aggregate.weight.value()[f * c_old + j * k + c];
            }
    }
    m.bn_state.initialized = module.bn_state.initialized;
    m.bn_state.momentum = module.bn_state.momentum;
    m.bn_state.eps = module.bn_state.eps;
    std::copy(module.aggregate.bias.value().begin(), module.aggregate.bias.value().end(),
              m.aggregate.bias.value_mut().begin());
    return m;
}

}  // namespace nfs
