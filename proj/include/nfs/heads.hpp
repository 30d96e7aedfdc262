#pragma once

#include <cstdint>
#include <variant>

#include "nfs/nfs_module.hpp"
#include "nfs/ops.hpp"
#include "nfs/tensor.hpp"

namespace nfs {

enum class TaskKind { Regression, Classification };
enum class HeadKind { Conv, Recurrent };

struct HeadConfig {
    HeadKind kind = HeadKind::Conv;
    TaskKind task = TaskKind::Regression;
    std::size_t class_count = 2;      // classification only
    std::size_t input_channels = 32;  // must equal the NFS n_aggregate

    // conv head: two conv+pool stages then a dense readout
    std::vector<std::size_t> conv_filters = {5, 20};
    std::vector<std::size_t> conv_widths = {5, 5};
    std::vector<std::size_t> pool_factors = {2, 4};

    // recurrent head
    std::size_t hidden_size = 32;

    std::size_t output_dim() const {
        return task == TaskKind::Classification ? class_count : 1;
    }
    void validate() const;
};

struct ConvHead {
    HeadConfig config;
    std::size_t seq_len = 0;  // T the dense readout was sized for
    ConvParams conv1, conv2;
    Tensor out_weight, out_bias;
};

// Single-layer LSTM; gate blocks ordered (input, forget, cell, output).
struct RecurrentHead {
    HeadConfig config;
    Tensor w_input;   // [n x 4H]
    Tensor w_hidden;  // [H x 4H]
    Tensor b_gates;   // [4H]
    Tensor out_weight, out_bias;
};

using Head = std::variant<ConvHead, RecurrentHead>;

// seq_len is the temporal length the head will consume; the conv head needs
// it to size its dense readout and rejects lengths its pooling cannot handle.
Head build_head(const HeadConfig& config, std::size_t seq_len, std::uint64_t seed);

const HeadConfig& head_config(const Head& head);
std::vector<Tensor> head_parameters(const Head& head);

// features [B x T x n] -> [B] (regression) or [B x class_count] logits.
Tensor conv_head_forward(const ConvHead& head, const Tensor& features);
Tensor recurrent_head_forward(const RecurrentHead& head, const Tensor& features);
Tensor head_forward(const Head& head, const Tensor& features);

// The NFS module plus a downstream head trained as one unit.
struct ComposedModel {
    NfsModule nfs;
    Head head;
    TaskKind task = TaskKind::Regression;

    std::vector<Tensor> parameters() const;
    void zero_grads();
};

// Fails if the head expects a different channel count than the NFS produces.
ComposedModel compose(NfsModule nfs, Head head);

Tensor model_forward(ComposedModel& model, const Tensor& batch, Mode mode);

}  // namespace nfs
