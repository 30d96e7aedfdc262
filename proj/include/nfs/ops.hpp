#pragma once

#include <span>
#include <vector>

#include "nfs/tensor.hpp"

namespace nfs {

enum class Mode { Train, Eval };

// Running statistics of one batch-normalization layer. Train-mode forwards
// update them; eval-mode forwards read them and require at least one prior
// train-mode call.
struct BnState {
    std::vector<double> running_mean;
    std::vector<double> running_var;
    bool initialized = false;
    double momentum = 0.9;
    double eps = 1e-5;

    explicit BnState(std::size_t channels)
        : running_mean(channels, 0.0), running_var(channels, 1.0) {}
};

// ---- elementwise --------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);   // same shape
Tensor mul(const Tensor& a, const Tensor& b);   // hadamard, same shape
Tensor scale(const Tensor& x, double c);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh_op(const Tensor& x);
Tensor sum(const Tensor& x);                    // -> scalar [1]

// ---- shape manipulation --------------------------------------------------

Tensor reshape(const Tensor& x, Shape new_shape);
// Concatenate rank-3 tensors [B x T x C_i] along the channel axis.
Tensor concat_channels(const std::vector<Tensor>& xs);
// Channel block [from, to) of a rank-3 tensor.
Tensor slice_channels(const Tensor& x, std::size_t from, std::size_t to);
// [B x T x C] -> [B x C] at time t.
Tensor select_timestep(const Tensor& x, std::size_t t);
// Column block [from, to) of a rank-2 tensor.
Tensor slice_cols(const Tensor& x, std::size_t from, std::size_t to);

// ---- linear maps ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);                      // [B x m] * [m x n]
Tensor add_bias(const Tensor& x, const Tensor& bias);                 // broadcast over leading axes
Tensor dense(const Tensor& x, const Tensor& weight, const Tensor& bias);

// ---- convolution / pooling (time-major, [B x T x C]) ----------------------

// Same-padded, stride-1 1-D convolution. Filters are [F x w x C_in], bias [F].
// Even widths pad the extra zero on the right. Rank-2 input [T x C] is
// treated as a batch of one and returns [T x F].
Tensor conv1d(const Tensor& input, const Tensor& filters, const Tensor& bias);

// Non-overlapping max pooling along T by `factor`; trailing remainder dropped.
Tensor maxpool1d(const Tensor& x, std::size_t factor);

// ---- batch normalization ---------------------------------------------------

// Per-channel normalization of [B x T x C] over the B*T axis (train mode) or
// via running statistics (eval mode), followed by the affine scale/shift.
Tensor batchnorm(const Tensor& x, const Tensor& scale, const Tensor& shift,
                 BnState& state, Mode mode);

// ---- losses & penalties (scalar results) -----------------------------------

Tensor mse_loss(const Tensor& pred, std::span<const double> target);
Tensor cross_entropy_loss(const Tensor& logits, std::span<const int> labels);
Tensor l1_penalty(const Tensor& v, double gamma);   // gamma * sum |v_i|, d/dv sign(v), sign(0)=0
Tensor l2_penalty(const Tensor& v, double lambda);  // lambda * sum v_i^2

}  // namespace nfs
