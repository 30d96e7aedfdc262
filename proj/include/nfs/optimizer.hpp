#pragma once

#include <cstdint>
#include <vector>

#include "nfs/tensor.hpp"

namespace nfs {

// Adam with bias-corrected moments. Holds first/second moment accumulators
// shape-congruent with each parameter and a step counter that increases by
// exactly one per step().
class AdamOptimizer {
public:
    explicit AdamOptimizer(std::vector<Tensor> params, double lr = 1e-3, double beta1 = 0.9,
                           double beta2 = 0.999, double eps = 1e-8);

    // One update from the gradients currently stored on the parameters.
    // Throws NumericError naming the parameter if a gradient is not finite.
    void step();

    void zero_grads();

    std::uint64_t step_count() const { return step_; }
    double learning_rate() const { return lr_; }
    const std::vector<Tensor>& params() const { return params_; }

private:
    struct Moments {
        std::vector<double> m;
        std::vector<double> v;
    };

    std::vector<Tensor> params_;
    std::vector<Moments> moments_;
    double lr_, beta1_, beta2_, eps_;
    std::uint64_t step_ = 0;
};

}  // namespace nfs
