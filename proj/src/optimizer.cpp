#include "nfs/optimizer.hpp"

#include <cmath>

#include "nfs/errors.hpp"

namespace nfs {

AdamOptimizer::AdamOptimizer(std::vector<Tensor> params, double lr, double beta1, double beta2,
                             double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    moments_.reserve(params_.size());
    for (const auto& p : params_) {
        if (!p.requires_grad()) {
            throw ConfigError("AdamOptimizer: tensor '" + p.name() + "' is not a parameter");
        }
        moments_.push_back({std::vector<double>(p.numel(), 0.0),
                            std::vector<double>(p.numel(), 0.0)});
    }
}

void AdamOptimizer::step() {
    ++step_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        auto& p = params_[pi];
        auto grad = p.grad();
        auto value = p.value_mut();
        auto& [m, v] = moments_[pi];
        for (std::size_t i = 0; i < grad.size(); ++i) {
            const double g = grad[i];
            if (!std::isfinite(g)) {
                throw NumericError("AdamOptimizer: non-finite gradient in parameter '" +
                                   p.name() + "' at index " + std::to_string(i));
            }
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            value[i] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
        }
    }
}

void AdamOptimizer::zero_grads() {
    for (auto& p : params_) p.zero_grad();
}

}  // namespace nfs
