#include "nfs/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace nfs {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << " x ";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

void TensorNode::ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
}

namespace {

std::shared_ptr<TensorNode> make_leaf(Shape shape, std::vector<double> data,
                                      bool requires_grad, std::string name) {
    for (std::size_t d : shape) {
        if (d == 0) throw DimensionError("tensor shape has a zero dimension");
    }
    if (shape_numel(shape) != data.size()) {
        throw DimensionError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
    }
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->value = std::move(data);
    node->needs_grad = requires_grad;
    node->is_leaf = true;
    node->name = std::move(name);
    if (requires_grad) node->ensure_grad();
    return node;
}

}  // namespace

Tensor Tensor::zeros(Shape shape) {
    std::size_t n = shape_numel(shape);
    return from_data(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(Shape shape, double fill) {
    std::size_t n = shape_numel(shape);
    return from_data(std::move(shape), std::vector<double>(n, fill));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data) {
    return Tensor(make_leaf(std::move(shape), std::move(data), false, ""));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> data, std::string name) {
    return Tensor(make_leaf(std::move(shape), std::move(data), true, std::move(name)));
}

Tensor Tensor::init_uniform(Shape shape, std::size_t fan_in, Rng& rng, std::string name) {
    if (fan_in == 0) throw DimensionError("init_uniform: fan_in must be positive");
    const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    std::vector<double> data(shape_numel(shape));
    for (double& v : data) v = uniform(rng, -bound, bound);
    return parameter(std::move(shape), std::move(data), std::move(name));
}

Tensor Tensor::op_result(Shape shape, std::vector<double> value,
                         std::vector<std::shared_ptr<TensorNode>> parents,
                         std::function<void(TensorNode&)> backward_fn) {
    if (shape_numel(shape) != value.size()) {
        throw DimensionError("op result length does not match shape " + shape_str(shape));
    }
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->is_leaf = false;
    bool needs = false;
    for (const auto& p : parents) needs = needs || p->needs_grad;
    node->needs_grad = needs;
    if (needs) {
        node->parents = std::move(parents);
        node->backward_fn = std::move(backward_fn);
    }
    return Tensor(node);
}

double Tensor::scalar() const {
    if (numel() != 1) {
        throw DimensionError("scalar() on tensor of shape " + shape_str(shape()));
    }
    return node_->value[0];
}

std::span<const double> Tensor::grad() const {
    node_->ensure_grad();
    return node_->grad;
}

void Tensor::zero_grad() {
    node_->ensure_grad();
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

std::vector<std::shared_ptr<TensorNode>> build_tape(const Tensor& root) {
    std::vector<std::shared_ptr<TensorNode>> order;
    std::unordered_set<TensorNode*> visited;
    // Iterative post-order DFS; recursion would overflow on long LSTM chains.
    struct Frame {
        std::shared_ptr<TensorNode> node;
        std::size_t next_parent = 0;
    };
    std::vector<Frame> stack;
    stack.push_back({root.node()});
    visited.insert(root.node().get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            auto parent = f.node->parents[f.next_parent++];
            if (visited.insert(parent.get()).second) {
                stack.push_back({std::move(parent)});
            }
        } else {
            order.push_back(std::move(f.node));
            stack.pop_back();
        }
    }
    return order;
}

void backward(const Tensor& loss) {
    if (loss.numel() != 1) {
        throw DimensionError("backward() requires a scalar loss, got shape " +
                             shape_str(loss.shape()));
    }
    auto tape = build_tape(loss);
    for (auto& node : tape) {
        if (!node->needs_grad) continue;
        if (node->is_leaf) {
            node->ensure_grad();  // leaves accumulate across backward calls
        } else {
            node->grad.assign(node->value.size(), 0.0);
        }
    }
    auto root = loss.node();
    if (!root->needs_grad) return;  // loss disconnected from any parameter
    root->grad[0] += 1.0;
    for (auto it = tape.rbegin(); it != tape.rend(); ++it) {
        TensorNode& node = **it;
        if (node.backward_fn && node.needs_grad) node.backward_fn(node);
    }
}

}  // namespace nfs
