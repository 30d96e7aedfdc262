#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nfs/errors.hpp"
#include "nfs/rng.hpp"

namespace nfs {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// One node of the recorded computation. Nodes are created by the ops in
// ops.hpp; leaves are created directly (constants and parameters). A node
// owns its forward value and, while reachable from a loss, the closure that
// pushes its gradient into its parents.
struct TensorNode {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;           // allocated when needs_grad
    bool needs_grad = false;            // leaf requires_grad, or any parent needs it
    bool is_leaf = true;
    std::string name;                   // parameters carry names for diagnostics
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn;  // null for leaves

    std::size_t numel() const { return value.size(); }
    void ensure_grad();                 // allocate zero grad buffer if missing
};

// Value-semantic handle over a shared node. Copies alias the same storage,
// which is what every op and optimizer in this library expects.
class Tensor {
public:
    Tensor() = default;

    // Leaf constructors.
    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double fill);
    static Tensor from_data(Shape shape, std::vector<double> data);
    static Tensor parameter(Shape shape, std::vector<double> data, std::string name);
    // Uniform in +/- sqrt(1/fan_in), the init convention for all weights here.
    static Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng, std::string name);

    // Graph constructor used by ops.
    static Tensor op_result(Shape shape, std::vector<double> value,
                            std::vector<std::shared_ptr<TensorNode>> parents,
                            std::function<void(TensorNode&)> backward_fn);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t numel() const { return node_->numel(); }
    std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
    std::size_t rank() const { return node_->shape.size(); }

    std::span<const double> value() const { return node_->value; }
    std::span<double> value_mut() { return node_->value; }
    double scalar() const;

    bool requires_grad() const { return node_->needs_grad; }
    bool is_leaf() const { return node_->is_leaf; }
    const std::string& name() const { return node_->name; }

    // Gradient of a leaf; zero until a backward pass reaches it.
    std::span<const double> grad() const;
    void zero_grad();

    std::shared_ptr<TensorNode> node() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}
    std::shared_ptr<TensorNode> node_;
};

// Topologically ordered record of the computation reachable from `root`:
// every node's parents precede it. This is the order backward() replays in
// reverse.
std::vector<std::shared_ptr<TensorNode>> build_tape(const Tensor& root);

// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate across
// calls; intermediate gradients are reset per call. Callers reset leaves via
// zero_grad / Model::zero_grads between steps.
void backward(const Tensor& loss);

}  // namespace nfs
