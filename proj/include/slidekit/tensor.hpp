#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "slidekit/common.hpp"

namespace slidekit {

namespace detail {

// One node of the reverse-mode graph. Nodes are created in forward order;
// the monotone `seq` counter makes insertion order a topological order.
struct TensorNode {
    std::vector<int> shape;
    std::vector<real> value;
    std::vector<real> grad;  // sized lazily by backward()
    bool requires_grad = false;
    uint64_t seq = 0;
    std::vector<std::shared_ptr<TensorNode>> parents;  // saved activations
    std::function<void(TensorNode&)> backprop;         // pulls grad into parents

    bool tracked() const { return requires_grad || backprop != nullptr; }
};

std::shared_ptr<TensorNode> make_node(std::vector<int> shape, std::vector<real> value);

}  // namespace detail

// Dense n-dimensional array handle participating in a reverse-mode graph.
// Cheap to copy; copies alias the same storage.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape);
    static Tensor constant(std::vector<int> shape, real v);
    static Tensor from_values(std::vector<int> shape, std::vector<real> values);
    static Tensor scalar(real v);

    // Deep copy of values as a fresh leaf (no graph history).
    Tensor clone() const;
    // Value-only copy, never tracked.
    Tensor detach() const;

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
    size_t size() const { return node_->value.size(); }
    const std::vector<real>& values() const { return node_->value; }
    std::vector<real>& mutable_values() { return node_->value; }
    real item() const;

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool b) {
        node_->requires_grad = b;
        return *this;
    }
    // Empty until a backward pass has reached this tensor.
    const std::vector<real>& grad() const { return node_->grad; }

    bool tracked() const { return node_ && node_->tracked(); }

    std::shared_ptr<detail::TensorNode> node() const { return node_; }
    static Tensor wrap(std::shared_ptr<detail::TensorNode> n);

private:
    std::shared_ptr<detail::TensorNode> node_;
};

// Reverse accumulation from a scalar loss. Grads of every reachable node are
// overwritten (zeroed first), never accumulated across calls.
void backward(const Tensor& loss);

// Taping control; ops record no history while a guard is alive.
bool grad_enabled();
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

size_t shape_numel(const std::vector<int>& shape);

}  // namespace slidekit
