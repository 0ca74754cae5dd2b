#include "slidekit/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <unordered_set>

namespace slidekit {

namespace {

std::atomic<uint64_t> g_seq{1};
thread_local bool g_grad_enabled = true;

}  // namespace

namespace detail {

std::shared_ptr<TensorNode> make_node(std::vector<int> shape, std::vector<real> value) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->seq = g_seq.fetch_add(1, std::memory_order_relaxed);
    return n;
}

}  // namespace detail

namespace {
auto& new_node = detail::make_node;
}  // namespace

size_t shape_numel(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) {
        if (d < 1) {
            throw DataError("tensor dimensions must be positive");
        }
        n *= static_cast<size_t>(d);
    }
    return n;
}

Tensor Tensor::zeros(std::vector<int> shape) {
    const size_t n = shape_numel(shape);
    return wrap(new_node(std::move(shape), std::vector<real>(n, real(0))));
}

Tensor Tensor::constant(std::vector<int> shape, real v) {
    const size_t n = shape_numel(shape);
    return wrap(new_node(std::move(shape), std::vector<real>(n, v)));
}

Tensor Tensor::from_values(std::vector<int> shape, std::vector<real> values) {
    if (shape_numel(shape) != values.size()) {
        throw DataError("tensor data length does not match shape");
    }
    return wrap(new_node(std::move(shape), std::move(values)));
}

Tensor Tensor::scalar(real v) { return from_values({1}, {v}); }

Tensor Tensor::clone() const {
    Tensor t = wrap(new_node(node_->shape, node_->value));
    t.node_->requires_grad = node_->requires_grad;
    return t;
}

Tensor Tensor::detach() const { return wrap(new_node(node_->shape, node_->value)); }

real Tensor::item() const {
    if (size() != 1) {
        throw DataError("item() requires a scalar tensor");
    }
    return node_->value[0];
}

Tensor Tensor::wrap(std::shared_ptr<detail::TensorNode> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1) {
        throw DataError("backward() requires a scalar loss");
    }

    // Collect reachable nodes; parents always carry smaller seq than their
    // children, so descending seq is a reverse topological order.
    std::vector<detail::TensorNode*> reachable;
    std::unordered_set<detail::TensorNode*> seen;
    std::vector<detail::TensorNode*> stack{loss.node().get()};
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        detail::TensorNode* n = stack.back();
        stack.pop_back();
        reachable.push_back(n);
        for (const auto& p : n->parents) {
            if (seen.insert(p.get()).second) {
                stack.push_back(p.get());
            }
        }
    }

    for (detail::TensorNode* n : reachable) {
        n->grad.assign(n->value.size(), real(0));
    }
    std::sort(reachable.begin(), reachable.end(),
              [](const detail::TensorNode* a, const detail::TensorNode* b) { return a->seq > b->seq; });

    loss.node()->grad[0] = real(1);
    for (detail::TensorNode* n : reachable) {
        if (n->backprop) {
            n->backprop(*n);
        }
    }
}

}  // namespace slidekit
