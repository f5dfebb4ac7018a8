#include "agg/nn/tensor.hpp"

#include "agg/error.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace agg::nn {

namespace {
thread_local bool g_grad_enabled = true;
}

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) {
        if (d < 0) throw Error(ErrorCode::ShapeMismatch, "negative dimension");
        n *= d;
    }
    return n;
}

std::string shape_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

std::vector<double>& detail::Node::ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const auto n = shape_numel(shape);
    return from_data(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), value), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
        throw Error(ErrorCode::ShapeMismatch, "data length " + std::to_string(data.size()) + " does not match shape " +
                                                  shape_string(shape));
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return from_data({}, {value}); }

const Shape& Tensor::shape() const { return node_->shape; }

std::int64_t Tensor::dim(int i) const {
    const int r = rank();
    if (i < 0) i += r;
    if (i < 0 || i >= r) throw Error(ErrorCode::ShapeMismatch, "dimension index out of range");
    return node_->shape[i];
}

std::int64_t Tensor::numel() const { return static_cast<std::int64_t>(node_->value.size()); }

std::span<const double> Tensor::data() const { return node_->value; }

std::span<double> Tensor::mutable_data() { return node_->value; }

double Tensor::item() const {
    if (numel() != 1) throw Error(ErrorCode::ShapeMismatch, "item() needs a single-element tensor");
    return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
    if (!node_->leaf) throw Error(ErrorCode::InvalidArgument, "requires_grad can only be toggled on leaves");
    node_->requires_grad = on;
}

bool Tensor::has_grad() const { return node_ && node_->grad.size() == node_->value.size() && !node_->value.empty(); }

std::span<const double> Tensor::grad() const { return node_->grad; }

std::span<double> Tensor::mutable_grad() { return node_->ensure_grad(); }

void Tensor::zero_grad() {
    if (node_) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::clear_grad() {
    if (node_) {
        node_->grad.clear();
        node_->grad.shrink_to_fit();
    }
}

Tensor Tensor::detach() const { return from_data(shape(), node_->value, false); }

Tensor Tensor::clone() const { return from_data(shape(), node_->value, requires_grad()); }

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                   std::function<void(detail::Node&)> backward_fn) {
#ifndef NDEBUG
    for (double v : value) {
        if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteInput, "operation produced a non-finite value");
    }
#endif
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->leaf = false;
    if (g_grad_enabled) {
        const bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
        if (any) {
            node->requires_grad = true;
            node->inputs.reserve(inputs.size());
            for (auto& t : inputs) {
                if (t.node()->released) {
                    throw Error(ErrorCode::GraphConsumed, "input belongs to an already released graph");
                }
                node->inputs.push_back(t.node());
            }
            node->backward_fn = std::move(backward_fn);
        }
    }
    return Tensor(std::move(node));
}

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw Error(ErrorCode::ShapeMismatch, "backward needs a scalar loss");
    }
    detail::Node* root = loss.node().get();
    if (root->released) {
        throw Error(ErrorCode::GraphConsumed, "the recording for this loss was already released");
    }
    if (!root->requires_grad) return;

    // Iterative post-order DFS gives a topological order.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            detail::Node* child = node->inputs[next++].get();
            if (child->released) {
                throw Error(ErrorCode::GraphConsumed, "graph contains a released node");
            }
            if (child->requires_grad && !child->leaf && visited.insert(child).second) {
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* node = *it;
        if (node->backward_fn && node->grad.size() == node->value.size()) {
            for (auto& in : node->inputs) {
                if (in->requires_grad) in->ensure_grad();
            }
            node->backward_fn(*node);
        }
    }
    for (detail::Node* node : order) {
        node->inputs.clear();
        node->backward_fn = nullptr;
        node->grad.clear();
        node->grad.shrink_to_fit();
        node->released = true;
    }
}

}  // namespace agg::nn
