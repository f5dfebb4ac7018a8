#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace agg::nn {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    bool leaf = true;
    bool released = false;
    std::vector<std::shared_ptr<Node>> inputs;
    // Reads this->grad and accumulates into the inputs' grads.
    std::function<void(Node&)> backward_fn;

    std::vector<double>& ensure_grad();
};

}  // namespace detail

/// Handle to a node of the recorded computation. Copies share the node.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    int rank() const { return static_cast<int>(shape().size()); }
    /// Negative indices count from the back.
    std::int64_t dim(int i) const;
    std::int64_t numel() const;

    std::span<const double> data() const;
    std::span<double> mutable_data();
    double item() const;
    double at(std::int64_t flat) const { return data()[flat]; }

    bool requires_grad() const;
    void set_requires_grad(bool on);
    bool has_grad() const;
    std::span<const double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad();
    void clear_grad();

    /// Same values, no history.
    Tensor detach() const;
    Tensor clone() const;

    const std::shared_ptr<detail::Node>& node() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

/// Whether new operations record history on this thread.
bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Builds an output node. The backward closure is dropped when no input
/// requires a gradient or recording is disabled.
Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                   std::function<void(detail::Node&)> backward_fn);

/// Reverse pass from a scalar. Leaf gradients accumulate across calls; the
/// interior of the graph is released afterwards (a second call on the same
/// graph throws GraphConsumed).
void backward(const Tensor& loss);

}  // namespace agg::nn
