#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace sdif {

using Shape = std::vector<std::size_t>;

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class DegenerateInputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

/// Thread-local switch controlling whether ops record a backward graph.
class GradMode {
public:
    static bool enabled() { return flag(); }
    static void set_enabled(bool on) { flag() = on; }

private:
    static bool& flag() {
        thread_local bool on = true;
        return on;
    }
};

class NoGradGuard {
public:
    NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
    ~NoGradGuard() { GradMode::set_enabled(previous_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    // Reads this node's grad and accumulates into inputs that require grad.
    std::function<void(Node&)> backward_fn;
    const char* op = "leaf";

    bool is_leaf() const { return inputs.empty(); }

    std::vector<double>& ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
        return grad;
    }
};

}  // namespace detail

/// Dense row-major float64 tensor with optional reverse-mode gradient.
///
/// A Tensor is a shared handle: copies alias the same storage and graph
/// node. Use clone() for an independent leaf copy.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, double fill = 0.0) : node_(std::make_shared<detail::Node>()) {
        node_->value.assign(shape_numel(shape), fill);
        node_->shape = std::move(shape);
    }

    Tensor(Shape shape, std::vector<double> values) : node_(std::make_shared<detail::Node>()) {
        if (values.size() != shape_numel(shape)) {
            throw DimensionError("tensor: " + std::to_string(values.size()) +
                                 " values do not fill shape " + shape_str(shape));
        }
        node_->shape = std::move(shape);
        node_->value = std::move(values);
    }

    static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

    static Tensor from_node(std::shared_ptr<detail::Node> node) {
        Tensor t;
        t.node_ = std::move(node);
        return t;
    }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
    std::size_t numel() const { return node_->value.size(); }

    std::span<const double> values() const { return node_->value; }
    std::span<double> mutable_values() { return node_->value; }

    double item() const {
        if (numel() != 1) throw DimensionError("item: tensor of shape " + shape_str(shape()) + " is not scalar");
        return node_->value[0];
    }
    double operator[](std::size_t i) const { return node_->value[i]; }
    double at(std::size_t row, std::size_t col) const { return node_->value[row * node_->shape.back() + col]; }

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool on = true) {
        if (!node_->is_leaf()) throw std::logic_error("set_requires_grad: only leaf tensors can be marked");
        node_->requires_grad = on;
        return *this;
    }
    bool is_leaf() const { return node_->is_leaf(); }
    const char* op_name() const { return node_->op; }

    bool has_grad() const { return !node_->grad.empty() || numel() == 0; }
    std::span<const double> grad() const { return node_->grad; }
    std::span<double> mutable_grad() { return node_->ensure_grad(); }
    void zero_grad() { node_->grad.clear(); }

    /// Independent leaf copy of the values; no graph, no grad.
    Tensor clone() const { return Tensor(shape(), node_->value); }

    void backward() const;

    detail::Node& node() const { return *node_; }
    const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

private:
    std::shared_ptr<detail::Node> node_;
};

inline void Tensor::backward() const {
    if (numel() != 1) {
        throw DimensionError("backward: loss must be scalar, got shape " + shape_str(shape()));
    }
    if (!node_->requires_grad) return;

    // Iterative post-order DFS gives a topological order (inputs before users).
    std::vector<detail::Node*> order;
    std::unordered_set<const detail::Node*> visited;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            detail::Node* child = node->inputs[next++].get();
            if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (auto* n : order) {
        if (!n->is_leaf()) n->grad.assign(n->value.size(), 0.0);
    }
    node_->ensure_grad()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward_fn) (*it)->backward_fn(**it);
    }
}

namespace detail {

/// Wraps a computed value as an op output, recording the backward rule only
/// when grad mode is on and some input requires grad.
inline Tensor make_result(Shape shape, std::vector<double> value, std::initializer_list<Tensor> inputs,
                          const char* op, std::function<void(Node&)> backward) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->op = op;
    if (GradMode::enabled()) {
        bool any = false;
        for (const auto& in : inputs) any = any || in.requires_grad();
        if (any) {
            node->requires_grad = true;
            node->inputs.reserve(inputs.size());
            for (const auto& in : inputs) node->inputs.push_back(in.node_ptr());
            node->backward_fn = std::move(backward);
        }
    }
    return Tensor::from_node(std::move(node));
}

inline Tensor make_result(Shape shape, std::vector<double> value, const std::vector<Tensor>& inputs,
                          const char* op, std::function<void(Node&)> backward) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->op = op;
    if (GradMode::enabled()) {
        bool any = false;
        for (const auto& in : inputs) any = any || in.requires_grad();
        if (any) {
            node->requires_grad = true;
            node->inputs.reserve(inputs.size());
            for (const auto& in : inputs) node->inputs.push_back(in.node_ptr());
            node->backward_fn = std::move(backward);
        }
    }
    return Tensor::from_node(std::move(node));
}

}  // namespace detail

}  // namespace sdif
