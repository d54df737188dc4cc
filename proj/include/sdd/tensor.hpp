#pragma once

// Minimal reverse-mode automatic differentiation over dense f64 tensors.
//
// A Tensor is a cheap handle to an immutable graph node. Primitives build a
// fresh node per application; `backward` walks the graph reachable from a
// scalar root and returns d(root)/d(leaf) for every leaf that requires a
// gradient. `detach` produces a node that is treated as a constant: nothing
// downstream of it reaches its ancestors.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace sdd {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

class ShapeError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

enum class Op {
    Leaf,
    Detach,
    Add,
    Sub,
    Mul,
    Scale,
    MatMul,
    Relu,
    Exp,
    Log,
    ClampMin,
    Sum,
    SumAxis,
    MaxAxis,
    Softmax,
    Broadcast,
};

const char* op_name(Op op);

namespace detail {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// Computes input gradients from the output gradient. `grad_inputs[i]` is
// non-null only for inputs that require a gradient and has the input's size.
using BackwardFn =
    std::function<void(std::span<const double> grad_out, std::span<std::vector<double>*> grad_inputs)>;

struct Node {
    Op op = Op::Leaf;
    Shape shape;
    std::vector<double> values;
    bool requires_grad = false;
    bool stop_gradient = false;
    std::vector<NodePtr> inputs;
    BackwardFn backward;
};

}  // namespace detail

class Tensor {
   public:
    Tensor();

    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
    std::size_t size() const { return node_->values.size(); }
    std::span<const double> values() const { return node_->values; }
    double operator[](std::size_t i) const { return node_->values[i]; }
    // Value of a single-element tensor.
    double item() const;

    bool requires_grad() const { return node_->requires_grad; }
    bool is_leaf() const { return node_->op == Op::Leaf; }
    bool stop_gradient() const { return node_->stop_gradient; }
    Op op() const { return node_->op; }
    const std::vector<detail::NodePtr>& inputs() const { return node_->inputs; }
    const detail::Node* id() const { return node_.get(); }

    // Leaf values may be overwritten in place between graphs (optimizer
    // updates, finite-difference probes). Recorded non-leaf values never are.
    std::span<double> mutable_values();

    explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}
    const detail::NodePtr& node() const { return node_; }

   private:
    detail::NodePtr node_;
};

// Gradients keyed by leaf identity.
class GradientMap {
   public:
    bool contains(const Tensor& leaf) const { return grads_.contains(leaf.id()); }
    // Gradient for `leaf`; zeros if the root does not depend on it.
    std::vector<double> get(const Tensor& leaf) const;
    std::size_t size() const { return grads_.size(); }
    bool empty() const { return grads_.empty(); }

    void insert(const detail::Node* leaf, std::vector<double> grad) {
        grads_[leaf] = std::move(grad);
    }

   private:
    std::unordered_map<const detail::Node*, std::vector<double>> grads_;
};

// Reverse accumulation from a single-element root.
GradientMap backward(const Tensor& root);

Tensor detach(const Tensor& t);

// Element-wise binary ops broadcast numpy-style: shapes are aligned at the
// trailing end and size-1 (or missing leading) dimensions expand.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
// Throws std::domain_error on any non-positive entry.
Tensor log(const Tensor& a);
// max(a, floor); gradient passes only where a > floor.
Tensor clamp_min(const Tensor& a, double floor);
Tensor sum(const Tensor& a);
Tensor sum(const Tensor& a, std::size_t axis, bool keepdim = false);
Tensor max(const Tensor& a, std::size_t axis, bool keepdim = false);
// Softmax over the last axis with max subtraction.
Tensor softmax(const Tensor& a);
Tensor broadcast_to(const Tensor& a, const Shape& shape);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op);

// Central differences (fn(x + h e_i) - fn(x - h e_i)) / 2h for every
// coordinate of `at`. `fn` must return a single-element tensor.
std::vector<double> finite_diff_gradient(const std::function<Tensor(const Tensor&)>& fn,
                                         const Tensor& at, double h);

}  // namespace sdd
