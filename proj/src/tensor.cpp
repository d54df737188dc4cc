#include "sdd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "sdd/kernels.hpp"

namespace sdd {

using detail::Node;
using detail::NodePtr;

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

const char* op_name(Op op) {
    switch (op) {
        case Op::Leaf: return "leaf";
        case Op::Detach: return "detach";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::Scale: return "scale";
        case Op::MatMul: return "matmul";
        case Op::Relu: return "relu";
        case Op::Exp: return "exp";
        case Op::Log: return "log";
        case Op::ClampMin: return "clamp_min";
        case Op::Sum: return "sum";
        case Op::SumAxis: return "sum_axis";
        case Op::MaxAxis: return "max_axis";
        case Op::Softmax: return "softmax";
        case Op::Broadcast: return "broadcast";
    }
    return "?";
}

namespace {

NodePtr make_leaf(Shape shape, std::vector<double> values, bool requires_grad) {
    for (auto d : shape) {
        if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape));
    }
    if (values.size() != shape_size(shape)) {
        throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                         to_string(shape));
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->values = std::move(values);
    node->requires_grad = requires_grad;
    return node;
}

Tensor make_result(Op op, Shape shape, std::vector<double> values, std::vector<NodePtr> inputs,
                   detail::BackwardFn backward) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw NonFiniteError(std::string("non-finite value produced by ") + op_name(op));
        }
    }
    auto node = std::make_shared<Node>();
    node->op = op;
    node->shape = std::move(shape);
    node->values = std::move(values);
    node->requires_grad =
        std::any_of(inputs.begin(), inputs.end(), [](const NodePtr& n) { return n->requires_grad; });
    node->inputs = std::move(inputs);
    if (node->requires_grad) node->backward = std::move(backward);
    return Tensor(std::move(node));
}

// Flat index into `in_shape` for each flat index of `out_shape`, where
// `in_shape` broadcasts to `out_shape`.
std::vector<std::size_t> broadcast_index(const Shape& in_shape, const Shape& out_shape) {
    const std::size_t rank = out_shape.size();
    const std::size_t offset = rank - in_shape.size();
    std::vector<std::size_t> in_strides(rank, 0);
    std::size_t stride = 1;
    for (std::size_t i = in_shape.size(); i-- > 0;) {
        in_strides[i + offset] = in_shape[i] == 1 ? 0 : stride;
        stride *= in_shape[i];
    }
    const std::size_t total = shape_size(out_shape);
    std::vector<std::size_t> map(total);
    std::vector<std::size_t> counter(rank, 0);
    std::size_t src = 0;
    for (std::size_t flat = 0; flat < total; ++flat) {
        map[flat] = src;
        for (std::size_t ax = rank; ax-- > 0;) {
            ++counter[ax];
            src += in_strides[ax];
            if (counter[ax] < out_shape[ax]) break;
            src -= in_strides[ax] * counter[ax];
            counter[ax] = 0;
        }
    }
    return map;
}

template <class Fwd, class DA, class DB>
Tensor binary(Op op, const Tensor& a, const Tensor& b, Fwd fwd, DA da, DB db) {
    Shape out_shape = broadcast_shape(a.shape(), b.shape(), op_name(op));
    const std::size_t n = shape_size(out_shape);
    const bool same = a.shape() == out_shape && b.shape() == out_shape;
    std::vector<std::size_t> ia, ib;
    if (!same) {
        ia = broadcast_index(a.shape(), out_shape);
        ib = broadcast_index(b.shape(), out_shape);
    }
    auto av = a.values();
    auto bv = b.values();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = same ? fwd(av[i], bv[i]) : fwd(av[ia[i]], bv[ib[i]]);
    }
    auto backward = [an = a.node(), bn = b.node(), ia = std::move(ia), ib = std::move(ib), same, da,
                     db](std::span<const double> g, std::span<std::vector<double>*> gin) {
        const auto& x = an->values;
        const auto& y = bn->values;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const std::size_t xi = same ? i : ia[i];
            const std::size_t yi = same ? i : ib[i];
            if (gin[0]) (*gin[0])[xi] += g[i] * da(x[xi], y[yi]);
            if (gin[1]) (*gin[1])[yi] += g[i] * db(x[xi], y[yi]);
        }
    };
    return make_result(op, std::move(out_shape), std::move(out), {a.node(), b.node()},
                       std::move(backward));
}

template <class Fwd, class Deriv>
Tensor unary(Op op, const Tensor& a, Fwd fwd, Deriv deriv) {
    auto av = a.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
    auto backward = [an = a.node(), deriv](std::span<const double> g,
                                            std::span<std::vector<double>*> gin) {
        const auto& x = an->values;
        auto& gx = *gin[0];
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(x[i]);
    };
    return make_result(op, a.shape(), std::move(out), {a.node()}, std::move(backward));
}

void check_axis(const Tensor& a, std::size_t axis, const char* op) {
    if (axis >= a.rank()) {
        throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for shape " + to_string(a.shape()));
    }
}

struct AxisLayout {
    std::size_t outer, len, inner;
};

AxisLayout axis_layout(const Shape& s, std::size_t axis) {
    AxisLayout l{1, s[axis], 1};
    for (std::size_t i = 0; i < axis; ++i) l.outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) l.inner *= s[i];
    return l;
}

Shape reduced_shape(const Shape& s, std::size_t axis, bool keepdim) {
    Shape out = s;
    if (keepdim) {
        out[axis] = 1;
    } else {
        out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
        if (out.empty()) out.push_back(1);
    }
    return out;
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    const std::size_t rank = std::max(a.size(), b.size());
    Shape out(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
        const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
        if (da != db && da != 1 && db != 1) {
            throw ShapeError(std::string("shape mismatch in ") + op + ": " + to_string(a) + " vs " +
                             to_string(b));
        }
        out[i] = std::max(da, db);
    }
    return out;
}

Tensor::Tensor() : node_(make_leaf({1}, {0.0}, false)) {}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    return Tensor(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const std::size_t n = shape_size(shape);
    return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

double Tensor::item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
    return node_->values[0];
}

std::span<double> Tensor::mutable_values() {
    if (!is_leaf()) throw std::logic_error("only leaf tensors may be mutated");
    return node_->values;
}

std::vector<double> GradientMap::get(const Tensor& leaf) const {
    auto it = grads_.find(leaf.id());
    if (it == grads_.end()) return std::vector<double>(leaf.size(), 0.0);
    return it->second;
}

GradientMap backward(const Tensor& root) {
    if (root.size() != 1) {
        throw ShapeError("backward requires a scalar root, got shape " + to_string(root.shape()));
    }
    GradientMap result;
    if (!root.requires_grad()) return result;

    // Iterative post-order DFS over nodes that require a gradient.
    enum class Mark : unsigned char { InProgress, Done };
    std::unordered_map<const Node*, Mark> marks;
    std::vector<Node*> order;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
    marks[root.node().get()] = Mark::InProgress;
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (!child->requires_grad) continue;
            auto it = marks.find(child);
            if (it == marks.end()) {
                marks[child] = Mark::InProgress;
                stack.emplace_back(child, 0);
            } else if (it->second == Mark::InProgress) {
                throw std::logic_error("autodiff graph contains a cycle");
            }
        } else {
            marks[node] = Mark::Done;
            order.push_back(node);
            stack.pop_back();
        }
    }

    std::unordered_map<const Node*, std::vector<double>> grads;
    grads[root.node().get()] = {1.0};
    std::vector<std::vector<double>*> gin;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        auto g = grads.find(node);
        if (g == grads.end()) continue;
        if (node->op == Op::Leaf) {
            result.insert(node, std::move(g->second));
            continue;
        }
        if (node->stop_gradient || !node->backward) continue;
        gin.assign(node->inputs.size(), nullptr);
        for (std::size_t i = 0; i < node->inputs.size(); ++i) {
            Node* in = node->inputs[i].get();
            if (!in->requires_grad) continue;
            auto& slot = grads[in];
            if (slot.empty()) slot.assign(in->values.size(), 0.0);
            gin[i] = &slot;
        }
        // `grads` may rehash above; look the output gradient up again.
        const std::vector<double> gout = std::move(grads[node]);
        node->backward(gout, gin);
        grads.erase(node);
    }
    return result;
}

Tensor detach(const Tensor& t) {
    auto node = std::make_shared<Node>();
    node->op = Op::Detach;
    node->shape = t.shape();
    node->values.assign(t.values().begin(), t.values().end());
    node->requires_grad = false;
    node->stop_gradient = true;
    node->inputs = {t.node()};
    return Tensor(std::move(node));
}

Tensor add(const Tensor& a, const Tensor& b) {
    return binary(
        Op::Add, a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary(
        Op::Sub, a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary(
        Op::Mul, a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double factor) {
    return unary(
        Op::Scale, a, [factor](double x) { return factor * x; }, [factor](double) { return factor; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError("shape mismatch in matmul: " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(m * n);
    kernels::matmul(a.values(), b.values(), out, m, k, n);
    auto backward = [an = a.node(), bn = b.node(), m, k, n](std::span<const double> g,
                                                            std::span<std::vector<double>*> gin) {
        // dA = G B^T, dB = A^T G
        if (gin[0]) kernels::matmul_a_bt_acc(g, bn->values, *gin[0], m, n, k);
        if (gin[1]) kernels::matmul_at_b_acc(an->values, g, *gin[1], m, k, n);
    };
    return make_result(Op::MatMul, {m, n}, std::move(out), {a.node(), b.node()}, std::move(backward));
}

Tensor relu(const Tensor& a) {
    return unary(
        Op::Relu, a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
    return unary(
        Op::Exp, a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

Tensor log(const Tensor& a) {
    for (double v : a.values()) {
        if (!(v > 0.0)) {
            throw std::domain_error("log of non-positive value " + std::to_string(v));
        }
    }
    return unary(
        Op::Log, a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

Tensor clamp_min(const Tensor& a, double floor) {
    return unary(
        Op::ClampMin, a, [floor](double x) { return x > floor ? x : floor; },
        [floor](double x) { return x > floor ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& a) {
    double total = 0.0;
    for (double v : a.values()) total += v;
    auto backward = [](std::span<const double> g, std::span<std::vector<double>*> gin) {
        for (auto& x : *gin[0]) x += g[0];
    };
    return make_result(Op::Sum, {1}, {total}, {a.node()}, std::move(backward));
}

Tensor sum(const Tensor& a, std::size_t axis, bool keepdim) {
    check_axis(a, axis, "sum");
    const auto l = axis_layout(a.shape(), axis);
    std::vector<double> out(l.outer * l.inner, 0.0);
    auto av = a.values();
    for (std::size_t o = 0; o < l.outer; ++o)
        for (std::size_t j = 0; j < l.len; ++j)
            for (std::size_t i = 0; i < l.inner; ++i)
                out[o * l.inner + i] += av[(o * l.len + j) * l.inner + i];
    auto backward = [l](std::span<const double> g, std::span<std::vector<double>*> gin) {
        auto& gx = *gin[0];
        for (std::size_t o = 0; o < l.outer; ++o)
            for (std::size_t j = 0; j < l.len; ++j)
                for (std::size_t i = 0; i < l.inner; ++i)
                    gx[(o * l.len + j) * l.inner + i] += g[o * l.inner + i];
    };
    return make_result(Op::SumAxis, reduced_shape(a.shape(), axis, keepdim), std::move(out),
                       {a.node()}, std::move(backward));
}

Tensor max(const Tensor& a, std::size_t axis, bool keepdim) {
    check_axis(a, axis, "max");
    const auto l = axis_layout(a.shape(), axis);
    std::vector<double> out(l.outer * l.inner);
    std::vector<std::size_t> arg(out.size());
    auto av = a.values();
    for (std::size_t o = 0; o < l.outer; ++o) {
        for (std::size_t i = 0; i < l.inner; ++i) {
            std::size_t best = o * l.len * l.inner + i;
            for (std::size_t j = 1; j < l.len; ++j) {
                const std::size_t idx = (o * l.len + j) * l.inner + i;
                if (av[idx] > av[best]) best = idx;
            }
            out[o * l.inner + i] = av[best];
            arg[o * l.inner + i] = best;
        }
    }
    auto backward = [arg = std::move(arg)](std::span<const double> g,
                                           std::span<std::vector<double>*> gin) {
        auto& gx = *gin[0];
        for (std::size_t i = 0; i < g.size(); ++i) gx[arg[i]] += g[i];
    };
    return make_result(Op::MaxAxis, reduced_shape(a.shape(), axis, keepdim), std::move(out),
                       {a.node()}, std::move(backward));
}

Tensor softmax(const Tensor& a) {
    const std::size_t cols = a.shape().back();
    const std::size_t rows = a.size() / cols;
    std::vector<double> out(a.size());
    kernels::softmax_rows(a.values(), out, rows, cols);
    auto probs = std::make_shared<std::vector<double>>(out);
    auto backward = [probs, rows, cols](std::span<const double> g,
                                        std::span<std::vector<double>*> gin) {
        // dx_j = s_j (g_j - sum_k g_k s_k)
        auto& gx = *gin[0];
        const auto& s = *probs;
        for (std::size_t r = 0; r < rows; ++r) {
            double dot = 0.0;
            for (std::size_t j = 0; j < cols; ++j) dot += g[r * cols + j] * s[r * cols + j];
            for (std::size_t j = 0; j < cols; ++j)
                gx[r * cols + j] += s[r * cols + j] * (g[r * cols + j] - dot);
        }
    };
    return make_result(Op::Softmax, a.shape(), std::move(out), {a.node()}, std::move(backward));
}

Tensor broadcast_to(const Tensor& a, const Shape& shape) {
    if (broadcast_shape(a.shape(), shape, "broadcast") != shape) {
        throw ShapeError("shape mismatch in broadcast: " + to_string(a.shape()) + " vs " +
                         to_string(shape));
    }
    auto index = broadcast_index(a.shape(), shape);
    std::vector<double> out(index.size());
    auto av = a.values();
    for (std::size_t i = 0; i < index.size(); ++i) out[i] = av[index[i]];
    auto backward = [index = std::move(index)](std::span<const double> g,
                                               std::span<std::vector<double>*> gin) {
        auto& gx = *gin[0];
        for (std::size_t i = 0; i < g.size(); ++i) gx[index[i]] += g[i];
    };
    return make_result(Op::Broadcast, shape, std::move(out), {a.node()}, std::move(backward));
}

std::vector<double> finite_diff_gradient(const std::function<Tensor(const Tensor&)>& fn,
                                         const Tensor& at, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("finite difference step must be positive");
    Tensor probe = Tensor::from(at.shape(), {at.values().begin(), at.values().end()});
    auto x = probe.mutable_values();
    std::vector<double> grad(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        double plus = 0.0, minus = 0.0;
        try {
            x[i] = orig + h;
            plus = fn(probe).item();
            x[i] = orig - h;
            minus = fn(probe).item();
        } catch (const NonFiniteError&) {
            plus = std::numeric_limits<double>::quiet_NaN();
        }
        x[i] = orig;
        if (!std::isfinite(plus) || !std::isfinite(minus)) {
            throw NonFiniteError("finite difference produced a non-finite value at coordinate " +
                                 std::to_string(i));
        }
        grad[i] = (plus - minus) / (2.0 * h);
    }
    return grad;
}

}  // namespace sdd
