#include "vlscene/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

#include "vlscene/autograd.hpp"
#include "vlscene/error.hpp"

namespace vlscene {

namespace {

thread_local Precision tls_precision = Precision::f64;

void round_to_storage(std::vector<double>& values) {
    if (tls_precision != Precision::f32) return;
    for (double& v : values) v = static_cast<double>(static_cast<float>(v));
}

std::string role_of(const detail::Node& node) {
    if (!node.name.empty()) return "'" + node.name + "'";
    return std::string("output of ") + node.op;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
    os << ']';
    return os.str();
}

Precision precision() { return tls_precision; }
void set_precision(Precision p) { tls_precision = p; }

namespace detail {

void require_finite(const char* op, const Tensor& t) {
    const Node& n = t.node();
    for (std::size_t i = 0; i < n.data.size(); ++i) {
        if (!std::isfinite(n.data[i])) {
            throw NonFiniteError(std::string(op) + ": non-finite value in " + role_of(n) + " at flat index " +
                                 std::to_string(i));
        }
    }
}

Tensor make_result(const char* op, Shape shape, std::vector<double> data, const std::vector<Tensor>& inputs,
                   BackwardFn backward) {
    if (shape_numel(shape) != data.size()) {
        throw ShapeError(std::string(op) + ": produced " + std::to_string(data.size()) + " values for shape " +
                         shape_str(shape));
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!std::isfinite(data[i])) {
            std::string from;
            for (const Tensor& in : inputs) from += (from.empty() ? "" : ", ") + role_of(in.node());
            throw NonFiniteError(std::string(op) + " produced a non-finite value at flat index " +
                                 std::to_string(i) + " (inputs: " + from + ")");
        }
    }
    round_to_storage(data);
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->op = op;
    bool tracked = false;
    for (const Tensor& in : inputs) tracked = tracked || in.requires_grad();
    if (tracked) {
        node->requires_grad = true;
        node->inputs.reserve(inputs.size());
        for (const Tensor& in : inputs) node->inputs.push_back(in.node_ptr());
        node->backward = std::move(backward);
    }
    return Tensor(std::move(node));
}

}  // namespace detail

namespace {

Tensor make_leaf(Shape shape, std::vector<double> values, bool requires_grad, std::string name) {
    if (shape_numel(shape) != values.size()) {
        throw ShapeError("tensor: " + std::to_string(values.size()) + " values do not fill shape " +
                         shape_str(shape));
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            throw NonFiniteError("tensor: non-finite initial value at flat index " + std::to_string(i) +
                                 (name.empty() ? "" : " of '" + name + "'"));
        }
    }
    round_to_storage(values);
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    node->requires_grad = requires_grad;
    node->name = std::move(name);
    return Tensor(std::move(node));
}

}  // namespace

Tensor Tensor::zeros(Shape shape) {
    const std::size_t n = shape_numel(shape);
    return make_leaf(std::move(shape), std::vector<double>(n, 0.0), false, {});
}

Tensor Tensor::full(Shape shape, double value) {
    const std::size_t n = shape_numel(shape);
    return make_leaf(std::move(shape), std::vector<double>(n, value), false, {});
}

Tensor Tensor::from_vector(Shape shape, std::vector<double> values) {
    return make_leaf(std::move(shape), std::move(values), false, {});
}

Tensor Tensor::scalar(double value) { return make_leaf({}, {value}, false, {}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values, std::string name) {
    return make_leaf(std::move(shape), std::move(values), true, std::move(name));
}

detail::Node& Tensor::node() const {
    if (!node_) throw Error("use of an undefined tensor");
    return *node_;
}

const Shape& Tensor::shape() const { return node().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    const Shape& s = shape();
    if (axis >= s.size()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(s.size()));
    }
    return s[axis];
}

std::size_t Tensor::numel() const { return node().data.size(); }
std::span<const double> Tensor::data() const { return node().data; }
std::span<const double> Tensor::grad() const { return node().grad; }
bool Tensor::has_grad() const { return !node().grad.empty(); }
bool Tensor::requires_grad() const { return node().requires_grad; }
bool Tensor::is_leaf() const { return !node().backward; }
const std::string& Tensor::name() const { return node().name; }
std::string_view Tensor::op() const { return node().op; }

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() on a tensor of shape " + shape_str(shape()));
    return node().data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
    const Shape& s = shape();
    if (index.size() != s.size()) throw ShapeError("at(): index rank does not match " + shape_str(s));
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (std::size_t i : index) {
        if (i >= s[axis]) throw ShapeError("at(): index out of range on axis " + std::to_string(axis));
        flat = flat * s[axis] + i;
        ++axis;
    }
    return node().data[flat];
}

Tensor Tensor::detach() const {
    auto node = std::make_shared<detail::Node>();
    node->shape = shape();
    node->data = this->node().data;
    node->name = this->node().name;
    node->op = "detach";
    return Tensor(std::move(node));
}

void Tensor::backward() const {
    detail::Node& root = node();
    if (root.data.size() != 1) {
        throw ShapeError("backward() requires a scalar loss, got shape " + shape_str(root.shape));
    }
    if (!root.requires_grad) {
        throw Error("backward() on a tensor that is not connected to the tape (no input requires a gradient)");
    }
    // Iterative post-order DFS yields a topological order (inputs before users).
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, std::size_t>> stack{{&root, 0}};
    visited.insert(&root);
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->inputs.size()) {
            detail::Node* child = n->inputs[next++].get();
            if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    for (detail::Node* n : order) {
        if (n->backward) n->grad.assign(n->data.size(), 0.0);
    }
    root.ensure_grad()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = *it;
        if (n->backward) n->backward(*n);
    }
}

std::span<double> Tensor::mutable_data() {
    if (!is_leaf()) throw Error("mutable_data() is only available on leaf tensors");
    return node().data;
}

std::span<double> Tensor::mutable_grad() {
    if (!is_leaf()) throw Error("mutable_grad() is only available on leaf tensors");
    return node().ensure_grad();
}

void Tensor::zero_grad() {
    auto& g = node().grad;
    std::fill(g.begin(), g.end(), 0.0);
}

Tensor& Tensor::set_name(std::string name) {
    node().name = std::move(name);
    return *this;
}

}  // namespace vlscene
