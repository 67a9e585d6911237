#pragma once

// Dense N-D tensors with reverse-mode automatic differentiation.
//
// A Tensor is a cheap handle to an immutable node. Operations that see at least
// one input with requires_grad() record themselves on the implicit tape (the
// node keeps its inputs and a backward closure); backward() replays the tape in
// reverse topological order. Leaves created with Tensor::parameter() accumulate
// gradients across backward calls until zero_grad().
//
// Values are stored as double. Under Precision::f32 every stored value is
// rounded to the nearest float, which emulates 32-bit storage for training runs
// while gradchecks keep full 64-bit headroom.

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vlscene {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

enum class Precision { f64, f32 };

/// Precision of the calling thread (each training context owns one thread).
Precision precision();
void set_precision(Precision p);

class PrecisionScope {
public:
    explicit PrecisionScope(Precision p) : previous_(precision()) { set_precision(p); }
    ~PrecisionScope() { set_precision(previous_); }
    PrecisionScope(const PrecisionScope&) = delete;
    PrecisionScope& operator=(const PrecisionScope&) = delete;

private:
    Precision previous_;
};

namespace detail {
struct Node;
}

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor from_vector(Shape shape, std::vector<double> values);
    static Tensor scalar(double value);
    /// Trainable leaf. The name doubles as the tensor's role in error messages.
    static Tensor parameter(Shape shape, std::vector<double> values, std::string name);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const double> data() const;
    /// Empty until a backward pass reaches this tensor.
    std::span<const double> grad() const;
    bool has_grad() const;
    bool requires_grad() const;
    bool is_leaf() const;
    const std::string& name() const;
    std::string_view op() const;

    double item() const;
    double at(std::initializer_list<std::size_t> index) const;

    /// Same values, cut off from the tape.
    Tensor detach() const;
    /// Populates grad() on every reachable leaf that requires it.
    void backward() const;

    // Leaf-only mutation, used by initializers and the optimizer between steps.
    std::span<double> mutable_data();
    std::span<double> mutable_grad();
    void zero_grad();
    Tensor& set_name(std::string name);

    detail::Node& node() const;
    const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

}  // namespace vlscene
