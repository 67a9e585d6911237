#pragma once

// Building blocks for defining differentiable operations outside tensor-core.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "vlscene/tensor.hpp"

namespace vlscene::detail {

struct Node;
using BackwardFn = std::function<void(Node& self)>;

/// One tape entry. `inputs` and the saved state captured by `backward` keep the
/// activations alive for as long as the output is reachable.
struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    std::string name;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    BackwardFn backward;

    std::vector<double>& ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
        return grad;
    }
};

/// Gradient buffer of input `i` of `self`, or nullptr when it needs none.
inline double* input_grad(Node& self, std::size_t i) {
    Node& in = *self.inputs[i];
    return in.requires_grad ? in.ensure_grad().data() : nullptr;
}

/// Wraps freshly computed values as an op output: validates finiteness (naming
/// the op and its inputs), applies the thread's storage precision and records a
/// tape node when any input requires a gradient.
Tensor make_result(const char* op, Shape shape, std::vector<double> data,
                   const std::vector<Tensor>& inputs, BackwardFn backward);

/// Throws NonFiniteError naming `op` and the tensor role when `t` holds NaN/Inf.
void require_finite(const char* op, const Tensor& t);

}  // namespace vlscene::detail
