#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "vacl/tensor.hpp"

namespace vacl {

/// Named parameter tensors, e.g. "L3.W" -> weight of layer 3.
using ParamMap = std::map<std::string, Tensor>;
using GradientMap = std::map<std::string, Tensor>;

namespace ad {

struct Var {
    std::size_t id;
};

class Tape;

struct Node;

/// Accumulates d(root)/d(input) into input_grads for every input that needs it.
/// Entries of input_grads are null for inputs that do not require gradients.
using BackwardFn =
    std::function<void(const Tape& tape, const Node& node, const Tensor& grad, std::span<Tensor*> input_grads)>;

struct Node {
    std::string op;
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    std::string param;  // non-empty for trainable leaves
};

/// Append-only record of a computation. Nodes are stored in creation order,
/// which is a topological order because inputs must exist before use.
class Tape {
public:
    /// Trainable leaf; its gradient is reported under `name` by backward().
    Var parameter(std::string name, Tensor value);
    Var constant(Tensor value);
    Var push(std::string op, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

    const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
    const Node& node(std::size_t id) const { return nodes_.at(id); }
    std::size_t size() const noexcept { return nodes_.size(); }

private:
    std::vector<Node> nodes_;
};

/// Reverse-mode sweep from a scalar root. Every parameter leaf on the tape gets
/// an entry; parameters the root does not depend on get exact zeros.
GradientMap backward(const Tape& tape, Var root);

Var matmul(Tape& tape, Var a, Var b);
/// x[batch x in] * W[out x in]^T + b[out]
Var linear(Tape& tape, Var x, Var weight, Var bias);
Var add(Tape& tape, std::span<const Var> terms);
Var add(Tape& tape, Var a, Var b);
Var mul(Tape& tape, Var a, Var b);
Var relu(Tape& tape, Var a);
Var sum(Tape& tape, Var a);
Var scale(Tape& tape, Var a, double factor);
/// Mean over rows of -log softmax(logits)[label].
Var softmax_cross_entropy(Tape& tape, Var logits, std::span<const int> labels);

/// Scalar node whose value and gradients are supplied by the caller, used for
/// penalties with hand-derived subgradients. grad_fn returns one gradient per input.
Var custom_scalar(Tape& tape, std::string op, std::vector<Var> inputs, double value,
                  std::function<std::vector<Tensor>(const Tape&)> grad_fn);

}  // namespace ad

Tensor matmul(const Tensor& a, const Tensor& b);

/// Plain gradient step: w <- w - lr * g for every gradient entry.
void sgd_step(ParamMap& params, const GradientMap& grads, double lr);

/// SGD with heavy-ball momentum: v <- mu * v + g; w <- w - lr * v.
/// With momentum 0 this is exactly sgd_step.
class MomentumSgd {
public:
    explicit MomentumSgd(double momentum) : momentum_(momentum) {}
    void step(ParamMap& params, const GradientMap& grads, double lr);

private:
    double momentum_;
    std::map<std::string, Tensor> velocity_;
};

}  // namespace vacl
