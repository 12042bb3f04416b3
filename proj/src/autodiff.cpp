#include "vacl/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "vacl/errors.hpp"
#include "vacl/kernels.hpp"

namespace vacl {
namespace ad {

Var Tape::parameter(std::string name, Tensor value) {
    Node n;
    n.op = "parameter";
    n.value = std::move(value);
    n.requires_grad = true;
    n.param = std::move(name);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
    Node n;
    n.op = "constant";
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

Var Tape::push(std::string op, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
    Node n;
    n.op = std::move(op);
    n.value = std::move(value);
    n.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                  [this](std::size_t i) { return nodes_.at(i).requires_grad; });
    n.inputs = std::move(inputs);
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

GradientMap backward(const Tape& tape, Var root) {
    if (tape.value(root).size() != 1) {
        throw DimensionError("backward: root has shape " + shape_string(tape.value(root).shape()) +
                             ", expected a scalar");
    }
    std::vector<Tensor> grads(tape.size());
    std::vector<bool> live(tape.size(), false);
    grads[root.id] = Tensor::full(tape.value(root).shape(), 1.0);
    live[root.id] = true;

    std::vector<Tensor*> input_grads;
    for (std::size_t id = root.id + 1; id-- > 0;) {
        const Node& node = tape.node(id);
        if (!live[id] || !node.requires_grad || !node.backward) continue;
        input_grads.assign(node.inputs.size(), nullptr);
        for (std::size_t k = 0; k < node.inputs.size(); ++k) {
            const std::size_t in = node.inputs[k];
            if (!tape.node(in).requires_grad) continue;
            if (!live[in]) {
                grads[in] = Tensor::zeros(tape.node(in).value.shape());
                live[in] = true;
            }
            input_grads[k] = &grads[in];
        }
        node.backward(tape, node, grads[id], input_grads);
    }

    GradientMap out;
    for (std::size_t id = 0; id < tape.size(); ++id) {
        const Node& node = tape.node(id);
        if (node.param.empty()) continue;
        out[node.param] = live[id] ? std::move(grads[id]) : Tensor::zeros(node.value.shape());
    }
    return out;
}

namespace {

void accumulate(Tensor& into, const Tensor& delta) {
    auto dst = into.data();
    auto src = delta.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void require_matrix(const Tensor& t, const char* what) {
    if (t.rank() != 2) throw DimensionError(std::string(what) + ": expected a matrix, got " + shape_string(t.shape()));
}

}  // namespace

Var matmul(Tape& tape, Var a, Var b) {
    const Tensor out = vacl::matmul(tape.value(a), tape.value(b));
    return tape.push("matmul", out, {a.id, b.id},
                     [](const Tape& t, const Node& node, const Tensor& grad, std::span<Tensor*> in) {
                         const Tensor& av = t.node(node.inputs[0]).value;
                         const Tensor& bv = t.node(node.inputs[1]).value;
                         const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
                         if (in[0]) {
                             Tensor ga({m, k});
                             kernels::gemm_nt(grad.data(), bv.data(), ga.data(), m, n, k);
                             accumulate(*in[0], ga);
                         }
                         if (in[1]) {
                             Tensor gb({k, n});
                             kernels::gemm_tn(av.data(), grad.data(), gb.data(), k, m, n);
                             accumulate(*in[1], gb);
                         }
                     });
}

Var linear(Tape& tape, Var x, Var weight, Var bias) {
    const Tensor& xv = tape.value(x);
    const Tensor& wv = tape.value(weight);
    const Tensor& bv = tape.value(bias);
    require_matrix(xv, "linear input");
    require_matrix(wv, "linear weight");
    const std::size_t batch = xv.rows(), in_dim = xv.cols(), out_dim = wv.rows();
    if (wv.cols() != in_dim || bv.shape() != Shape{out_dim}) {
        throw DimensionError("linear: input " + shape_string(xv.shape()) + ", weight " + shape_string(wv.shape()) +
                             ", bias " + shape_string(bv.shape()));
    }
    Tensor out({batch, out_dim});
    kernels::gemm_nt(xv.data(), wv.data(), out.data(), batch, in_dim, out_dim);
    for (std::size_t r = 0; r < batch; ++r) {
        auto row = out.row(r);
        for (std::size_t j = 0; j < out_dim; ++j) row[j] += bv[j];
    }
    return tape.push("linear", std::move(out), {x.id, weight.id, bias.id},
                     [](const Tape& t, const Node& node, const Tensor& grad, std::span<Tensor*> in) {
                         const Tensor& xv = t.node(node.inputs[0]).value;
                         const Tensor& wv = t.node(node.inputs[1]).value;
                         const std::size_t batch = xv.rows(), in_dim = xv.cols(), out_dim = wv.rows();
                         if (in[0]) {
                             Tensor gx({batch, in_dim});
                             kernels::gemm_nn(grad.data(), wv.data(), gx.data(), batch, out_dim, in_dim);
                             accumulate(*in[0], gx);
                         }
                         if (in[1]) {
                             Tensor gw({out_dim, in_dim});
                             kernels::gemm_tn(grad.data(), xv.data(), gw.data(), out_dim, batch, in_dim);
                             accumulate(*in[1], gw);
                         }
                         if (in[2]) {
                             auto gb = in[2]->data();
                             for (std::size_t r = 0; r < batch; ++r) {
                                 auto row = grad.row(r);
                                 for (std::size_t j = 0; j < out_dim; ++j) gb[j] += row[j];
                             }
                         }
                     });
}

Var add(Tape& tape, std::span<const Var> terms) {
    if (terms.empty()) throw DimensionError("add: no operands");
    Tensor out = tape.value(terms[0]);
    std::vector<std::size_t> ids{terms[0].id};
    for (std::size_t k = 1; k < terms.size(); ++k) {
        require_same_shape(out, tape.value(terms[k]), "add");
        accumulate(out, tape.value(terms[k]));
        ids.push_back(terms[k].id);
    }
    return tape.push("add", std::move(out), std::move(ids),
                     [](const Tape&, const Node&, const Tensor& grad, std::span<Tensor*> in) {
                         for (Tensor* g : in)
                             if (g) accumulate(*g, grad);
                     });
}

Var add(Tape& tape, Var a, Var b) {
    const Var terms[] = {a, b};
    return add(tape, terms);
}

Var mul(Tape& tape, Var a, Var b) {
    const Tensor& av = tape.value(a);
    const Tensor& bv = tape.value(b);
    require_same_shape(av, bv, "mul");
    Tensor out(av.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return tape.push("mul", std::move(out), {a.id, b.id},
                     [](const Tape& t, const Node& node, const Tensor& grad, std::span<Tensor*> in) {
                         const Tensor& av = t.node(node.inputs[0]).value;
                         const Tensor& bv = t.node(node.inputs[1]).value;
                         for (std::size_t i = 0; i < grad.size(); ++i) {
                             if (in[0]) (*in[0])[i] += grad[i] * bv[i];
                             if (in[1]) (*in[1])[i] += grad[i] * av[i];
                         }
                     });
}

Var relu(Tape& tape, Var a) {
    Tensor out = tape.value(a);
    for (double& v : out.storage()) v = v > 0.0 ? v : 0.0;
    return tape.push("relu", std::move(out), {a.id},
                     [](const Tape& t, const Node& node, const Tensor& grad, std::span<Tensor*> in) {
                         const Tensor& x = t.node(node.inputs[0]).value;
                         // subgradient 0 at x == 0
                         for (std::size_t i = 0; i < grad.size(); ++i)
                             if (x[i] > 0.0) (*in[0])[i] += grad[i];
                     });
}

Var sum(Tape& tape, Var a) {
    double total = 0.0;
    for (double v : tape.value(a).data()) total += v;
    return tape.push("sum", Tensor::scalar(total), {a.id},
                     [](const Tape&, const Node&, const Tensor& grad, std::span<Tensor*> in) {
                         const double g = grad.item();
                         for (double& v : in[0]->storage()) v += g;
                     });
}

Var scale(Tape& tape, Var a, double factor) {
    Tensor out = tape.value(a);
    for (double& v : out.storage()) v *= factor;
    return tape.push("scale", std::move(out), {a.id},
                     [factor](const Tape&, const Node&, const Tensor& grad, std::span<Tensor*> in) {
                         for (std::size_t i = 0; i < grad.size(); ++i) (*in[0])[i] += factor * grad[i];
                     });
}

Var softmax_cross_entropy(Tape& tape, Var logits, std::span<const int> labels) {
    const Tensor& z = tape.value(logits);
    require_matrix(z, "softmax_cross_entropy");
    const std::size_t batch = z.rows(), classes = z.cols();
    if (labels.size() != batch) {
        throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                             std::to_string(batch));
    }
    if (batch == 0) throw DimensionError("softmax_cross_entropy: empty batch");
    // Softmax probabilities are kept for the backward rule.
    Tensor probs({batch, classes});
    double loss = 0.0;
    for (std::size_t r = 0; r < batch; ++r) {
        const int label = labels[r];
        if (label < 0 || static_cast<std::size_t>(label) >= classes) {
            throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(label) + " outside [0, " +
                                    std::to_string(classes) + ")");
        }
        auto row = z.row(r);
        const double peak = *std::max_element(row.begin(), row.end());
        double denom = 0.0;
        for (double v : row) denom += std::exp(v - peak);
        const double log_denom = std::log(denom);
        auto p = probs.row(r);
        for (std::size_t c = 0; c < classes; ++c) p[c] = std::exp(row[c] - peak - log_denom);
        loss += log_denom - (row[static_cast<std::size_t>(label)] - peak);
    }
    loss /= static_cast<double>(batch);
    std::vector<int> kept(labels.begin(), labels.end());
    return tape.push("softmax_cross_entropy", Tensor::scalar(loss), {logits.id},
                     [probs = std::move(probs), kept = std::move(kept)](const Tape&, const Node&, const Tensor& grad,
                                                                        std::span<Tensor*> in) {
                         const std::size_t batch = probs.rows(), classes = probs.cols();
                         const double g = grad.item() / static_cast<double>(batch);
                         for (std::size_t r = 0; r < batch; ++r) {
                             auto p = probs.row(r);
                             auto dst = in[0]->row(r);
                             for (std::size_t c = 0; c < classes; ++c) dst[c] += g * p[c];
                             dst[static_cast<std::size_t>(kept[r])] -= g;
                         }
                     });
}

Var custom_scalar(Tape& tape, std::string op, std::vector<Var> inputs, double value,
                  std::function<std::vector<Tensor>(const Tape&)> grad_fn) {
    std::vector<std::size_t> ids;
    ids.reserve(inputs.size());
    for (Var v : inputs) ids.push_back(v.id);
    return tape.push(std::move(op), Tensor::scalar(value), std::move(ids),
                     [grad_fn = std::move(grad_fn)](const Tape& t, const Node& node, const Tensor& grad,
                                                    std::span<Tensor*> in) {
                         const double g = grad.item();
                         std::vector<Tensor> local = grad_fn(t);
                         if (local.size() != node.inputs.size()) {
                             throw DimensionError("custom_scalar: gradient count does not match inputs");
                         }
                         for (std::size_t k = 0; k < in.size(); ++k) {
                             if (!in[k]) continue;
                             require_same_shape(*in[k], local[k], "custom_scalar gradient");
                             for (std::size_t i = 0; i < local[k].size(); ++i) (*in[k])[i] += g * local[k][i];
                         }
                     });
}

}  // namespace ad

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
        throw DimensionError("matmul: " + shape_string(a.shape()) + " * " + shape_string(b.shape()));
    }
    Tensor out({a.rows(), b.cols()});
    kernels::gemm_nn(a.data(), b.data(), out.data(), a.rows(), a.cols(), b.cols());
    return out;
}

void sgd_step(ParamMap& params, const GradientMap& grads, double lr) {
    for (const auto& [name, g] : grads) {
        auto it = params.find(name);
        if (it == params.end()) throw DimensionError("sgd_step: no parameter named '" + name + "'");
        require_same_shape(it->second, g, "sgd_step");
        auto w = it->second.data();
        auto gv = g.data();
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * gv[i];
    }
}

void MomentumSgd::step(ParamMap& params, const GradientMap& grads, double lr) {
    if (momentum_ == 0.0) {
        sgd_step(params, grads, lr);
        return;
    }
    for (const auto& [name, g] : grads) {
        auto it = params.find(name);
        if (it == params.end()) throw DimensionError("momentum step: no parameter named '" + name + "'");
        require_same_shape(it->second, g, "momentum step");
        auto [vit, inserted] = velocity_.try_emplace(name, Tensor::zeros(g.shape()));
        if (!inserted && vit->second.shape() != g.shape()) vit->second = Tensor::zeros(g.shape());
        auto v = vit->second.data();
        auto w = it->second.data();
        auto gv = g.data();
        for (std::size_t i = 0; i < w.size(); ++i) {
            v[i] = momentum_ * v[i] + gv[i];
            w[i] -= lr * v[i];
        }
    }
}

}  // namespace vacl
