#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "vacl/autodiff.hpp"
#include "vacl/netgraph.hpp"
#include "vacl/tensor.hpp"

namespace vacl::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> u(lo, hi);
    for (double& v : t.data()) v = u(rng);
    return t;
}

/// Uniform values whose magnitudes stay at least `gap` away from zero.
inline std::vector<double> away_from_zero(std::size_t n, std::mt19937_64& rng, double gap = 0.1) {
    std::uniform_real_distribution<double> mag(gap, 1.0);
    std::bernoulli_distribution neg(0.5);
    std::vector<double> out(n);
    for (double& v : out) v = neg(rng) ? -mag(rng) : mag(rng);
    return out;
}

/// Central differences of f at w, one coordinate at a time.
inline std::vector<double> numeric_gradient(const std::function<double(const std::vector<double>&)>& f,
                                            std::vector<double> w, double h = 1e-6) {
    std::vector<double> g(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double keep = w[i];
        w[i] = keep + h;
        const double up = f(w);
        w[i] = keep - h;
        const double down = f(w);
        w[i] = keep;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

inline GradientMap numeric_gradient(const std::function<double(const ParamMap&)>& f, ParamMap params,
                                    double h = 1e-6) {
    GradientMap out;
    for (auto& [name, t] : params) {
        Tensor g(t.shape());
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double keep = t[i];
            t[i] = keep + h;
            const double up = f(params);
            t[i] = keep - h;
            const double down = f(params);
            t[i] = keep;
            g[i] = (up - down) / (2.0 * h);
        }
        out.emplace(name, std::move(g));
    }
    return out;
}

/// ||a - b|| / max(||a||, ||b||, floor)
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-8) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

inline std::vector<double> flatten(const GradientMap& grads) {
    std::vector<double> out;
    for (const auto& [name, t] : grads) out.insert(out.end(), t.data().begin(), t.data().end());
    return out;
}

/// Small residual MLP with random stage widths and block counts.
inline ModelGraph random_residual_model(std::mt19937_64& rng, std::size_t max_width = 5) {
    std::uniform_int_distribution<std::size_t> stages(1, 3), width(1, max_width), blocks(1, 2), dim(1, 3),
        classes(2, 3);
    std::vector<std::size_t> widths(stages(rng)), counts(widths.size());
    for (std::size_t s = 0; s < widths.size(); ++s) {
        widths[s] = width(rng);
        counts[s] = blocks(rng);
    }
    return build_residual_mlp(dim(rng), widths, counts, classes(rng));
}

/// Parameters with every entry at least `gap` away from zero, clear of the
/// kinks of |w|.
inline ParamMap random_params(const ModelGraph& graph, std::mt19937_64& rng, double gap = 0.05) {
    ParamMap p;
    for (const auto& l : graph.layers()) {
        p[weight_key(l.id)] = Tensor({l.out_dim, l.in_dim}, away_from_zero(l.out_dim * l.in_dim, rng, gap));
        p[bias_key(l.id)] = Tensor({l.out_dim}, away_from_zero(l.out_dim, rng, gap));
    }
    return p;
}

/// Sets every weight touched by channel `i` of group `g` (the member rows and
/// biases plus the matching input columns of every consumer) to zero, or to
/// uniform noise in [-value, value] when value > 0.
inline void zero_channel(const ModelGraph& graph, const CrossLayerGroupSet& groups, ParamMap& p, int g,
                         std::size_t i, double value = 0.0) {
    const auto& grp = groups.group(g);
    const auto spaces = channel_spaces(graph, groups);
    std::mt19937_64 rng(i);
    std::uniform_real_distribution<double> dist(-value, value);
    const auto u = [&](std::mt19937_64& r) { return value == 0.0 ? 0.0 : dist(r); };
    for (int m : grp.members) {
        for (double& v : p.at(weight_key(m)).row(i)) v = u(rng);
        p.at(bias_key(m))[i] = u(rng);
    }
    for (const auto& l : graph.layers()) {
        if (spaces[graph.nodes()[graph.layer_node(l.id)].inputs[0]] != grp.members.front()) continue;
        Tensor& w = p.at(weight_key(l.id));
        for (std::size_t r = 0; r < l.out_dim; ++r) w.at(r, i) = u(rng);
    }
}

}  // namespace vacl::testing
