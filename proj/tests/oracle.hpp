#pragma once

// Direct-summation reference for the penalty terms. Written against the
// definitions with plain index loops and long double accumulators, sharing no
// code with the library's evaluation path.

#include <cmath>
#include <set>
#include <vector>

#include "vacl/netgraph.hpp"
#include "vacl/regularizers.hpp"

namespace vacl::oracle {

using Real = long double;

inline Real norm2(const std::vector<Real>& w) {
    Real s = 0;
    for (Real v : w) s += v * v;
    return std::sqrt(s);
}

inline Real var_sq(const std::vector<Real>& w) {
    Real mean = 0;
    for (Real v : w) mean += v;
    mean /= static_cast<Real>(w.size());
    Real s = 0;
    for (Real v : w) s += (v - mean) * (v - mean);
    return s;
}

inline Real var_abs(const std::vector<Real>& w) {
    Real mean = 0;
    for (Real v : w) mean += std::fabs(v);
    mean /= static_cast<Real>(w.size());
    Real s = 0;
    for (Real v : w) s += (std::fabs(v) - mean) * (std::fabs(v) - mean);
    return std::sqrt(s);
}

/// Row i of layer l followed by its bias entry.
inline std::vector<Real> channel(const ParamMap& p, int layer, std::size_t i) {
    const Tensor& w = p.at(weight_key(layer));
    const std::size_t cols = w.shape()[1];
    std::vector<Real> out;
    for (std::size_t c = 0; c < cols; ++c) out.push_back(w[i * cols + c]);
    out.push_back(p.at(bias_key(layer))[i]);
    return out;
}

inline Real elementwise(const ParamMap& p, int layer, bool squared) {
    Real s = 0;
    for (const auto& key : {weight_key(layer), bias_key(layer)})
        for (double v : p.at(key).data()) s += squared ? Real(v) * v : std::fabs(Real(v));
    return s;
}

enum class Term { GL, GLVar, GLVarAware };

inline Real term(Term t, const std::vector<Real>& w) {
    const Real root_p = std::sqrt(static_cast<Real>(w.size()));
    switch (t) {
    case Term::GL: return root_p * norm2(w);
    case Term::GLVar: return root_p * (norm2(w) + var_sq(w));
    case Term::GLVarAware: return root_p * (norm2(w) + var_abs(w));
    }
    return 0;
}

inline Real per_layer(Term t, const ParamMap& p, const ModelGraph& g, int layer) {
    Real s = 0;
    for (std::size_t i = 0; i < g.layer(layer).out_dim; ++i) s += term(t, channel(p, layer, i));
    return s;
}

inline Real cross_layer(Term t, const ParamMap& p, const CrossLayerGroup& grp) {
    Real s = 0;
    for (std::size_t i = 0; i < grp.width; ++i) {
        std::vector<Real> w;
        for (int m : grp.members) {
            const auto part = channel(p, m, i);
            w.insert(w.end(), part.begin(), part.end());
        }
        s += term(t, w);
    }
    return s;
}

/// lambda * (grouped + standalone) + head_l2 * ||head||^2
inline Real penalty(const PenaltySpec& spec, const ModelGraph& g, const CrossLayerGroupSet& groups,
                    const ParamMap& p) {
    std::set<int> grouped;
    for (const auto& grp : groups.groups) grouped.insert(grp.members.begin(), grp.members.end());
    const int head = g.head_layer();
    const bool structured = spec.kind != PenaltyKind::None && spec.kind != PenaltyKind::L1 &&
                            spec.kind != PenaltyKind::L2;
    const bool use_grouped = spec.partition != Partition::Standalone;
    const bool use_standalone = spec.partition != Partition::Grouped;

    Real total = 0;
    for (const auto& l : g.layers()) {
        const bool in_group = grouped.count(l.id) > 0;
        if (in_group && !use_grouped) continue;
        if (!in_group && !use_standalone) continue;
        if (!in_group && l.id == head && structured) continue;
        switch (spec.kind) {
        case PenaltyKind::None: break;
        case PenaltyKind::L1: total += elementwise(p, l.id, false); break;
        case PenaltyKind::L2: total += elementwise(p, l.id, true); break;
        case PenaltyKind::GroupLasso: total += per_layer(Term::GL, p, g, l.id); break;
        case PenaltyKind::VarianceAware:
            total += per_layer(in_group ? Term::GLVarAware : Term::GL, p, g, l.id);
            break;
        case PenaltyKind::CLGL:
        case PenaltyKind::Variance:
        case PenaltyKind::VACL:
            if (!in_group) total += per_layer(Term::GL, p, g, l.id);
            break;
        }
    }
    if (use_grouped) {
        for (const auto& grp : groups.groups) {
            if (spec.kind == PenaltyKind::CLGL) total += cross_layer(Term::GL, p, grp);
            if (spec.kind == PenaltyKind::Variance) total += cross_layer(Term::GLVar, p, grp);
            if (spec.kind == PenaltyKind::VACL) total += cross_layer(Term::GLVarAware, p, grp);
        }
    }
    return static_cast<Real>(spec.lambda) * total + static_cast<Real>(spec.head_l2) * elementwise(p, head, true);
}

}  // namespace vacl::oracle
