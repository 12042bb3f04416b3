#include "vacl/regularizers.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numeric>
#include <set>

#include "vacl/errors.hpp"
#include "vacl/kernels.hpp"

namespace vacl {

namespace {

struct KindName {
    PenaltyKind kind;
    std::string_view name;
};

constexpr std::array kKindNames{
    KindName{PenaltyKind::None, "none"},
    KindName{PenaltyKind::L1, "l1"},
    KindName{PenaltyKind::L2, "l2"},
    KindName{PenaltyKind::GroupLasso, "group_lasso"},
    KindName{PenaltyKind::Variance, "variance"},
    KindName{PenaltyKind::VarianceAware, "variance_aware"},
    KindName{PenaltyKind::CLGL, "clgl"},
    KindName{PenaltyKind::VACL, "vacl"},
};

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

double sqrt_size(std::size_t p) { return std::sqrt(static_cast<double>(p)); }

}  // namespace

std::string_view to_string(PenaltyKind kind) {
    for (const auto& k : kKindNames)
        if (k.kind == kind) return k.name;
    return "unknown";
}

std::string_view to_string(Partition partition) {
    switch (partition) {
    case Partition::All: return "all";
    case Partition::Grouped: return "grouped";
    case Partition::Standalone: return "standalone";
    }
    return "unknown";
}

PenaltyKind parse_penalty_kind(std::string_view name) {
    for (const auto& k : kKindNames)
        if (k.name == name) return k.kind;
    throw ConfigError("unknown penalty kind '" + std::string(name) + "'");
}

Partition parse_partition(std::string_view name) {
    if (name == "all") return Partition::All;
    if (name == "grouped") return Partition::Grouped;
    if (name == "standalone") return Partition::Standalone;
    throw ConfigError("unknown partition '" + std::string(name) + "' (expected all, grouped or standalone)");
}

bool is_structured(PenaltyKind kind) {
    return kind != PenaltyKind::None && kind != PenaltyKind::L1 && kind != PenaltyKind::L2;
}

bool is_cross_layer(PenaltyKind kind) {
    return kind == PenaltyKind::CLGL || kind == PenaltyKind::Variance || kind == PenaltyKind::VACL;
}

void PenaltySpec::validate(const CrossLayerGroupSet& groups) const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("penalty lambda must be finite and >= 0");
    if (!(head_l2 >= 0.0) || !std::isfinite(head_l2)) throw ConfigError("head_l2 must be finite and >= 0");
    if (is_cross_layer(kind) && partition != Partition::Standalone && groups.empty()) {
        throw ConfigError(std::string(to_string(kind)) + " needs at least one cross-layer group");
    }
}

// ---------------------------------------------------------------------------
// Slices

std::vector<double> gather(const ParamMap& params, const ChannelGroup& refs) {
    std::vector<double> out;
    for (const auto& ref : refs) {
        const Tensor& w = params.at(weight_key(ref.layer));
        const Tensor& b = params.at(bias_key(ref.layer));
        auto row = w.row(ref.channel);
        out.insert(out.end(), row.begin(), row.end());
        out.push_back(b[ref.channel]);
    }
    return out;
}

void scatter_add(GradientMap& grads, const ChannelGroup& refs, std::span<const double> values) {
    std::size_t pos = 0;
    for (const auto& ref : refs) {
        Tensor& w = grads.at(weight_key(ref.layer));
        Tensor& b = grads.at(bias_key(ref.layer));
        auto row = w.row(ref.channel);
        for (double& v : row) v += values[pos++];
        b[ref.channel] += values[pos++];
    }
    if (pos != values.size()) throw DimensionError("scatter_add: value count does not match slices");
}

std::vector<ChannelGroup> per_layer_channels(const ModelGraph& graph, std::span<const int> layers) {
    std::vector<ChannelGroup> out;
    for (int id : layers) {
        const LayerSpec& l = graph.layer(id);
        for (std::size_t i = 0; i < l.out_dim; ++i) out.push_back({SliceRef{id, i}});
    }
    return out;
}

std::vector<ChannelGroup> cross_layer_channels(const CrossLayerGroupSet& groups) {
    std::vector<ChannelGroup> out;
    for (const auto& g : groups.groups) {
        for (std::size_t i = 0; i < g.width; ++i) {
            ChannelGroup cg;
            for (int member : g.members) cg.push_back(SliceRef{member, i});
            out.push_back(std::move(cg));
        }
    }
    return out;
}

std::vector<GroupView> group_views(const CrossLayerGroupSet& groups, const ParamMap& params) {
    std::vector<GroupView> out;
    for (const auto& g : groups.groups) {
        for (std::size_t i = 0; i < g.width; ++i) {
            ChannelGroup cg;
            for (int member : g.members) cg.push_back(SliceRef{member, i});
            out.push_back(GroupView{g.id, i, gather(params, cg)});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Single-group penalties

double l2_norm(std::span<const double> w) {
    double ss = 0.0;
    for (double v : w) ss += v * v;
    return std::sqrt(ss);
}

double group_lasso(std::span<const GroupView> groups) {
    double total = 0.0;
    for (const auto& g : groups) {
        if (g.values.empty()) throw DimensionError("group_lasso: empty group");
        total += sqrt_size(g.size()) * l2_norm(g.values);
    }
    return total;
}

double variance_penalty(std::span<const double> w) {
    if (w.empty()) return 0.0;
    const double mean = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size());
    double ss = 0.0;
    for (double v : w) ss += (v - mean) * (v - mean);
    return ss;
}

double variance_aware(std::span<const double> w) {
    if (w.empty()) return 0.0;
    double mean = 0.0;
    for (double v : w) mean += std::abs(v);
    mean /= static_cast<double>(w.size());
    double ss = 0.0;
    for (double v : w) {
        const double r = std::abs(v) - mean;
        ss += r * r;
    }
    return std::sqrt(ss);
}

double contour_penalty(PenaltyKind kind, double w1, double w2, double w3) {
    const double pair[2] = {w2, w3};
    const double a = std::abs(w1);
    const double n = l2_norm(pair);
    switch (kind) {
    case PenaltyKind::L1: return a + std::abs(w2) + std::abs(w3);
    case PenaltyKind::GroupLasso: return a + std::sqrt(2.0) * n;
    case PenaltyKind::Variance: return a + std::sqrt(2.0) * (n + variance_penalty(pair));
    case PenaltyKind::VarianceAware: return a + std::sqrt(2.0) * (n + variance_aware(pair));
    default: break;
    }
    throw ConfigError("contour: unsupported penalty kind '" + std::string(to_string(kind)) + "'");
}

double vacl(const CrossLayerGroupSet& groups, const ParamMap& params) {
    if (groups.empty()) throw StructuralError("vacl: no cross-layer groups");
    double total = 0.0;
    for (const auto& view : group_views(groups, params)) {
        if (view.values.empty()) throw DimensionError("vacl: empty group");
        total += sqrt_size(view.size()) * (l2_norm(view.values) + variance_aware(view.values));
    }
    return total;
}

std::vector<double> l2_norm_grad(std::span<const double> w) {
    std::vector<double> g(w.size(), 0.0);
    const double n = l2_norm(w);
    if (n == 0.0) return g;
    for (std::size_t j = 0; j < w.size(); ++j) g[j] = w[j] / n;
    return g;
}

std::vector<double> variance_penalty_grad(std::span<const double> w) {
    std::vector<double> g(w.size(), 0.0);
    if (w.empty()) return g;
    const double mean = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size());
    for (std::size_t j = 0; j < w.size(); ++j) g[j] = 2.0 * (w[j] - mean);
    return g;
}

std::vector<double> variance_aware_grad(std::span<const double> w) {
    // With r = |w| - mean|w| and n = ||r||, dn/d|w_j| = r_j / n because the
    // residuals sum to zero; the chain rule through |w_j| adds sign(w_j).
    std::vector<double> g(w.size(), 0.0);
    if (w.empty()) return g;
    double mean = 0.0;
    for (double v : w) mean += std::abs(v);
    mean /= static_cast<double>(w.size());
    std::vector<double> r(w.size());
    for (std::size_t j = 0; j < w.size(); ++j) r[j] = std::abs(w[j]) - mean;
    const double n = l2_norm(r);
    if (n == 0.0) return g;
    for (std::size_t j = 0; j < w.size(); ++j) g[j] = sign(w[j]) * r[j] / n;
    return g;
}

// ---------------------------------------------------------------------------
// Composite penalty

namespace {

enum class GroupTerm { GroupLasso, GroupLassoVariance, GroupLassoVarianceAware };

double group_term_value(GroupTerm term, std::span<const double> w) {
    const double norm = l2_norm(w);
    switch (term) {
    case GroupTerm::GroupLasso: return sqrt_size(w.size()) * norm;
    case GroupTerm::GroupLassoVariance: return sqrt_size(w.size()) * (norm + variance_penalty(w));
    case GroupTerm::GroupLassoVarianceAware: return sqrt_size(w.size()) * (norm + variance_aware(w));
    }
    return 0.0;
}

std::vector<double> group_term_grad(GroupTerm term, std::span<const double> w) {
    std::vector<double> g = l2_norm_grad(w);
    if (term == GroupTerm::GroupLassoVariance) {
        const auto extra = variance_penalty_grad(w);
        for (std::size_t j = 0; j < g.size(); ++j) g[j] += extra[j];
    } else if (term == GroupTerm::GroupLassoVarianceAware) {
        const auto extra = variance_aware_grad(w);
        for (std::size_t j = 0; j < g.size(); ++j) g[j] += extra[j];
    }
    const double scale = sqrt_size(w.size());
    for (double& v : g) v *= scale;
    return g;
}

// What acts on one part of the weights.
struct PartTerm {
    enum class Shape { Nothing, ElementL1, ElementL2, PerLayer, CrossLayer } shape = Shape::Nothing;
    GroupTerm term = GroupTerm::GroupLasso;
};

PartTerm grouped_term(PenaltyKind kind) {
    using S = PartTerm::Shape;
    switch (kind) {
    case PenaltyKind::None: return {S::Nothing};
    case PenaltyKind::L1: return {S::ElementL1};
    case PenaltyKind::L2: return {S::ElementL2};
    case PenaltyKind::GroupLasso: return {S::PerLayer, GroupTerm::GroupLasso};
    case PenaltyKind::VarianceAware: return {S::PerLayer, GroupTerm::GroupLassoVarianceAware};
    case PenaltyKind::CLGL: return {S::CrossLayer, GroupTerm::GroupLasso};
    case PenaltyKind::Variance: return {S::CrossLayer, GroupTerm::GroupLassoVariance};
    case PenaltyKind::VACL: return {S::CrossLayer, GroupTerm::GroupLassoVarianceAware};
    }
    return {};
}

PartTerm standalone_term(PenaltyKind kind) {
    using S = PartTerm::Shape;
    switch (kind) {
    case PenaltyKind::None: return {S::Nothing};
    case PenaltyKind::L1: return {S::ElementL1};
    case PenaltyKind::L2: return {S::ElementL2};
    default: return {S::PerLayer, GroupTerm::GroupLasso};
    }
}

struct Layout {
    std::vector<int> grouped_layers;
    std::vector<int> standalone_layers;  // head excluded for structured kinds
    int head = -1;
};

Layout layout_for(const PenaltySpec& spec, const ModelGraph& graph, const CrossLayerGroupSet& groups) {
    Layout out;
    out.head = graph.head_layer();
    std::set<int> grouped;
    for (const auto& g : groups.groups) grouped.insert(g.members.begin(), g.members.end());
    for (const auto& l : graph.layers()) {
        if (grouped.contains(l.id)) out.grouped_layers.push_back(l.id);
        else if (l.id != out.head || !is_structured(spec.kind)) out.standalone_layers.push_back(l.id);
    }
    return out;
}

// Evaluates (and optionally differentiates) one part's term over its layers.
double part_value(const PartTerm& term, const ModelGraph& graph, std::span<const int> layers,
                  const CrossLayerGroupSet& groups, const ParamMap& params, GradientMap* grads, double scale) {
    using S = PartTerm::Shape;
    if (term.shape == S::Nothing || layers.empty()) return 0.0;
    if (term.shape == S::ElementL1 || term.shape == S::ElementL2) {
        double total = 0.0;
        for (int id : layers) {
            for (const auto& key : {weight_key(id), bias_key(id)}) {
                const Tensor& w = params.at(key);
                Tensor* g = grads ? &grads->at(key) : nullptr;
                for (std::size_t j = 0; j < w.size(); ++j) {
                    if (term.shape == S::ElementL1) {
                        total += std::abs(w[j]);
                        if (g) (*g)[j] += scale * sign(w[j]);
                    } else {
                        total += w[j] * w[j];
                        if (g) (*g)[j] += scale * 2.0 * w[j];
                    }
                }
            }
        }
        return total;
    }

    std::vector<ChannelGroup> channels;
    if (term.shape == S::PerLayer) {
        channels = per_layer_channels(graph, layers);
    } else {
        channels = cross_layer_channels(groups);
    }
    // Channels own disjoint slices, so per-channel work is independent; the
    // final sum runs serially in channel order to stay deterministic.
    std::vector<double> values(channels.size(), 0.0);
    const std::size_t work = channels.empty() ? 0 : gather(params, channels.front()).size();
    kernels::for_each_index(channels.size(), work * 8, [&](std::size_t c) {
        const std::vector<double> w = gather(params, channels[c]);
        values[c] = group_term_value(term.term, w);
        if (grads) {
            std::vector<double> g = group_term_grad(term.term, w);
            for (double& v : g) v *= scale;
            scatter_add(*grads, channels[c], g);
        }
    });
    double total = 0.0;
    for (double v : values) total += v;
    return total;
}

double head_value(int head, const ParamMap& params, GradientMap* grads, double scale) {
    double total = 0.0;
    for (const auto& key : {weight_key(head), bias_key(head)}) {
        const Tensor& w = params.at(key);
        Tensor* g = grads ? &grads->at(key) : nullptr;
        for (std::size_t j = 0; j < w.size(); ++j) {
            total += w[j] * w[j];
            if (g) (*g)[j] += scale * 2.0 * w[j];
        }
    }
    return total;
}

PenaltyTerms evaluate(const PenaltySpec& spec, const ModelGraph& graph, const CrossLayerGroupSet& groups,
                      const ParamMap& params, GradientMap* grads) {
    check_params(graph, params);
    const Layout layout = layout_for(spec, graph, groups);
    PenaltyTerms terms;
    if (spec.partition != Partition::Standalone) {
        terms.grouped = part_value(grouped_term(spec.kind), graph, layout.grouped_layers, groups, params, grads,
                                   spec.lambda);
    }
    if (spec.partition != Partition::Grouped) {
        terms.standalone = part_value(standalone_term(spec.kind), graph, layout.standalone_layers, groups, params,
                                      grads, spec.lambda);
    }
    terms.head = head_value(layout.head, params, grads, spec.head_l2);
    return terms;
}

}  // namespace

PenaltyTerms penalty_terms(const PenaltySpec& spec, const ModelGraph& graph, const CrossLayerGroupSet& groups,
                           const ParamMap& params) {
    return evaluate(spec, graph, groups, params, nullptr);
}

double penalty_value(const PenaltySpec& spec, const ModelGraph& graph, const CrossLayerGroupSet& groups,
                     const ParamMap& params) {
    const PenaltyTerms t = penalty_terms(spec, graph, groups, params);
    return spec.lambda * (t.grouped + t.standalone) + spec.head_l2 * t.head;
}

double composite_loss(double data_loss, const PenaltySpec& spec, const ModelGraph& graph,
                      const CrossLayerGroupSet& groups, const ParamMap& params) {
    return data_loss + penalty_value(spec, graph, groups, params);
}

GradientMap penalty_gradient(const PenaltySpec& spec, const ModelGraph& graph, const CrossLayerGroupSet& groups,
                             const ParamMap& params) {
    GradientMap grads;
    for (const auto& [name, value] : params) grads.emplace(name, Tensor::zeros(value.shape()));
    evaluate(spec, graph, groups, params, &grads);
    return grads;
}

ad::Var penalty_on_tape(ad::Tape& tape, const PenaltySpec& spec, const ModelGraph& graph,
                        const CrossLayerGroupSet& groups, const std::map<std::string, ad::Var>& vars) {
    ParamMap current;
    std::vector<ad::Var> inputs;
    std::vector<std::string> names;
    for (const auto& [name, var] : vars) {
        current.emplace(name, tape.value(var));
        inputs.push_back(var);
        names.push_back(name);
    }
    const double value = penalty_value(spec, graph, groups, current);
    return ad::custom_scalar(
        tape, "penalty:" + std::string(to_string(spec.kind)), std::move(inputs), value,
        [spec, graph, groups, current = std::move(current), names = std::move(names)](const ad::Tape&) {
            GradientMap grads = penalty_gradient(spec, graph, groups, current);
            std::vector<Tensor> out;
            out.reserve(names.size());
            for (const auto& name : names) out.push_back(std::move(grads.at(name)));
            return out;
        });
}

}  // namespace vacl
