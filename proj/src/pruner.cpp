#include "vacl/pruner.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "vacl/errors.hpp"
#include "vacl/format.hpp"

namespace vacl {

nlohmann::json PruneReport::to_json() const {
    nlohmann::json j;
    j["params_before"] = params_before;
    j["params_after"] = params_after;
    j["pruned_ratio"] = pruned_ratio;
    nlohmann::json groups = nlohmann::json::object();
    for (const auto& [g, n] : removed_per_group) groups[std::to_string(g)] = n;
    j["removed_channels_per_group"] = groups;
    nlohmann::json layers = nlohmann::json::object();
    for (const auto& [l, n] : removed_per_standalone_layer) layers[std::to_string(l)] = n;
    j["removed_channels_per_standalone_layer"] = layers;
    j["accuracy_before"] = accuracy_before ? nlohmann::json(*accuracy_before) : nlohmann::json(nullptr);
    j["accuracy_after"] = accuracy_after ? nlohmann::json(*accuracy_after) : nlohmann::json(nullptr);
    return j;
}

std::vector<double> filter_importance(const Tensor& weight, const Tensor& bias) {
    const std::size_t m = weight.rows();
    if (m == 0) throw DimensionError("filter_importance: layer has no channels");
    if (bias.shape() != Shape{m}) throw DimensionError("filter_importance: bias does not match weight rows");
    std::vector<double> norms(m, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        double n = std::abs(bias[i]);
        for (double v : weight.row(i)) n += std::abs(v);
        norms[i] = n;
        total += n;
    }
    if (total == 0.0) return std::vector<double>(m, 1.0 / static_cast<double>(m));
    for (double& n : norms) n /= total;
    return norms;
}

ImportanceMap compute_importance(const ModelGraph& graph, const ParamMap& params) {
    check_params(graph, params);
    ImportanceMap out;
    for (const auto& l : graph.layers()) {
        out.per_layer.emplace(l.id, filter_importance(params.at(weight_key(l.id)), params.at(bias_key(l.id))));
    }
    return out;
}

namespace {

const std::vector<double>& importance_of(const ImportanceMap& importance, int layer, std::size_t width) {
    auto it = importance.per_layer.find(layer);
    if (it == importance.per_layer.end()) throw StructuralError("no importance for layer " + std::to_string(layer));
    if (it->second.size() != width) throw StructuralError("importance width mismatch for layer " + std::to_string(layer));
    return it->second;
}

}  // namespace

PruneMask select_prunable(const ImportanceMap& importance, double tau, const ModelGraph& graph,
                          const CrossLayerGroupSet& groups) {
    if (!(tau >= 0.0)) throw ConfigError("pruning threshold must be >= 0");
    PruneMask mask;
    const int head = graph.head_layer();

    for (const auto& g : groups.groups) {
        std::vector<bool> keep(g.width, false);
        std::vector<double> peak(g.width, 0.0);
        for (int member : g.members) {
            const auto& imp = importance_of(importance, member, g.width);
            for (std::size_t i = 0; i < g.width; ++i) {
                if (imp[i] >= tau) keep[i] = true;
                peak[i] = std::max(peak[i], imp[i]);
            }
        }
        if (std::none_of(keep.begin(), keep.end(), [](bool k) { return k; })) {
            keep[static_cast<std::size_t>(std::max_element(peak.begin(), peak.end()) - peak.begin())] = true;
        }
        for (int member : g.members) mask.keep[member] = keep;
    }
    for (int id : groups.standalone) {
        const std::size_t width = graph.layer(id).out_dim;
        if (id == head) {
            mask.keep[id] = std::vector<bool>(width, true);
            continue;
        }
        const auto& imp = importance_of(importance, id, width);
        std::vector<bool> keep(width);
        for (std::size_t i = 0; i < width; ++i) keep[i] = imp[i] >= tau;
        if (std::none_of(keep.begin(), keep.end(), [](bool k) { return k; })) {
            keep[static_cast<std::size_t>(std::max_element(imp.begin(), imp.end()) - imp.begin())] = true;
        }
        mask.keep[id] = std::move(keep);
    }
    return mask;
}

PruneResult prune(const ModelGraph& graph, const ParamMap& params, const PruneMask& mask) {
    check_params(graph, params);
    const CrossLayerGroupSet groups = extract_cross_layer_groups(graph);
    const int head = graph.head_layer();

    for (const auto& l : graph.layers()) {
        auto it = mask.keep.find(l.id);
        if (it == mask.keep.end()) throw StructuralError("mask has no entry for layer " + std::to_string(l.id));
        if (it->second.size() != l.out_dim) {
            throw StructuralError("mask for layer " + std::to_string(l.id) + " has " +
                                  std::to_string(it->second.size()) + " entries, layer has " +
                                  std::to_string(l.out_dim) + " channels");
        }
        if (std::none_of(it->second.begin(), it->second.end(), [](bool k) { return k; })) {
            throw StructuralError("mask removes every channel of layer " + std::to_string(l.id));
        }
        if (l.id == head && std::find(it->second.begin(), it->second.end(), false) != it->second.end()) {
            throw StructuralError("classifier head outputs cannot be pruned");
        }
    }
    if (mask.keep.size() != graph.layers().size()) throw StructuralError("mask names layers outside the graph");
    for (const auto& g : groups.groups) {
        const auto& first = mask.keep.at(g.members.front());
        for (int member : g.members) {
            if (mask.keep.at(member) != first) {
                throw StructuralError("mask differs across members of group " + std::to_string(g.id));
            }
        }
    }

    const std::vector<int> spaces = channel_spaces(graph, groups);
    ParamMap out;
    for (const auto& l : graph.layers()) {
        const std::size_t node = graph.layer_node(l.id);
        const int in_space = spaces[graph.nodes()[node].inputs[0]];
        const std::vector<bool>& rows = mask.keep.at(l.id);
        const std::vector<bool> cols = in_space == kInputSpace ? std::vector<bool>(l.in_dim, true)
                                                               : mask.keep.at(in_space);
        std::vector<std::size_t> row_idx, col_idx;
        for (std::size_t i = 0; i < rows.size(); ++i)
            if (rows[i]) row_idx.push_back(i);
        for (std::size_t j = 0; j < cols.size(); ++j)
            if (cols[j]) col_idx.push_back(j);

        const Tensor& w = params.at(weight_key(l.id));
        const Tensor& b = params.at(bias_key(l.id));
        Tensor nw({row_idx.size(), col_idx.size()});
        Tensor nb({row_idx.size()});
        for (std::size_t r = 0; r < row_idx.size(); ++r) {
            for (std::size_t c = 0; c < col_idx.size(); ++c) nw.at(r, c) = w.at(row_idx[r], col_idx[c]);
            nb[r] = b[row_idx[r]];
        }
        out.emplace(weight_key(l.id), std::move(nw));
        out.emplace(bias_key(l.id), std::move(nb));
    }

    ModelGraph pruned = graph.resized_to(out);
    PruneReport report;
    report.params_before = graph.param_count();
    report.params_after = pruned.param_count();
    report.pruned_ratio = 1.0 - static_cast<double>(report.params_after) / static_cast<double>(report.params_before);
    auto removed = [&](int layer) {
        const auto& k = mask.keep.at(layer);
        return static_cast<std::size_t>(std::count(k.begin(), k.end(), false));
    };
    for (const auto& g : groups.groups) report.removed_per_group[g.id] = removed(g.members.front());
    for (int id : groups.standalone)
        if (id != head) report.removed_per_standalone_layer[id] = removed(id);
    return PruneResult{std::move(pruned), std::move(out), std::move(report)};
}

Tensor heatmap(const CrossLayerGroup& group, const ImportanceMap& importance) {
    Tensor out({group.members.size(), group.width});
    for (std::size_t r = 0; r < group.members.size(); ++r) {
        const auto& imp = importance_of(importance, group.members[r], group.width);
        std::copy(imp.begin(), imp.end(), out.row(r).begin());
    }
    return out;
}

std::vector<Tensor> heatmaps(const CrossLayerGroupSet& groups, const ParamMap& params, const ModelGraph& graph) {
    if (groups.empty()) throw StructuralError("heatmap: graph has no cross-layer groups");
    const ImportanceMap importance = compute_importance(graph, params);
    std::vector<Tensor> out;
    for (const auto& g : groups.groups) out.push_back(heatmap(g, importance));
    return out;
}

std::string heatmap_csv(const CrossLayerGroup& group, const Tensor& matrix) {
    std::ostringstream os;
    os << "layer";
    for (std::size_t c = 0; c < matrix.cols(); ++c) os << ",c" << c;
    os << '\n';
    for (std::size_t r = 0; r < matrix.rows(); ++r) {
        os << group.members.at(r);
        for (double v : matrix.row(r)) os << ',' << format_double(v);
        os << '\n';
    }
    return os.str();
}

std::size_t aligned_prunable_channels(const ImportanceMap& importance, const CrossLayerGroupSet& groups,
                                      double tau) {
    std::size_t count = 0;
    for (const auto& g : groups.groups) {
        for (std::size_t i = 0; i < g.width; ++i) {
            bool all_below = true;
            for (int member : g.members) all_below = all_below && importance_of(importance, member, g.width)[i] < tau;
            count += all_below;
        }
    }
    return count;
}

std::vector<double> surviving_magnitude_std(const CrossLayerGroupSet& groups, const ParamMap& params,
                                            const PruneMask& mask) {
    std::vector<double> out;
    for (const auto& g : groups.groups) {
        const auto& keep = mask.keep.at(g.members.front());
        for (std::size_t i = 0; i < g.width; ++i) {
            if (!keep[i]) continue;
            std::vector<double> mags;
            for (int member : g.members) {
                for (double v : params.at(weight_key(member)).row(i)) mags.push_back(std::abs(v));
                mags.push_back(std::abs(params.at(bias_key(member))[i]));
            }
            double mean = 0.0;
            for (double v : mags) mean += v;
            mean /= static_cast<double>(mags.size());
            double ss = 0.0;
            for (double v : mags) ss += (v - mean) * (v - mean);
            out.push_back(std::sqrt(ss / static_cast<double>(mags.size())));
        }
    }
    return out;
}

}  // namespace vacl
