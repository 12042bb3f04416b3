#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vacl/autodiff.hpp"
#include "vacl/netgraph.hpp"

namespace vacl {

/// Default pruning threshold.
inline constexpr double kDefaultTau = 1e-4;

/// Per-layer normalized L1 importance of each output channel.
struct ImportanceMap {
    std::map<int, std::vector<double>> per_layer;
};

/// Keep flags per layer and channel. Members of a cross-layer group share one vector.
struct PruneMask {
    std::map<int, std::vector<bool>> keep;
};

struct PruneReport {
    std::size_t params_before = 0;
    std::size_t params_after = 0;
    double pruned_ratio = 0.0;
    std::map<int, std::size_t> removed_per_group;
    std::map<int, std::size_t> removed_per_standalone_layer;
    std::optional<double> accuracy_before;
    std::optional<double> accuracy_after;

    nlohmann::json to_json() const;
};

/// I_i = ||w_i||_1 / sum_k ||w_k||_1 with w_i = weight row i plus bias i.
/// A layer whose channels are all zero gets the uniform 1/M.
std::vector<double> filter_importance(const Tensor& weight, const Tensor& bias);
ImportanceMap compute_importance(const ModelGraph& graph, const ParamMap& params);

/// Standalone layers drop channel i iff I_li < tau. Group channels are dropped
/// only when every member layer is below tau. A layer never loses all of its
/// channels: the most important one survives. The head keeps everything.
PruneMask select_prunable(const ImportanceMap& importance, double tau, const ModelGraph& graph,
                          const CrossLayerGroupSet& groups);

struct PruneResult {
    ModelGraph graph;
    ParamMap params;
    PruneReport report;
};

/// Removes masked channels: their rows and bias entries in the producing
/// layer and the matching input columns of every consumer. The inputs are
/// left untouched.
PruneResult prune(const ModelGraph& graph, const ParamMap& params, const PruneMask& mask);

/// Rows are the group's member layers, columns the channel index.
Tensor heatmap(const CrossLayerGroup& group, const ImportanceMap& importance);
std::vector<Tensor> heatmaps(const CrossLayerGroupSet& groups, const ParamMap& params, const ModelGraph& graph);
/// Header "layer,c0,...,c{M-1}", then one row per member layer.
std::string heatmap_csv(const CrossLayerGroup& group, const Tensor& matrix);

/// Number of (group, channel) pairs below tau in every member layer.
std::size_t aligned_prunable_channels(const ImportanceMap& importance, const CrossLayerGroupSet& groups,
                                      double tau);

/// Population standard deviation of |w| over each kept cross-layer channel's
/// weights (all member rows and biases), one entry per channel.
std::vector<double> surviving_magnitude_std(const CrossLayerGroupSet& groups, const ParamMap& params,
                                            const PruneMask& mask);

}  // namespace vacl
