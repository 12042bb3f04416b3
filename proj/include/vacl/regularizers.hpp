#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vacl/autodiff.hpp"
#include "vacl/netgraph.hpp"

namespace vacl {

enum class PenaltyKind { None, L1, L2, GroupLasso, Variance, VarianceAware, CLGL, VACL };
enum class Partition { All, Grouped, Standalone };

std::string_view to_string(PenaltyKind kind);
std::string_view to_string(Partition partition);
/// Accepts the names produced by to_string; throws ConfigError otherwise.
PenaltyKind parse_penalty_kind(std::string_view name);
Partition parse_partition(std::string_view name);

/// Which regularizer acts on which part of the weights.
///
/// The grouped part W_g (layers in cross-layer groups) receives:
///   L1, L2          elementwise sum |w| or sum w^2
///   GroupLasso      sqrt(p) ||w_li|| per layer and channel
///   VarianceAware   sqrt(p) (||w_li|| + r_var(w_li)) per layer and channel
///   CLGL            sqrt(p) ||W_i^g|| per cross-layer channel
///   Variance        sqrt(p) (||W_i^g|| + Var(W_i^g)) per cross-layer channel
///   VACL            sqrt(p) (||W_i^g|| + r_var(W_i^g)) per cross-layer channel
/// The standalone part W_s gets the elementwise term for L1/L2 and per-layer
/// Group Lasso for every structured kind. The classifier head is left out of
/// structured terms and always carries head_l2 * ||W_head||^2.
struct PenaltySpec {
    PenaltyKind kind = PenaltyKind::None;
    double lambda = 0.0;
    Partition partition = Partition::All;
    double head_l2 = 0.0;

    /// Throws ConfigError on negative strengths or a grouped kind without groups.
    void validate(const CrossLayerGroupSet& groups) const;
};

bool is_structured(PenaltyKind kind);
bool is_cross_layer(PenaltyKind kind);

/// Concatenated weights of one group W_i (or W_i^g for cross-layer groups).
struct GroupView {
    int group = -1;
    std::size_t channel = 0;
    std::vector<double> values;
    std::size_t size() const noexcept { return values.size(); }
};

/// One channel slice: row `channel` of a layer's weight plus its bias entry.
struct SliceRef {
    int layer = 0;
    std::size_t channel = 0;
};
using ChannelGroup = std::vector<SliceRef>;

std::vector<double> gather(const ParamMap& params, const ChannelGroup& refs);
/// Adds values back into the slices of grads, in gather order.
void scatter_add(GradientMap& grads, const ChannelGroup& refs, std::span<const double> values);

/// One group per (layer, channel) for the given layers.
std::vector<ChannelGroup> per_layer_channels(const ModelGraph& graph, std::span<const int> layers);
/// One group per (cross-layer group, channel index), members in group order.
std::vector<ChannelGroup> cross_layer_channels(const CrossLayerGroupSet& groups);
std::vector<GroupView> group_views(const CrossLayerGroupSet& groups, const ParamMap& params);

double l2_norm(std::span<const double> w);

/// sum_i sqrt(p_i) ||W_i||_2
double group_lasso(std::span<const GroupView> groups);
/// ||W - mean(W) 1||_2^2
double variance_penalty(std::span<const double> w);
/// || |W| - mean(|W|) 1 ||_2
double variance_aware(std::span<const double> w);
/// sum_g sum_i sqrt(p_i^g) [ ||W_i^g||_2 + || |W_i^g| - mean(|W_i^g|) 1 ||_2 ]
double vacl(const CrossLayerGroupSet& groups, const ParamMap& params);

/// Subgradients of the single-group terms. Zero-norm groups and zero-residual
/// groups get zero; sign(0) is 0.
std::vector<double> l2_norm_grad(std::span<const double> w);
std::vector<double> variance_penalty_grad(std::span<const double> w);
std::vector<double> variance_aware_grad(std::span<const double> w);

/// Three weights in groups W1 = {w1}, W2 = {w2, w3}, scored by one of
/// L1, GroupLasso, Variance or VarianceAware (others throw ConfigError).
/// The structured kinds sum sqrt(p) times the group term over both groups.
double contour_penalty(PenaltyKind kind, double w1, double w2, double w3);

struct PenaltyTerms {
    double grouped = 0.0;     // term on W_g, unscaled
    double standalone = 0.0;  // term on W_s minus the head for structured kinds, unscaled
    double head = 0.0;        // ||W_head||^2 (weights and bias)
};

PenaltyTerms penalty_terms(const PenaltySpec& spec, const ModelGraph& graph, const CrossLayerGroupSet& groups,
                           const ParamMap& params);
/// lambda * (grouped + standalone) + head_l2 * head
double penalty_value(const PenaltySpec& spec, const ModelGraph& graph, const CrossLayerGroupSet& groups,
                     const ParamMap& params);
/// data_loss + penalty_value(...)
double composite_loss(double data_loss, const PenaltySpec& spec, const ModelGraph& graph,
                      const CrossLayerGroupSet& groups, const ParamMap& params);
/// Gradient of penalty_value; every parameter gets an entry.
GradientMap penalty_gradient(const PenaltySpec& spec, const ModelGraph& graph, const CrossLayerGroupSet& groups,
                             const ParamMap& params);

/// Adds the penalty to a tape as one scalar node whose backward rule is
/// penalty_gradient. `vars` maps parameter keys to tape variables.
ad::Var penalty_on_tape(ad::Tape& tape, const PenaltySpec& spec, const ModelGraph& graph,
                        const CrossLayerGroupSet& groups, const std::map<std::string, ad::Var>& vars);

}  // namespace vacl
