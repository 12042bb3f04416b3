#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vacl/autodiff.hpp"
#include "vacl/tensor.hpp"

namespace vacl {

/// One dense layer. A channel is one output row of the weight plus its bias entry.
struct LayerSpec {
    int id = 0;
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    bool activation = false;  // input passes through ReLU before this layer
};

enum class NodeKind { Input, Linear, Relu, Add };

struct GraphNode {
    NodeKind kind = NodeKind::Input;
    std::vector<std::size_t> inputs;  // indices of earlier nodes
    int layer = -1;                   // Linear nodes only
};

std::string weight_key(int layer_id);
std::string bias_key(int layer_id);

/// Dataflow graph of a residual MLP. Nodes are stored in topological order and
/// the last Linear node reached from `output` is the classifier head.
class ModelGraph {
public:
    std::size_t input_dim() const noexcept { return input_dim_; }
    const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
    const std::vector<GraphNode>& nodes() const noexcept { return nodes_; }
    std::size_t output_node() const noexcept { return output_; }

    const LayerSpec& layer(int id) const;
    bool has_layer(int id) const noexcept;
    /// Node index holding the Linear op for a layer.
    std::size_t layer_node(int id) const;
    int head_layer() const;
    std::size_t num_classes() const;
    std::vector<std::size_t> add_nodes() const;

    /// Total number of scalar parameters (weights and biases).
    std::size_t param_count() const;

    /// Throws StructuralError unless dims along every edge agree, add operands
    /// share their width, and the output is a Linear head.
    void validate() const;

    /// Same topology with each layer's dims taken from the given parameters.
    ModelGraph resized_to(const ParamMap& params) const;

private:
    friend class GraphBuilder;
    std::size_t input_dim_ = 0;
    std::vector<LayerSpec> layers_;
    std::vector<GraphNode> nodes_;
    std::size_t output_ = 0;
};

/// Incremental construction; every call returns the new node's index.
class GraphBuilder {
public:
    explicit GraphBuilder(std::size_t input_dim);
    std::size_t input() const noexcept { return 0; }
    std::size_t linear(int layer_id, std::size_t src, std::size_t out_dim);
    std::size_t relu(std::size_t src);
    std::size_t add(std::vector<std::size_t> srcs);
    /// Width of a node's output.
    std::size_t width(std::size_t node) const;
    ModelGraph finish(std::size_t output);

private:
    ModelGraph graph_;
    std::vector<std::size_t> widths_;
};

/// Stages of residual blocks. Each block computes a = L1(relu(h)),
/// b = L2(relu(a)) and h' = h + a + b; stage s > 0 starts with a projection
/// of the previous stage's output. A ReLU and linear head close the network.
ModelGraph build_residual_mlp(std::size_t input_dim, const std::vector<std::size_t>& widths,
                              const std::vector<std::size_t>& blocks_per_stage, std::size_t num_classes);

struct CrossLayerGroup {
    int id = 0;
    std::vector<int> members;  // layer ids in graph order
    std::size_t width = 0;     // shared out_dim M
};

struct CrossLayerGroupSet {
    std::vector<CrossLayerGroup> groups;
    std::vector<int> standalone;  // layers in no group, graph order

    const CrossLayerGroup& group(int id) const;
    /// Group id containing the layer, if any.
    std::optional<int> group_of(int layer_id) const;
    bool empty() const noexcept { return groups.empty(); }
};

/// Union-find over layers whose outputs meet at element-wise additions,
/// directly or through chains of additions and ReLUs.
CrossLayerGroupSet extract_cross_layer_groups(const ModelGraph& graph);

/// Identifier of the channel space a node's output lives in. Layers in one
/// group share a space; graph input is kInputSpace.
inline constexpr int kInputSpace = -1;
std::vector<int> channel_spaces(const ModelGraph& graph, const CrossLayerGroupSet& groups);

struct WeightPartition {
    std::vector<std::string> grouped;     // W_g parameter keys
    std::vector<std::string> standalone;  // W_s parameter keys
    std::size_t grouped_count = 0;
    std::size_t standalone_count = 0;
};

WeightPartition partition_weights(const ModelGraph& graph, const CrossLayerGroupSet& groups);

/// Fan-in scaled uniform weights in [-1/sqrt(in), 1/sqrt(in)], zero biases.
ParamMap init_params(const ModelGraph& graph, std::uint64_t seed);

/// Throws DimensionError unless params hold exactly the graph's bindings.
void check_params(const ModelGraph& graph, const ParamMap& params);

/// Records the forward pass on a tape; returns the logits node. `vars` maps
/// each parameter key to its tape variable.
ad::Var forward_on_tape(ad::Tape& tape, const ModelGraph& graph, const std::map<std::string, ad::Var>& vars,
                        ad::Var batch);

Tensor forward(const ModelGraph& graph, const ParamMap& params, const Tensor& batch);

}  // namespace vacl
