#include "vacl/netgraph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <unordered_map>

#include "vacl/errors.hpp"

namespace vacl {

std::string weight_key(int layer_id) { return "L" + std::to_string(layer_id) + ".W"; }
std::string bias_key(int layer_id) { return "L" + std::to_string(layer_id) + ".b"; }

// ---------------------------------------------------------------------------
// ModelGraph

const LayerSpec& ModelGraph::layer(int id) const {
    for (const auto& l : layers_)
        if (l.id == id) return l;
    throw StructuralError("unknown layer id " + std::to_string(id));
}

bool ModelGraph::has_layer(int id) const noexcept {
    return std::any_of(layers_.begin(), layers_.end(), [id](const LayerSpec& l) { return l.id == id; });
}

std::size_t ModelGraph::layer_node(int id) const {
    for (std::size_t n = 0; n < nodes_.size(); ++n)
        if (nodes_[n].kind == NodeKind::Linear && nodes_[n].layer == id) return n;
    throw StructuralError("layer " + std::to_string(id) + " has no node");
}

int ModelGraph::head_layer() const {
    if (nodes_.empty() || nodes_[output_].kind != NodeKind::Linear) {
        throw StructuralError("graph output is not a linear head");
    }
    return nodes_[output_].layer;
}

std::size_t ModelGraph::num_classes() const { return layer(head_layer()).out_dim; }

std::vector<std::size_t> ModelGraph::add_nodes() const {
    std::vector<std::size_t> out;
    for (std::size_t n = 0; n < nodes_.size(); ++n)
        if (nodes_[n].kind == NodeKind::Add) out.push_back(n);
    return out;
}

std::size_t ModelGraph::param_count() const {
    std::size_t total = 0;
    for (const auto& l : layers_) total += l.out_dim * (l.in_dim + 1);
    return total;
}

void ModelGraph::validate() const {
    if (nodes_.empty() || nodes_[0].kind != NodeKind::Input) throw StructuralError("graph must start with its input");
    std::set<int> ids;
    for (const auto& l : layers_) {
        if (l.out_dim == 0 || l.in_dim == 0) throw StructuralError("layer " + std::to_string(l.id) + " has a zero extent");
        if (!ids.insert(l.id).second) throw StructuralError("duplicate layer id " + std::to_string(l.id));
    }
    std::vector<std::size_t> width(nodes_.size(), 0);
    std::vector<bool> consumed(nodes_.size(), false);
    for (std::size_t n = 0; n < nodes_.size(); ++n) {
        const GraphNode& node = nodes_[n];
        for (std::size_t in : node.inputs) {
            if (in >= n) throw StructuralError("node " + std::to_string(n) + " reads a later node");
            consumed[in] = true;
        }
        switch (node.kind) {
        case NodeKind::Input:
            if (n != 0) throw StructuralError("more than one input node");
            width[n] = input_dim_;
            break;
        case NodeKind::Linear: {
            if (node.inputs.size() != 1) throw StructuralError("linear node needs exactly one input");
            const LayerSpec& l = layer(node.layer);
            if (width[node.inputs[0]] != l.in_dim) {
                throw StructuralError("layer " + std::to_string(l.id) + " expects " + std::to_string(l.in_dim) +
                                      " inputs but receives " + std::to_string(width[node.inputs[0]]));
            }
            width[n] = l.out_dim;
            break;
        }
        case NodeKind::Relu:
            if (node.inputs.size() != 1) throw StructuralError("relu node needs exactly one input");
            width[n] = width[node.inputs[0]];
            break;
        case NodeKind::Add:
            if (node.inputs.size() < 2) throw StructuralError("add node needs at least two inputs");
            width[n] = width[node.inputs[0]];
            for (std::size_t in : node.inputs) {
                if (width[in] != width[n]) {
                    throw StructuralError("add node " + std::to_string(n) + " joins widths " +
                                          std::to_string(width[n]) + " and " + std::to_string(width[in]));
                }
            }
            break;
        }
    }
    head_layer();
    for (std::size_t n = 0; n < nodes_.size(); ++n) {
        if (n != output_ && !consumed[n]) {
            throw StructuralError("node " + std::to_string(n) + " does not reach the output head");
        }
    }
    std::size_t linear_nodes = 0;
    for (const auto& node : nodes_) linear_nodes += node.kind == NodeKind::Linear;
    if (linear_nodes != layers_.size()) throw StructuralError("every layer must appear in exactly one node");
}

ModelGraph ModelGraph::resized_to(const ParamMap& params) const {
    ModelGraph g = *this;
    for (auto& l : g.layers_) {
        auto w = params.find(weight_key(l.id));
        if (w == params.end() || w->second.rank() != 2) {
            throw StructuralError("missing weight matrix for layer " + std::to_string(l.id));
        }
        l.out_dim = w->second.rows();
        l.in_dim = w->second.cols();
    }
    // Layers fed by the graph input fix its width.
    for (const auto& node : g.nodes_) {
        if (node.kind == NodeKind::Linear && node.inputs[0] == 0) g.input_dim_ = g.layer(node.layer).in_dim;
    }
    g.validate();
    check_params(g, params);
    return g;
}

// ---------------------------------------------------------------------------
// GraphBuilder

GraphBuilder::GraphBuilder(std::size_t input_dim) {
    if (input_dim == 0) throw StructuralError("input width must be positive");
    graph_.input_dim_ = input_dim;
    graph_.nodes_.push_back(GraphNode{NodeKind::Input, {}, -1});
    widths_.push_back(input_dim);
}

std::size_t GraphBuilder::width(std::size_t node) const { return widths_.at(node); }

std::size_t GraphBuilder::linear(int layer_id, std::size_t src, std::size_t out_dim) {
    if (layer_id < 0) throw StructuralError("layer ids must be non-negative");
    if (graph_.has_layer(layer_id)) throw StructuralError("duplicate layer id " + std::to_string(layer_id));
    if (out_dim == 0) throw StructuralError("layer " + std::to_string(layer_id) + " needs out_dim >= 1");
    const bool activated = graph_.nodes_.at(src).kind == NodeKind::Relu;
    graph_.layers_.push_back(LayerSpec{layer_id, widths_.at(src), out_dim, activated});
    graph_.nodes_.push_back(GraphNode{NodeKind::Linear, {src}, layer_id});
    widths_.push_back(out_dim);
    return graph_.nodes_.size() - 1;
}

std::size_t GraphBuilder::relu(std::size_t src) {
    graph_.nodes_.push_back(GraphNode{NodeKind::Relu, {src}, -1});
    widths_.push_back(widths_.at(src));
    return graph_.nodes_.size() - 1;
}

std::size_t GraphBuilder::add(std::vector<std::size_t> srcs) {
    if (srcs.size() < 2) throw StructuralError("add node needs at least two inputs");
    const std::size_t w = widths_.at(srcs.front());
    graph_.nodes_.push_back(GraphNode{NodeKind::Add, std::move(srcs), -1});
    widths_.push_back(w);
    return graph_.nodes_.size() - 1;
}

ModelGraph GraphBuilder::finish(std::size_t output) {
    graph_.output_ = output;
    graph_.validate();
    return graph_;
}

ModelGraph build_residual_mlp(std::size_t input_dim, const std::vector<std::size_t>& widths,
                              const std::vector<std::size_t>& blocks_per_stage, std::size_t num_classes) {
    if (widths.empty()) throw StructuralError("residual MLP needs at least one stage");
    if (widths.size() != blocks_per_stage.size()) {
        throw StructuralError("widths and blocks_per_stage differ in length");
    }
    if (num_classes == 0) throw StructuralError("num_classes must be positive");
    for (std::size_t s = 0; s < widths.size(); ++s) {
        if (widths[s] == 0 || blocks_per_stage[s] == 0) throw StructuralError("stage widths and block counts must be positive");
    }

    GraphBuilder b(input_dim);
    int next_id = 0;
    std::size_t h = b.input();
    for (std::size_t s = 0; s < widths.size(); ++s) {
        h = b.linear(next_id++, h, widths[s]);  // stem or stage projection
        for (std::size_t k = 0; k < blocks_per_stage[s]; ++k) {
            const std::size_t a = b.linear(next_id++, b.relu(h), widths[s]);
            const std::size_t c = b.linear(next_id++, b.relu(a), widths[s]);
            h = b.add({h, a, c});
        }
    }
    const std::size_t logits = b.linear(next_id++, b.relu(h), num_classes);
    return b.finish(logits);
}

// ---------------------------------------------------------------------------
// Grouping

const CrossLayerGroup& CrossLayerGroupSet::group(int id) const {
    for (const auto& g : groups)
        if (g.id == id) return g;
    throw StructuralError("unknown group id " + std::to_string(id));
}

std::optional<int> CrossLayerGroupSet::group_of(int layer_id) const {
    for (const auto& g : groups)
        if (std::find(g.members.begin(), g.members.end(), layer_id) != g.members.end()) return g.id;
    return std::nullopt;
}

namespace {

class UnionFind {
public:
    int find(int x) {
        auto it = parent_.try_emplace(x, x).first;
        if (it->second == x) return x;
        const int root = find(it->second);
        parent_[x] = root;
        return root;
    }
    void unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a != b) parent_[std::max(a, b)] = std::min(a, b);
    }

private:
    std::unordered_map<int, int> parent_;
};

struct SpaceAnalysis {
    std::vector<int> node_root;  // per node, union-find root layer or kInputSpace
    std::set<int> roots_with_add;
};

SpaceAnalysis analyse_spaces(const ModelGraph& graph) {
    UnionFind uf;
    SpaceAnalysis out;
    const auto& nodes = graph.nodes();
    out.node_root.assign(nodes.size(), kInputSpace);
    std::vector<std::size_t> width(nodes.size(), graph.input_dim());
    std::vector<std::size_t> add_nodes;
    for (std::size_t n = 0; n < nodes.size(); ++n) {
        const GraphNode& node = nodes[n];
        switch (node.kind) {
        case NodeKind::Input:
            break;
        case NodeKind::Linear:
            out.node_root[n] = uf.find(node.layer);
            width[n] = graph.layer(node.layer).out_dim;
            break;
        case NodeKind::Relu:
            out.node_root[n] = out.node_root[node.inputs[0]];
            width[n] = width[node.inputs[0]];
            break;
        case NodeKind::Add: {
            width[n] = width[node.inputs[0]];
            for (std::size_t in : node.inputs) {
                if (out.node_root[in] == kInputSpace) {
                    throw StructuralError("add node " + std::to_string(n) + " sums the raw graph input");
                }
                if (width[in] != width[n]) {
                    throw StructuralError("add node " + std::to_string(n) + " joins layers of unequal out_dim " +
                                          std::to_string(width[n]) + " and " + std::to_string(width[in]));
                }
                uf.unite(out.node_root[node.inputs[0]], out.node_root[in]);
            }
            out.node_root[n] = out.node_root[node.inputs[0]];
            add_nodes.push_back(n);
            break;
        }
        }
    }
    for (int& r : out.node_root)
        if (r != kInputSpace) r = uf.find(r);
    for (std::size_t n : add_nodes) out.roots_with_add.insert(out.node_root[n]);
    return out;
}

}  // namespace

CrossLayerGroupSet extract_cross_layer_groups(const ModelGraph& graph) {
    const SpaceAnalysis spaces = analyse_spaces(graph);
    const int head = graph.head_layer();

    CrossLayerGroupSet out;
    std::map<int, std::size_t> group_index;  // root -> position in out.groups
    for (std::size_t n = 0; n < graph.nodes().size(); ++n) {
        const GraphNode& node = graph.nodes()[n];
        if (node.kind != NodeKind::Linear) continue;
        const int root = spaces.node_root[n];
        if (!spaces.roots_with_add.contains(root)) {
            out.standalone.push_back(node.layer);
            continue;
        }
        if (node.layer == head) throw StructuralError("classifier head cannot be element-wise connected");
        auto [it, inserted] = group_index.try_emplace(root, out.groups.size());
        if (inserted) {
            CrossLayerGroup g;
            g.id = static_cast<int>(out.groups.size());
            g.width = graph.layer(node.layer).out_dim;
            out.groups.push_back(std::move(g));
        }
        CrossLayerGroup& g = out.groups[it->second];
        if (graph.layer(node.layer).out_dim != g.width) {
            throw StructuralError("group " + std::to_string(g.id) + " mixes widths");
        }
        g.members.push_back(node.layer);
    }
    return out;
}

std::vector<int> channel_spaces(const ModelGraph& graph, const CrossLayerGroupSet& groups) {
    const SpaceAnalysis spaces = analyse_spaces(graph);
    // Canonical representative: the first member of the group, or the layer itself.
    std::map<int, int> canonical;
    for (const auto& g : groups.groups) {
        for (int member : g.members) canonical[spaces.node_root[graph.layer_node(member)]] = g.members.front();
    }
    std::vector<int> out(graph.nodes().size(), kInputSpace);
    for (std::size_t n = 0; n < out.size(); ++n) {
        const int root = spaces.node_root[n];
        if (root == kInputSpace) continue;
        auto it = canonical.find(root);
        out[n] = it != canonical.end() ? it->second : root;
    }
    return out;
}

WeightPartition partition_weights(const ModelGraph& graph, const CrossLayerGroupSet& groups) {
    WeightPartition out;
    std::set<int> grouped;
    for (const auto& g : groups.groups) {
        for (int member : g.members) {
            if (!graph.has_layer(member)) {
                throw StructuralError("group " + std::to_string(g.id) + " references unknown layer " +
                                      std::to_string(member));
            }
            if (!grouped.insert(member).second) {
                throw StructuralError("layer " + std::to_string(member) + " appears in two groups");
            }
        }
    }
    for (const auto& l : graph.layers()) {
        const std::size_t count = l.out_dim * (l.in_dim + 1);
        if (grouped.contains(l.id)) {
            out.grouped.push_back(weight_key(l.id));
            out.grouped.push_back(bias_key(l.id));
            out.grouped_count += count;
        } else {
            out.standalone.push_back(weight_key(l.id));
            out.standalone.push_back(bias_key(l.id));
            out.standalone_count += count;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Parameters and evaluation

ParamMap init_params(const ModelGraph& graph, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    ParamMap params;
    for (const auto& l : graph.layers()) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(l.in_dim));
        std::uniform_real_distribution<double> dist(-bound, bound);
        Tensor w({l.out_dim, l.in_dim});
        for (double& v : w.storage()) v = dist(rng);
        params.emplace(weight_key(l.id), std::move(w));
        params.emplace(bias_key(l.id), Tensor({l.out_dim}));
    }
    return params;
}

void check_params(const ModelGraph& graph, const ParamMap& params) {
    if (params.size() != 2 * graph.layers().size()) {
        throw DimensionError("expected " + std::to_string(2 * graph.layers().size()) + " parameter tensors, got " +
                             std::to_string(params.size()));
    }
    for (const auto& l : graph.layers()) {
        auto w = params.find(weight_key(l.id));
        auto b = params.find(bias_key(l.id));
        if (w == params.end() || b == params.end()) {
            throw DimensionError("missing parameters for layer " + std::to_string(l.id));
        }
        if (w->second.shape() != Shape{l.out_dim, l.in_dim} || b->second.shape() != Shape{l.out_dim}) {
            throw DimensionError("parameters of layer " + std::to_string(l.id) + " have shapes " +
                                 shape_string(w->second.shape()) + ", " + shape_string(b->second.shape()));
        }
    }
}

ad::Var forward_on_tape(ad::Tape& tape, const ModelGraph& graph, const std::map<std::string, ad::Var>& vars,
                        ad::Var batch) {
    const Tensor& x = tape.value(batch);
    if (x.rank() != 2 || x.cols() != graph.input_dim()) {
        throw DimensionError("forward: batch of shape " + shape_string(x.shape()) + " for input width " +
                             std::to_string(graph.input_dim()));
    }
    std::vector<ad::Var> out(graph.nodes().size(), batch);
    std::vector<ad::Var> terms;
    for (std::size_t n = 0; n < graph.nodes().size(); ++n) {
        const GraphNode& node = graph.nodes()[n];
        switch (node.kind) {
        case NodeKind::Input:
            out[n] = batch;
            break;
        case NodeKind::Linear:
            out[n] = ad::linear(tape, out[node.inputs[0]], vars.at(weight_key(node.layer)),
                                vars.at(bias_key(node.layer)));
            break;
        case NodeKind::Relu:
            out[n] = ad::relu(tape, out[node.inputs[0]]);
            break;
        case NodeKind::Add:
            terms.clear();
            for (std::size_t in : node.inputs) terms.push_back(out[in]);
            out[n] = ad::add(tape, terms);
            break;
        }
    }
    return out[graph.output_node()];
}

Tensor forward(const ModelGraph& graph, const ParamMap& params, const Tensor& batch) {
    check_params(graph, params);
    ad::Tape tape;
    std::map<std::string, ad::Var> vars;
    for (const auto& [name, value] : params) vars.emplace(name, tape.constant(value));
    const ad::Var logits = forward_on_tape(tape, graph, vars, tape.constant(batch));
    return tape.value(logits);
}

}  // namespace vacl
