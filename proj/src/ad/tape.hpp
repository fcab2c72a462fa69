#pragma once

#include <span>
#include <unordered_map>
#include <vector>

#include "ad/tensor.hpp"

namespace tcdiv::ad {

using NodeId = int32_t;

enum class OpKind : uint8_t {
    Leaf,
    Constant,
    MatMul,
    AddBias,
    Add,
    Sub,
    Mul,
    Scale,
    AddScalar,
    Relu,
    LeakyRelu,
    L2NormalizeRows,
    ConcatCols,
    GatherRows,
    LogSumExpLast,
    MeanLast,
    Reshape,
    SoftmaxCrossEntropy,
};

const char* op_name(OpKind kind);

// Gradients for the trainable leaves reachable from a backward seed,
// keyed by leaf node id. Each entry has the shape of its leaf.
class GradientMap {
public:
    bool contains(NodeId id) const { return grads_.count(id) != 0; }
    const Tensor& at(NodeId id) const;
    size_t size() const { return grads_.size(); }
    void insert(NodeId id, Tensor g) { grads_.emplace(id, std::move(g)); }
    auto begin() const { return grads_.begin(); }
    auto end() const { return grads_.end(); }

private:
    std::unordered_map<NodeId, Tensor> grads_;
};

// Single-use computation record. Nodes are appended in topological order
// (inputs always precede consumers); values are computed eagerly.
class Tape {
public:
    NodeId leaf(Tensor t);
    NodeId constant(Tensor t);

    NodeId matmul(NodeId a, NodeId b);
    NodeId add_bias(NodeId a, NodeId bias);
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId scale(NodeId a, double factor);
    NodeId add_scalar(NodeId a, double constant);
    NodeId relu(NodeId a);
    NodeId leaky_relu(NodeId a, double slope);
    NodeId l2_normalize_rows(NodeId a);
    NodeId concat_cols(std::span<const NodeId> parts);
    NodeId gather_rows(NodeId a, std::vector<int32_t> indices);
    NodeId logsumexp_last(NodeId a);
    NodeId mean_last(NodeId a);
    NodeId reshape(NodeId a, std::vector<int64_t> shape);
    // Per-row losses for integer class targets, fused for stability.
    NodeId softmax_cross_entropy(NodeId logits, std::vector<int32_t> targets);

    const Tensor& value(NodeId id) const { return node(id).value; }
    bool requires_grad(NodeId id) const { return node(id).requires_grad; }
    bool is_leaf(NodeId id) const { return node(id).kind == OpKind::Leaf; }
    size_t size() const { return nodes_.size(); }

    // Reverse-mode sweep from a scalar seed. Gradients accumulate across
    // fan-out; each node is visited exactly once.
    GradientMap backward(NodeId seed) const;

private:
    struct Node {
        OpKind kind;
        std::vector<NodeId> inputs;
        Tensor value;
        bool requires_grad = false;
        double scalar = 0.0;             // Scale factor, AddScalar constant, LeakyRelu slope
        std::vector<int32_t> indices;    // GatherRows indices, SoftmaxCrossEntropy targets
        std::vector<double> saved;       // L2NormalizeRows denominators, SoftmaxCrossEntropy row lse
    };

    Node& node(NodeId id) { return nodes_[static_cast<size_t>(id)]; }
    const Node& node(NodeId id) const { return nodes_[static_cast<size_t>(id)]; }

    NodeId push(Node n);
    NodeId unary(OpKind kind, NodeId a, Tensor value, double scalar = 0.0);
    NodeId binary(OpKind kind, NodeId a, NodeId b, Tensor value);
    void check_id(NodeId id) const;

    void backward_into(const Node& n, const Tensor& g, std::vector<Tensor>& grads,
                       const std::vector<char>& active) const;

    std::vector<Node> nodes_;
};

}  // namespace tcdiv::ad
