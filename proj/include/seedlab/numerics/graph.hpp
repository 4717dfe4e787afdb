#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "seedlab/numerics/ops.hpp"
#include "seedlab/numerics/params.hpp"
#include "seedlab/numerics/tensor.hpp"

namespace seedlab::num {

using NodeId = std::size_t;

// Tape for reverse-mode differentiation. Nodes are appended in evaluation
// order, so node ids are already a topological order. Forward values are
// computed eagerly on insertion.
class Graph {
public:
    explicit Graph(const ParamStore* params = nullptr) : params_(params) {}

    NodeId constant(Tensor value);
    NodeId param(ParamId id);

    NodeId matmul(NodeId a, NodeId b);
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId scale(NodeId a, double s);
    NodeId relu(NodeId x);
    NodeId gelu(NodeId x);
    NodeId layer_norm(NodeId x, NodeId gain, NodeId bias);
    NodeId embedding(NodeId table, std::vector<std::size_t> indices);
    NodeId concat(std::span<const NodeId> parts);
    NodeId sum(NodeId x);
    NodeId mean(NodeId x);
    NodeId squared_error(NodeId a, NodeId b);

    const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
    std::size_t size() const { return nodes_.size(); }

    struct Backward {
        Gradients params;
        // Gradient of the loss w.r.t. each watched node, in the order given.
        std::vector<Tensor> watched;
    };

    // Requires a one-element loss node.
    Backward backward(NodeId loss, std::span<const NodeId> watch = {}) const;

private:
    enum class Op {
        constant,
        param,
        matmul,
        add,
        sub,
        mul,
        scale,
        relu,
        gelu,
        layer_norm,
        embedding,
        concat,
        sum,
        mean,
        squared_error,
    };

    struct Node {
        Node(Op o, std::vector<NodeId> in, Tensor v) : op(o), inputs(std::move(in)), value(std::move(v)) {}
        Op op;
        std::vector<NodeId> inputs;
        Tensor value;
        ParamId param = 0;
        double scalar = 0.0;
        std::vector<std::size_t> indices;
        LayerNormCache ln;
    };

    NodeId push(Node node);
    void check(NodeId id) const;

    const ParamStore* params_;
    std::vector<Node> nodes_;
};

}  // namespace seedlab::num
