#pragma once

#include "mtlab/diffcore/tensor.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mtlab::diffcore {

using NodeId = std::int32_t;

enum class OpKind : std::uint8_t {
    Leaf,
    Affine,              // (x:(B,in), W:(in,out), b:(out)) -> (B,out)
    Relu,                // elementwise; subgradient at 0 is 0
    L2Normalize,         // row-wise x/||x||; rows with norm <= 1e-12 map to 0
    SoftmaxCrossEntropy, // (logits:(B,C), labels:(B) integer-valued) -> mean loss, shape (1)
    L1Loss,              // (pred:(B,m), target:(B,m)) -> mean |diff|, shape (1)
    CosineLoss,          // (pred:(B,m), target:(B,m)) -> mean (1 - pred.target), shape (1)
    ScalarCombine,       // weighted sum of scalar nodes -> shape (1)
};

const char* op_name(OpKind op);

struct Node {
    OpKind op;
    std::vector<NodeId> args;
    std::vector<std::size_t> shape;
    std::vector<double> coeffs; // ScalarCombine weights
    std::string label;          // diagnostic name, optional
};

// An immutable program: a DAG of named tensor operations built once and then
// evaluated many times against different leaf bindings.
class ComputationRecord {
public:
    NodeId leaf(std::vector<std::size_t> shape, std::string label = "");
    NodeId affine(NodeId x, NodeId weight, NodeId bias, std::string label = "");
    NodeId relu(NodeId x, std::string label = "");
    NodeId l2_normalize(NodeId x, std::string label = "");
    NodeId softmax_cross_entropy(NodeId logits, NodeId labels, std::string label = "");
    NodeId l1_loss(NodeId pred, NodeId target, std::string label = "");
    NodeId cosine_loss(NodeId pred, NodeId target, std::string label = "");
    NodeId scalar_combine(std::vector<double> coeffs, std::vector<NodeId> terms,
                          std::string label = "");

    std::size_t node_count() const { return nodes_.size(); }
    const Node& node(NodeId id) const;
    const std::vector<NodeId>& leaves() const { return leaves_; }
    bool is_leaf(NodeId id) const;
    bool is_scalar(NodeId id) const;
    std::string describe(NodeId id) const;

    // Nodes that no other node consumes, in ascending id order.
    std::vector<NodeId> terminal_nodes() const;

private:
    NodeId push(Node n);
    const Node& arg_node(NodeId id, const char* ctx) const;

    std::vector<Node> nodes_;
    std::vector<NodeId> leaves_;
};

// One forward pass of a record against bound leaf values; exposes every node
// value and reverse-mode gradients of any scalar node.
class Evaluation {
public:
    Evaluation(const ComputationRecord& rec, std::span<const Tensor> leaf_values);

    const Tensor& value(NodeId id) const;

    // d(output)/d(each wrt leaf); output must be scalar, wrt entries must be
    // leaves. Leaves the output does not depend on get zero gradients.
    std::vector<Tensor> gradient(NodeId output, std::span<const NodeId> wrt) const;

    const ComputationRecord& record() const { return *rec_; }

private:
    const ComputationRecord* rec_;
    std::vector<Tensor> values_;
};

// Convenience wrappers.
std::vector<Tensor> forward(const ComputationRecord& rec, std::span<const Tensor> leaf_values);
std::vector<Tensor> grad(const ComputationRecord& rec, NodeId output, std::span<const NodeId> wrt,
                         std::span<const Tensor> leaf_values);

} // namespace mtlab::diffcore
