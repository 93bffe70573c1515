#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "dat/tensor.hpp"

namespace dat {

using NodeId = std::size_t;

enum class OpKind {
    Leaf,
    MatMul,
    Add,
    AddColwise,
    Mul,
    Scale,
    Relu,
    Sigmoid,
    Exp,
    Log,
    Square,
    Softplus,
    ReduceSum,
    Pick,
    SliceRows,
    Softmax,
    SoftmaxCrossEntropy,
    GaussianLogDensity,
};

// Append-only reverse-mode tape. Values are computed eagerly as ops are
// recorded, so every forward value is cached before backward runs. A graph is
// built per evaluation and discarded; nodes are never mutated in place.
class Graph {
public:
    NodeId leaf(Tensor value);

    // a[m,n] * b[n]  -> [m]
    // a[m,n] * b[n,p] -> [m,p]
    NodeId matmul(NodeId a, NodeId b);
    NodeId add(NodeId a, NodeId b);                    // elementwise, same shape
    NodeId add_colwise(NodeId m, NodeId bias);         // m[r,c] + bias[r] per column
    NodeId mul(NodeId a, NodeId b);                    // elementwise, same shape
    NodeId scale(NodeId a, double c);

    NodeId relu(NodeId a);
    NodeId sigmoid(NodeId a);
    NodeId exp(NodeId a);
    NodeId log(NodeId a);
    NodeId square(NodeId a);
    NodeId softplus(NodeId a);

    NodeId reduce_sum(NodeId a);                       // -> [1]
    NodeId pick(NodeId a, std::size_t flat_index);     // -> [1]
    NodeId slice_rows(NodeId a, std::size_t row0, std::size_t nrows);
    NodeId softmax(NodeId a);                          // vector only, max-subtracted

    // Mean over the batch of -log softmax(logits[:,b])[labels[b]].
    // logits: [classes] with one label, or [classes, batch].
    NodeId softmax_cross_entropy(NodeId logits, std::vector<int> labels);

    // Sum over elements of log N(x_i; mu_i, sigma_i^2); the log-density of x
    // under an independent Gaussian per coordinate. sigma must be positive.
    NodeId gaussian_log_density(NodeId x, NodeId mu, NodeId sigma);

    // Cached scalar value of root. Root must hold exactly one element.
    double forward(NodeId root) const;

    const Tensor& value(NodeId id) const;
    std::size_t node_count() const { return nodes_.size(); }

    // d(root)/d(wrt); root must be scalar. Result has wrt's shape.
    Tensor backward(NodeId root, NodeId wrt) const;

    // Adjoints of every node in one reverse sweep (indexed by NodeId).
    // Nodes the root does not depend on get zero tensors.
    std::vector<Tensor> backward_all(NodeId root) const;

private:
    struct Node {
        OpKind kind;
        std::vector<NodeId> inputs;
        Tensor value;
        Tensor aux;               // op-specific cache (e.g. softmax probabilities)
        double scalar_param = 0;  // Scale factor
        std::size_t p0 = 0, p1 = 0;  // Pick index / SliceRows offset+count
        std::vector<int> labels;  // SoftmaxCrossEntropy
    };

    NodeId push(Node node);
    const Node& node(NodeId id) const;
    void check_id(NodeId id) const;

    std::vector<Node> nodes_;
};

// Central-difference gradient estimate, one objective evaluation pair per
// coordinate. The test oracle for backward(); kept independent of the tape.
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& objective,
                                  const Tensor& x, double h);

}  // namespace dat
