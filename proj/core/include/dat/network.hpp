#pragma once

#include <string>
#include <vector>

#include "dat/graph.hpp"
#include "dat/tensor.hpp"

namespace dat {

enum class Activation { Relu, Sigmoid, Identity, Softmax };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct DenseLayer {
    Tensor weights;  // [out x in]
    Tensor bias;     // [out]
    Activation activation = Activation::Identity;

    std::size_t in_dim() const { return weights.cols(); }
    std::size_t out_dim() const { return weights.rows(); }
};

// Ordered stack of dense layers. Immutable after training; shared freely.
class Network {
public:
    Network() = default;
    explicit Network(std::vector<DenseLayer> layers);

    const std::vector<DenseLayer>& layers() const { return layers_; }
    std::vector<DenseLayer>& layers() { return layers_; }
    std::size_t input_dim() const { return layers_.front().in_dim(); }
    std::size_t output_dim() const { return layers_.back().out_dim(); }

    // Checks width chaining, weight finiteness, and that softmax appears only
    // as the final layer. Throws ShapeError / ContractViolation.
    void validate() const;

private:
    std::vector<DenseLayer> layers_;
};

struct Prediction {
    int label = 0;
    Tensor probabilities;
};

// Plain (tape-free) single-input forward pass through every layer.
Tensor network_apply(const Network& net, const Tensor& x);

// Post-activation values per coverage layer: one vector per dense layer, with
// the final layer contributing its pre-activation logits when it is softmax.
std::vector<std::vector<double>> activation_trace(const Network& net, const Tensor& x);

// Argmax of the output distribution; ties break to the lowest index.
Prediction predict(const Network& net, const Tensor& x);

// Graph forward pass for a single input (vector) or a column batch (matrix).
// `logits` is the final layer's pre-activation output; `output` applies the
// final activation, except that a softmax final on a batch stays at the
// logits (the training path pairs it with softmax_cross_entropy instead).
struct ForwardNodes {
    std::vector<NodeId> coverage_layers;
    std::vector<std::pair<NodeId, NodeId>> params;  // (weights, bias) leaf per layer
    NodeId logits = 0;
    NodeId output = 0;
};
ForwardNodes network_forward(Graph& g, const Network& net, NodeId input);

// Model file format: JSON with full round-trip float precision.
std::string save_model(const Network& net);
Network load_model(const std::string& bytes);

}  // namespace dat
