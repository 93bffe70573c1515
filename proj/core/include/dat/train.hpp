#pragma once

#include <cstdint>
#include <vector>

#include "dat/dataset.hpp"
#include "dat/network.hpp"
#include "dat/rng.hpp"

namespace dat {

struct LayerSpec {
    std::size_t width = 0;
    Activation activation = Activation::Relu;
};

enum class Optimizer { Sgd, Adam };

struct AdamParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t batch_size = 32;
    std::size_t epochs = 10;
    Optimizer optimizer = Optimizer::Adam;
    AdamParams adam;
    std::uint64_t rng_seed = 0;

    void validate() const;
};

struct TrainReport {
    std::vector<double> epoch_losses;
};

// Glorot-uniform weights, zero biases, from the given stream.
Network init_network(std::size_t input_dim, const std::vector<LayerSpec>& arch, Rng& rng);

// Shared SGD/Adam update over a fixed list of parameter tensors.
class ParamOptimizer {
public:
    ParamOptimizer(const TrainConfig& cfg, const std::vector<Tensor*>& params);
    void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads);

private:
    TrainConfig cfg_;
    std::vector<Tensor> m_, v_;
    std::size_t t_ = 0;
};

// Minibatch cross-entropy training of a dense classifier. The architecture
// lists hidden and output layers; the output layer must be softmax.
Network train_classifier(const Dataset& train, const std::vector<LayerSpec>& arch,
                         const TrainConfig& cfg, TrainReport* report = nullptr);

// Accuracy of predict() over a labeled set.
double evaluate_accuracy(const Network& net, const Dataset& ds);

}  // namespace dat
