#include "dat/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dat/errors.hpp"
#include "dat/graph.hpp"

namespace dat {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ContractViolation("learning rate must be positive");
    if (batch_size < 1) throw ContractViolation("batch size must be at least 1");
}

Network init_network(std::size_t input_dim, const std::vector<LayerSpec>& arch, Rng& rng) {
    if (arch.empty()) throw ContractViolation("architecture has no layers");
    std::vector<DenseLayer> layers;
    std::size_t in = input_dim;
    for (const LayerSpec& spec : arch) {
        const std::size_t out = spec.width;
        if (out == 0) throw ContractViolation("layer width must be positive");
        const double limit = std::sqrt(6.0 / double(in + out));
        Tensor w = Tensor::zeros({out, in});
        for (double& v : w.data()) v = rng.uniform(-limit, limit);
        layers.push_back(DenseLayer{std::move(w), Tensor::zeros({out}), spec.activation});
        in = out;
    }
    return Network(std::move(layers));
}

ParamOptimizer::ParamOptimizer(const TrainConfig& cfg, const std::vector<Tensor*>& params)
    : cfg_(cfg) {
    if (cfg_.optimizer == Optimizer::Adam) {
        m_.reserve(params.size());
        v_.reserve(params.size());
        for (const Tensor* p : params) {
            m_.push_back(Tensor::zeros(p->shape()));
            v_.push_back(Tensor::zeros(p->shape()));
        }
    }
}

void ParamOptimizer::step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads) {
    const double lr = cfg_.learning_rate;
    if (cfg_.optimizer == Optimizer::Sgd) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            Tensor& p = *params[i];
            const Tensor& g = *grads[i];
            for (std::size_t j = 0; j < p.size(); ++j) p[j] -= lr * g[j];
        }
        return;
    }
    ++t_;
    const double b1 = cfg_.adam.beta1, b2 = cfg_.adam.beta2, eps = cfg_.adam.epsilon;
    const double c1 = 1.0 - std::pow(b1, double(t_));
    const double c2 = 1.0 - std::pow(b2, double(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = *grads[i];
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            p[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps);
        }
    }
}

namespace {

void check_training_inputs(const Dataset& train, std::size_t output_dim) {
    for (int label : train.labels) {
        if (label < 0 || static_cast<std::size_t>(label) >= output_dim)
            throw ContractViolation("label " + std::to_string(label) + " outside [0, " +
                                    std::to_string(output_dim) + ")");
    }
    for (const Tensor& x : train.inputs) {
        for (double v : x.data()) {
            if (v < 0.0 || v > 1.0)
                throw ContractViolation("training inputs must be normalized to [0,1]");
        }
    }
}

Tensor make_batch(const std::vector<Tensor>& inputs, const std::vector<std::size_t>& idx,
                  std::size_t first, std::size_t count) {
    const std::size_t dim = inputs[idx[first]].size();
    Tensor x = Tensor::zeros({dim, count});
    for (std::size_t b = 0; b < count; ++b) {
        const Tensor& src = inputs[idx[first + b]];
        for (std::size_t i = 0; i < dim; ++i) x.data()[i * count + b] = src[i];
    }
    return x;
}

}  // namespace

Network train_classifier(const Dataset& train, const std::vector<LayerSpec>& arch,
                         const TrainConfig& cfg, TrainReport* report) {
    cfg.validate();
    if (train.size() == 0) throw ContractViolation("training set is empty");
    if (arch.empty() || arch.back().activation != Activation::Softmax)
        throw ContractViolation("classifier architecture must end in a softmax layer");
    check_training_inputs(train, arch.back().width);

    Rng rng(cfg.rng_seed);
    Network net = init_network(train.inputs.front().size(), arch, rng);

    std::vector<Tensor*> params;
    for (DenseLayer& l : net.layers()) {
        params.push_back(&l.weights);
        params.push_back(&l.bias);
    }
    ParamOptimizer opt(cfg, params);

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t first = 0; first < order.size(); first += cfg.batch_size) {
            const std::size_t count = std::min(cfg.batch_size, order.size() - first);
            Graph g;
            const NodeId x = g.leaf(make_batch(train.inputs, order, first, count));
            ForwardNodes fw = network_forward(g, net, x);
            std::vector<int> labels(count);
            for (std::size_t b = 0; b < count; ++b) labels[b] = train.labels[order[first + b]];
            const NodeId loss = g.softmax_cross_entropy(fw.logits, std::move(labels));

            const double batch_loss = g.forward(loss);
            if (!std::isfinite(batch_loss))
                throw TrainingFailure("training diverged (non-finite loss) at epoch " +
                                          std::to_string(epoch),
                                      epoch);
            epoch_loss += batch_loss * double(count);

            const std::vector<Tensor> adj = g.backward_all(loss);
            std::vector<const Tensor*> grads;
            grads.reserve(params.size());
            for (const auto& [w, b] : fw.params) {
                grads.push_back(&adj[w]);
                grads.push_back(&adj[b]);
            }
            opt.step(params, grads);
        }
        if (report) report->epoch_losses.push_back(epoch_loss / double(order.size()));
    }
    return net;
}

double evaluate_accuracy(const Network& net, const Dataset& ds) {
    if (ds.size() == 0) throw ContractViolation("cannot evaluate on an empty set");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (predict(net, ds.inputs[i]).label == ds.labels[i]) ++correct;
    }
    return double(correct) / double(ds.size());
}

}  // namespace dat
