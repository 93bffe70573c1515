#include "dat/network.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dat/errors.hpp"

namespace dat {

using json = nlohmann::ordered_json;

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::Relu: return "relu";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Identity: return "identity";
        case Activation::Softmax: return "softmax";
    }
    return "identity";
}

Activation activation_from_name(const std::string& name) {
    if (name == "relu") return Activation::Relu;
    if (name == "sigmoid") return Activation::Sigmoid;
    if (name == "identity") return Activation::Identity;
    if (name == "softmax") return Activation::Softmax;
    throw ParseError(ParseError::Kind::BadDocument, "unknown activation '" + name + "'");
}

Network::Network(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    validate();
}

void Network::validate() const {
    if (layers_.empty()) throw ContractViolation("network has no layers");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const DenseLayer& l = layers_[i];
        if (l.weights.rank() != 2)
            throw ShapeError("layer " + std::to_string(i) + ": weights must be a matrix, got " +
                             l.weights.shape_string());
        if (l.bias.rank() != 1 || l.bias.dim(0) != l.out_dim())
            throw ShapeError("layer " + std::to_string(i) + ": bias shape " + l.bias.shape_string() +
                             " does not match weights " + l.weights.shape_string());
        if (i + 1 < layers_.size() && l.out_dim() != layers_[i + 1].in_dim())
            throw ShapeError("layer " + std::to_string(i) + " output width " +
                             std::to_string(l.out_dim()) + " does not match layer " +
                             std::to_string(i + 1) + " input width " +
                             std::to_string(layers_[i + 1].in_dim()));
        if (!l.weights.all_finite() || !l.bias.all_finite())
            throw NumericError("layer " + std::to_string(i) + " has non-finite parameters");
        if (l.activation == Activation::Softmax && i + 1 != layers_.size())
            throw ContractViolation("softmax is only valid as the final layer");
    }
}

namespace {

void apply_activation(Activation act, std::vector<double>& v) {
    switch (act) {
        case Activation::Identity:
            break;
        case Activation::Relu:
            for (double& x : v) x = x > 0.0 ? x : 0.0;
            break;
        case Activation::Sigmoid:
            for (double& x : v) x = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
            break;
        case Activation::Softmax: {
            const double m = *std::max_element(v.begin(), v.end());
            double sum = 0.0;
            for (double& x : v) {
                x = std::exp(x - m);
                sum += x;
            }
            for (double& x : v) x /= sum;
            break;
        }
    }
}

std::vector<double> layer_preactivation(const DenseLayer& l, const std::vector<double>& x) {
    const std::size_t out = l.out_dim(), in = l.in_dim();
    std::vector<double> z(out);
    for (std::size_t i = 0; i < out; ++i) {
        const double* row = l.weights.data().data() + i * in;
        double acc = l.bias[i];
        for (std::size_t k = 0; k < in; ++k) acc += row[k] * x[k];
        z[i] = acc;
    }
    return z;
}

void check_input(const Network& net, const Tensor& x) {
    if (x.size() != net.input_dim())
        throw ShapeError("input of shape " + x.shape_string() + " does not match network input width " +
                         std::to_string(net.input_dim()));
}

}  // namespace

Tensor network_apply(const Network& net, const Tensor& x) {
    check_input(net, x);
    std::vector<double> v = x.data();
    for (const DenseLayer& l : net.layers()) {
        v = layer_preactivation(l, v);
        apply_activation(l.activation, v);
    }
    return Tensor::unchecked({v.size()}, std::move(v));
}

std::vector<std::vector<double>> activation_trace(const Network& net, const Tensor& x) {
    check_input(net, x);
    std::vector<std::vector<double>> trace;
    trace.reserve(net.layers().size());
    std::vector<double> v = x.data();
    for (std::size_t i = 0; i < net.layers().size(); ++i) {
        const DenseLayer& l = net.layers()[i];
        std::vector<double> z = layer_preactivation(l, v);
        const bool final_softmax = i + 1 == net.layers().size() && l.activation == Activation::Softmax;
        if (final_softmax) {
            trace.push_back(z);  // logits stand in for the softmax outputs
        }
        apply_activation(l.activation, z);
        if (!final_softmax) trace.push_back(z);
        v = std::move(z);
    }
    return trace;
}

Prediction predict(const Network& net, const Tensor& x) {
    Tensor out = network_apply(net, x);
    int best = 0;
    for (std::size_t i = 1; i < out.size(); ++i) {
        if (out[i] > out[best]) best = static_cast<int>(i);
    }
    return Prediction{best, std::move(out)};
}

ForwardNodes network_forward(Graph& g, const Network& net, NodeId input) {
    const Tensor& in = g.value(input);
    const bool batched = in.rank() == 2;
    const std::size_t width = batched ? in.rows() : in.dim(0);
    if (width != net.input_dim())
        throw ShapeError("input of shape " + in.shape_string() + " does not match network input width " +
                         std::to_string(net.input_dim()));

    ForwardNodes fw;
    NodeId cur = input;
    for (std::size_t i = 0; i < net.layers().size(); ++i) {
        const DenseLayer& l = net.layers()[i];
        const NodeId w = g.leaf(l.weights);
        const NodeId b = g.leaf(l.bias);
        fw.params.emplace_back(w, b);
        NodeId z = g.matmul(w, cur);
        z = batched ? g.add_colwise(z, b) : g.add(z, b);
        const bool final_layer = i + 1 == net.layers().size();
        if (final_layer) fw.logits = z;
        NodeId post = z;
        switch (l.activation) {
            case Activation::Identity: break;
            case Activation::Relu: post = g.relu(z); break;
            case Activation::Sigmoid: post = g.sigmoid(z); break;
            case Activation::Softmax:
                post = batched ? z : g.softmax(z);
                break;
        }
        const bool softmax_final = final_layer && l.activation == Activation::Softmax;
        fw.coverage_layers.push_back(softmax_final ? z : post);
        cur = post;
    }
    fw.output = cur;
    return fw;
}

namespace {

double require_number(const json& j, const std::string& path) {
    if (!j.is_number()) throw ParseError(ParseError::Kind::BadDocument, "expected a number at " + path, path);
    return j.get<double>();
}

const json& require_field(const json& j, const char* key, const std::string& path) {
    if (!j.is_object() || !j.contains(key))
        throw ParseError(ParseError::Kind::BadDocument, "missing field " + path + "." + key, path + "." + key);
    return j.at(key);
}

}  // namespace

std::string save_model(const Network& net) {
    json doc;
    doc["input_dim"] = net.input_dim();
    json layers = json::array();
    for (const DenseLayer& l : net.layers()) {
        json jl;
        jl["activation"] = activation_name(l.activation);
        json rows = json::array();
        for (std::size_t i = 0; i < l.out_dim(); ++i) {
            json row = json::array();
            for (std::size_t k = 0; k < l.in_dim(); ++k) row.push_back(l.weights(i, k));
            rows.push_back(std::move(row));
        }
        jl["weights"] = std::move(rows);
        json bias = json::array();
        for (std::size_t i = 0; i < l.out_dim(); ++i) bias.push_back(l.bias[i]);
        jl["bias"] = std::move(bias);
        layers.push_back(std::move(jl));
    }
    doc["layers"] = std::move(layers);
    return doc.dump(2) + "\n";
}

Network load_model(const std::string& bytes) {
    json doc;
    try {
        doc = json::parse(bytes);
    } catch (const json::parse_error& e) {
        throw ParseError(ParseError::Kind::BadDocument, std::string("model JSON: ") + e.what());
    }

    const json& jin = require_field(doc, "input_dim", "$");
    std::size_t expected_in = static_cast<std::size_t>(require_number(jin, "$.input_dim"));
    const json& jlayers = require_field(doc, "layers", "$");
    if (!jlayers.is_array() || jlayers.empty())
        throw ParseError(ParseError::Kind::BadDocument, "expected a non-empty array at $.layers", "$.layers");

    std::vector<DenseLayer> layers;
    for (std::size_t li = 0; li < jlayers.size(); ++li) {
        const std::string lp = "$.layers[" + std::to_string(li) + "]";
        const json& jl = jlayers.at(li);
        DenseLayer layer;
        const json& jact = require_field(jl, "activation", lp);
        if (!jact.is_string())
            throw ParseError(ParseError::Kind::BadDocument, "expected a string at " + lp + ".activation",
                             lp + ".activation");
        layer.activation = activation_from_name(jact.get<std::string>());

        const json& jw = require_field(jl, "weights", lp);
        if (!jw.is_array() || jw.empty())
            throw ParseError(ParseError::Kind::BadDocument, "expected a non-empty array at " + lp + ".weights",
                             lp + ".weights");
        const std::size_t out = jw.size();
        if (!jw.at(0).is_array() || jw.at(0).empty())
            throw ParseError(ParseError::Kind::BadDocument, "expected a non-empty row at " + lp + ".weights[0]",
                             lp + ".weights[0]");
        const std::size_t in = jw.at(0).size();  // ragged rows are a parse error;
                                                 // cross-layer mismatch is a shape error below
        std::vector<double> w;
        w.reserve(out * in);
        for (std::size_t r = 0; r < out; ++r) {
            const std::string rp = lp + ".weights[" + std::to_string(r) + "]";
            const json& jrow = jw.at(r);
            if (!jrow.is_array() || jrow.size() != in)
                throw ParseError(ParseError::Kind::BadDocument,
                                 "expected a row of " + std::to_string(in) + " numbers at " + rp, rp);
            for (std::size_t c = 0; c < in; ++c) w.push_back(require_number(jrow.at(c), rp));
        }
        layer.weights = Tensor::matrix(out, in, std::move(w));

        const json& jb = require_field(jl, "bias", lp);
        if (!jb.is_array() || jb.size() != out)
            throw ParseError(ParseError::Kind::BadDocument,
                             "expected " + std::to_string(out) + " numbers at " + lp + ".bias", lp + ".bias");
        std::vector<double> b;
        b.reserve(out);
        for (std::size_t i = 0; i < out; ++i) b.push_back(require_number(jb.at(i), lp + ".bias"));
        layer.bias = Tensor::vector(std::move(b));
        layers.push_back(std::move(layer));
    }

    Network net(std::move(layers));  // validates widths and finiteness
    if (net.input_dim() != expected_in)
        throw ShapeError("model input_dim " + std::to_string(expected_in) +
                         " does not match first layer width " + std::to_string(net.input_dim()));
    return net;
}

}  // namespace dat
