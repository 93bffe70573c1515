#pragma once

// Shared helpers for the test suites: random fixtures, gradient-oracle
// plumbing, and the per-op finite-difference check used by both the unit
// tests and the acceptance suite.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "dat/coverage.hpp"
#include "dat/graph.hpp"
#include "dat/network.hpp"
#include "dat/rng.hpp"
#include "dat/tensor.hpp"
#include "dat/train.hpp"

namespace dat::testing {

inline std::string test_data_path(const std::string& name) {
    return std::string(DAT_TEST_DATA_DIR) + "/" + name;
}

// Infinity-norm relative disagreement between two gradients.
inline double gradient_rel_error(const Tensor& analytic, const Tensor& numeric) {
    double max_diff = 0.0, max_ref = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        max_diff = std::max(max_diff, std::abs(analytic[i] - numeric[i]));
        max_ref = std::max(max_ref, std::abs(numeric[i]));
    }
    return max_diff / std::max(max_ref, 1e-8);
}

inline Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape, double lo, double hi) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

// Random entries with |v| >= margin, clear of the relu kink.
inline Tensor random_tensor_off_kink(Rng& rng, std::vector<std::size_t> shape, double margin) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data()) {
        do {
            v = rng.uniform(-1.0, 1.0);
        } while (std::abs(v) < margin);
    }
    return t;
}

// One gradient-oracle trial: a scalar objective built on a fresh tape from
// the probe tensor, so finite differences never touch cached state.
struct GradientCase {
    std::function<NodeId(Graph&, NodeId)> build;
    Tensor x0;
};

inline double evaluate_case(const GradientCase& c, const Tensor& x) {
    Graph g;
    const NodeId leaf = g.leaf(x);
    return g.forward(c.build(g, leaf));
}

inline Tensor analytic_gradient(const GradientCase& c) {
    Graph g;
    const NodeId leaf = g.leaf(c.x0);
    return g.backward(c.build(g, leaf), leaf);
}

inline Tensor numeric_gradient(const GradientCase& c, double h = 1e-5) {
    return finite_difference_gradient([&](const Tensor& x) { return evaluate_case(c, x); }, c.x0, h);
}

// Builds a case exercising one op kind at a random point. Inputs are sampled
// away from relu kinks and inside safe domains for log / gaussian sigma.
GradientCase make_gradient_case(const std::string& kind, Rng& rng);

inline const std::vector<std::string>& gradient_case_kinds() {
    static const std::vector<std::string> kinds = {
        "matmul_vec", "matmul_mat", "add",        "add_colwise", "mul",
        "scale",      "relu",       "sigmoid",    "exp",         "log",
        "square",     "softplus",   "reduce_sum", "pick",        "slice_rows",
        "softmax",    "softmax_cross_entropy",    "gaussian_log_density",
        "network",
    };
    return kinds;
}

Network random_network(Rng& rng, std::size_t input_dim, const std::vector<LayerSpec>& arch);

// ---------------------------------------------------------------------------
// Brute-force coverage oracle: forward pass and bit accumulation reimplemented
// from scratch (shared by the unit tests and the acceptance suite; independent
// of the coverage module under test).

std::vector<std::vector<double>> naive_trace(const Network& net, const Tensor& x);

struct NaiveBits {
    std::vector<bool> nc, kmnc, low, high;
};

NaiveBits naive_coverage(const Network& net, const std::vector<Tensor>& suite,
                         const std::vector<Tensor>& profile_inputs, const CoverageConfig& cfg);

}  // namespace dat::testing
