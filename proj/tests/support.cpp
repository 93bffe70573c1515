#include "support.hpp"

#include <cmath>
#include <stdexcept>

namespace dat::testing {

Network random_network(Rng& rng, std::size_t input_dim, const std::vector<LayerSpec>& arch) {
    return init_network(input_dim, arch, rng);
}

std::vector<std::vector<double>> naive_trace(const Network& net, const Tensor& x) {
    std::vector<double> v(x.data());
    std::vector<std::vector<double>> out;
    for (std::size_t li = 0; li < net.layers().size(); ++li) {
        const DenseLayer& l = net.layers()[li];
        std::vector<double> z(l.out_dim(), 0.0);
        for (std::size_t i = 0; i < l.out_dim(); ++i) {
            z[i] = l.bias[i];
            for (std::size_t j = 0; j < l.in_dim(); ++j) z[i] += l.weights(i, j) * v[j];
        }
        const bool last = li + 1 == net.layers().size();
        std::vector<double> post = z;
        for (double& p : post) {
            if (l.activation == Activation::Relu) p = p > 0.0 ? p : 0.0;
            if (l.activation == Activation::Sigmoid)
                p = p >= 0.0 ? 1.0 / (1.0 + std::exp(-p)) : std::exp(p) / (1.0 + std::exp(p));
        }
        if (l.activation == Activation::Softmax) {
            double m = post[0];
            for (double p : post) m = std::max(m, p);
            double s = 0;
            for (double& p : post) {
                p = std::exp(p - m);
                s += p;
            }
            for (double& p : post) p /= s;
        }
        out.push_back(last && l.activation == Activation::Softmax ? z : post);
        v = std::move(post);
    }
    return out;
}

NaiveBits naive_coverage(const Network& net, const std::vector<Tensor>& suite,
                         const std::vector<Tensor>& profile_inputs, const CoverageConfig& cfg) {
    std::vector<std::vector<double>> lo, hi;
    for (const Tensor& x : profile_inputs) {
        const auto tr = naive_trace(net, x);
        if (lo.empty()) {
            lo = tr;
            hi = tr;
        } else {
            for (std::size_t l = 0; l < tr.size(); ++l)
                for (std::size_t u = 0; u < tr[l].size(); ++u) {
                    lo[l][u] = std::min(lo[l][u], tr[l][u]);
                    hi[l][u] = std::max(hi[l][u], tr[l][u]);
                }
        }
    }
    std::size_t n = 0;
    for (const auto& l : lo) n += l.size();
    NaiveBits bits{std::vector<bool>(n), std::vector<bool>(n * cfg.k), std::vector<bool>(n),
                   std::vector<bool>(n)};
    for (const Tensor& x : suite) {
        const auto tr = naive_trace(net, x);
        std::size_t base = 0;
        for (std::size_t l = 0; l < tr.size(); ++l) {
            double mn = tr[l][0], mx = tr[l][0];
            for (double a : tr[l]) {
                mn = std::min(mn, a);
                mx = std::max(mx, a);
            }
            for (std::size_t u = 0; u < tr[l].size(); ++u) {
                const double a = tr[l][u];
                if (mx > mn && (a - mn) / (mx - mn) > cfg.nc_threshold) bits.nc[base + u] = true;
                if (a > hi[l][u]) {
                    bits.high[base + u] = true;
                } else if (a < lo[l][u]) {
                    bits.low[base + u] = true;
                } else if (hi[l][u] > lo[l][u]) {
                    auto bin = static_cast<std::size_t>(double(cfg.k) * (a - lo[l][u]) /
                                                        (hi[l][u] - lo[l][u]));
                    bits.kmnc[(base + u) * cfg.k + std::min(bin, cfg.k - 1)] = true;
                } else {
                    bits.kmnc[(base + u) * cfg.k] = true;
                }
            }
            base += tr[l].size();
        }
    }
    return bits;
}

namespace {

// Reduces an arbitrary op output to a scalar through a fixed random weighting
// so every output element contributes to the gradient.
NodeId weighted_sum(Graph& g, NodeId out, const Tensor& w) {
    return g.reduce_sum(g.mul(out, g.leaf(w)));
}

}  // namespace

GradientCase make_gradient_case(const std::string& kind, Rng& rng) {
    GradientCase c;
    if (kind == "matmul_vec") {
        Tensor a = random_tensor(rng, {3, 4}, -1, 1);
        Tensor w = random_tensor(rng, {3}, -1, 1);
        c.x0 = random_tensor(rng, {4}, -1, 1);
        c.build = [a, w](Graph& g, NodeId x) {
            return weighted_sum(g, g.matmul(g.leaf(a), x), w);
        };
    } else if (kind == "matmul_mat") {
        Tensor a = random_tensor(rng, {3, 4}, -1, 1);
        Tensor w = random_tensor(rng, {3, 2}, -1, 1);
        c.x0 = random_tensor(rng, {4, 2}, -1, 1);
        c.build = [a, w](Graph& g, NodeId x) {
            return weighted_sum(g, g.matmul(g.leaf(a), x), w);
        };
    } else if (kind == "add") {
        Tensor b = random_tensor(rng, {5}, -1, 1);
        Tensor w = random_tensor(rng, {5}, -1, 1);
        c.x0 = random_tensor(rng, {5}, -1, 1);
        c.build = [b, w](Graph& g, NodeId x) { return weighted_sum(g, g.add(x, g.leaf(b)), w); };
    } else if (kind == "add_colwise") {
        Tensor m = random_tensor(rng, {3, 4}, -1, 1);
        Tensor w = random_tensor(rng, {3, 4}, -1, 1);
        c.x0 = random_tensor(rng, {3}, -1, 1);
        c.build = [m, w](Graph& g, NodeId x) {
            return weighted_sum(g, g.add_colwise(g.leaf(m), x), w);
        };
    } else if (kind == "mul") {
        Tensor b = random_tensor(rng, {6}, -1, 1);
        Tensor w = random_tensor(rng, {6}, -1, 1);
        c.x0 = random_tensor(rng, {6}, -1, 1);
        c.build = [b, w](Graph& g, NodeId x) { return weighted_sum(g, g.mul(x, g.leaf(b)), w); };
    } else if (kind == "scale") {
        const double s = rng.uniform(-2, 2);
        Tensor w = random_tensor(rng, {5}, -1, 1);
        c.x0 = random_tensor(rng, {5}, -1, 1);
        c.build = [s, w](Graph& g, NodeId x) { return weighted_sum(g, g.scale(x, s), w); };
    } else if (kind == "relu") {
        Tensor w = random_tensor(rng, {6}, -1, 1);
        c.x0 = random_tensor_off_kink(rng, {6}, 1e-3);
        c.build = [w](Graph& g, NodeId x) { return weighted_sum(g, g.relu(x), w); };
    } else if (kind == "sigmoid") {
        Tensor w = random_tensor(rng, {6}, -1, 1);
        c.x0 = random_tensor(rng, {6}, -3, 3);
        c.build = [w](Graph& g, NodeId x) { return weighted_sum(g, g.sigmoid(x), w); };
    } else if (kind == "exp") {
        Tensor w = random_tensor(rng, {6}, -1, 1);
        c.x0 = random_tensor(rng, {6}, -2, 2);
        c.build = [w](Graph& g, NodeId x) { return weighted_sum(g, g.exp(x), w); };
    } else if (kind == "log") {
        Tensor w = random_tensor(rng, {6}, -1, 1);
        c.x0 = random_tensor(rng, {6}, 0.5, 2.0);
        c.build = [w](Graph& g, NodeId x) { return weighted_sum(g, g.log(x), w); };
    } else if (kind == "square") {
        Tensor w = random_tensor(rng, {6}, -1, 1);
        c.x0 = random_tensor(rng, {6}, -2, 2);
        c.build = [w](Graph& g, NodeId x) { return weighted_sum(g, g.square(x), w); };
    } else if (kind == "softplus") {
        Tensor w = random_tensor(rng, {6}, -1, 1);
        c.x0 = random_tensor(rng, {6}, -3, 3);
        c.build = [w](Graph& g, NodeId x) { return weighted_sum(g, g.softplus(x), w); };
    } else if (kind == "reduce_sum") {
        c.x0 = random_tensor(rng, {7}, -1, 1);
        c.build = [](Graph& g, NodeId x) { return g.reduce_sum(x); };
    } else if (kind == "pick") {
        const std::size_t idx = rng.below(6);
        c.x0 = random_tensor(rng, {6}, -1, 1);
        c.build = [idx](Graph& g, NodeId x) { return g.pick(g.sigmoid(x), idx); };
    } else if (kind == "slice_rows") {
        Tensor w = random_tensor(rng, {3}, -1, 1);
        c.x0 = random_tensor(rng, {6}, -1, 1);
        c.build = [w](Graph& g, NodeId x) { return weighted_sum(g, g.slice_rows(x, 1, 3), w); };
    } else if (kind == "softmax") {
        Tensor w = random_tensor(rng, {5}, -1, 1);
        c.x0 = random_tensor(rng, {5}, -2, 2);
        c.build = [w](Graph& g, NodeId x) { return weighted_sum(g, g.softmax(x), w); };
    } else if (kind == "softmax_cross_entropy") {
        Tensor a = random_tensor(rng, {3, 4}, -1, 1);
        std::vector<int> labels = {static_cast<int>(rng.below(3)), static_cast<int>(rng.below(3))};
        c.x0 = random_tensor(rng, {4, 2}, -1, 1);
        c.build = [a, labels](Graph& g, NodeId x) {
            return g.softmax_cross_entropy(g.matmul(g.leaf(a), x), labels);
        };
    } else if (kind == "gaussian_log_density") {
        Tensor mu = random_tensor(rng, {5}, -1, 1);
        Tensor sigma = random_tensor(rng, {5}, 0.5, 2.0);
        c.x0 = random_tensor(rng, {5}, -1, 1);
        c.build = [mu, sigma](Graph& g, NodeId x) {
            return g.gaussian_log_density(x, g.leaf(mu), g.leaf(sigma));
        };
    } else if (kind == "network") {
        // Random 3-layer network; sigmoid hiddens keep the probe clear of
        // relu kinks without resampling.
        Rng netrng(rng.below(1u << 30));
        Network net = random_network(netrng, 5,
                                     {{7, Activation::Sigmoid},
                                      {4, Activation::Sigmoid},
                                      {3, Activation::Softmax}});
        const std::size_t idx = rng.below(3);
        c.x0 = random_tensor(rng, {5}, 0, 1);
        c.build = [net, idx](Graph& g, NodeId x) {
            ForwardNodes fw = network_forward(g, net, x);
            return g.pick(fw.output, idx);
        };
    } else {
        throw std::runtime_error("unknown gradient case kind: " + kind);
    }
    return c;
}

}  // namespace dat::testing
