#include "dat/graph.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dat/errors.hpp"

namespace dat {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * ln(2*pi)

double stable_sigmoid(double a) {
    if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
    const double e = std::exp(a);
    return e / (1.0 + e);
}

double stable_softplus(double a) {
    if (a > 30.0) return a;
    if (a < -30.0) return std::exp(a);
    return std::log1p(std::exp(a));
}

}  // namespace

NodeId Graph::push(Node node) {
    nodes_.push_back(std::move(node));
    return nodes_.size() - 1;
}

const Graph::Node& Graph::node(NodeId id) const {
    check_id(id);
    return nodes_[id];
}

void Graph::check_id(NodeId id) const {
    if (id >= nodes_.size()) throw ContractViolation("graph node id out of range");
}

const Tensor& Graph::value(NodeId id) const { return node(id).value; }

NodeId Graph::leaf(Tensor value) {
    Node n;
    n.kind = OpKind::Leaf;
    n.value = std::move(value);
    return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (A.rank() != 2) throw ShapeError("matmul: left operand must be a matrix, got " + A.shape_string());
    const std::size_t m = A.rows(), n = A.cols();
    Tensor out;
    if (B.rank() == 1) {
        if (B.dim(0) != n)
            throw ShapeError("matmul: shapes " + A.shape_string() + " and " + B.shape_string() + " do not match");
        out = Tensor::zeros({m});
        for (std::size_t i = 0; i < m; ++i) {
            double acc = 0.0;
            const double* arow = A.data().data() + i * n;
            for (std::size_t k = 0; k < n; ++k) acc += arow[k] * B[k];
            out[i] = acc;
        }
    } else if (B.rank() == 2) {
        if (B.rows() != n)
            throw ShapeError("matmul: shapes " + A.shape_string() + " and " + B.shape_string() + " do not match");
        const std::size_t p = B.cols();
        out = Tensor::zeros({m, p});
        for (std::size_t i = 0; i < m; ++i) {
            double* crow = out.data().data() + i * p;
            const double* arow = A.data().data() + i * n;
            for (std::size_t k = 0; k < n; ++k) {
                const double aik = arow[k];
                if (aik == 0.0) continue;
                const double* brow = B.data().data() + k * p;
                for (std::size_t j = 0; j < p; ++j) crow[j] += aik * brow[j];
            }
        }
    } else {
        throw ShapeError("matmul: right operand rank " + B.shape_string() + " unsupported");
    }
    Node node;
    node.kind = OpKind::MatMul;
    node.inputs = {a, b};
    node.value = std::move(out);
    return push(std::move(node));
}

NodeId Graph::add(NodeId a, NodeId b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    require_same_shape(A, B, "add");
    Tensor out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
    Node node;
    node.kind = OpKind::Add;
    node.inputs = {a, b};
    node.value = std::move(out);
    return push(std::move(node));
}

NodeId Graph::add_colwise(NodeId m, NodeId bias) {
    const Tensor& M = value(m);
    const Tensor& B = value(bias);
    if (M.rank() != 2 || B.rank() != 1 || B.dim(0) != M.rows())
        throw ShapeError("add_colwise: shapes " + M.shape_string() + " and " + B.shape_string() + " do not match");
    Tensor out = M;
    const std::size_t r = M.rows(), c = M.cols();
    for (std::size_t i = 0; i < r; ++i) {
        double* row = out.data().data() + i * c;
        for (std::size_t j = 0; j < c; ++j) row[j] += B[i];
    }
    Node node;
    node.kind = OpKind::AddColwise;
    node.inputs = {m, bias};
    node.value = std::move(out);
    return push(std::move(node));
}

NodeId Graph::mul(NodeId a, NodeId b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    require_same_shape(A, B, "mul");
    Tensor out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
    Node node;
    node.kind = OpKind::Mul;
    node.inputs = {a, b};
    node.value = std::move(out);
    return push(std::move(node));
}

NodeId Graph::scale(NodeId a, double c) {
    Tensor out = value(a);
    for (double& v : out.data()) v *= c;
    Node node;
    node.kind = OpKind::Scale;
    node.inputs = {a};
    node.scalar_param = c;
    node.value = std::move(out);
    return push(std::move(node));
}

NodeId Graph::relu(NodeId a) {
    Tensor out = value(a);
    for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
    Node node;
    node.kind = OpKind::Relu;
    node.inputs = {a};
    node.value = std::move(out);
    return push(std::move(node));
}

NodeId Graph::sigmoid(NodeId a) {
    Tensor out = value(a);
    for (double& v : out.data()) v = stable_sigmoid(v);
    Node node;
    node.kind = OpKind::Sigmoid;
    node.inputs = {a};
    node.value = std::move(out);
    return push(std::move(node));
}

NodeId Graph::exp(NodeId a) {
    Tensor out = value(a);
    for (double& v : out.data()) v = std::exp(v);
    Node node;
    node.kind = OpKind::Exp;
    node.inputs = {a};
    node.value = std::move(out);
    return push(std::move(node));
}

NodeId Graph::log(NodeId a) {
    Tensor out = value(a);
    for (double& v : out.data()) v = std::log(v);
    Node node;
    node.kind = OpKind::Log;
    node.inputs = {a};
    node.value = std::move(out);
    return push(std::move(node));
}

NodeId Graph::square(NodeId a) {
    Tensor out = value(a);
    for (double& v : out.data()) v = v * v;
    Node node;
    node.kind = OpKind::Square;
    node.inputs = {a};
    node.value = std::move(out);
    return push(std::move(node));
}

NodeId Graph::softplus(NodeId a) {
    Tensor out = value(a);
    for (double& v : out.data()) v = stable_softplus(v);
    Node node;
    node.kind = OpKind::Softplus;
    node.inputs = {a};
    node.value = std::move(out);
    return push(std::move(node));
}

NodeId Graph::reduce_sum(NodeId a) {
    const Tensor& A = value(a);
    double acc = 0.0;
    for (double v : A.data()) acc += v;
    Node node;
    node.kind = OpKind::ReduceSum;
    node.inputs = {a};
    node.value = Tensor::scalar(acc);
    return push(std::move(node));
}

NodeId Graph::pick(NodeId a, std::size_t flat_index) {
    const Tensor& A = value(a);
    if (flat_index >= A.size()) throw ContractViolation("pick: index out of range");
    Node node;
    node.kind = OpKind::Pick;
    node.inputs = {a};
    node.p0 = flat_index;
    node.value = Tensor::scalar(A[flat_index]);
    return push(std::move(node));
}

NodeId Graph::slice_rows(NodeId a, std::size_t row0, std::size_t nrows) {
    const Tensor& A = value(a);
    if (A.rank() > 2) throw ShapeError("slice_rows: rank of " + A.shape_string() + " unsupported");
    if (row0 + nrows > A.dim(0)) throw ContractViolation("slice_rows: row range out of bounds");
    Tensor out;
    if (A.rank() == 1) {
        out = Tensor::zeros({nrows});
        std::copy_n(A.data().begin() + row0, nrows, out.data().begin());
    } else {
        const std::size_t c = A.cols();
        out = Tensor::zeros({nrows, c});
        std::copy_n(A.data().begin() + row0 * c, nrows * c, out.data().begin());
    }
    Node node;
    node.kind = OpKind::SliceRows;
    node.inputs = {a};
    node.p0 = row0;
    node.p1 = nrows;
    node.value = std::move(out);
    return push(std::move(node));
}

NodeId Graph::softmax(NodeId a) {
    const Tensor& A = value(a);
    if (A.rank() != 1) throw ShapeError("softmax: expected a vector, got " + A.shape_string());
    Tensor out = A;
    const double m = *std::max_element(out.data().begin(), out.data().end());
    double sum = 0.0;
    for (double& v : out.data()) {
        v = std::exp(v - m);
        sum += v;
    }
    for (double& v : out.data()) v /= sum;
    Node node;
    node.kind = OpKind::Softmax;
    node.inputs = {a};
    node.value = std::move(out);
    return push(std::move(node));
}

NodeId Graph::softmax_cross_entropy(NodeId logits, std::vector<int> labels) {
    const Tensor& Z = value(logits);
    const std::size_t classes = Z.dim(0);
    const std::size_t batch = Z.rank() == 2 ? Z.cols() : 1;
    if (Z.rank() > 2) throw ShapeError("softmax_cross_entropy: rank of " + Z.shape_string() + " unsupported");
    if (labels.size() != batch)
        throw ContractViolation("softmax_cross_entropy: label count does not match batch size");
    for (int l : labels) {
        if (l < 0 || static_cast<std::size_t>(l) >= classes)
            throw ContractViolation("softmax_cross_entropy: label out of range");
    }

    Tensor probs = Z;  // column-wise softmax, cached for backward
    double loss = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        double m = -INFINITY;
        for (std::size_t i = 0; i < classes; ++i) m = std::max(m, Z.data()[i * batch + b]);
        double sum = 0.0;
        for (std::size_t i = 0; i < classes; ++i) {
            const double e = std::exp(Z.data()[i * batch + b] - m);
            probs.data()[i * batch + b] = e;
            sum += e;
        }
        for (std::size_t i = 0; i < classes; ++i) probs.data()[i * batch + b] /= sum;
        loss -= std::log(probs.data()[static_cast<std::size_t>(labels[b]) * batch + b]);
    }
    loss /= static_cast<double>(batch);

    Node node;
    node.kind = OpKind::SoftmaxCrossEntropy;
    node.inputs = {logits};
    node.labels = std::move(labels);
    node.aux = std::move(probs);
    node.value = Tensor::scalar(loss);
    return push(std::move(node));
}

NodeId Graph::gaussian_log_density(NodeId x, NodeId mu, NodeId sigma) {
    const Tensor& X = value(x);
    const Tensor& M = value(mu);
    const Tensor& S = value(sigma);
    require_same_shape(X, M, "gaussian_log_density");
    require_same_shape(X, S, "gaussian_log_density");
    double acc = 0.0;
    for (std::size_t i = 0; i < X.size(); ++i) {
        const double s = S[i];
        // NaN sigmas flow through as NaN so training loops can report divergence.
        if (std::isfinite(s) && s <= 0.0)
            throw ContractViolation("gaussian_log_density: sigma must be positive");
        const double d = X[i] - M[i];
        acc += -kHalfLog2Pi - std::log(s) - d * d / (2.0 * s * s);
    }
    Node node;
    node.kind = OpKind::GaussianLogDensity;
    node.inputs = {x, mu, sigma};
    node.value = Tensor::scalar(acc);
    return push(std::move(node));
}

double Graph::forward(NodeId root) const {
    const Tensor& v = value(root);
    if (!v.is_scalar()) throw ContractViolation("forward: root node is not scalar");
    return v[0];
}

Tensor Graph::backward(NodeId root, NodeId wrt) const {
    check_id(wrt);
    return backward_all(root)[wrt];
}

std::vector<Tensor> Graph::backward_all(NodeId root) const {
    const Tensor& rv = value(root);
    if (!rv.is_scalar()) throw ContractViolation("backward: root node is not scalar");

    std::vector<Tensor> adj(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) adj[i] = Tensor::zeros(nodes_[i].value.shape());
    adj[root][0] = 1.0;

    for (std::size_t idx = root + 1; idx-- > 0;) {
        const Node& n = nodes_[idx];
        const Tensor& g = adj[idx];
        switch (n.kind) {
            case OpKind::Leaf:
                break;
            case OpKind::MatMul: {
                const Tensor& A = nodes_[n.inputs[0]].value;
                const Tensor& B = nodes_[n.inputs[1]].value;
                Tensor& dA = adj[n.inputs[0]];
                Tensor& dB = adj[n.inputs[1]];
                const std::size_t m = A.rows(), k = A.cols();
                if (B.rank() == 1) {
                    for (std::size_t i = 0; i < m; ++i) {
                        const double gi = g[i];
                        if (gi == 0.0) continue;
                        double* darow = dA.data().data() + i * k;
                        const double* arow = A.data().data() + i * k;
                        for (std::size_t kk = 0; kk < k; ++kk) {
                            darow[kk] += gi * B[kk];
                            dB[kk] += gi * arow[kk];
                        }
                    }
                } else {
                    const std::size_t p = B.cols();
                    for (std::size_t i = 0; i < m; ++i) {
                        const double* grow = g.data().data() + i * p;
                        const double* arow = A.data().data() + i * k;
                        double* darow = dA.data().data() + i * k;
                        for (std::size_t kk = 0; kk < k; ++kk) {
                            const double* brow = B.data().data() + kk * p;
                            double* dbrow = dB.data().data() + kk * p;
                            double acc = 0.0;
                            const double aik = arow[kk];
                            for (std::size_t j = 0; j < p; ++j) {
                                acc += grow[j] * brow[j];
                                dbrow[j] += aik * grow[j];
                            }
                            darow[kk] += acc;
                        }
                    }
                }
                break;
            }
            case OpKind::Add: {
                Tensor& da = adj[n.inputs[0]];
                Tensor& db = adj[n.inputs[1]];
                for (std::size_t i = 0; i < g.size(); ++i) {
                    da[i] += g[i];
                    db[i] += g[i];
                }
                break;
            }
            case OpKind::AddColwise: {
                Tensor& dm = adj[n.inputs[0]];
                Tensor& db = adj[n.inputs[1]];
                const std::size_t r = g.rows(), c = g.cols();
                for (std::size_t i = 0; i < r; ++i) {
                    const double* grow = g.data().data() + i * c;
                    double* dmrow = dm.data().data() + i * c;
                    double acc = 0.0;
                    for (std::size_t j = 0; j < c; ++j) {
                        dmrow[j] += grow[j];
                        acc += grow[j];
                    }
                    db[i] += acc;
                }
                break;
            }
            case OpKind::Mul: {
                const Tensor& A = nodes_[n.inputs[0]].value;
                const Tensor& B = nodes_[n.inputs[1]].value;
                Tensor& da = adj[n.inputs[0]];
                Tensor& db = adj[n.inputs[1]];
                for (std::size_t i = 0; i < g.size(); ++i) {
                    da[i] += g[i] * B[i];
                    db[i] += g[i] * A[i];
                }
                break;
            }
            case OpKind::Scale: {
                Tensor& da = adj[n.inputs[0]];
                for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * n.scalar_param;
                break;
            }
            case OpKind::Relu: {
                const Tensor& A = nodes_[n.inputs[0]].value;
                Tensor& da = adj[n.inputs[0]];
                for (std::size_t i = 0; i < g.size(); ++i) {
                    if (A[i] > 0.0) da[i] += g[i];
                }
                break;
            }
            case OpKind::Sigmoid: {
                Tensor& da = adj[n.inputs[0]];
                for (std::size_t i = 0; i < g.size(); ++i) {
                    const double s = n.value[i];
                    da[i] += g[i] * s * (1.0 - s);
                }
                break;
            }
            case OpKind::Exp: {
                Tensor& da = adj[n.inputs[0]];
                for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * n.value[i];
                break;
            }
            case OpKind::Log: {
                const Tensor& A = nodes_[n.inputs[0]].value;
                Tensor& da = adj[n.inputs[0]];
                for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] / A[i];
                break;
            }
            case OpKind::Square: {
                const Tensor& A = nodes_[n.inputs[0]].value;
                Tensor& da = adj[n.inputs[0]];
                for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * 2.0 * A[i];
                break;
            }
            case OpKind::Softplus: {
                const Tensor& A = nodes_[n.inputs[0]].value;
                Tensor& da = adj[n.inputs[0]];
                for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * stable_sigmoid(A[i]);
                break;
            }
            case OpKind::ReduceSum: {
                Tensor& da = adj[n.inputs[0]];
                for (double& v : da.data()) v += g[0];
                break;
            }
            case OpKind::Pick: {
                adj[n.inputs[0]][n.p0] += g[0];
                break;
            }
            case OpKind::SliceRows: {
                Tensor& da = adj[n.inputs[0]];
                const Tensor& A = nodes_[n.inputs[0]].value;
                const std::size_t c = A.rank() == 2 ? A.cols() : 1;
                for (std::size_t i = 0; i < g.size(); ++i) da.data()[n.p0 * c + i] += g[i];
                break;
            }
            case OpKind::Softmax: {
                Tensor& da = adj[n.inputs[0]];
                const Tensor& p = n.value;
                double dot = 0.0;
                for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * p[i];
                for (std::size_t i = 0; i < g.size(); ++i) da[i] += p[i] * (g[i] - dot);
                break;
            }
            case OpKind::SoftmaxCrossEntropy: {
                Tensor& dz = adj[n.inputs[0]];
                const Tensor& p = n.aux;
                const std::size_t classes = p.dim(0);
                const std::size_t batch = p.rank() == 2 ? p.cols() : 1;
                const double scale = g[0] / static_cast<double>(batch);
                for (std::size_t b = 0; b < batch; ++b) {
                    for (std::size_t i = 0; i < classes; ++i) {
                        const double y = static_cast<std::size_t>(n.labels[b]) == i ? 1.0 : 0.0;
                        dz.data()[i * batch + b] += scale * (p.data()[i * batch + b] - y);
                    }
                }
                break;
            }
            case OpKind::GaussianLogDensity: {
                const Tensor& X = nodes_[n.inputs[0]].value;
                const Tensor& M = nodes_[n.inputs[1]].value;
                const Tensor& S = nodes_[n.inputs[2]].value;
                Tensor& dx = adj[n.inputs[0]];
                Tensor& dm = adj[n.inputs[1]];
                Tensor& ds = adj[n.inputs[2]];
                for (std::size_t i = 0; i < X.size(); ++i) {
                    const double s = S[i];
                    const double d = X[i] - M[i];
                    const double t = d / (s * s);
                    dx[i] += g[0] * -t;
                    dm[i] += g[0] * t;
                    ds[i] += g[0] * (-1.0 / s + d * d / (s * s * s));
                }
                break;
            }
        }
    }
    return adj;
}

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& objective,
                                  const Tensor& x, double h) {
    if (!(h > 0.0)) throw ContractViolation("finite_difference_gradient: h must be positive");
    Tensor grad = Tensor::zeros(x.shape());
    Tensor probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + h;
        const double fp = objective(probe);
        probe[i] = x[i] - h;
        const double fm = objective(probe);
        probe[i] = x[i];
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NumericError("finite_difference_gradient: objective returned a non-finite value");
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

}  // namespace dat
