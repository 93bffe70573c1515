#include <doctest.h>

#include <cmath>

#include "dat/errors.hpp"
#include "dat/graph.hpp"
#include "dat/tensor.hpp"
#include "support.hpp"

using namespace dat;
using namespace dat::testing;

TEST_CASE("tensor invariants") {
    CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), ShapeError);
    CHECK_THROWS_AS(Tensor({2}, {1.0, NAN}), NumericError);
    CHECK_THROWS_AS(Tensor({0}, {}), ShapeError);
    const Tensor t({2, 2}, {1, 2, 3, 4});
    CHECK(t.size() == 4);
    CHECK(t(1, 0) == 3);
}

TEST_CASE("forward evaluates arithmetic") {
    Graph g;
    const NodeId two = g.leaf(Tensor::scalar(2));
    const NodeId three = g.leaf(Tensor::scalar(3));
    const NodeId one = g.leaf(Tensor::scalar(1));
    const NodeId root = g.add(g.mul(two, three), one);
    CHECK(g.forward(root) == 7.0);
}

TEST_CASE("forward evaluates relu at a negative input") {
    Graph g;
    const NodeId root = g.relu(g.leaf(Tensor::scalar(-5)));
    CHECK(g.forward(root) == 0.0);
}

TEST_CASE("gaussian log density of a standard normal at its mean") {
    Graph g;
    const NodeId root = g.gaussian_log_density(g.leaf(Tensor::scalar(0)), g.leaf(Tensor::scalar(0)),
                                               g.leaf(Tensor::scalar(1)));
    // closed form: -0.5 * ln(2*pi)
    CHECK(g.forward(root) == doctest::Approx(-0.9189385).epsilon(1e-6));
    CHECK(g.forward(root) == doctest::Approx(-0.5 * std::log(2.0 * M_PI)));
}

TEST_CASE("backward: power rule at x=3") {
    Graph g;
    const NodeId x = g.leaf(Tensor::scalar(3));
    const NodeId y = g.square(x);
    CHECK(g.backward(y, x)[0] == 6.0);
}

TEST_CASE("backward: relu subgradient left of the kink") {
    Graph g;
    const NodeId x = g.leaf(Tensor::scalar(-1));
    const NodeId y = g.relu(x);
    CHECK(g.backward(y, x)[0] == 0.0);
}

TEST_CASE("backward: relu subgradient at exactly zero is zero") {
    Graph g;
    const NodeId x = g.leaf(Tensor::scalar(0));
    CHECK(g.backward(g.relu(x), x)[0] == 0.0);
}

TEST_CASE("backward rejects non-scalar roots") {
    Graph g;
    const NodeId x = g.leaf(Tensor::vector({1, 2}));
    CHECK_THROWS_AS(g.backward(g.relu(x), x), ContractViolation);
}

TEST_CASE("shape mismatch reports both shapes") {
    Graph g;
    const NodeId a = g.leaf(Tensor::zeros({2, 3}));
    const NodeId b = g.leaf(Tensor::zeros({4}));
    try {
        g.matmul(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2x3]") != std::string::npos);
        CHECK(msg.find("[4]") != std::string::npos);
    }
}

TEST_CASE("random 3-layer network gradient matches finite differences") {
    Rng rng(2024);
    for (int trial = 0; trial < 10; ++trial) {
        const GradientCase c = make_gradient_case("network", rng);
        CHECK(gradient_rel_error(analytic_gradient(c), numeric_gradient(c)) <= 1e-4);
    }
}

TEST_CASE("finite differences: x^2 at 3") {
    const Tensor x = Tensor::scalar(3);
    const Tensor grad = finite_difference_gradient(
        [](const Tensor& t) { return t[0] * t[0]; }, x, 1e-5);
    CHECK(grad[0] == doctest::Approx(6.0).epsilon(1e-6));
}

TEST_CASE("finite differences: sum objective gives all ones") {
    Rng rng(7);
    const Tensor x = random_tensor(rng, {6}, -1, 1);
    const Tensor grad = finite_difference_gradient(
        [](const Tensor& t) {
            double s = 0;
            for (double v : t.data()) s += v;
            return s;
        },
        x, 1e-5);
    for (std::size_t i = 0; i < grad.size(); ++i) CHECK(grad[i] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("finite differences rejects bad step and non-finite objectives") {
    const Tensor x = Tensor::scalar(1);
    CHECK_THROWS_AS(finite_difference_gradient([](const Tensor& t) { return t[0]; }, x, 0.0),
                    ContractViolation);
    CHECK_THROWS_AS(finite_difference_gradient(
                        [](const Tensor& t) { return std::log(-1.0 - t[0] * 0); }, x, 1e-5),
                    NumericError);
}

TEST_CASE("every op kind matches the finite-difference oracle") {
    // The acceptance suite runs the full 100-point sweep; this is a fast
    // smoke pass over the same generators.
    Rng rng(11);
    for (const std::string& kind : gradient_case_kinds()) {
        for (int trial = 0; trial < 5; ++trial) {
            const GradientCase c = make_gradient_case(kind, rng);
            const double err = gradient_rel_error(analytic_gradient(c), numeric_gradient(c));
            INFO(kind << " trial " << trial);
            CHECK(err <= 1e-4);
        }
    }
}

TEST_CASE("backward is linear over objective sums") {
    Rng rng(42);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor x0 = random_tensor(rng, {5}, -1, 1);
        const Tensor w1 = random_tensor(rng, {5}, -1, 1);
        const Tensor w2 = random_tensor(rng, {5}, -1, 1);

        Graph g;
        const NodeId x = g.leaf(x0);
        const NodeId f1 = g.reduce_sum(g.mul(g.sigmoid(x), g.leaf(w1)));
        const NodeId f2 = g.reduce_sum(g.mul(g.square(x), g.leaf(w2)));
        const Tensor both = g.backward(g.add(f1, f2), x);
        const Tensor g1 = g.backward(f1, x);
        const Tensor g2 = g.backward(f2, x);
        for (std::size_t i = 0; i < both.size(); ++i)
            CHECK(std::abs(both[i] - (g1[i] + g2[i])) <= 1e-12);
    }
}

TEST_CASE("forward is deterministic") {
    Rng rng(5);
    const Tensor x0 = random_tensor(rng, {4}, -1, 1);
    const GradientCase c = make_gradient_case("softmax", rng);
    const double a = evaluate_case(c, c.x0);
    const double b = evaluate_case(c, c.x0);
    CHECK(a == b);  // bit-identical
}

TEST_CASE("softmax is computed with max subtraction") {
    Graph g;
    // Logits large enough to overflow exp() without the shift.
    const NodeId x = g.leaf(Tensor::vector({1000.0, 1000.0, 999.0}));
    const NodeId p = g.softmax(x);
    const Tensor& v = g.value(p);
    CHECK(std::isfinite(v[0]));
    CHECK(v[0] == doctest::Approx(v[1]));
    CHECK(v[0] + v[1] + v[2] == doctest::Approx(1.0));
}
