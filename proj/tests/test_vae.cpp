#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "dat/dataset.hpp"
#include "dat/errors.hpp"
#include "dat/vae.hpp"
#include "support.hpp"

using namespace dat;
using namespace dat::testing;

namespace {

// Identity autoencoder fixture: mu_z = x with a vanishing latent sigma, so
// z == x exactly in doubles; the decoder reproduces mu_x = z and sigma_x = 1.
Vae identity_vae() {
    Vae vae;
    vae.latent_dim = 2;
    const double raw_for_unit_sigma = std::log(std::expm1(1.0 - kSigmaFloor));
    vae.encoder = Network({DenseLayer{
        Tensor::matrix(4, 2, {1, 0, 0, 1, 0, 0, 0, 0}),
        Tensor::vector({0, 0, -200, -200}),
        Activation::Identity}});
    vae.decoder = Network({DenseLayer{
        Tensor::matrix(4, 2, {1, 0, 0, 1, 0, 0, 0, 0}),
        Tensor::vector({0, 0, raw_for_unit_sigma, raw_for_unit_sigma}),
        Activation::Identity}});
    vae.validate();
    return vae;
}

struct BlobWorld {
    SynthBlobs blobs;
    Vae vae;
    TrainReport report;
    std::vector<double> valid_scores;
    std::vector<double> invalid_scores;
};

const BlobWorld& blob_world() {
    static const BlobWorld world = [] {
        BlobWorld w;
        w.blobs = synth_blobs(2, 8, 150, 8.0, 100);
        TrainConfig cfg;
        cfg.learning_rate = 1e-3;
        cfg.batch_size = 32;
        cfg.epochs = 60;
        cfg.rng_seed = 100;
        VaeArch arch;
        arch.encoder_hidden = {16};
        arch.latent_dim = 4;
        w.vae = train_vae(w.blobs.valid, arch, cfg, &w.report);
        ReconProbConfig rc;
        rc.num_samples = 10;
        rc.rng_seed = 500;
        w.valid_scores = score_dataset(w.vae, w.blobs.valid.inputs, rc);
        w.invalid_scores = score_dataset(w.vae, w.blobs.invalid.inputs, rc);
        return w;
    }();
    return world;
}

// Independent sweep used as the calibration oracle.
double brute_force_best_f(const std::vector<double>& valid, const std::vector<double>& invalid,
                          double* best_alpha = nullptr) {
    std::vector<double> candidates = valid;
    candidates.insert(candidates.end(), invalid.begin(), invalid.end());
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    double best = -1, alpha = 0;
    for (double a : candidates) {
        int tp = 0, fp = 0, fn = 0;
        for (double s : invalid) (s < a ? tp : fn)++;
        for (double s : valid) fp += s < a;
        const double p = tp + fp ? double(tp) / (tp + fp) : 0;
        const double r = tp + fn ? double(tp) / (tp + fn) : 0;
        const double f = p + r > 0 ? 2 * p * r / (p + r) : 0;
        if (f > best) {
            best = f;
            alpha = a;
        }
    }
    if (best_alpha) *best_alpha = alpha;
    return best;
}

}  // namespace

TEST_CASE("kl term closed forms") {
    Graph g;
    // mu = 0, sigma = 1 (logvar = 0): prior equals posterior
    const NodeId zero = gaussian_kl_node(g, g.leaf(Tensor::scalar(0)), g.leaf(Tensor::scalar(0)));
    CHECK(g.forward(zero) == doctest::Approx(0.0));
    // mu = 1, sigma = 1, one latent dim: 0.5*(mu^2 + sigma^2 - 1 - ln sigma^2)
    const NodeId half = gaussian_kl_node(g, g.leaf(Tensor::scalar(1)), g.leaf(Tensor::scalar(0)));
    CHECK(g.forward(half) == doctest::Approx(0.5));
}

TEST_CASE("reconstruction probability of the identity fixture is the unit-gaussian density") {
    const Vae vae = identity_vae();
    ReconProbConfig cfg;
    cfg.num_samples = 4;
    cfg.rng_seed = 9;
    const double score = reconstruction_probability(vae, Tensor::vector({0.3, 0.8}), cfg);
    CHECK(score == doctest::Approx(-std::log(2.0 * M_PI)).epsilon(1e-9));
    CHECK(score == doctest::Approx(-1.83788).epsilon(1e-5));
}

TEST_CASE("reconstruction probability is deterministic under a fixed seed") {
    const Vae vae = identity_vae();
    ReconProbConfig cfg;
    cfg.num_samples = 1;
    cfg.rng_seed = 77;
    const Tensor x = Tensor::vector({0.2, 0.4});
    CHECK(reconstruction_probability(vae, x, cfg) == reconstruction_probability(vae, x, cfg));
    CHECK_THROWS_AS(reconstruction_probability(vae, Tensor::vector({1, 2, 3}), cfg), ShapeError);
}

TEST_CASE("vae training loss decreases from first to last epoch") {
    const BlobWorld& w = blob_world();
    REQUIRE(w.report.epoch_losses.size() == 60);
    CHECK(w.report.epoch_losses.back() < w.report.epoch_losses.front());
}

TEST_CASE("vae separates the blob distributions") {
    const BlobWorld& w = blob_world();
    const double mean_valid =
        std::accumulate(w.valid_scores.begin(), w.valid_scores.end(), 0.0) / w.valid_scores.size();
    const double mean_invalid =
        std::accumulate(w.invalid_scores.begin(), w.invalid_scores.end(), 0.0) /
        w.invalid_scores.size();
    CHECK(mean_valid - mean_invalid >= 3.0);  // separation in nats

    const ValidityThreshold t =
        calibrate_threshold(w.valid_scores, w.invalid_scores, "blobs-valid", "blobs-invalid");
    CHECK(t.f_measure >= 0.95);
}

TEST_CASE("calibration picks the F-optimal threshold on the worked example") {
    const std::vector<double> valid = {10, 11, 12};
    const std::vector<double> invalid = {1, 2, 3};
    const ValidityThreshold t = calibrate_threshold(valid, invalid);
    CHECK(t.alpha == 10.0);
    CHECK(t.f_measure == 1.0);
    CHECK(t.precision == 1.0);
    CHECK(t.recall == 1.0);
    double alpha = 0;
    CHECK(brute_force_best_f(valid, invalid, &alpha) == 1.0);
    CHECK(alpha == 10.0);
}

TEST_CASE("identical score lists cannot be calibrated") {
    CHECK_THROWS_AS(calibrate_threshold({1.0}, {1.0}), DegenerateCalibration);
    CHECK_THROWS_AS(calibrate_threshold({2.0, 2.0}, {2.0}), DegenerateCalibration);
    CHECK_THROWS_AS(calibrate_threshold({}, {1.0}), ContractViolation);
}

TEST_CASE("calibration matches an independent sweep on random score lists") {
    Rng rng(404);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<double> valid, invalid;
        const std::size_t nv = 2 + rng.below(20), ni = 2 + rng.below(20);
        for (std::size_t i = 0; i < nv; ++i) valid.push_back(std::round(rng.uniform(-5, 5)));
        for (std::size_t i = 0; i < ni; ++i) invalid.push_back(std::round(rng.uniform(-8, 2)));
        std::set<double> distinct(valid.begin(), valid.end());
        distinct.insert(invalid.begin(), invalid.end());
        if (distinct.size() < 2) continue;
        const ValidityThreshold t = calibrate_threshold(valid, invalid);
        double alpha = 0;
        const double best = brute_force_best_f(valid, invalid, &alpha);
        CHECK(t.f_measure == doctest::Approx(best).epsilon(1e-15));
        CHECK(t.alpha == alpha);  // tie-break agrees: smallest alpha
        // confusion-matrix identities
        CHECK(t.f_measure ==
              doctest::Approx(2 * t.precision * t.recall / (t.precision + t.recall)).epsilon(1e-12));
    }
}

TEST_CASE("classification is strict at the threshold") {
    const Vae vae = identity_vae();
    ReconProbConfig cfg;
    cfg.num_samples = 2;
    cfg.rng_seed = 5;
    const Tensor x = Tensor::vector({0.5, 0.5});
    const double score = reconstruction_probability(vae, x, cfg);

    ValidityThreshold at;
    at.alpha = score;  // score == alpha -> Valid
    CHECK(classify(vae, at, x, cfg) == Validity::Valid);

    ValidityThreshold above;
    above.alpha = score + 1e-9;  // score = alpha - 1e-9 -> Invalid
    CHECK(classify(vae, above, x, cfg) == Validity::Invalid);
}

TEST_CASE("classification is monotone in the score") {
    const BlobWorld& w = blob_world();
    ValidityThreshold t = calibrate_threshold(w.valid_scores, w.invalid_scores);
    ReconProbConfig rc;
    rc.num_samples = 10;
    rc.rng_seed = 123;
    double lowest_valid = INFINITY, highest_invalid = -INFINITY;
    for (std::size_t i = 0; i < 40; ++i) {
        const Tensor& x = w.blobs.valid.inputs[i];
        const double s = reconstruction_probability(w.vae, x, rc);
        if (classify(w.vae, t, x, rc) == Validity::Valid)
            lowest_valid = std::min(lowest_valid, s);
        else
            highest_invalid = std::max(highest_invalid, s);
    }
    if (std::isfinite(lowest_valid) && std::isfinite(highest_invalid))
        CHECK(highest_invalid < lowest_valid);
}

TEST_CASE("stored precision and recall match a recount on the calibration sets") {
    const BlobWorld& w = blob_world();
    const ValidityThreshold t = calibrate_threshold(w.valid_scores, w.invalid_scores);
    double tp = 0, fp = 0, fn = 0;
    for (double s : w.invalid_scores) (s < t.alpha ? tp : fn)++;
    for (double s : w.valid_scores) fp += s < t.alpha;
    CHECK(t.precision == doctest::Approx(tp / (tp + fp)).epsilon(1e-12));
    CHECK(t.recall == doctest::Approx(tp / (tp + fn)).epsilon(1e-12));
}

TEST_CASE("vae and threshold files round-trip") {
    const Vae vae = identity_vae();
    const std::string bytes = save_vae(vae);
    const Vae back = load_vae(bytes);
    CHECK(save_vae(back) == bytes);

    ValidityThreshold t;
    t.alpha = -123.456;
    t.f_measure = 0.97;
    t.precision = 0.96;
    t.recall = 0.98;
    t.valid_set = "digits";
    t.invalid_set = "patches";
    const ValidityThreshold t2 = threshold_from_json(threshold_to_json(t));
    CHECK(t2.alpha == t.alpha);
    CHECK(t2.f_measure == t.f_measure);
    CHECK(t2.valid_set == t.valid_set);

    CHECK_THROWS_AS(load_vae("{}"), ParseError);
    CHECK_THROWS_AS(threshold_from_json(R"({"alpha": 1})"), ParseError);
}

TEST_CASE("vae training diverges loudly") {
    SynthBlobs blobs = synth_blobs(2, 4, 20, 6.0, 3);
    TrainConfig cfg;
    cfg.learning_rate = 1e308;
    cfg.optimizer = Optimizer::Sgd;
    cfg.epochs = 4;
    VaeArch arch;
    arch.encoder_hidden = {8};
    arch.latent_dim = 2;
    CHECK_THROWS_AS(train_vae(blobs.valid, arch, cfg), TrainingFailure);
}
