#include "dat/vae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "dat/errors.hpp"
#include "dat/rng.hpp"

namespace dat {

using json = nlohmann::ordered_json;

void Vae::validate() const {
    encoder.validate();
    decoder.validate();
    if (latent_dim == 0) throw ContractViolation("latent_dim must be positive");
    if (encoder.output_dim() != 2 * latent_dim)
        throw ShapeError("encoder output width " + std::to_string(encoder.output_dim()) +
                         " must be 2*latent_dim = " + std::to_string(2 * latent_dim));
    if (decoder.input_dim() != latent_dim)
        throw ShapeError("decoder input width " + std::to_string(decoder.input_dim()) +
                         " must equal latent_dim = " + std::to_string(latent_dim));
    if (decoder.output_dim() != 2 * encoder.input_dim())
        throw ShapeError("decoder output width " + std::to_string(decoder.output_dim()) +
                         " must be twice the input width " + std::to_string(encoder.input_dim()));
}

void ReconProbConfig::validate() const {
    if (num_samples < 1) throw ContractViolation("num_samples must be at least 1");
}

namespace {

double stable_softplus(double a) {
    if (a > 30.0) return a;
    if (a < -30.0) return std::exp(a);
    return std::log1p(std::exp(a));
}

constexpr double kHalfLog2Pi = 0.91893853320467274178;

std::vector<LayerSpec> encoder_arch(const VaeArch& arch) {
    std::vector<LayerSpec> spec;
    for (std::size_t w : arch.encoder_hidden) spec.push_back({w, Activation::Relu});
    spec.push_back({2 * arch.latent_dim, Activation::Identity});
    return spec;
}

std::vector<LayerSpec> decoder_arch(const VaeArch& arch, std::size_t input_dim) {
    std::vector<LayerSpec> spec;
    for (auto it = arch.encoder_hidden.rbegin(); it != arch.encoder_hidden.rend(); ++it)
        spec.push_back({*it, Activation::Relu});
    spec.push_back({2 * input_dim, Activation::Identity});
    return spec;
}

}  // namespace

Vae train_vae(const Dataset& train, const VaeArch& arch, const TrainConfig& cfg, TrainReport* report) {
    cfg.validate();
    if (train.size() == 0) throw ContractViolation("training set is empty");
    if (arch.latent_dim == 0) throw ContractViolation("latent_dim must be positive");
    for (const Tensor& x : train.inputs) {
        for (double v : x.data()) {
            if (v < 0.0 || v > 1.0) throw ContractViolation("vae inputs must be normalized to [0,1]");
        }
    }

    const std::size_t input_dim = train.inputs.front().size();
    const std::size_t latent = arch.latent_dim;
    Rng rng(cfg.rng_seed);
    Vae vae;
    vae.latent_dim = latent;
    vae.encoder = init_network(input_dim, encoder_arch(arch), rng);
    vae.decoder = init_network(latent, decoder_arch(arch, input_dim), rng);

    std::vector<Tensor*> params;
    for (DenseLayer& l : vae.encoder.layers()) {
        params.push_back(&l.weights);
        params.push_back(&l.bias);
    }
    for (DenseLayer& l : vae.decoder.layers()) {
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

            Tensor xbatch = Tensor::zeros({input_dim, count});
            for (std::size_t b = 0; b < count; ++b) {
                const Tensor& src = train.inputs[order[first + b]];
                for (std::size_t i = 0; i < input_dim; ++i) xbatch.data()[i * count + b] = src[i];
            }
            Tensor eps = Tensor::zeros({latent, count});
            for (double& v : eps.data()) v = rng.normal();

            Graph g;
            const NodeId x = g.leaf(std::move(xbatch));
            ForwardNodes enc = network_forward(g, vae.encoder, x);
            const NodeId mu = g.slice_rows(enc.output, 0, latent);
            const NodeId logvar = g.slice_rows(enc.output, latent, latent);
            const NodeId kl = g.scale(gaussian_kl_node(g, mu, logvar), 1.0 / double(count));

            const NodeId sigma_z = g.exp(g.scale(logvar, 0.5));
            const NodeId z = g.add(mu, g.mul(sigma_z, g.leaf(std::move(eps))));

            ForwardNodes dec = network_forward(g, vae.decoder, z);
            const NodeId mu_x = g.slice_rows(dec.output, 0, input_dim);
            const NodeId raw = g.slice_rows(dec.output, input_dim, input_dim);
            const NodeId sigma_x =
                g.add(g.softplus(raw), g.leaf(Tensor::full({input_dim, count}, kSigmaFloor)));

            const NodeId recon = g.gaussian_log_density(x, mu_x, sigma_x);
            const NodeId loss = g.add(kl, g.scale(recon, -1.0 / double(count)));

            const double batch_loss = g.forward(loss);
            if (!std::isfinite(batch_loss))
                throw TrainingFailure("vae training diverged (non-finite loss) at epoch " +
                                          std::to_string(epoch),
                                      epoch);
            epoch_loss += batch_loss * double(count);

            const std::vector<Tensor> adj = g.backward_all(loss);
            std::vector<const Tensor*> grads;
            grads.reserve(params.size());
            for (const auto& [w, b] : enc.params) {
                grads.push_back(&adj[w]);
                grads.push_back(&adj[b]);
            }
            for (const auto& [w, b] : dec.params) {
                grads.push_back(&adj[w]);
                grads.push_back(&adj[b]);
            }
            opt.step(params, grads);
        }
        if (report) report->epoch_losses.push_back(epoch_loss / double(order.size()));
    }
    return vae;
}

namespace {

struct GaussianParams {
    std::vector<double> mean;
    std::vector<double> sigma;
};

GaussianParams decode_params(const Vae& vae, const Tensor& z) {
    const Tensor out = network_apply(vae.decoder, z);
    const std::size_t d = out.size() / 2;
    GaussianParams p;
    p.mean.assign(out.data().begin(), out.data().begin() + d);
    p.sigma.resize(d);
    for (std::size_t i = 0; i < d; ++i) p.sigma[i] = kSigmaFloor + stable_softplus(out[d + i]);
    return p;
}

}  // namespace

double reconstruction_probability(const Vae& vae, const Tensor& x, const ReconProbConfig& cfg) {
    cfg.validate();
    if (x.size() != vae.input_dim())
        throw ShapeError("input of shape " + x.shape_string() + " does not match vae input width " +
                         std::to_string(vae.input_dim()));

    const Tensor enc = network_apply(vae.encoder, x);
    const std::size_t latent = vae.latent_dim;
    std::vector<double> sigma_z(latent);
    for (std::size_t i = 0; i < latent; ++i) sigma_z[i] = std::exp(0.5 * enc[latent + i]);

    Rng rng(cfg.rng_seed);
    Tensor z = Tensor::zeros({latent});
    double total = 0.0;
    for (std::size_t s = 0; s < cfg.num_samples; ++s) {
        for (std::size_t i = 0; i < latent; ++i) z[i] = enc[i] + sigma_z[i] * rng.normal();
        const GaussianParams p = decode_params(vae, z);
        double ll = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double d = x[i] - p.mean[i];
            ll += -kHalfLog2Pi - std::log(p.sigma[i]) - d * d / (2.0 * p.sigma[i] * p.sigma[i]);
        }
        total += ll;
    }
    const double score = total / double(cfg.num_samples);
    if (!std::isfinite(score)) throw NumericError("reconstruction probability is non-finite");
    return score;
}

std::vector<double> score_dataset(const Vae& vae, const std::vector<Tensor>& inputs,
                                  const ReconProbConfig& cfg) {
    std::vector<double> scores(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        ReconProbConfig per = cfg;
        per.rng_seed = mix_seed(cfg.rng_seed, i);
        scores[i] = reconstruction_probability(vae, inputs[i], per);
    }
    return scores;
}

NodeId gaussian_kl_node(Graph& g, NodeId mu, NodeId logvar) {
    require_same_shape(g.value(mu), g.value(logvar), "gaussian_kl");
    NodeId kl = g.add(g.square(mu), g.exp(logvar));
    kl = g.add(kl, g.scale(logvar, -1.0));
    kl = g.add(kl, g.leaf(Tensor::full(g.value(mu).shape(), -1.0)));
    return g.scale(g.reduce_sum(kl), 0.5);
}

NodeId vae_log_density_node(Graph& g, const Vae& vae, NodeId x, const std::vector<double>& eps) {
    if (eps.size() != vae.latent_dim)
        throw ContractViolation("eps must have latent_dim entries");
    const std::size_t latent = vae.latent_dim;
    const std::size_t input_dim = vae.input_dim();

    ForwardNodes enc = network_forward(g, vae.encoder, x);
    const NodeId mu = g.slice_rows(enc.output, 0, latent);
    const NodeId logvar = g.slice_rows(enc.output, latent, latent);
    const NodeId sigma_z = g.exp(g.scale(logvar, 0.5));
    const NodeId z = g.add(mu, g.mul(sigma_z, g.leaf(Tensor::vector(std::vector<double>(eps)))));

    ForwardNodes dec = network_forward(g, vae.decoder, z);
    const NodeId mu_x = g.slice_rows(dec.output, 0, input_dim);
    const NodeId raw = g.slice_rows(dec.output, input_dim, input_dim);
    const NodeId sigma_x = g.add(g.softplus(raw), g.leaf(Tensor::full({input_dim}, kSigmaFloor)));
    return g.gaussian_log_density(x, mu_x, sigma_x);
}

ValidityThreshold calibrate_threshold(const std::vector<double>& valid_scores,
                                      const std::vector<double>& invalid_scores,
                                      std::string valid_name, std::string invalid_name) {
    if (valid_scores.empty() || invalid_scores.empty())
        throw ContractViolation("calibration requires non-empty score lists");

    std::set<double> candidates(valid_scores.begin(), valid_scores.end());
    candidates.insert(invalid_scores.begin(), invalid_scores.end());
    if (candidates.size() < 2)
        throw DegenerateCalibration("all calibration scores are identical; threshold is meaningless");

    std::vector<double> v_sorted = valid_scores;
    std::vector<double> i_sorted = invalid_scores;
    std::sort(v_sorted.begin(), v_sorted.end());
    std::sort(i_sorted.begin(), i_sorted.end());

    ValidityThreshold best;
    best.valid_set = std::move(valid_name);
    best.invalid_set = std::move(invalid_name);
    double best_f = -1.0;
    for (double alpha : candidates) {
        // invalid <=> score < alpha; positive class is invalid
        const auto tp = static_cast<double>(
            std::lower_bound(i_sorted.begin(), i_sorted.end(), alpha) - i_sorted.begin());
        const auto fp = static_cast<double>(
            std::lower_bound(v_sorted.begin(), v_sorted.end(), alpha) - v_sorted.begin());
        const double fn = double(i_sorted.size()) - tp;
        const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
        const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
        const double f = precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
        if (f > best_f) {  // strict: ties keep the smallest alpha
            best_f = f;
            best.alpha = alpha;
            best.f_measure = f;
            best.precision = precision;
            best.recall = recall;
        }
    }
    return best;
}

Validity classify(const Vae& vae, const ValidityThreshold& threshold, const Tensor& x,
                  const ReconProbConfig& cfg) {
    return reconstruction_probability(vae, x, cfg) < threshold.alpha ? Validity::Invalid
                                                                     : Validity::Valid;
}

std::string save_vae(const Vae& vae) {
    json doc;
    doc["encoder"] = json::parse(save_model(vae.encoder));
    doc["decoder"] = json::parse(save_model(vae.decoder));
    doc["latent_dim"] = vae.latent_dim;
    return doc.dump(2) + "\n";
}

Vae load_vae(const std::string& bytes) {
    json doc;
    try {
        doc = json::parse(bytes);
    } catch (const json::parse_error& e) {
        throw ParseError(ParseError::Kind::BadDocument, std::string("vae JSON: ") + e.what());
    }
    for (const char* key : {"encoder", "decoder", "latent_dim"}) {
        if (!doc.contains(key))
            throw ParseError(ParseError::Kind::BadDocument, std::string("missing field $.") + key,
                             std::string("$.") + key);
    }
    Vae vae;
    vae.encoder = load_model(doc["encoder"].dump());
    vae.decoder = load_model(doc["decoder"].dump());
    vae.latent_dim = doc["latent_dim"].get<std::size_t>();
    vae.validate();
    return vae;
}

std::string threshold_to_json(const ValidityThreshold& t) {
    json doc;
    doc["alpha"] = t.alpha;
    doc["f_measure"] = t.f_measure;
    doc["precision"] = t.precision;
    doc["recall"] = t.recall;
    doc["valid_set"] = t.valid_set;
    doc["invalid_set"] = t.invalid_set;
    return doc.dump(2) + "\n";
}

ValidityThreshold threshold_from_json(const std::string& bytes) {
    json doc;
    try {
        doc = json::parse(bytes);
    } catch (const json::parse_error& e) {
        throw ParseError(ParseError::Kind::BadDocument, std::string("threshold JSON: ") + e.what());
    }
    ValidityThreshold t;
    for (const char* key : {"alpha", "f_measure", "precision", "recall"}) {
        if (!doc.contains(key) || !doc[key].is_number())
            throw ParseError(ParseError::Kind::BadDocument, std::string("missing number $.") + key,
                             std::string("$.") + key);
    }
    t.alpha = doc["alpha"].get<double>();
    t.f_measure = doc["f_measure"].get<double>();
    t.precision = doc["precision"].get<double>();
    t.recall = doc["recall"].get<double>();
    t.valid_set = doc.value("valid_set", "");
    t.invalid_set = doc.value("invalid_set", "");
    return t;
}

}  // namespace dat
