#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dat/dataset.hpp"
#include "dat/graph.hpp"
#include "dat/network.hpp"
#include "dat/train.hpp"

namespace dat {

// Decoder standard deviations are floored via sigma = kSigmaFloor + softplus(raw).
inline constexpr double kSigmaFloor = 1e-3;

// Probabilistic encoder/decoder pair. The encoder emits (mu_z, logvar_z)
// stacked into one 2*latent_dim output; the decoder emits (mu_x, raw_sigma_x)
// stacked into one 2*input_dim output.
struct Vae {
    Network encoder;
    Network decoder;
    std::size_t latent_dim = 0;

    std::size_t input_dim() const { return encoder.input_dim(); }
    void validate() const;
};

struct VaeArch {
    std::vector<std::size_t> encoder_hidden;  // decoder mirrors these in reverse
    std::size_t latent_dim = 16;
};

struct ReconProbConfig {
    std::size_t num_samples = 10;  // latent draws averaged per score
    std::uint64_t rng_seed = 0;

    void validate() const;
};

// Minimizes KL(q(z|x) || N(0,I)) - E[log p(x|z)] with reparameterized
// sampling. Epoch-mean losses are appended to the report.
Vae train_vae(const Dataset& train, const VaeArch& arch, const TrainConfig& cfg,
              TrainReport* report = nullptr);

// Mean over L latent samples of log N(x; mu_x(z), diag sigma_x(z)^2), a
// log-density. Pure function of (vae, x, cfg).
double reconstruction_probability(const Vae& vae, const Tensor& x, const ReconProbConfig& cfg);

// Scores a batch with an independent substream per input index.
std::vector<double> score_dataset(const Vae& vae, const std::vector<Tensor>& inputs,
                                  const ReconProbConfig& cfg);

// Records one latent sample's reconstruction log-density of x as a graph
// node: encode x, z = mu + sigma*eps, decode, score. eps has latent_dim
// entries. Gradients flow to x through both the encoder and the density.
NodeId vae_log_density_node(Graph& g, const Vae& vae, NodeId x, const std::vector<double>& eps);

// KL(N(mu, exp(logvar)) || N(0, I)) summed over all elements:
// 0.5 * sum(mu^2 + exp(logvar) - logvar - 1).
NodeId gaussian_kl_node(Graph& g, NodeId mu, NodeId logvar);

struct ValidityThreshold {
    double alpha = 0.0;  // log-density units
    double f_measure = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    std::string valid_set;
    std::string invalid_set;
};

// Exhaustive F-measure sweep over the distinct union of both score lists.
// Positive class is "invalid", classified by score < alpha. Ties prefer the
// smaller alpha. Throws DegenerateCalibration when all scores are identical.
ValidityThreshold calibrate_threshold(const std::vector<double>& valid_scores,
                                      const std::vector<double>& invalid_scores,
                                      std::string valid_name = {}, std::string invalid_name = {});

enum class Validity { Valid, Invalid };

// Invalid iff reconstruction_probability(vae, x, cfg) < threshold.alpha.
Validity classify(const Vae& vae, const ValidityThreshold& threshold, const Tensor& x,
                  const ReconProbConfig& cfg);

std::string save_vae(const Vae& vae);
Vae load_vae(const std::string& bytes);

std::string threshold_to_json(const ValidityThreshold& t);
ValidityThreshold threshold_from_json(const std::string& bytes);

}  // namespace dat
