#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dat/coverage.hpp"
#include "dat/graph.hpp"
#include "dat/network.hpp"
#include "dat/vae.hpp"

namespace dat {

enum class ConstraintKind { None, Lightening, Occlusion, Blackout };

const char* constraint_name(ConstraintKind k);
ConstraintKind constraint_from_name(const std::string& name);

struct Constraint {
    ConstraintKind kind = ConstraintKind::None;
    std::size_t rect_w = 0, rect_h = 0;  // rectangle extent for occlusion/blackout
};

struct GenerationConfig {
    double step_size = 0.05;
    std::size_t max_iterations = 30;
    double lambda = 1.0;    // density weight in the joint objective
    double lambda1 = 1.0;   // weight on the target model's consensus probability
    double lambda2 = 0.1;   // weight on the coverage neuron term
    Constraint constraint;
    double nc_threshold = 0.25;
    std::uint64_t rng_seed = 0;
    std::vector<std::size_t> image_shape;  // rows, cols; required for rectangle constraints

    void validate() const;
};

struct TestRecord {
    Tensor input;
    std::size_t seed_index = 0;
    std::size_t iterations_used = 0;
    double recon_score = 0.0;
    std::vector<int> predictions;  // one label per model
    bool valid = false;
};

struct TestSuite {
    std::vector<TestRecord> records;
    CoverageState coverage;  // NC bits of the target model, valid records only
    GenerationConfig config;
    std::size_t seed_count = 0;

    std::size_t valid_count() const;
    std::size_t invalid_count() const;
};

// True iff the models do not all predict the same label.
bool counter_example(const std::vector<Network>& models, const Tensor& x);

// Differential-testing objective on the current consensus label c:
//   sum_{i != d} prob_i(x)[c] - lambda1 * prob_d(x)[c]
//   + lambda2 * activation(neuron of model d)
NodeId obj1_differential(Graph& g, const std::vector<Network>& models, NodeId x,
                         std::size_t target_index, NeuronId neuron, const GenerationConfig& cfg);

// Domain constraint applied to an ascent gradient. For rectangle kinds the
// origin is the top-left corner chosen per seed.
Tensor constrain(const Tensor& gradient, const Constraint& constraint,
                 const std::vector<std::size_t>& image_shape,
                 std::pair<std::size_t, std::size_t> rect_origin = {0, 0});

// Gradient ascent on obj1 alone; a record is emitted on the first model
// disagreement per seed, with validity assessed afterwards by the VAE gate.
TestSuite generate_baseline(const std::vector<Tensor>& seeds, const std::vector<Network>& models,
                            const Vae& vae, const ValidityThreshold& threshold,
                            const ReconProbConfig& scoring, const GenerationConfig& cfg);

// Gradient ascent on obj1 + lambda * reconstruction log-density; a record is
// emitted only when the models disagree AND the score clears the threshold,
// so every record is valid.
TestSuite generate_vae_guided(const std::vector<Tensor>& seeds, const std::vector<Network>& models,
                              const Vae& vae, const ValidityThreshold& threshold,
                              const ReconProbConfig& scoring, const GenerationConfig& cfg);

// Picks the candidate density weight that maximizes the valid-test count on
// a tuning seed set; ties prefer the smaller weight.
double sweep_lambda(const std::vector<double>& candidates, const std::vector<Tensor>& tuning_seeds,
                    const std::vector<Network>& models, const Vae& vae,
                    const ValidityThreshold& threshold, const ReconProbConfig& scoring,
                    const GenerationConfig& base);

// Suite file: one JSON record per line.
std::string suite_to_jsonl(const TestSuite& suite);
std::vector<TestRecord> suite_records_from_jsonl(const std::string& bytes);

// Summary file: {"seeds", "valid", "invalid", "coverage"}.
std::string suite_summary_json(const TestSuite& suite);

}  // namespace dat
