#pragma once

#include <string>
#include <vector>

#include "dat/network.hpp"
#include "dat/tensor.hpp"

namespace dat {

// Coverage neurons are the post-activation outputs of every dense layer,
// except that a final softmax layer contributes its pre-activation logits.
struct NeuronId {
    std::size_t layer = 0;
    std::size_t unit = 0;
};

struct CoverageConfig {
    double nc_threshold = 0.25;  // applied to per-layer min-max scaled activations
    std::size_t k = 100;         // KMNC bins per neuron

    void validate() const;
};

// Per-neuron [low, high] activation bounds over a training set.
struct ActivationProfile {
    std::vector<std::vector<double>> low;   // [layer][unit]
    std::vector<std::vector<double>> high;

    std::size_t neuron_count() const;
    std::vector<std::size_t> layer_widths() const;
};

std::vector<std::size_t> coverage_layer_widths(const Network& net);

ActivationProfile profile(const Network& net, const std::vector<Tensor>& training_inputs);

// Monotone bitsets over neurons (NC, NBC corners) and neuron x bin (KMNC).
// States carry their provenance (layer widths, t, k); merge requires it to
// match.
struct CoverageState {
    std::vector<std::size_t> layer_widths;
    double t = 0.25;
    std::size_t k = 100;
    std::vector<bool> nc;
    std::vector<bool> kmnc;      // neuron * k + bin
    std::vector<bool> nbc_low;
    std::vector<bool> nbc_high;
    std::size_t input_count = 0;

    CoverageState() = default;
    CoverageState(std::vector<std::size_t> widths, const CoverageConfig& cfg);

    std::size_t neuron_count() const;
    std::size_t neuron_index(NeuronId id) const;  // flat (layer, unit) order

    // '0'/'1' per neuron in (layer, unit) order.
    std::string nc_vector_string() const;
    // Single pseudo-layer state whose NC bits are given by the string.
    static CoverageState from_nc_vector(const std::string& bits, const CoverageConfig& cfg = {});
};

CoverageState make_coverage_state(const Network& net, const CoverageConfig& cfg);

// Sets the NC bit of every neuron whose min-max scaled activation exceeds t.
// A layer that is constant for this input covers none of its neurons.
// Counts the input.
void update_nc(CoverageState& state, const Network& net, const Tensor& x, const CoverageConfig& cfg);

// KMNC bin hits within [low, high] plus NBC corner hits outside (strict).
// Does not count the input (pair it with update_nc).
void update_multigranularity(CoverageState& state, const ActivationProfile& prof, const Network& net,
                             const Tensor& x, const CoverageConfig& cfg);

struct CoverageReport {
    double nc = 0, kmnc = 0, nbc = 0, snac = 0;
    std::size_t inputs = 0, neurons = 0, k = 0;
    double t = 0;
};

CoverageReport ratios(const CoverageState& state);

// Bitwise union; input counts add. Throws on provenance mismatch.
CoverageState merge(const CoverageState& a, const CoverageState& b);

std::string coverage_report_to_json(const CoverageReport& report);

std::string profile_to_json(const ActivationProfile& prof);
ActivationProfile profile_from_json(const std::string& bytes);

}  // namespace dat
