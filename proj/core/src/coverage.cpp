#include "dat/coverage.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "dat/errors.hpp"

namespace dat {

using json = nlohmann::ordered_json;

void CoverageConfig::validate() const {
    if (!(nc_threshold >= 0.0 && nc_threshold < 1.0))
        throw ContractViolation("nc threshold must lie in [0,1)");
    if (k < 1) throw ContractViolation("k must be at least 1");
}

std::size_t ActivationProfile::neuron_count() const {
    std::size_t n = 0;
    for (const auto& l : low) n += l.size();
    return n;
}

std::vector<std::size_t> ActivationProfile::layer_widths() const {
    std::vector<std::size_t> w;
    w.reserve(low.size());
    for (const auto& l : low) w.push_back(l.size());
    return w;
}

std::vector<std::size_t> coverage_layer_widths(const Network& net) {
    std::vector<std::size_t> w;
    w.reserve(net.layers().size());
    for (const DenseLayer& l : net.layers()) w.push_back(l.out_dim());
    return w;
}

ActivationProfile profile(const Network& net, const std::vector<Tensor>& training_inputs) {
    if (training_inputs.empty()) throw ContractViolation("profile: training set is empty");
    ActivationProfile prof;
    const auto widths = coverage_layer_widths(net);
    for (std::size_t w : widths) {
        prof.low.emplace_back(w, INFINITY);
        prof.high.emplace_back(w, -INFINITY);
    }
    for (const Tensor& x : training_inputs) {
        const auto trace = activation_trace(net, x);
        for (std::size_t l = 0; l < trace.size(); ++l) {
            for (std::size_t u = 0; u < trace[l].size(); ++u) {
                prof.low[l][u] = std::min(prof.low[l][u], trace[l][u]);
                prof.high[l][u] = std::max(prof.high[l][u], trace[l][u]);
            }
        }
    }
    return prof;
}

CoverageState::CoverageState(std::vector<std::size_t> widths, const CoverageConfig& cfg)
    : layer_widths(std::move(widths)), t(cfg.nc_threshold), k(cfg.k) {
    cfg.validate();
    const std::size_t n = neuron_count();
    nc.assign(n, false);
    kmnc.assign(n * k, false);
    nbc_low.assign(n, false);
    nbc_high.assign(n, false);
}

std::size_t CoverageState::neuron_count() const {
    return std::accumulate(layer_widths.begin(), layer_widths.end(), std::size_t{0});
}

std::size_t CoverageState::neuron_index(NeuronId id) const {
    if (id.layer >= layer_widths.size() || id.unit >= layer_widths[id.layer])
        throw ContractViolation("neuron id out of range");
    std::size_t base = 0;
    for (std::size_t l = 0; l < id.layer; ++l) base += layer_widths[l];
    return base + id.unit;
}

std::string CoverageState::nc_vector_string() const {
    std::string s;
    s.reserve(nc.size());
    for (bool b : nc) s.push_back(b ? '1' : '0');
    return s;
}

CoverageState CoverageState::from_nc_vector(const std::string& bits, const CoverageConfig& cfg) {
    CoverageState state({bits.size()}, cfg);
    for (std::size_t i = 0; i < bits.size(); ++i) {
        if (bits[i] == '1') {
            state.nc[i] = true;
        } else if (bits[i] != '0') {
            throw ParseError(ParseError::Kind::BadDocument, "coverage vector must be '0'/'1' characters");
        }
    }
    state.input_count = 0;
    return state;
}

CoverageState make_coverage_state(const Network& net, const CoverageConfig& cfg) {
    return CoverageState(coverage_layer_widths(net), cfg);
}

void update_nc(CoverageState& state, const Network& net, const Tensor& x, const CoverageConfig& cfg) {
    const auto trace = activation_trace(net, x);
    std::size_t base = 0;
    for (std::size_t l = 0; l < trace.size(); ++l) {
        const auto& layer = trace[l];
        const auto [mn, mx] = std::minmax_element(layer.begin(), layer.end());
        const double span = *mx - *mn;
        if (span > 0.0) {
            for (std::size_t u = 0; u < layer.size(); ++u) {
                if ((layer[u] - *mn) / span > cfg.nc_threshold) state.nc[base + u] = true;
            }
        }
        base += layer.size();
    }
    ++state.input_count;
}

void update_multigranularity(CoverageState& state, const ActivationProfile& prof, const Network& net,
                             const Tensor& x, const CoverageConfig& cfg) {
    if (prof.layer_widths() != coverage_layer_widths(net))
        throw ContractViolation("profile does not match network layer widths");
    const auto trace = activation_trace(net, x);
    const std::size_t k = cfg.k;
    std::size_t base = 0;
    for (std::size_t l = 0; l < trace.size(); ++l) {
        for (std::size_t u = 0; u < trace[l].size(); ++u) {
            const double a = trace[l][u];
            const double low = prof.low[l][u];
            const double high = prof.high[l][u];
            const std::size_t neuron = base + u;
            if (a > high) {
                state.nbc_high[neuron] = true;
            } else if (a < low) {
                state.nbc_low[neuron] = true;
            } else if (high > low) {
                const auto bin = static_cast<std::size_t>(double(k) * (a - low) / (high - low));
                state.kmnc[neuron * k + std::min(bin, k - 1)] = true;
            } else {
                state.kmnc[neuron * k] = true;  // degenerate profile: the single point is bin 0
            }
        }
        base += trace[l].size();
    }
}

namespace {

std::size_t popcount(const std::vector<bool>& bits) {
    return std::count(bits.begin(), bits.end(), true);
}

}  // namespace

CoverageReport ratios(const CoverageState& state) {
    const std::size_t n = state.neuron_count();
    if (n == 0) throw ContractViolation("ratios: state covers zero neurons");
    CoverageReport r;
    r.neurons = n;
    r.k = state.k;
    r.t = state.t;
    r.inputs = state.input_count;
    r.nc = double(popcount(state.nc)) / double(n);
    r.kmnc = double(popcount(state.kmnc)) / double(n * state.k);
    r.nbc = double(popcount(state.nbc_low) + popcount(state.nbc_high)) / double(2 * n);
    r.snac = double(popcount(state.nbc_high)) / double(n);
    return r;
}

CoverageState merge(const CoverageState& a, const CoverageState& b) {
    if (a.layer_widths != b.layer_widths || a.k != b.k || a.t != b.t)
        throw ContractViolation("merge: coverage states have different provenance");
    CoverageState out = a;
    for (std::size_t i = 0; i < out.nc.size(); ++i) out.nc[i] = out.nc[i] || b.nc[i];
    for (std::size_t i = 0; i < out.kmnc.size(); ++i) out.kmnc[i] = out.kmnc[i] || b.kmnc[i];
    for (std::size_t i = 0; i < out.nbc_low.size(); ++i) out.nbc_low[i] = out.nbc_low[i] || b.nbc_low[i];
    for (std::size_t i = 0; i < out.nbc_high.size(); ++i) out.nbc_high[i] = out.nbc_high[i] || b.nbc_high[i];
    out.input_count = a.input_count + b.input_count;
    return out;
}

std::string coverage_report_to_json(const CoverageReport& report) {
    json doc;
    doc["nc"] = report.nc;
    doc["kmnc"] = report.kmnc;
    doc["nbc"] = report.nbc;
    doc["snac"] = report.snac;
    doc["inputs"] = report.inputs;
    doc["neurons"] = report.neurons;
    doc["k"] = report.k;
    doc["t"] = report.t;
    return doc.dump(2) + "\n";
}

std::string profile_to_json(const ActivationProfile& prof) {
    json layers = json::array();
    for (std::size_t l = 0; l < prof.low.size(); ++l) {
        json jl;
        jl["low"] = prof.low[l];
        jl["high"] = prof.high[l];
        layers.push_back(std::move(jl));
    }
    json doc;
    doc["layers"] = std::move(layers);
    return doc.dump(2) + "\n";
}

ActivationProfile profile_from_json(const std::string& bytes) {
    json doc;
    try {
        doc = json::parse(bytes);
    } catch (const json::parse_error& e) {
        throw ParseError(ParseError::Kind::BadDocument, std::string("profile JSON: ") + e.what());
    }
    if (!doc.contains("layers") || !doc["layers"].is_array())
        throw ParseError(ParseError::Kind::BadDocument, "expected an array at $.layers", "$.layers");
    ActivationProfile prof;
    for (std::size_t l = 0; l < doc["layers"].size(); ++l) {
        const json& jl = doc["layers"].at(l);
        const std::string lp = "$.layers[" + std::to_string(l) + "]";
        if (!jl.contains("low") || !jl.contains("high") || !jl["low"].is_array() ||
            !jl["high"].is_array() || jl["low"].size() != jl["high"].size())
            throw ParseError(ParseError::Kind::BadDocument, "expected matching low/high arrays at " + lp, lp);
        prof.low.push_back(jl["low"].get<std::vector<double>>());
        prof.high.push_back(jl["high"].get<std::vector<double>>());
        for (std::size_t u = 0; u < prof.low.back().size(); ++u) {
            if (prof.low.back()[u] > prof.high.back()[u])
                throw ParseError(ParseError::Kind::BadDocument, "low exceeds high at " + lp, lp);
        }
    }
    return prof;
}

}  // namespace dat
