#include "dat/testgen.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dat/errors.hpp"
#include "dat/rng.hpp"

namespace dat {

using json = nlohmann::ordered_json;

const char* constraint_name(ConstraintKind k) {
    switch (k) {
        case ConstraintKind::None: return "none";
        case ConstraintKind::Lightening: return "lightening";
        case ConstraintKind::Occlusion: return "occlusion";
        case ConstraintKind::Blackout: return "blackout";
    }
    return "none";
}

ConstraintKind constraint_from_name(const std::string& name) {
    if (name == "none") return ConstraintKind::None;
    if (name == "lightening") return ConstraintKind::Lightening;
    if (name == "occlusion") return ConstraintKind::Occlusion;
    if (name == "blackout") return ConstraintKind::Blackout;
    throw ParseError(ParseError::Kind::BadDocument, "unknown constraint '" + name + "'");
}

void GenerationConfig::validate() const {
    // Step size zero is allowed so degenerate no-movement runs stay well defined.
    if (step_size < 0.0) throw ContractViolation("step size must be non-negative");
    if (max_iterations < 1) throw ContractViolation("max_iterations must be at least 1");
    if (lambda < 0.0) throw ContractViolation("lambda must be non-negative");
    if (constraint.kind == ConstraintKind::Occlusion || constraint.kind == ConstraintKind::Blackout) {
        if (constraint.rect_w == 0 || constraint.rect_h == 0)
            throw ContractViolation("rectangle constraints need a positive extent");
        if (image_shape.size() != 2)
            throw ContractViolation("rectangle constraints need a rows x cols image shape");
    }
}

std::size_t TestSuite::valid_count() const {
    return std::count_if(records.begin(), records.end(), [](const TestRecord& r) { return r.valid; });
}

std::size_t TestSuite::invalid_count() const { return records.size() - valid_count(); }

bool counter_example(const std::vector<Network>& models, const Tensor& x) {
    if (models.size() < 2) throw ContractViolation("differential testing needs at least 2 models");
    const int first = predict(models[0], x).label;
    for (std::size_t i = 1; i < models.size(); ++i) {
        if (predict(models[i], x).label != first) return true;
    }
    return false;
}

namespace {

// Majority label over the models' predictions; ties go to the earliest model
// whose label has the maximal count.
int consensus_label(const std::vector<Network>& models, const Tensor& x) {
    std::vector<int> labels;
    labels.reserve(models.size());
    std::map<int, int> counts;
    for (const Network& m : models) {
        labels.push_back(predict(m, x).label);
        ++counts[labels.back()];
    }
    int maxc = 0;
    for (const auto& [label, c] : counts) maxc = std::max(maxc, c);
    for (int label : labels) {
        if (counts[label] == maxc) return label;
    }
    return labels[0];
}

NodeId probability_node(Graph& g, const Network& net, const ForwardNodes& fw, std::size_t index) {
    const bool softmax_final = net.layers().back().activation == Activation::Softmax;
    const NodeId probs = softmax_final ? fw.output : g.softmax(fw.logits);
    return g.pick(probs, index);
}

}  // namespace

NodeId obj1_differential(Graph& g, const std::vector<Network>& models, NodeId x,
                         std::size_t target_index, NeuronId neuron, const GenerationConfig& cfg) {
    if (models.size() < 2) throw ContractViolation("obj1 needs at least 2 models");
    if (target_index >= models.size()) throw ContractViolation("target model index out of range");

    const int c = consensus_label(models, g.value(x));

    NodeId others = 0;
    bool have_others = false;
    NodeId target_prob = 0;
    NodeId neuron_act = 0;
    for (std::size_t i = 0; i < models.size(); ++i) {
        ForwardNodes fw = network_forward(g, models[i], x);
        const NodeId p = probability_node(g, models[i], fw, static_cast<std::size_t>(c));
        if (i == target_index) {
            target_prob = p;
            if (neuron.layer >= fw.coverage_layers.size())
                throw ContractViolation("neuron layer out of range");
            neuron_act = g.pick(fw.coverage_layers[neuron.layer], neuron.unit);
        } else {
            others = have_others ? g.add(others, p) : p;
            have_others = true;
        }
    }
    NodeId obj = g.add(others, g.scale(target_prob, -cfg.lambda1));
    obj = g.add(obj, g.scale(neuron_act, cfg.lambda2));
    return obj;
}

Tensor constrain(const Tensor& gradient, const Constraint& constraint,
                 const std::vector<std::size_t>& image_shape,
                 std::pair<std::size_t, std::size_t> rect_origin) {
    switch (constraint.kind) {
        case ConstraintKind::None:
            return gradient;
        case ConstraintKind::Lightening: {
            const double mean =
                std::accumulate(gradient.data().begin(), gradient.data().end(), 0.0) /
                double(gradient.size());
            return Tensor::full(gradient.shape(), mean);
        }
        case ConstraintKind::Occlusion:
        case ConstraintKind::Blackout: {
            if (image_shape.size() != 2)
                throw ContractViolation("rectangle constraints need a rows x cols image shape");
            const std::size_t rows = image_shape[0], cols = image_shape[1];
            if (rows * cols != gradient.size())
                throw ShapeError("gradient of shape " + gradient.shape_string() +
                                 " cannot be viewed as " + std::to_string(rows) + "x" +
                                 std::to_string(cols));
            if (constraint.rect_h > rows || constraint.rect_w > cols)
                throw ContractViolation("constraint rectangle exceeds the image");
            const auto [r0, c0] = rect_origin;
            if (r0 + constraint.rect_h > rows || c0 + constraint.rect_w > cols)
                throw ContractViolation("constraint rectangle origin out of bounds");
            Tensor out = Tensor::zeros(gradient.shape());
            for (std::size_t r = r0; r < r0 + constraint.rect_h; ++r) {
                for (std::size_t c = c0; c < c0 + constraint.rect_w; ++c) {
                    const double gv = gradient[r * cols + c];
                    out[r * cols + c] =
                        constraint.kind == ConstraintKind::Blackout ? std::min(gv, 0.0) : gv;
                }
            }
            return out;
        }
    }
    return gradient;
}

namespace {

Tensor clamp01(Tensor x) {
    for (double& v : x.data()) v = std::clamp(v, 0.0, 1.0);
    return x;
}

NeuronId pick_neuron(const CoverageState& cov, Rng& rng) {
    std::vector<std::size_t> uncovered;
    for (std::size_t i = 0; i < cov.nc.size(); ++i) {
        if (!cov.nc[i]) uncovered.push_back(i);
    }
    const std::size_t flat = uncovered.empty()
                                 ? rng.below(cov.nc.size())
                                 : uncovered[rng.below(uncovered.size())];
    std::size_t layer = 0, base = 0;
    while (flat - base >= cov.layer_widths[layer]) {
        base += cov.layer_widths[layer];
        ++layer;
    }
    return NeuronId{layer, flat - base};
}

std::vector<int> model_labels(const std::vector<Network>& models, const Tensor& x) {
    std::vector<int> labels;
    labels.reserve(models.size());
    for (const Network& m : models) labels.push_back(predict(m, x).label);
    return labels;
}

TestSuite run_generation(const std::vector<Tensor>& seeds, const std::vector<Network>& models,
                         const Vae& vae, const ValidityThreshold& threshold,
                         const ReconProbConfig& scoring, const GenerationConfig& cfg,
                         bool vae_guided) {
    cfg.validate();
    scoring.validate();
    if (models.size() < 2) throw ContractViolation("generation needs at least 2 models");
    const std::size_t target = 0;  // first-listed model is the one under test

    if (!cfg.image_shape.empty()) {
        const std::size_t pixels = cfg.image_shape[0] * cfg.image_shape[1];
        for (const Tensor& s : seeds) {
            if (s.size() != pixels)
                throw ShapeError("seed of shape " + s.shape_string() + " does not match image shape");
        }
    }

    CoverageConfig cov_cfg;
    cov_cfg.nc_threshold = cfg.nc_threshold;

    TestSuite suite;
    suite.config = cfg;
    suite.seed_count = seeds.size();
    suite.coverage = make_coverage_state(models[target], cov_cfg);

    const bool rect = cfg.constraint.kind == ConstraintKind::Occlusion ||
                      cfg.constraint.kind == ConstraintKind::Blackout;

    for (std::size_t si = 0; si < seeds.size(); ++si) {
        Rng rng(mix_seed(cfg.rng_seed, si));

        std::pair<std::size_t, std::size_t> origin{0, 0};
        if (rect) {
            origin.first = rng.below(cfg.image_shape[0] - cfg.constraint.rect_h + 1);
            origin.second = rng.below(cfg.image_shape[1] - cfg.constraint.rect_w + 1);
        }
        const NeuronId neuron = pick_neuron(suite.coverage, rng);

        Tensor x = seeds[si];
        bool accepted = false;

        auto try_accept = [&](std::size_t iterations) {
            if (!counter_example(models, x)) return false;
            const double score = reconstruction_probability(vae, x, scoring);
            const bool valid = score >= threshold.alpha;
            if (vae_guided && !valid) return false;
            suite.records.push_back(
                TestRecord{x, si, iterations, score, model_labels(models, x), valid});
            if (valid) update_nc(suite.coverage, models[target], x, cov_cfg);
            return true;
        };

        if (try_accept(0)) continue;

        for (std::size_t iter = 1; iter <= cfg.max_iterations && !accepted; ++iter) {
            Graph g;
            const NodeId xn = g.leaf(x);
            NodeId obj = obj1_differential(g, models, xn, target, neuron, cfg);
            if (vae_guided) {
                std::vector<double> eps(vae.latent_dim);
                for (double& e : eps) e = rng.normal();
                obj = g.add(obj, g.scale(vae_log_density_node(g, vae, xn, eps), cfg.lambda));
            }
            Tensor grad = g.backward(obj, xn);
            grad = constrain(grad, cfg.constraint, cfg.image_shape, origin);
            for (std::size_t i = 0; i < x.size(); ++i) x[i] += cfg.step_size * grad[i];
            x = clamp01(std::move(x));
            accepted = try_accept(iter);
        }
    }
    return suite;
}

}  // namespace

TestSuite generate_baseline(const std::vector<Tensor>& seeds, const std::vector<Network>& models,
                            const Vae& vae, const ValidityThreshold& threshold,
                            const ReconProbConfig& scoring, const GenerationConfig& cfg) {
    return run_generation(seeds, models, vae, threshold, scoring, cfg, /*vae_guided=*/false);
}

TestSuite generate_vae_guided(const std::vector<Tensor>& seeds, const std::vector<Network>& models,
                              const Vae& vae, const ValidityThreshold& threshold,
                              const ReconProbConfig& scoring, const GenerationConfig& cfg) {
    if (!(cfg.lambda > 0.0)) throw ContractViolation("vae-guided generation needs lambda > 0");
    return run_generation(seeds, models, vae, threshold, scoring, cfg, /*vae_guided=*/true);
}

double sweep_lambda(const std::vector<double>& candidates, const std::vector<Tensor>& tuning_seeds,
                    const std::vector<Network>& models, const Vae& vae,
                    const ValidityThreshold& threshold, const ReconProbConfig& scoring,
                    const GenerationConfig& base) {
    if (candidates.empty()) throw ContractViolation("lambda sweep needs candidates");
    double best_lambda = candidates.front();
    std::size_t best_count = 0;
    bool first = true;
    for (double lambda : candidates) {
        GenerationConfig cfg = base;
        cfg.lambda = lambda;
        const TestSuite suite =
            generate_vae_guided(tuning_seeds, models, vae, threshold, scoring, cfg);
        const std::size_t count = suite.valid_count();
        if (first || count > best_count) {
            best_count = count;
            best_lambda = lambda;
            first = false;
        }
    }
    return best_lambda;
}

std::string suite_to_jsonl(const TestSuite& suite) {
    std::ostringstream os;
    for (const TestRecord& r : suite.records) {
        json line;
        line["seed"] = r.seed_index;
        line["iter"] = r.iterations_used;
        line["recon"] = r.recon_score;
        line["labels"] = r.predictions;
        line["valid"] = r.valid;
        line["input"] = r.input.data();
        os << line.dump() << '\n';
    }
    return os.str();
}

std::vector<TestRecord> suite_records_from_jsonl(const std::string& bytes) {
    std::vector<TestRecord> records;
    std::istringstream is(bytes);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        json doc;
        try {
            doc = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(ParseError::Kind::BadDocument,
                             "suite line " + std::to_string(lineno) + ": " + e.what());
        }
        for (const char* key : {"seed", "iter", "recon", "labels", "valid", "input"}) {
            if (!doc.contains(key))
                throw ParseError(ParseError::Kind::BadDocument,
                                 "suite line " + std::to_string(lineno) + ": missing field " + key,
                                 std::string("$.") + key);
        }
        TestRecord r;
        r.seed_index = doc["seed"].get<std::size_t>();
        r.iterations_used = doc["iter"].get<std::size_t>();
        r.recon_score = doc["recon"].get<double>();
        r.predictions = doc["labels"].get<std::vector<int>>();
        r.valid = doc["valid"].get<bool>();
        r.input = Tensor::vector(doc["input"].get<std::vector<double>>());
        records.push_back(std::move(r));
    }
    return records;
}

std::string suite_summary_json(const TestSuite& suite) {
    json doc;
    doc["seeds"] = suite.seed_count;
    doc["valid"] = suite.valid_count();
    doc["invalid"] = suite.invalid_count();
    doc["coverage"] = json::parse(coverage_report_to_json(ratios(suite.coverage)));
    return doc.dump(2) + "\n";
}

}  // namespace dat
