// Command-line pipeline driver: train models and a VAE, profile activations,
// calibrate the validity threshold, generate test suites, and report
// coverage. Every stage is deterministic given its config; the only
// timestamps live in the run.log sidecar.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dat/coverage.hpp"
#include "dat/dataset.hpp"
#include "dat/errors.hpp"
#include "dat/network.hpp"
#include "dat/testgen.hpp"
#include "dat/train.hpp"
#include "dat/vae.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace dat;

namespace {

// Anything wrong with the config or a referenced artifact path: exit code 1.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CommandContext {
    json config;
    fs::path out_dir;
    std::optional<std::uint64_t> seed_override;
};

const json& require_field(const json& j, const std::string& key, const std::string& path) {
    if (!j.is_object() || !j.contains(key))
        throw ConfigError("config error: missing field " + path + "." + key);
    return j.at(key);
}

std::string read_artifact(const std::string& path, const std::string& field) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("config error: missing artifact " + path + " (" + field + ")");
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

void write_output(const fs::path& out_dir, const std::string& name, const std::string& bytes) {
    fs::create_directories(out_dir);
    std::ofstream f(out_dir / name, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + (out_dir / name).string());
    f << bytes;
}

void append_run_log(const fs::path& out_dir, const std::string& command) {
    fs::create_directories(out_dir);
    std::ofstream log(out_dir / "run.log", std::ios::app);
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    log << std::put_time(std::gmtime(&t), "%FT%TZ") << " " << command << '\n';
}

Dataset dataset_from_spec(const json& spec, const std::string& path) {
    const std::string kind = require_field(spec, "kind", path).get<std::string>();
    Dataset ds;
    if (kind == "idx") {
        const std::string images = require_field(spec, "images", path).get<std::string>();
        const std::string labels = require_field(spec, "labels", path).get<std::string>();
        if (!fs::exists(images)) throw ConfigError("config error: missing artifact " + images + " (" + path + ".images)");
        if (!fs::exists(labels)) throw ConfigError("config error: missing artifact " + labels + " (" + path + ".labels)");
        ds = load_idx(images, labels);
    } else if (kind == "synth") {
        const auto classes = require_field(spec, "num_classes", path).get<std::size_t>();
        const auto dim = require_field(spec, "dim", path).get<std::size_t>();
        const auto n = require_field(spec, "n_per_class", path).get<std::size_t>();
        const auto sep = require_field(spec, "separation", path).get<double>();
        const auto seed = require_field(spec, "seed", path).get<std::uint64_t>();
        SynthBlobs blobs = synth_blobs(classes, dim, n, sep, seed);
        const std::string part = spec.value("part", "valid");
        if (part == "valid") {
            ds = std::move(blobs.valid);
        } else if (part == "invalid") {
            ds = std::move(blobs.invalid);
        } else {
            throw ConfigError("config error: " + path + ".part must be 'valid' or 'invalid'");
        }
    } else {
        throw ConfigError("config error: " + path + ".kind must be 'idx' or 'synth'");
    }
    if (spec.contains("name")) ds.name = spec["name"].get<std::string>();
    if (spec.contains("subset")) {
        const json& sub = spec["subset"];
        const auto n = require_field(sub, "n", path + ".subset").get<std::size_t>();
        const auto seed = require_field(sub, "seed", path + ".subset").get<std::uint64_t>();
        if (n > ds.size())
            throw ConfigError("config error: " + path + ".subset.n exceeds dataset size " +
                              std::to_string(ds.size()));
        ds = subset(ds, n, seed);
    }
    return ds;
}

TrainConfig train_config_from(const json& j, const std::string& path,
                              const std::optional<std::uint64_t>& seed_override) {
    TrainConfig cfg;
    cfg.learning_rate = require_field(j, "learning_rate", path).get<double>();
    cfg.batch_size = require_field(j, "batch_size", path).get<std::size_t>();
    cfg.epochs = require_field(j, "epochs", path).get<std::size_t>();
    cfg.rng_seed = require_field(j, "seed", path).get<std::uint64_t>();
    const std::string opt = j.value("optimizer", "adam");
    if (opt == "sgd") {
        cfg.optimizer = Optimizer::Sgd;
    } else if (opt == "adam") {
        cfg.optimizer = Optimizer::Adam;
    } else {
        throw ConfigError("config error: " + path + ".optimizer must be 'sgd' or 'adam'");
    }
    if (j.contains("adam")) {
        const json& a = j["adam"];
        cfg.adam.beta1 = a.value("beta1", cfg.adam.beta1);
        cfg.adam.beta2 = a.value("beta2", cfg.adam.beta2);
        cfg.adam.epsilon = a.value("epsilon", cfg.adam.epsilon);
    }
    if (seed_override) cfg.rng_seed = *seed_override;
    return cfg;
}

std::vector<LayerSpec> arch_from(const json& j, const std::string& path) {
    if (!j.is_array() || j.empty())
        throw ConfigError("config error: " + path + " must be a non-empty layer array");
    std::vector<LayerSpec> arch;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const std::string lp = path + "[" + std::to_string(i) + "]";
        LayerSpec spec;
        spec.width = require_field(j.at(i), "width", lp).get<std::size_t>();
        spec.activation =
            activation_from_name(require_field(j.at(i), "activation", lp).get<std::string>());
        arch.push_back(spec);
    }
    return arch;
}

ReconProbConfig scoring_from(const json& config) {
    ReconProbConfig rc;
    if (config.contains("scoring")) {
        const json& s = config["scoring"];
        rc.num_samples = s.value("num_samples", rc.num_samples);
        rc.rng_seed = s.value("seed", rc.rng_seed);
    }
    return rc;
}

CoverageConfig coverage_config_from(const json& config) {
    CoverageConfig cc;
    if (config.contains("coverage")) {
        const json& c = config["coverage"];
        cc.nc_threshold = c.value("t", cc.nc_threshold);
        cc.k = c.value("k", cc.k);
    }
    cc.validate();
    return cc;
}

std::string metrics_json(const TrainReport& report) {
    json doc;
    doc["epoch_losses"] = report.epoch_losses;
    return doc.dump(2) + "\n";
}

std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string seed_digest(const std::vector<Tensor>& seeds) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const Tensor& t : seeds)
        h = fnv1a(t.data().data(), t.data().size() * sizeof(double), h);
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

// ---------------------------------------------------------------------------

int cmd_train(const CommandContext& ctx) {
    const Dataset train =
        dataset_from_spec(require_field(ctx.config, "dataset", "$"), "$.dataset");
    const std::vector<LayerSpec> arch = arch_from(require_field(ctx.config, "arch", "$"), "$.arch");
    const TrainConfig cfg =
        train_config_from(require_field(ctx.config, "train", "$"), "$.train", ctx.seed_override);

    TrainReport report;
    const Network net = train_classifier(train, arch, cfg, &report);
    write_output(ctx.out_dir, ctx.config.value("model_out", "model.json"), save_model(net));
    write_output(ctx.out_dir, ctx.config.value("metrics_out", "train_metrics.json"),
                 metrics_json(report));
    std::cout << "trained " << train.name << " (" << train.size() << " records), final loss "
              << (report.epoch_losses.empty() ? 0.0 : report.epoch_losses.back()) << "\n";
    return 0;
}

int cmd_train_vae(const CommandContext& ctx) {
    const Dataset train =
        dataset_from_spec(require_field(ctx.config, "dataset", "$"), "$.dataset");
    const json& jv = require_field(ctx.config, "vae", "$");
    VaeArch arch;
    arch.encoder_hidden = require_field(jv, "hidden", "$.vae").get<std::vector<std::size_t>>();
    arch.latent_dim = require_field(jv, "latent_dim", "$.vae").get<std::size_t>();
    const TrainConfig cfg =
        train_config_from(require_field(ctx.config, "train", "$"), "$.train", ctx.seed_override);

    TrainReport report;
    const Vae vae = train_vae(train, arch, cfg, &report);
    write_output(ctx.out_dir, ctx.config.value("vae_out", "vae.json"), save_vae(vae));
    write_output(ctx.out_dir, ctx.config.value("metrics_out", "vae_metrics.json"),
                 metrics_json(report));
    std::cout << "trained vae on " << train.name << ", final loss "
              << (report.epoch_losses.empty() ? 0.0 : report.epoch_losses.back()) << "\n";
    return 0;
}

int cmd_profile(const CommandContext& ctx) {
    const std::string model_path = require_field(ctx.config, "model", "$").get<std::string>();
    const Network net = load_model(read_artifact(model_path, "$.model"));
    const Dataset ds = dataset_from_spec(require_field(ctx.config, "dataset", "$"), "$.dataset");
    const ActivationProfile prof = profile(net, ds.inputs);
    write_output(ctx.out_dir, ctx.config.value("profile_out", "profile.json"),
                 profile_to_json(prof));
    std::cout << "profiled " << prof.neuron_count() << " neurons over " << ds.size()
              << " inputs\n";
    return 0;
}

int cmd_calibrate(const CommandContext& ctx) {
    const std::string vae_path = require_field(ctx.config, "vae", "$").get<std::string>();
    const Vae vae = load_vae(read_artifact(vae_path, "$.vae"));
    const Dataset valid =
        dataset_from_spec(require_field(ctx.config, "valid_dataset", "$"), "$.valid_dataset");
    const Dataset invalid =
        dataset_from_spec(require_field(ctx.config, "invalid_dataset", "$"), "$.invalid_dataset");
    ReconProbConfig rc = scoring_from(ctx.config);
    if (ctx.seed_override) rc.rng_seed = *ctx.seed_override;

    const std::vector<double> vs = score_dataset(vae, valid.inputs, rc);
    const std::vector<double> is = score_dataset(vae, invalid.inputs, rc);
    const ValidityThreshold t = calibrate_threshold(vs, is, valid.name, invalid.name);
    write_output(ctx.out_dir, ctx.config.value("threshold_out", "threshold.json"),
                 threshold_to_json(t));

    // Trivial all-invalid classifier baseline, for a non-separation warning.
    const double p0 = double(is.size()) / double(is.size() + vs.size());
    const double trivial_f = 2.0 * p0 / (1.0 + p0);
    if (t.f_measure <= trivial_f)
        std::cerr << "warning: score distributions do not separate (best F " << t.f_measure
                  << " <= trivial " << trivial_f << ")\n";
    std::cout << "alpha " << t.alpha << " F " << t.f_measure << " precision " << t.precision
              << " recall " << t.recall << "\n";
    return 0;
}

int cmd_generate(const CommandContext& ctx) {
    const std::string mode = require_field(ctx.config, "mode", "$").get<std::string>();
    if (mode != "baseline" && mode != "vae")
        throw ConfigError("config error: $.mode must be 'baseline' or 'vae'");

    const json& jm = require_field(ctx.config, "models", "$");
    if (!jm.is_array() || jm.size() < 2)
        throw ConfigError("config error: $.models needs at least 2 model paths");
    std::vector<Network> models;
    for (std::size_t i = 0; i < jm.size(); ++i)
        models.push_back(load_model(
            read_artifact(jm.at(i).get<std::string>(), "$.models[" + std::to_string(i) + "]")));

    const Vae vae =
        load_vae(read_artifact(require_field(ctx.config, "vae", "$").get<std::string>(), "$.vae"));
    const ValidityThreshold threshold = threshold_from_json(
        read_artifact(require_field(ctx.config, "threshold", "$").get<std::string>(), "$.threshold"));
    const ReconProbConfig rc = scoring_from(ctx.config);

    const json& js = require_field(ctx.config, "seeds", "$");
    Dataset seedset = dataset_from_spec(require_field(js, "dataset", "$.seeds"), "$.seeds.dataset");
    if (js.contains("count")) {
        const auto count = js["count"].get<std::size_t>();
        const auto sseed = require_field(js, "seed", "$.seeds").get<std::uint64_t>();
        if (count > seedset.size())
            throw ConfigError("config error: $.seeds.count exceeds dataset size");
        seedset = subset(seedset, count, sseed);
    }

    const json& jg = require_field(ctx.config, "generation", "$");
    GenerationConfig cfg;
    cfg.step_size = require_field(jg, "step_size", "$.generation").get<double>();
    cfg.max_iterations = jg.value("max_iterations", cfg.max_iterations);
    cfg.lambda = jg.value("lambda", cfg.lambda);
    cfg.lambda1 = jg.value("lambda1", cfg.lambda1);
    cfg.lambda2 = jg.value("lambda2", cfg.lambda2);
    cfg.nc_threshold = jg.value("nc_threshold", cfg.nc_threshold);
    cfg.rng_seed = require_field(jg, "seed", "$.generation").get<std::uint64_t>();
    if (jg.contains("image_shape"))
        cfg.image_shape = jg["image_shape"].get<std::vector<std::size_t>>();
    else if (seedset.image_shape.size() == 2)
        cfg.image_shape = seedset.image_shape;
    if (jg.contains("constraint")) {
        const json& jc = jg["constraint"];
        cfg.constraint.kind =
            constraint_from_name(require_field(jc, "kind", "$.generation.constraint").get<std::string>());
        cfg.constraint.rect_w = jc.value("w", cfg.constraint.rect_w);
        cfg.constraint.rect_h = jc.value("h", cfg.constraint.rect_h);
    }
    if (ctx.seed_override) cfg.rng_seed = *ctx.seed_override;
    cfg.validate();

    const TestSuite suite =
        mode == "vae" ? generate_vae_guided(seedset.inputs, models, vae, threshold, rc, cfg)
                      : generate_baseline(seedset.inputs, models, vae, threshold, rc, cfg);
    if (mode == "vae" && suite.invalid_count() != 0)
        throw NumericError("vae mode emitted an invalid record");  // unreachable by construction

    write_output(ctx.out_dir, ctx.config.value("suite_out", "suite.jsonl"), suite_to_jsonl(suite));
    write_output(ctx.out_dir, ctx.config.value("summary_out", "summary.json"),
                 suite_summary_json(suite));

    json snapshot;
    snapshot["mode"] = mode;
    snapshot["seed_count"] = seedset.size();
    snapshot["seed_digest"] = seed_digest(seedset.inputs);
    snapshot["generation"] = {{"step_size", cfg.step_size},
                              {"max_iterations", cfg.max_iterations},
                              {"lambda", cfg.lambda},
                              {"lambda1", cfg.lambda1},
                              {"lambda2", cfg.lambda2},
                              {"constraint", constraint_name(cfg.constraint.kind)},
                              {"rect_w", cfg.constraint.rect_w},
                              {"rect_h", cfg.constraint.rect_h},
                              {"nc_threshold", cfg.nc_threshold},
                              {"seed", cfg.rng_seed},
                              {"image_shape", cfg.image_shape}};
    snapshot["scoring"] = {{"num_samples", rc.num_samples}, {"seed", rc.rng_seed}};
    write_output(ctx.out_dir, "generate_config.json", snapshot.dump(2) + "\n");

    std::cout << mode << " generation: " << suite.records.size() << " records, "
              << suite.valid_count() << " valid, " << suite.invalid_count() << " invalid\n";
    return 0;
}

int cmd_validate(const CommandContext& ctx) {
    const Vae vae =
        load_vae(read_artifact(require_field(ctx.config, "vae", "$").get<std::string>(), "$.vae"));
    const ValidityThreshold threshold = threshold_from_json(
        read_artifact(require_field(ctx.config, "threshold", "$").get<std::string>(), "$.threshold"));
    const ReconProbConfig rc = scoring_from(ctx.config);
    const std::vector<TestRecord> records = suite_records_from_jsonl(
        read_artifact(require_field(ctx.config, "suite", "$").get<std::string>(), "$.suite"));

    std::size_t valid = 0;
    for (const TestRecord& r : records)
        valid += classify(vae, threshold, r.input, rc) == Validity::Valid;
    const std::size_t invalid = records.size() - valid;

    json doc;
    doc["records"] = records.size();
    doc["valid"] = valid;
    doc["invalid"] = invalid;
    doc["invalid_percent"] =
        records.empty() ? 0.0 : 100.0 * double(invalid) / double(records.size());
    write_output(ctx.out_dir, ctx.config.value("validation_out", "validation.json"),
                 doc.dump(2) + "\n");
    std::cout << "validated " << records.size() << " records: " << invalid << " invalid ("
              << doc["invalid_percent"].get<double>() << "%)\n";
    return 0;
}

struct SuiteCoverage {
    CoverageState valid;
    CoverageState invalid;
    std::size_t valid_records = 0;
    std::size_t invalid_records = 0;
};

SuiteCoverage accumulate_suite(const Network& net, const ActivationProfile& prof,
                               const std::vector<TestRecord>& records, const CoverageConfig& cc) {
    SuiteCoverage out{make_coverage_state(net, cc), make_coverage_state(net, cc)};
    for (const TestRecord& r : records) {
        CoverageState& state = r.valid ? out.valid : out.invalid;
        update_nc(state, net, r.input, cc);
        update_multigranularity(state, prof, net, r.input, cc);
        (r.valid ? out.valid_records : out.invalid_records)++;
    }
    return out;
}

json report_from_state(const CoverageState& state) {
    return json::parse(coverage_report_to_json(ratios(state)));
}

int cmd_coverage(const CommandContext& ctx) {
    const Network net = load_model(
        read_artifact(require_field(ctx.config, "model", "$").get<std::string>(), "$.model"));
    const ActivationProfile prof = profile_from_json(
        read_artifact(require_field(ctx.config, "profile", "$").get<std::string>(), "$.profile"));
    const CoverageConfig cc = coverage_config_from(ctx.config);

    std::vector<Tensor> inputs;
    if (ctx.config.contains("suite")) {
        const std::string filter = ctx.config.value("filter", "all");
        for (const TestRecord& r : suite_records_from_jsonl(
                 read_artifact(ctx.config["suite"].get<std::string>(), "$.suite"))) {
            if (filter == "all" || (filter == "valid" && r.valid) ||
                (filter == "invalid" && !r.valid))
                inputs.push_back(r.input);
        }
    } else if (ctx.config.contains("dataset")) {
        inputs = dataset_from_spec(ctx.config["dataset"], "$.dataset").inputs;
    } else {
        throw ConfigError("config error: missing field $.suite or $.dataset");
    }

    CoverageState state = make_coverage_state(net, cc);
    for (const Tensor& x : inputs) {
        update_nc(state, net, x, cc);
        update_multigranularity(state, prof, net, x, cc);
    }
    write_output(ctx.out_dir, ctx.config.value("report_out", "coverage.json"),
                 coverage_report_to_json(ratios(state)));
    if (ctx.config.value("dump_vectors", false))
        write_output(ctx.out_dir, ctx.config.value("vectors_out", "vectors.txt"),
                     state.nc_vector_string() + "\n");
    std::cout << "coverage over " << inputs.size() << " inputs: nc " << ratios(state).nc << "\n";
    return 0;
}

std::string render_text_table(const json& rows) {
    std::ostringstream os;
    os << std::left << std::setw(18) << "suite" << std::setw(9) << "set" << std::right
       << std::setw(8) << "nc" << std::setw(8) << "kmnc" << std::setw(8) << "nbc" << std::setw(8)
       << "snac" << std::setw(8) << "inputs" << '\n';
    auto cell = [&](const json& row, const char* metric) -> std::string {
        if (row.is_null()) return "-";
        if (!row.contains(metric) || row[metric].is_null()) return "-";
        std::ostringstream c;
        c << std::fixed << std::setprecision(3) << row[metric].get<double>();
        return c.str();
    };
    for (const json& suite : rows) {
        for (const char* part : {"valid", "invalid", "total"}) {
            const json& row = suite[part];
            os << std::left << std::setw(18) << suite["name"].get<std::string>() << std::setw(9)
               << part << std::right << std::setw(8) << cell(row, "nc") << std::setw(8)
               << cell(row, "kmnc") << std::setw(8) << cell(row, "nbc") << std::setw(8)
               << cell(row, "snac") << std::setw(8)
               << (row.is_null() ? "-" : std::to_string(row["inputs"].get<std::size_t>()))
               << '\n';
        }
        if (suite.contains("vectors")) {
            for (const char* part : {"valid", "invalid", "total"}) {
                if (suite["vectors"].contains(part))
                    os << "  " << part << " " << suite["vectors"][part].get<std::string>() << '\n';
            }
        }
    }
    return os.str();
}

int cmd_report(const CommandContext& ctx, bool text) {
    const CoverageConfig cc = coverage_config_from(ctx.config);
    const json& jsuites = require_field(ctx.config, "suites", "$");
    if (!jsuites.is_array() || jsuites.empty())
        throw ConfigError("config error: $.suites must be a non-empty array");

    // Model/profile are needed only for suite rows; vector rows replay
    // packaged nc bit strings.
    std::optional<Network> net;
    std::optional<ActivationProfile> prof;
    if (ctx.config.contains("model")) {
        net = load_model(read_artifact(ctx.config["model"].get<std::string>(), "$.model"));
        prof = profile_from_json(
            read_artifact(require_field(ctx.config, "profile", "$").get<std::string>(), "$.profile"));
    }

    json rows = json::array();
    for (std::size_t i = 0; i < jsuites.size(); ++i) {
        const json& js = jsuites.at(i);
        const std::string sp = "$.suites[" + std::to_string(i) + "]";
        json row;
        row["name"] = require_field(js, "name", sp).get<std::string>();
        if (js.contains("suite")) {
            if (!net) throw ConfigError("config error: missing field $.model (needed by " + sp + ")");
            const auto records =
                suite_records_from_jsonl(read_artifact(js["suite"].get<std::string>(), sp + ".suite"));
            const SuiteCoverage sc = accumulate_suite(*net, *prof, records, cc);
            const CoverageState total = merge(sc.valid, sc.invalid);
            row["valid"] = sc.valid_records ? report_from_state(sc.valid) : json();
            row["invalid"] = sc.invalid_records ? report_from_state(sc.invalid) : json();
            row["total"] = report_from_state(total);
            row["vectors"] = {{"valid", sc.valid.nc_vector_string()},
                              {"invalid", sc.invalid.nc_vector_string()},
                              {"total", total.nc_vector_string()}};
        } else if (js.contains("valid_vector") || js.contains("invalid_vector")) {
            auto read_vec = [&](const char* key) -> std::optional<CoverageState> {
                if (!js.contains(key)) return std::nullopt;
                std::string bits =
                    read_artifact(js[key].get<std::string>(), sp + "." + key);
                while (!bits.empty() && (bits.back() == '\n' || bits.back() == '\r'))
                    bits.pop_back();
                return CoverageState::from_nc_vector(bits);
            };
            const auto valid = read_vec("valid_vector");
            const auto invalid = read_vec("invalid_vector");
            json vectors;
            json valid_row, invalid_row;
            std::optional<CoverageState> total;
            if (valid) {
                json r;
                r["nc"] = ratios(*valid).nc;
                valid_row = r;
                vectors["valid"] = valid->nc_vector_string();
                total = *valid;
            }
            if (invalid) {
                json r;
                r["nc"] = ratios(*invalid).nc;
                invalid_row = r;
                vectors["invalid"] = invalid->nc_vector_string();
                total = total ? merge(*total, *invalid) : *invalid;
            }
            row["valid"] = valid_row;
            row["invalid"] = invalid_row;
            json total_row;
            total_row["nc"] = ratios(*total).nc;
            row["total"] = total_row;
            vectors["total"] = total->nc_vector_string();
            row["vectors"] = vectors;
        } else {
            throw ConfigError("config error: " + sp + " needs 'suite' or '*_vector' inputs");
        }
        rows.push_back(std::move(row));
    }

    json doc;
    doc["t"] = cc.nc_threshold;
    doc["k"] = cc.k;
    doc["suites"] = rows;
    write_output(ctx.out_dir, ctx.config.value("report_out", "report.json"), doc.dump(2) + "\n");
    if (text)
        write_output(ctx.out_dir, ctx.config.value("text_out", "report.txt"),
                     render_text_table(rows));
    std::cout << "report over " << rows.size() << " suites written\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"distribution-aware test generation toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed_override;
    bool text = false;

    auto add_common = [&](CLI::App* sub, bool needs_config = true) {
        auto* opt = sub->add_option("--config", config_path, "JSON config file");
        if (needs_config) opt->required();
        sub->add_option("--out", out_dir, "output directory (default .)");
        sub->add_option("--seed", seed_override, "override the config's primary seed");
        return sub;
    };

    auto* train = add_common(app.add_subcommand("train", "train a dense classifier"));
    auto* train_vae_cmd = add_common(app.add_subcommand("train-vae", "train the gaussian-output vae"));
    auto* profile_cmd = add_common(app.add_subcommand("profile", "record per-neuron activation bounds"));
    auto* calibrate = add_common(app.add_subcommand("calibrate", "pick the validity threshold by F-measure"));
    auto* generate = add_common(app.add_subcommand("generate", "run baseline or vae-guided test generation"));
    auto* validate = add_common(app.add_subcommand("validate", "re-check a suite against the vae gate"));
    auto* coverage_cmd = add_common(app.add_subcommand("coverage", "coverage of a dataset or suite"));
    auto* report = add_common(app.add_subcommand("report", "per-suite valid/invalid/total coverage table"));
    report->add_flag("--text", text, "also render a plain-text table");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);  // prints the message / help text
        return code == 0 ? 0 : 1;      // all usage errors map to 1
    }

    try {
        CommandContext ctx;
        ctx.out_dir = out_dir;
        ctx.seed_override = seed_override;
        {
            std::ifstream f(config_path);
            if (!f) {
                std::cerr << "config error: cannot open " << config_path << "\n";
                return 1;
            }
            try {
                ctx.config = json::parse(f);
            } catch (const json::parse_error& e) {
                std::cerr << "config error: " << e.what() << "\n";
                return 1;
            }
        }

        std::string name;
        int rc = 0;
        if (train->parsed()) {
            name = "train";
            rc = cmd_train(ctx);
        } else if (train_vae_cmd->parsed()) {
            name = "train-vae";
            rc = cmd_train_vae(ctx);
        } else if (profile_cmd->parsed()) {
            name = "profile";
            rc = cmd_profile(ctx);
        } else if (calibrate->parsed()) {
            name = "calibrate";
            rc = cmd_calibrate(ctx);
        } else if (generate->parsed()) {
            name = "generate";
            rc = cmd_generate(ctx);
        } else if (validate->parsed()) {
            name = "validate";
            rc = cmd_validate(ctx);
        } else if (coverage_cmd->parsed()) {
            name = "coverage";
            rc = cmd_coverage(ctx);
        } else if (report->parsed()) {
            name = "report";
            rc = cmd_report(ctx, text);
        }
        append_run_log(ctx.out_dir, name + " --config " + config_path);
        return rc;
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const ParseError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
