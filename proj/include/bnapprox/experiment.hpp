#pragma once

// End-to-end experiment recipes: dataset generation, training, and the
// DNN-vs-LWS comparison and training-size sweep.

#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "bnapprox/bif.hpp"
#include "bnapprox/checkpoint.hpp"
#include "bnapprox/dataset.hpp"
#include "bnapprox/eval.hpp"
#include "bnapprox/fingerprint.hpp"
#include "bnapprox/nn.hpp"
#include "bnapprox/sampler.hpp"

namespace bnapprox {

inline constexpr std::uint64_t train_stream = 0xffffffffffff0002ULL;
inline constexpr std::uint64_t lws_stream = 0xffffffffffff0003ULL;

struct ExperimentConfig {
    std::string name;
    std::string network_path;
    GenerationConfig generation;
    std::vector<std::size_t> hidden_layers{100, 150, 100, 50};
    ModelConfig model;  // layer_sizes filled from hidden_layers once the network is known
    std::size_t lws_samples = 1000;
    std::size_t test_subset = 320;
    std::vector<double> thresholds = default_mta_thresholds();

    RngSeed seed() const { return generation.seed; }

    /// Model config sized for `net`: [dim, hidden..., dim].
    ModelConfig model_for(const Network& net) const {
        ModelConfig c = model;
        c.layer_sizes = ModelConfig::layers_for(evidence_dim(net), hidden_layers);
        return c;
    }
};

class ConfigMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Reads a recipe file. Relative network paths resolve against the recipe's
/// directory.
inline ExperimentConfig load_experiment_config(const std::string& path) {
    const auto j = nlohmann::json::parse(read_file(path));
    ExperimentConfig c;
    c.name = j.value("name", std::filesystem::path(path).stem().string());
    if (j.contains("network")) {
        std::filesystem::path net = j.at("network").get<std::string>();
        if (net.is_relative()) net = std::filesystem::path(path).parent_path() / net;
        c.network_path = net.lexically_normal().string();
    }
    if (j.contains("seed")) c.generation.seed = RngSeed{j.at("seed").get<std::uint64_t>()};
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        c.generation.n = d.value("n", c.generation.n);
        c.generation.p_obs = d.value("p_obs", c.generation.p_obs);
        if (d.contains("mode")) c.generation.mode = parse_evidence_mode(d.at("mode").get<std::string>());
    }
    if (j.contains("model")) {
        const auto& m = j.at("model");
        c.hidden_layers = m.value("hidden_layers", c.hidden_layers);
        c.model.l2_lambda = m.value("l2_lambda", c.model.l2_lambda);
        c.model.learning_rate = m.value("learning_rate", c.model.learning_rate);
        c.model.momentum = m.value("momentum", c.model.momentum);
        c.model.batch_size = m.value("batch_size", c.model.batch_size);
        c.model.max_epochs = m.value("max_epochs", c.model.max_epochs);
        c.model.early_stop_patience = m.value("early_stop_patience", c.model.early_stop_patience);
        c.model.use_bias = m.value("use_bias", c.model.use_bias);
    }
    c.lws_samples = j.value("lws_samples", c.lws_samples);
    c.test_subset = j.value("test_subset", c.test_subset);
    c.thresholds = j.value("mta_thresholds", c.thresholds);
    return c;
}

/// Hash of everything that determines results (paths excluded, the network
/// is bound through its layout fingerprint).
inline std::string experiment_fingerprint(const ExperimentConfig& c, const Network& net) {
    nlohmann::ordered_json j;
    j["network"] = EncodingLayout::of(net).fingerprint_hash();
    j["generation"] = generation_config_json(c.generation);
    j["model"] = model_config_json(c.model_for(net));
    j["lws_samples"] = c.lws_samples;
    j["test_subset"] = c.test_subset;
    j["thresholds"] = c.thresholds;
    return hex64(fnv1a64(j.dump()));
}

using EpochCallback = std::function<void(const EpochStats&)>;

/// Trains on `examples` with the last 10% held out for early stopping.
inline Model train_dnn(const Network& net, const ModelConfig& config, std::span<const Example> examples, RngSeed seed,
                       const EpochCallback& on_epoch = {}) {
    const EncodingLayout layout = EncodingLayout::of(net);
    auto [fit, validation] = holdout_validation(examples);
    Rng rng(derive_seed(seed, train_stream));
    Model m = train(layout, config, fit, validation, rng, on_epoch);
    m.info.seed = seed.value;
    return m;
}

inline std::vector<PosteriorSet> targets_of(const EncodingLayout& layout, std::span<const Example> examples) {
    std::vector<PosteriorSet> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) out.push_back(unflatten(layout, ex.target));
    return out;
}

inline EvalReport evaluate_dnn(const Model& model, const Network& net, std::span<const Example> examples,
                               const std::string& dataset, std::span<const double> thresholds,
                               const std::string& fingerprint = {}) {
    check_model_matches(model, net);
    std::vector<PosteriorSet> preds;
    preds.reserve(examples.size());
    Predictor predictor(model);
    for (const auto& ex : examples) preds.push_back(predictor(ex.evidence));
    const double secs = time_inference(examples, [&](const Example& ex) { return predictor(ex.evidence)[0][0]; });
    return make_report("dnn", dataset, targets_of(model.layout, examples), preds, thresholds, secs, fingerprint);
}

/// LWS estimate for one example; zero-weight runs yield point masses on the
/// evidence and all-zero vectors elsewhere, which the clamped KL penalizes.
inline PosteriorSet lws_or_unreachable(const Network& net, const Evidence& ev, std::size_t samples, RngSeed seed,
                                       bool* failed = nullptr) {
    Rng rng(seed);
    try {
        if (failed) *failed = false;
        return lws_posteriors(net, ev, samples, rng);
    } catch (const ZeroWeightTotal&) {
        if (failed) *failed = true;
        PosteriorSet p;
        for (std::size_t i = 0; i < net.size(); ++i) {
            const auto v = ev.value(i);
            p.marginals.push_back(v ? point_mass(net.cardinality(i), *v) : std::vector<double>(net.cardinality(i), 0.0));
        }
        return p;
    }
}

inline EvalReport evaluate_lws(const Network& net, std::span<const Example> examples, std::size_t samples, RngSeed seed,
                               const std::string& dataset, std::span<const double> thresholds,
                               const std::string& fingerprint = {}) {
    const RngSeed base = derive_seed(seed, lws_stream);
    std::vector<PosteriorSet> preds;
    std::size_t failures = 0;
    for (const auto& ex : examples) {
        bool failed = false;
        preds.push_back(lws_or_unreachable(net, ex.evidence, samples, derive_seed(base, ex.id), &failed));
        failures += failed ? 1 : 0;
    }
    const double secs = time_inference(examples, [&](const Example& ex) {
        return lws_or_unreachable(net, ex.evidence, samples, derive_seed(base, ex.id));
    });
    EvalReport r = make_report("lws", dataset, targets_of(EncodingLayout::of(net), examples), preds, thresholds, secs, fingerprint);
    r.failures = failures;
    return r;
}

/// Loads the dataset in `dir` if present (it must match the config), else
/// generates and writes it.
inline DatasetSplit ensure_dataset(const std::string& dir, const Network& net, const GenerationConfig& gen) {
    if (std::filesystem::exists(std::filesystem::path(dir) / "manifest.json")) {
        DatasetSplit split = read_dataset(dir, net);
        if (generation_config_json(split.config) != generation_config_json(gen))
            throw ConfigMismatch("dataset in '" + dir + "' was generated with a different configuration");
        return split;
    }
    DatasetSplit split = generate_dataset(net, gen);
    write_dataset(dir, net, split);
    return split;
}

/// Loads the checkpoint at `path` if present (it must match), else trains
/// on the training split and saves it.
inline Model ensure_model(const std::string& path, const Network& net, const ModelConfig& config,
                          std::span<const Example> train_examples, RngSeed seed, const EpochCallback& on_epoch = {}) {
    if (std::filesystem::exists(path)) {
        Model m = load_checkpoint(path);
        check_model_matches(m, net);
        if (model_config_json(m.config) != model_config_json(config) || m.info.seed != seed.value)
            throw ConfigMismatch("checkpoint '" + path + "' was trained with a different configuration");
        return m;
    }
    Model m = train_dnn(net, config, train_examples, seed, on_epoch);
    save_checkpoint(path, m);
    return m;
}

struct BenchResult {
    EvalReport dnn;
    EvalReport lws;
    std::vector<std::uint64_t> subset_ids;
};

/// Runs the trained DNN and LWS on the same test subset; writes
/// dataset/, model.ckpt, subset.json, dnn.csv, lws.csv and comparison.csv
/// under `out_dir`.
inline BenchResult bench(const ExperimentConfig& config, const std::string& out_dir, const EpochCallback& on_epoch = {}) {
    if (config.test_subset == 0) throw std::invalid_argument("bench: test subset size must be positive");
    if (config.lws_samples == 0) throw std::invalid_argument("bench: lws sample count must be positive");
    const Network net = load_network(config.network_path);
    const std::string fp = experiment_fingerprint(config, net);
    const auto root = std::filesystem::path(out_dir);
    std::filesystem::create_directories(root);

    const DatasetSplit split = ensure_dataset((root / "dataset").string(), net, config.generation);
    const Model model = ensure_model((root / "model.ckpt").string(), net, config.model_for(net), split.train, config.seed(), on_epoch);

    const std::size_t n = std::min(config.test_subset, split.test.size());
    const std::span<const Example> subset(split.test.data(), n);
    BenchResult result;
    for (const auto& ex : subset) result.subset_ids.push_back(ex.id);
    {
        nlohmann::ordered_json s;
        s["config_fingerprint"] = fp;
        s["seed"] = config.seed().value;
        s["source"] = "dataset/test.jsonl";
        s["ids"] = result.subset_ids;
        write_file((root / "subset.json").string(), s.dump() + "\n");
    }
    result.dnn = evaluate_dnn(model, net, subset, config.name, config.thresholds, fp);
    result.lws = evaluate_lws(net, subset, config.lws_samples, config.seed(), config.name, config.thresholds, fp);
    const EvalReport both[] = {result.dnn, result.lws};
    write_file((root / "dnn.csv").string(), reports_csv(std::span(both, 1)));
    write_file((root / "lws.csv").string(), reports_csv(std::span(both + 1, 1)));
    write_file((root / "comparison.csv").string(), reports_csv(both));
    return result;
}

struct SweepEntry {
    std::size_t train_size = 0;
    Model model;
    EvalReport report;
};

/// One model per training-set size, trained on prefixes of the training
/// split and evaluated on the whole test split. Writes sweep.csv.
inline std::vector<SweepEntry> sweep(const ExperimentConfig& config, std::span<const std::size_t> train_sizes,
                                     const std::string& out_dir,
                                     const std::function<void(std::size_t, const EpochStats&)>& on_epoch = {}) {
    if (train_sizes.empty()) throw std::invalid_argument("sweep: no training sizes given");
    const Network net = load_network(config.network_path);
    const std::string fp = experiment_fingerprint(config, net);
    const auto root = std::filesystem::path(out_dir);
    std::filesystem::create_directories(root);
    const DatasetSplit split = ensure_dataset((root / "dataset").string(), net, config.generation);
    for (std::size_t s : train_sizes)
        if (s == 0 || s > split.train.size())
            throw std::invalid_argument("sweep: training size " + std::to_string(s) + " exceeds the " +
                                        std::to_string(split.train.size()) + " available training examples");

    std::vector<SweepEntry> out;
    std::vector<EvalReport> reports;
    for (std::size_t s : train_sizes) {
        EpochCallback cb;
        if (on_epoch) cb = [&, s](const EpochStats& st) { on_epoch(s, st); };
        SweepEntry e;
        e.train_size = s;
        e.model = train_dnn(net, config.model_for(net), std::span(split.train.data(), s), config.seed(), cb);
        e.report = evaluate_dnn(e.model, net, split.test, config.name, config.thresholds, fp);
        e.report.method = "dnn-" + std::to_string(s);
        reports.push_back(e.report);
        out.push_back(std::move(e));
    }
    write_file((root / "sweep.csv").string(), reports_csv(reports));
    return out;
}

}  // namespace bnapprox
