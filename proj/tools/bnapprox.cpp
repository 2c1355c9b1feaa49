// bnapprox command-line driver.
//
//   bnapprox validate --net asia.bif
//   bnapprox query    --net asia.bif smoke=yes xray=yes
//   bnapprox gen      --net alarm.bif --n 10000 --p-obs 0.3 --mode uniform --seed 1 --out data/alarm
//   bnapprox lws      --net asia.bif --samples 1000 --seed 7 dysp=yes
//   bnapprox train    --config recipes/alarm.json --data data/alarm --out alarm.ckpt
//   bnapprox predict  --model alarm.ckpt --net alarm.bif HRBP=HIGH
//   bnapprox eval     --net alarm.bif --data data/alarm --model alarm.ckpt --out report.csv
//   bnapprox bench    --config recipes/alarm.json --out runs/alarm
//   bnapprox sweep    --config recipes/alarm.json --sizes 100,200,500,1000,5000 --out runs/alarm-sweep

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "bnapprox/bnapprox.hpp"

namespace {

using namespace bnapprox;

struct Common {
    std::string net;
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> evidence;
};

struct ModelOverrides {
    std::optional<std::string> hidden;
    std::optional<double> l2;
    std::optional<double> lr;
    std::optional<double> momentum;
    std::optional<std::size_t> batch;
    std::optional<std::size_t> max_epochs;
    std::optional<std::size_t> patience;
    bool no_bias = false;
    bool verbose = false;
};

std::vector<std::size_t> parse_sizes(const std::string& text) {
    std::vector<std::size_t> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto comma = text.find(',', pos);
        const std::string item = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        if (!item.empty()) {
            std::size_t used = 0;
            const auto v = std::stoull(item, &used);
            if (used != item.size()) throw std::invalid_argument("invalid size list '" + text + "'");
            out.push_back(static_cast<std::size_t>(v));
        }
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}

ExperimentConfig resolve_config(const Common& c) {
    ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_experiment_config(c.config);
    if (!c.net.empty()) cfg.network_path = c.net;
    if (c.seed) cfg.generation.seed = RngSeed{*c.seed};
    if (cfg.network_path.empty()) throw std::invalid_argument("no network given (use --net or --config)");
    if (!std::filesystem::exists(cfg.network_path))
        throw std::invalid_argument("network file '" + cfg.network_path + "' does not exist");
    if (cfg.name.empty()) cfg.name = std::filesystem::path(cfg.network_path).stem().string();
    return cfg;
}

void apply(const ModelOverrides& o, ExperimentConfig& cfg) {
    if (o.hidden) cfg.hidden_layers = parse_sizes(*o.hidden);
    if (o.l2) cfg.model.l2_lambda = *o.l2;
    if (o.lr) cfg.model.learning_rate = *o.lr;
    if (o.momentum) cfg.model.momentum = *o.momentum;
    if (o.batch) cfg.model.batch_size = *o.batch;
    if (o.max_epochs) cfg.model.max_epochs = *o.max_epochs;
    if (o.patience) cfg.model.early_stop_patience = *o.patience;
    if (o.no_bias) cfg.model.use_bias = false;
}

void add_model_flags(CLI::App* cmd, ModelOverrides& o) {
    cmd->add_option("--hidden", o.hidden, "Hidden layer sizes, comma separated (e.g. 100,150,100,50)");
    cmd->add_option("--l2", o.l2, "L2 coefficient on weights");
    cmd->add_option("--lr", o.lr, "Learning rate");
    cmd->add_option("--momentum", o.momentum, "Momentum coefficient");
    cmd->add_option("--batch", o.batch, "Mini-batch size");
    cmd->add_option("--max-epochs", o.max_epochs, "Maximum number of epochs");
    cmd->add_option("--patience", o.patience, "Early-stopping patience in epochs");
    cmd->add_flag("--no-bias", o.no_bias, "Train without bias vectors");
    cmd->add_flag("-v,--verbose", o.verbose, "Print per-epoch losses");
}

EpochCallback progress(bool verbose) {
    return [verbose](const EpochStats& s) {
        if (verbose || s.epoch % 100 == 0)
            std::fprintf(stderr, "epoch %5zu  train %.6f  validation %.6f%s\n", s.epoch, s.train_loss, s.validation_loss,
                         s.improved ? "  *" : "");
    };
}

void print_posteriors(const Network& net, const PosteriorSet& post, const Evidence& ev) {
    for (std::size_t i = 0; i < net.size(); ++i) {
        std::printf("%-16s", net.variable(i).name.c_str());
        for (std::size_t k = 0; k < net.cardinality(i); ++k)
            std::printf("  %s=%.6f", net.variable(i).labels[k].c_str(), post[i][k]);
        if (ev.observed(i)) std::printf("  (observed)");
        std::printf("\n");
    }
}

void print_reports(const std::vector<EvalReport>& reports, const std::string& csv_path) {
    std::cout << reports_table(reports);
    if (!csv_path.empty()) {
        write_file(csv_path, reports_csv(reports));
        std::cout << "wrote " << csv_path << "\n";
    } else {
        std::cout << "\n" << reports_csv(reports);
    }
}

const char* error_category(const std::exception& e) {
    if (dynamic_cast<const BifError*>(&e)) return "bif";
    if (dynamic_cast<const ImpossibleEvidence*>(&e)) return "impossible-evidence";
    if (dynamic_cast<const ZeroWeightTotal*>(&e)) return "zero-weight-total";
    if (dynamic_cast<const GenerationStalled*>(&e)) return "generation-stalled";
    if (dynamic_cast<const NonFiniteLoss*>(&e)) return "non-finite-loss";
    if (dynamic_cast<const ConfigMismatch*>(&e)) return "config-mismatch";
    if (dynamic_cast<const std::invalid_argument*>(&e)) return "invalid-argument";
    return "runtime";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Neural approximation of discrete Bayesian-network posteriors"};
    app.require_subcommand(1);

    Common c;
    ModelOverrides mo;
    std::optional<std::size_t> n;
    std::optional<double> p_obs;
    std::optional<std::string> mode;
    std::size_t samples = 1000;
    std::string data_dir, model_path, method = "dnn", sizes_text, name;
    std::optional<std::size_t> subset;
    std::optional<std::size_t> lws_samples;
    bool canonical = false;

    auto* validate = app.add_subcommand("validate", "Parse and check a BIF network");
    validate->add_option("--net", c.net, "BIF file")->required();
    validate->add_flag("--canonical", canonical, "Print the canonical serialization");

    auto* query = app.add_subcommand("query", "Exact posteriors given evidence");
    query->add_option("--net", c.net, "BIF file")->required();
    query->add_option("evidence", c.evidence, "Evidence as name=value");

    auto* gen = app.add_subcommand("gen", "Generate a labelled evidence/posterior dataset");
    gen->add_option("--config", c.config, "Recipe file");
    gen->add_option("--net", c.net, "BIF file");
    gen->add_option("--n", n, "Number of examples");
    gen->add_option("--p-obs", p_obs, "Per-variable observation probability");
    gen->add_option("--mode", mode, "uniform|consistent");
    gen->add_option("--seed", c.seed, "Seed");
    gen->add_option("--out", c.out, "Output directory")->required();

    auto* lws = app.add_subcommand("lws", "Likelihood-weighting posterior estimate");
    lws->add_option("--net", c.net, "BIF file")->required();
    lws->add_option("--samples", samples, "Number of samples")->capture_default_str();
    lws->add_option("--seed", c.seed, "Seed");
    lws->add_option("evidence", c.evidence, "Evidence as name=value");

    auto* train_cmd = app.add_subcommand("train", "Train a model on a dataset");
    train_cmd->add_option("--config", c.config, "Recipe file");
    train_cmd->add_option("--net", c.net, "BIF file");
    train_cmd->add_option("--data", data_dir, "Dataset directory")->required();
    train_cmd->add_option("--seed", c.seed, "Seed");
    train_cmd->add_option("--out", c.out, "Checkpoint path")->required();
    add_model_flags(train_cmd, mo);

    auto* predict_cmd = app.add_subcommand("predict", "Posteriors from a trained model");
    predict_cmd->add_option("--model", model_path, "Checkpoint")->required();
    predict_cmd->add_option("--net", c.net, "BIF file the model was trained for")->required();
    predict_cmd->add_option("evidence", c.evidence, "Evidence as name=value");

    auto* eval = app.add_subcommand("eval", "Score a method on a dataset's test split");
    eval->add_option("--config", c.config, "Recipe file");
    eval->add_option("--net", c.net, "BIF file");
    eval->add_option("--data", data_dir, "Dataset directory")->required();
    eval->add_option("--method", method, "dnn|lws")->capture_default_str();
    eval->add_option("--model", model_path, "Checkpoint (dnn)");
    eval->add_option("--samples", lws_samples, "LWS samples per inference");
    eval->add_option("--subset", subset, "Only score the first N test examples");
    eval->add_option("--seed", c.seed, "Seed (lws)");
    eval->add_option("--name", name, "Dataset label in the report");
    eval->add_option("--out", c.out, "CSV output path");

    auto* bench_cmd = app.add_subcommand("bench", "Compare the DNN with LWS on a shared test subset");
    bench_cmd->add_option("--config", c.config, "Recipe file");
    bench_cmd->add_option("--net", c.net, "BIF file");
    bench_cmd->add_option("--seed", c.seed, "Seed");
    bench_cmd->add_option("--n", n, "Dataset size");
    bench_cmd->add_option("--subset", subset, "Test subset size");
    bench_cmd->add_option("--samples", lws_samples, "LWS samples per inference");
    bench_cmd->add_option("--out", c.out, "Run directory")->required();
    add_model_flags(bench_cmd, mo);

    auto* sweep_cmd = app.add_subcommand("sweep", "Accuracy versus training-set size");
    sweep_cmd->add_option("--config", c.config, "Recipe file");
    sweep_cmd->add_option("--net", c.net, "BIF file");
    sweep_cmd->add_option("--seed", c.seed, "Seed");
    sweep_cmd->add_option("--n", n, "Dataset size");
    sweep_cmd->add_option("--sizes", sizes_text, "Training sizes, comma separated")->required();
    sweep_cmd->add_option("--out", c.out, "Run directory")->required();
    add_model_flags(sweep_cmd, mo);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*validate) {
            const BifDocument doc = read_bif_file(c.net);
            const Network net = to_network(doc);
            if (canonical) {
                std::cout << serialize_bif(doc);
                return 0;
            }
            std::printf("network     %s\nvariables   %zu\nedges       %zu\nparameters  %zu\nencoding    %zu\n",
                        net.name().c_str(), net.size(), net.edge_count(), free_parameters(net), evidence_dim(net));
        } else if (*query) {
            const Network net = load_network(c.net);
            const Evidence ev = parse_evidence(net, c.evidence);
            const ExactResult r = exact_posteriors(net, ev);
            print_posteriors(net, r.posteriors, ev);
            std::printf("P(evidence) = %.10g\n", r.evidence_probability);
        } else if (*gen) {
            ExperimentConfig cfg = resolve_config(c);
            if (n) cfg.generation.n = *n;
            if (p_obs) cfg.generation.p_obs = *p_obs;
            if (mode) cfg.generation.mode = parse_evidence_mode(*mode);
            const Network net = load_network(cfg.network_path);
            const DatasetSplit split = generate_dataset(net, cfg.generation);
            write_dataset(c.out, net, split);
            std::printf("wrote %zu train / %zu test examples to %s (%zu impossible draws rejected, overlap %.4f)\n",
                        split.train.size(), split.test.size(), c.out.c_str(), split.rejected, evidence_overlap_rate(split));
        } else if (*lws) {
            const Network net = load_network(c.net);
            const Evidence ev = parse_evidence(net, c.evidence);
            Rng rng(RngSeed{c.seed.value_or(0)});
            print_posteriors(net, lws_posteriors(net, ev, samples, rng), ev);
        } else if (*train_cmd) {
            ExperimentConfig cfg = resolve_config(c);
            apply(mo, cfg);
            const Network net = load_network(cfg.network_path);
            const DatasetSplit split = read_dataset(data_dir, net);
            const ModelConfig mc = cfg.model_for(net);
            const Model m = train_dnn(net, mc, split.train, cfg.seed(), progress(mo.verbose));
            save_checkpoint(c.out, m);
            std::printf("trained %zu epochs (best %zu, validation loss %.6f); wrote %s\n", m.info.epochs_run, m.info.best_epoch,
                        m.info.best_validation_loss, c.out.c_str());
        } else if (*predict_cmd) {
            const Network net = load_network(c.net);
            const Model m = load_checkpoint(model_path);
            check_model_matches(m, net);
            const Evidence ev = parse_evidence(net, c.evidence);
            print_posteriors(net, predict(m, ev), ev);
        } else if (*eval) {
            ExperimentConfig cfg = resolve_config(c);
            if (lws_samples) cfg.lws_samples = *lws_samples;
            const Network net = load_network(cfg.network_path);
            const DatasetSplit split = read_dataset(data_dir, net);
            const std::size_t count = std::min(subset.value_or(split.test.size()), split.test.size());
            if (count == 0) throw std::invalid_argument("eval: empty test subset");
            const std::span<const Example> examples(split.test.data(), count);
            const std::string label = name.empty() ? cfg.name : name;
            EvalReport r;
            if (method == "dnn") {
                if (model_path.empty()) throw std::invalid_argument("eval: --model is required for method dnn");
                r = evaluate_dnn(load_checkpoint(model_path), net, examples, label, cfg.thresholds);
            } else if (method == "lws") {
                r = evaluate_lws(net, examples, cfg.lws_samples, cfg.seed(), label, cfg.thresholds);
            } else {
                throw std::invalid_argument("eval: unknown method '" + method + "'");
            }
            print_reports({r}, c.out);
        } else if (*bench_cmd) {
            ExperimentConfig cfg = resolve_config(c);
            apply(mo, cfg);
            if (n) cfg.generation.n = *n;
            if (subset) cfg.test_subset = *subset;
            if (lws_samples) cfg.lws_samples = *lws_samples;
            const BenchResult r = bench(cfg, c.out, progress(mo.verbose));
            print_reports({r.dnn, r.lws}, (std::filesystem::path(c.out) / "comparison.csv").string());
            std::printf("speed ratio (lws / dnn): %.1fx\n", r.lws.time_per_inference_seconds / r.dnn.time_per_inference_seconds);
        } else if (*sweep_cmd) {
            ExperimentConfig cfg = resolve_config(c);
            apply(mo, cfg);
            if (n) cfg.generation.n = *n;
            const auto sizes = parse_sizes(sizes_text);
            const auto cb = progress(mo.verbose);
            const auto entries = sweep(cfg, sizes, c.out, [&](std::size_t size, const EpochStats& s) {
                if (mo.verbose || s.epoch % 100 == 0) std::fprintf(stderr, "[size %zu] ", size);
                cb(s);
            });
            std::vector<EvalReport> reports;
            for (const auto& e : entries) reports.push_back(e.report);
            print_reports(reports, (std::filesystem::path(c.out) / "sweep.csv").string());
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error[%s]: %s\n", error_category(e), e.what());
        return 1;
    }
    return 0;
}
