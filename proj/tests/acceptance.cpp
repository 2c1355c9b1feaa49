// Acceptance runner: one PASS/FAIL line per criterion.
//
//   acceptance [--criteria 1,2,...] [--work DIR]
//
// End-to-end criteria reuse datasets and checkpoints already present under
// DIR, so repeated runs only pay for training once.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bnapprox/bnapprox.hpp"
#include "checks.hpp"

using namespace bnapprox;
namespace fs = std::filesystem;

namespace tol {
constexpr double exact_error = 1e-9;
constexpr double gradient_rel = 1e-4;
constexpr double lws_growth = 1.1;
constexpr std::size_t alarm_weights = 50750;
constexpr double survey_kl = 0.05;
constexpr double survey_mta = 0.97;
constexpr double asia_kl = 0.15;
constexpr double asia_mta = 0.90;
constexpr double alarm_kl = 0.15;
constexpr double alarm_mta = 0.95;
constexpr double speed_ratio = 100.0;
constexpr double sweep_points = 0.02;
constexpr double normalization = 1e-6;
}  // namespace tol

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string network_path(const std::string& name) { return std::string(BNAPPROX_DATA_DIR) + "/" + name + ".bif"; }

ExperimentConfig recipe(const std::string& name) {
    return load_experiment_config(std::string(BNAPPROX_RECIPE_DIR) + "/" + name + ".json");
}

EpochCallback progress(const std::string& label) {
    return [label](const EpochStats& s) {
        if (s.epoch % 100 == 0)
            std::fprintf(stderr, "  [%s] epoch %zu validation %.5f\n", label.c_str(), s.epoch, s.validation_loss);
    };
}

class Runner {
public:
    explicit Runner(fs::path work) : work_(std::move(work)) { fs::create_directories(work_); }

    Outcome exact_equivalence() {
        double worst = 0.0;
        for (const char* name : {"asia", "survey"})
            worst = std::max(worst, checks::exact_vs_enumeration(load_network(network_path(name)), 100, RngSeed{1001}));
        return {worst <= tol::exact_error, "max |exact - enumeration| over Asia+Survey = " + fmt("%.3g", worst) +
                                               " (tol " + fmt("%g", tol::exact_error) + ")"};
    }

    Outcome gradient() {
        const double worst = checks::gradient_check(20, RngSeed{2002});
        return {worst <= tol::gradient_rel,
                "max relative error over 20 draws = " + fmt("%.3g", worst) + " (tol " + fmt("%g", tol::gradient_rel) + ")"};
    }

    Outcome lws_convergence() {
        const Network net = load_network(network_path("asia"));
        const std::vector<std::size_t> counts{1000, 4000, 16000, 64000};
        const auto curve = checks::lws_error_curve(net, counts, 50, RngSeed{3003});
        bool ok = true;
        std::string d = "mean abs error";
        for (std::size_t k = 0; k < curve.size(); ++k) {
            d += " " + std::to_string(counts[k] / 1000) + "k:" + fmt("%.5f", curve[k]);
            if (k > 0 && curve[k] > tol::lws_growth * curve[k - 1]) ok = false;
        }
        return {ok, d};
    }

    Outcome parameter_count() {
        const ExperimentConfig c = recipe("alarm");
        const ModelConfig m = c.model_for(load_network(c.network_path));
        std::string layers;
        for (std::size_t s : m.layer_sizes) layers += (layers.empty() ? "" : "-") + std::to_string(s);
        return {m.weight_count() == tol::alarm_weights,
                "layers " + layers + " weights " + std::to_string(m.weight_count()) + " (want 50750)"};
    }

    /// Trains (or reloads) the recipe's model and scores it on the whole test split.
    Outcome end_to_end(const std::string& name, double max_kl, double min_mta) {
        const ExperimentConfig c = recipe(name);
        const Network net = load_network(c.network_path);
        const fs::path dir = work_ / name;
        const DatasetSplit split = ensure_dataset((dir / "dataset").string(), net, c.generation);
        const Model m = ensure_model((dir / "model.ckpt").string(), net, c.model_for(net), split.train, c.seed(), progress(name));
        const EvalReport r = evaluate_dnn(m, net, split.test, name, c.thresholds);
        const double acc = mta_at(r.mta_curve, 0.1);
        return {r.avg_kl <= max_kl && acc >= min_mta,
                "test n=" + std::to_string(r.n_examples) + " avg KL " + fmt("%.4f", r.avg_kl) + " (<= " + fmt("%g", max_kl) +
                    "), MTA@0.1 " + fmt("%.4f", acc) + " (>= " + fmt("%g", min_mta) + "), epochs " +
                    std::to_string(m.info.epochs_run) + " best " + std::to_string(m.info.best_epoch)};
    }

    Outcome alarm_bench() {
        const ExperimentConfig c = recipe("alarm");
        const BenchResult b = bench(c, (work_ / "alarm").string(), progress("alarm"));
        const double dnn_acc = mta_at(b.dnn.mta_curve, 0.1), lws_acc = mta_at(b.lws.mta_curve, 0.1);
        const bool ok = b.dnn.avg_kl <= tol::alarm_kl && dnn_acc >= tol::alarm_mta && b.dnn.avg_kl < b.lws.avg_kl &&
                        dnn_acc > lws_acc;
        return {ok, "subset n=" + std::to_string(b.dnn.n_examples) + " DNN KL " + fmt("%.4f", b.dnn.avg_kl) + " MTA@0.1 " +
                        fmt("%.4f", dnn_acc) + " | LWS-1000 KL " + fmt("%.4f", b.lws.avg_kl) + " MTA@0.1 " +
                        fmt("%.4f", lws_acc) + " (" + std::to_string(b.lws.failures) + " zero-weight runs)"};
    }

    Outcome speed_ratio() {
        // Timing does not depend on the weights, so an untrained model with the
        // recipe architecture stands in when no trained checkpoint exists yet.
        const ExperimentConfig c = recipe("alarm");
        const Network net = load_network(c.network_path);
        const fs::path ckpt = work_ / "alarm" / "model.ckpt";
        Model model;
        std::string which = "trained";
        if (fs::exists(ckpt)) {
            model = load_checkpoint(ckpt.string());
        } else {
            Rng rng(derive_seed(c.seed(), train_stream));
            model = init_model(EncodingLayout::of(net), c.model_for(net), rng);
            which = "untrained";
        }
        GenerationConfig g = c.generation;
        g.n = 2 * c.test_subset;
        const DatasetSplit split = generate_dataset(net, g);
        const std::span<const Example> subset(split.test.data(), std::min(c.test_subset, split.test.size()));
        double dnn = 1e300, lws = 1e300;
        for (int rep = 0; rep < 3; ++rep) {
            dnn = std::min(dnn, evaluate_dnn(model, net, subset, "alarm", c.thresholds).time_per_inference_seconds);
            lws = std::min(lws, evaluate_lws(net, subset, c.lws_samples, c.seed(), "alarm", c.thresholds).time_per_inference_seconds);
        }
        const double ratio = lws / dnn;
        return {ratio >= tol::speed_ratio, "DNN (" + which + ") " + fmt("%.3g", dnn * 1e6) + " us, LWS-" +
                                               std::to_string(c.lws_samples) + " " + fmt("%.3g", lws * 1e6) + " us, ratio " +
                                               fmt("%.1f", ratio) + " (>= " + fmt("%g", tol::speed_ratio) + ")"};
    }

    Outcome saturation_sweep() {
        const ExperimentConfig c = recipe("alarm");
        const fs::path dir = work_ / "alarm_sweep";
        // The sweep shares the bench dataset so its 5000 model is the bench model.
        if (!fs::exists(dir / "dataset") && fs::exists(work_ / "alarm" / "dataset")) {
            fs::create_directories(dir);
            fs::copy(work_ / "alarm" / "dataset", dir / "dataset", fs::copy_options::recursive);
        }
        const std::vector<std::size_t> sizes{100, 500, 5000};
        const auto entries = sweep(c, sizes, dir.string(), [](std::size_t s, const EpochStats& st) {
            if (st.epoch % 100 == 0)
                std::fprintf(stderr, "  [sweep %zu] epoch %zu validation %.5f\n", s, st.epoch, st.validation_loss);
        });
        std::map<std::size_t, double> acc;
        for (const auto& e : entries) acc[e.train_size] = mta_at(e.report.mta_curve, 0.1);
        const bool ok = acc[500] >= acc[5000] - tol::sweep_points && acc[100] < acc[500];
        return {ok, "MTA@0.1 100:" + fmt("%.4f", acc[100]) + " 500:" + fmt("%.4f", acc[500]) + " 5000:" + fmt("%.4f", acc[5000]) +
                        " (500 within " + fmt("%g", 100 * tol::sweep_points) + " points of 5000; 100 < 500)"};
    }

    Outcome properties() {
        std::vector<std::string> failed;
        auto require = [&](bool ok, const std::string& what) {
            if (!ok) failed.push_back(what);
        };
        auto normalized = [](const PosteriorSet& p) {
            for (const auto& b : p.marginals)
                if (std::abs(std::accumulate(b.begin(), b.end(), 0.0) - 1.0) > tol::normalization) return false;
            return true;
        };

        for (const char* name : {"asia", "survey", "alarm", "insurance"}) {
            const Network net = load_network(network_path(name));
            const EncodingLayout layout = EncodingLayout::of(net);
            ModelConfig mc;
            mc.layer_sizes = ModelConfig::layers_for(layout.total_dim, std::vector<std::size_t>{16, 16});
            Rng rng(derive_seed(RngSeed{4004}, fnv1a64(name)));
            const Model model = init_model(layout, mc, rng);
            for (int trial = 0; trial < 25; ++trial) {
                const Evidence ev = sample_evidence(net, rng.uniform() * 0.5, EvidenceMode::consistent, rng);
                require(decode_evidence(layout, encode_evidence(layout, ev)) == ev, std::string(name) + ": encode/decode");
                require(normalized(exact_posteriors(net, ev).posteriors), std::string(name) + ": exact normalization");
                Rng lrng(derive_seed(RngSeed{4005}, static_cast<std::uint64_t>(trial)));
                require(normalized(lws_posteriors(net, ev, 200, lrng)), std::string(name) + ": lws normalization");
                require(normalized(predict(model, ev)), std::string(name) + ": dnn normalization");
            }
        }

        Rng rng(RngSeed{4006});
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<PosteriorSet> t, p;
            for (int n = 0; n < 10; ++n) {
                const auto a = checks::random_example(checks::synthetic_layout({2, 3, 4}), rng);
                const auto b = checks::random_example(checks::synthetic_layout({2, 3, 4}), rng);
                t.push_back(unflatten(checks::synthetic_layout({2, 3, 4}), a.target));
                p.push_back(unflatten(checks::synthetic_layout({2, 3, 4}), b.target));
            }
            require(avg_kl(t, p) >= 0.0, "kl non-negative");
            require(avg_kl(t, t) == 0.0, "kl self-divergence");
            std::vector<double> grid;
            for (int k = 1; k <= 50; ++k) grid.push_back(k / 50.0);
            const auto curve = mta(t, p, grid);
            for (std::size_t k = 1; k < curve.size(); ++k) require(curve[k].accuracy >= curve[k - 1].accuracy, "mta monotone");
        }

        const Network survey = load_network(network_path("survey"));
        GenerationConfig g;
        g.n = 100;
        g.seed = RngSeed{4007};
        const fs::path a = work_ / "prop_a", b = work_ / "prop_b";
        fs::remove_all(a);
        fs::remove_all(b);
        write_dataset(a.string(), survey, generate_dataset(survey, g));
        write_dataset(b.string(), survey, generate_dataset(survey, g));
        for (const char* f : {"train.jsonl", "test.jsonl", "manifest.json"})
            require(read_file((a / f).string()) == read_file((b / f).string()), std::string("dataset bytes: ") + f);
        const DatasetSplit split = read_dataset(a.string(), survey);
        ModelConfig mc;
        mc.layer_sizes = ModelConfig::layers_for(evidence_dim(survey), std::vector<std::size_t>{8});
        mc.max_epochs = 3;
        const Model m1 = train_dnn(survey, mc, split.train, g.seed);
        const Model m2 = train_dnn(survey, mc, split.train, g.seed);
        require(serialize_checkpoint(m1) == serialize_checkpoint(m2), "checkpoint bytes");
        require(serialize_checkpoint(deserialize_checkpoint(serialize_checkpoint(m1))) == serialize_checkpoint(m1),
                "checkpoint round trip");
        fs::remove_all(a);
        fs::remove_all(b);

        std::string d = failed.empty() ? "normalization, KL >= 0, MTA monotone, encode/decode, byte determinism: all hold"
                                       : "violations:";
        for (const auto& f : failed) d += " " + f + ";";
        return {failed.empty(), d};
    }

private:
    fs::path work_;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bnapprox acceptance criteria"};
    std::string which = "1,2,3,4,5,6,7,8,9,10";
    std::string work = "acceptance_work";
    app.add_option("--criteria", which, "Comma-separated criterion numbers");
    app.add_option("--work", work, "Directory for datasets and checkpoints");
    CLI11_PARSE(app, argc, argv);

    std::set<int> selected;
    std::stringstream ss(which);
    for (std::string tok; std::getline(ss, tok, ',');)
        if (!tok.empty()) selected.insert(std::stoi(tok));

    Runner r{fs::path(work)};
    const std::vector<std::pair<int, std::pair<std::string, std::function<Outcome()>>>> criteria{
        {1, {"exact inference matches enumeration", [&] { return r.exact_equivalence(); }}},
        {2, {"gradient check", [&] { return r.gradient(); }}},
        {3, {"LWS convergence on Asia", [&] { return r.lws_convergence(); }}},
        {4, {"Alarm parameter count", [&] { return r.parameter_count(); }}},
        {5, {"Survey end-to-end", [&] { return r.end_to_end("survey", tol::survey_kl, tol::survey_mta); }}},
        {6, {"Asia end-to-end", [&] { return r.end_to_end("asia", tol::asia_kl, tol::asia_mta); }}},
        {7, {"Alarm end-to-end vs LWS", [&] { return r.alarm_bench(); }}},
        {8, {"speed ratio on Alarm", [&] { return r.speed_ratio(); }}},
        {9, {"Alarm saturation sweep", [&] { return r.saturation_sweep(); }}},
        {10, {"property suites", [&] { return r.properties(); }}},
    };

    int failures = 0;
    for (const auto& [id, entry] : criteria) {
        if (!selected.count(id)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = entry.second();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("[%s] %2d %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, entry.first.c_str(), o.detail.c_str(), secs);
        std::fflush(stdout);
        failures += o.pass ? 0 : 1;
    }
    return failures == 0 ? 0 : 1;
}
