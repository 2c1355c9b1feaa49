#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "bnapprox/exact.hpp"
#include "bnapprox/fingerprint.hpp"
#include "bnapprox/network.hpp"
#include "bnapprox/rng.hpp"
#include "bnapprox/sampler.hpp"

namespace bnapprox {

/// Slot layout of the one-hot input / multi-softmax output vectors: one block
/// of |V_i| slots per variable, in variable order.
struct EncodingLayout {
    std::vector<std::size_t> offsets;
    std::vector<std::size_t> cards;
    std::size_t total_dim = 0;
    /// Network name, variable names and cardinalities; binds models and
    /// datasets to the network they were built for.
    std::string fingerprint;

    static EncodingLayout of(const Network& net) {
        EncodingLayout layout;
        std::string fp = net.name();
        for (const auto& v : net.variables()) {
            layout.offsets.push_back(layout.total_dim);
            layout.cards.push_back(v.cardinality());
            layout.total_dim += v.cardinality();
            fp += ";" + v.name + ":" + std::to_string(v.cardinality());
        }
        layout.fingerprint = fp;
        return layout;
    }

    std::size_t variables() const noexcept { return cards.size(); }

    std::string fingerprint_hash() const { return hex64(fnv1a64(fingerprint)); }

    friend bool operator==(const EncodingLayout&, const EncodingLayout&) = default;
};

inline std::vector<double> encode_evidence(const EncodingLayout& layout, const Evidence& ev) {
    std::vector<double> x(layout.total_dim, 0.0);
    for (const auto& [var, val] : ev) {
        if (var >= layout.variables() || val >= layout.cards[var])
            throw std::invalid_argument("encode_evidence: evidence does not match layout");
        x[layout.offsets[var] + val] = 1.0;
    }
    return x;
}

/// Inverse of encode_evidence. Each block must be all-zero or one-hot.
inline Evidence decode_evidence(const EncodingLayout& layout, std::span<const double> input) {
    if (input.size() != layout.total_dim) throw std::invalid_argument("decode_evidence: length mismatch");
    Evidence ev;
    for (std::size_t i = 0; i < layout.variables(); ++i) {
        std::size_t ones = 0, at = 0;
        for (std::size_t k = 0; k < layout.cards[i]; ++k) {
            const double v = input[layout.offsets[i] + k];
            if (v == 1.0) {
                ++ones;
                at = k;
            } else if (v != 0.0) {
                throw std::invalid_argument("decode_evidence: entries must be 0 or 1");
            }
        }
        if (ones > 1) throw std::invalid_argument("decode_evidence: block is not one-hot");
        if (ones == 1) ev.set(i, at);
    }
    return ev;
}

inline std::vector<double> flatten(const EncodingLayout& layout, const PosteriorSet& post) {
    if (post.size() != layout.variables()) throw std::invalid_argument("flatten: posterior does not match layout");
    std::vector<double> out(layout.total_dim);
    for (std::size_t i = 0; i < layout.variables(); ++i) {
        if (post[i].size() != layout.cards[i]) throw std::invalid_argument("flatten: block size mismatch");
        std::copy(post[i].begin(), post[i].end(), out.begin() + static_cast<std::ptrdiff_t>(layout.offsets[i]));
    }
    return out;
}

inline PosteriorSet unflatten(const EncodingLayout& layout, std::span<const double> flat) {
    if (flat.size() != layout.total_dim) throw std::invalid_argument("unflatten: length mismatch");
    PosteriorSet post;
    post.marginals.resize(layout.variables());
    for (std::size_t i = 0; i < layout.variables(); ++i)
        post[i].assign(flat.begin() + static_cast<std::ptrdiff_t>(layout.offsets[i]),
                       flat.begin() + static_cast<std::ptrdiff_t>(layout.offsets[i] + layout.cards[i]));
    return post;
}

enum class EvidenceMode { uniform, consistent };

inline const char* to_string(EvidenceMode m) noexcept { return m == EvidenceMode::uniform ? "uniform" : "consistent"; }

inline EvidenceMode parse_evidence_mode(std::string_view s) {
    if (s == "uniform") return EvidenceMode::uniform;
    if (s == "consistent") return EvidenceMode::consistent;
    throw std::invalid_argument("unknown evidence mode '" + std::string(s) + "' (expected uniform|consistent)");
}

/// Random observation set: each variable observed independently with
/// probability `p_obs`; values uniform, or read off a forward sample.
inline Evidence sample_evidence(const Network& net, double p_obs, EvidenceMode mode, Rng& rng) {
    if (!(p_obs >= 0.0 && p_obs <= 1.0)) throw std::invalid_argument("sample_evidence: p_obs must lie in [0, 1]");
    Evidence ev;
    if (mode == EvidenceMode::consistent) {
        const auto x = forward_sample(net, rng);
        for (std::size_t i = 0; i < net.size(); ++i)
            if (rng.bernoulli(p_obs)) ev.set(i, x[i]);
    } else {
        for (std::size_t i = 0; i < net.size(); ++i)
            if (rng.bernoulli(p_obs)) ev.set(i, static_cast<std::size_t>(rng.below(net.cardinality(i))));
    }
    return ev;
}

struct Example {
    std::uint64_t id = 0;
    Evidence evidence;
    std::vector<double> input;
    std::vector<double> target;
    double evidence_probability = 1.0;
};

inline Example make_example(const Network& net, const EncodingLayout& layout, std::uint64_t id, const Evidence& ev) {
    ExactResult exact = exact_posteriors(net, ev);
    return Example{id, ev, encode_evidence(layout, ev), flatten(layout, exact.posteriors), exact.evidence_probability};
}

struct GenerationConfig {
    std::size_t n = 10000;
    double p_obs = 0.3;
    EvidenceMode mode = EvidenceMode::uniform;
    RngSeed seed{};
};

struct DatasetSplit {
    std::vector<Example> train;
    std::vector<Example> test;
    GenerationConfig config;
    std::size_t rejected = 0;
};

class GenerationStalled : public std::runtime_error {
public:
    explicit GenerationStalled(std::size_t draws)
        : std::runtime_error("dataset generation stalled: " + std::to_string(draws) +
                             " consecutive evidence draws were impossible") {}
};

/// Stream index used for the train/test shuffle (examples use 0..n-1).
inline constexpr std::uint64_t split_stream = 0xffffffffffff0001ULL;

/// n labelled examples. Example k draws from its own stream derived from
/// (seed, k) and redraws until the evidence is possible; the examples are then
/// split 50/50 by a seeded shuffle (train gets the extra one when n is odd).
inline DatasetSplit generate_dataset(const Network& net, const GenerationConfig& config) {
    if (config.n < 2) throw std::invalid_argument("generate_dataset: n must be at least 2");
    const EncodingLayout layout = EncodingLayout::of(net);
    const std::size_t stall_limit = 100 * config.n;

    DatasetSplit split;
    split.config = config;
    std::vector<Example> all;
    all.reserve(config.n);
    for (std::uint64_t k = 0; k < config.n; ++k) {
        Rng rng(derive_seed(config.seed, k));
        std::size_t failures = 0;
        while (true) {
            Evidence ev = sample_evidence(net, config.p_obs, config.mode, rng);
            try {
                all.push_back(make_example(net, layout, k, ev));
                break;
            } catch (const ImpossibleEvidence&) {
                ++split.rejected;
                if (++failures >= stall_limit) throw GenerationStalled(failures);
            }
        }
    }

    std::vector<std::size_t> order(all.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    Rng split_rng(derive_seed(config.seed, split_stream));
    split_rng.shuffle(order);
    const std::size_t n_train = all.size() - all.size() / 2;
    for (std::size_t k = 0; k < order.size(); ++k)
        (k < n_train ? split.train : split.test).push_back(std::move(all[order[k]]));
    return split;
}

// ---------------------------------------------------------------------------
// Line-record files

inline nlohmann::ordered_json example_to_json(const Network& net, const Example& ex) {
    nlohmann::ordered_json rec;
    rec["id"] = ex.id;
    nlohmann::ordered_json ev = nlohmann::ordered_json::object();
    for (const auto& [var, val] : ex.evidence) ev[net.variable(var).name] = net.variable(var).labels[val];
    rec["evidence"] = std::move(ev);
    rec["p_evidence"] = ex.evidence_probability;
    nlohmann::ordered_json input = nlohmann::ordered_json::array();
    for (double v : ex.input) input.push_back(static_cast<int>(v));
    rec["input"] = std::move(input);
    rec["target"] = ex.target;
    return rec;
}

inline Example example_from_json(const Network& net, const EncodingLayout& layout, const nlohmann::ordered_json& rec) {
    Example ex;
    ex.id = rec.at("id").get<std::uint64_t>();
    for (const auto& [name, label] : rec.at("evidence").items())
        add_evidence(net, ex.evidence, name + "=" + label.get<std::string>());
    ex.evidence_probability = rec.at("p_evidence").get<double>();
    ex.input = rec.at("input").get<std::vector<double>>();
    ex.target = rec.at("target").get<std::vector<double>>();
    if (ex.input != encode_evidence(layout, ex.evidence))
        throw std::runtime_error("example " + std::to_string(ex.id) + ": input does not encode its evidence");
    if (ex.target.size() != layout.total_dim)
        throw std::runtime_error("example " + std::to_string(ex.id) + ": target length mismatch");
    return ex;
}

inline std::string examples_to_jsonl(const Network& net, std::span<const Example> examples) {
    std::string out;
    for (const auto& ex : examples) {
        out += example_to_json(net, ex).dump();
        out += '\n';
    }
    return out;
}

inline std::vector<Example> read_examples(const std::string& path, const Network& net) {
    const EncodingLayout layout = EncodingLayout::of(net);
    std::istringstream in(read_file(path));
    std::vector<Example> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(example_from_json(net, layout, nlohmann::ordered_json::parse(line)));
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

/// Fraction of test examples whose evidence set also occurs in train.
inline double evidence_overlap_rate(const DatasetSplit& split) {
    if (split.test.empty()) return 0.0;
    std::set<Evidence> seen;
    for (const auto& ex : split.train) seen.insert(ex.evidence);
    std::size_t hits = 0;
    for (const auto& ex : split.test) hits += seen.count(ex.evidence);
    return static_cast<double>(hits) / static_cast<double>(split.test.size());
}

inline nlohmann::ordered_json generation_config_json(const GenerationConfig& c) {
    nlohmann::ordered_json j;
    j["n"] = c.n;
    j["p_obs"] = c.p_obs;
    j["mode"] = to_string(c.mode);
    j["seed"] = c.seed.value;
    return j;
}

/// Writes train.jsonl, test.jsonl and manifest.json into `dir`.
inline void write_dataset(const std::string& dir, const Network& net, const DatasetSplit& split) {
    std::filesystem::create_directories(dir);
    const EncodingLayout layout = EncodingLayout::of(net);
    const std::string train_path = (std::filesystem::path(dir) / "train.jsonl").string();
    const std::string test_path = (std::filesystem::path(dir) / "test.jsonl").string();
    write_file(train_path, examples_to_jsonl(net, split.train));
    write_file(test_path, examples_to_jsonl(net, split.test));

    nlohmann::ordered_json m;
    m["format"] = "bnapprox-dataset/1";
    m["network"] = net.name();
    m["layout_fingerprint"] = layout.fingerprint_hash();
    m["total_dim"] = layout.total_dim;
    m["config"] = generation_config_json(split.config);
    m["config_fingerprint"] = hex64(fnv1a64(m["config"].dump()));
    m["seed"] = split.config.seed.value;
    m["n_train"] = split.train.size();
    m["n_test"] = split.test.size();
    m["rejected_draws"] = split.rejected;
    m["evidence_overlap_rate"] = evidence_overlap_rate(split);
    m["files"]["train.jsonl"] = file_checksum(train_path);
    m["files"]["test.jsonl"] = file_checksum(test_path);
    write_file((std::filesystem::path(dir) / "manifest.json").string(), m.dump(2) + "\n");
}

/// Reads a dataset directory, verifying checksums and the network binding.
inline DatasetSplit read_dataset(const std::string& dir, const Network& net) {
    const auto root = std::filesystem::path(dir);
    const auto manifest = nlohmann::ordered_json::parse(read_file((root / "manifest.json").string()));
    const EncodingLayout layout = EncodingLayout::of(net);
    if (manifest.at("layout_fingerprint").get<std::string>() != layout.fingerprint_hash())
        throw std::runtime_error("dataset '" + dir + "' was generated for a different network");
    for (const char* file : {"train.jsonl", "test.jsonl"}) {
        const auto expected = manifest.at("files").at(file).get<std::string>();
        if (file_checksum((root / file).string()) != expected)
            throw std::runtime_error("dataset file '" + (root / file).string() + "' does not match its manifest checksum");
    }
    DatasetSplit split;
    const auto& cfg = manifest.at("config");
    split.config.n = cfg.at("n").get<std::size_t>();
    split.config.p_obs = cfg.at("p_obs").get<double>();
    split.config.mode = parse_evidence_mode(cfg.at("mode").get<std::string>());
    split.config.seed = RngSeed{cfg.at("seed").get<std::uint64_t>()};
    split.rejected = manifest.at("rejected_draws").get<std::size_t>();
    split.train = read_examples((root / "train.jsonl").string(), net);
    split.test = read_examples((root / "test.jsonl").string(), net);
    return split;
}

}  // namespace bnapprox
