#pragma once

// Checkpoint layout:
//
//   BNAPPROX-CHECKPOINT 1\n
//   <one-line JSON header: config, layout fingerprint, shapes, training info>\n
//   <payload: per layer, weights row-major (out x in) then biases, each value
//    an IEEE-754 double stored little-endian>

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "json.hpp"

#include "bnapprox/fingerprint.hpp"
#include "bnapprox/nn.hpp"

namespace bnapprox {

inline constexpr const char* checkpoint_magic = "BNAPPROX-CHECKPOINT 1";

namespace detail {

inline void put_f64(std::string& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>((bits >> (8 * k)) & 0xff));
}

inline double get_f64(const unsigned char* p) {
    std::uint64_t bits = 0;
    for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(p[k]) << (8 * k);
    return std::bit_cast<double>(bits);
}

}  // namespace detail

inline nlohmann::ordered_json model_config_json(const ModelConfig& c) {
    nlohmann::ordered_json j;
    j["layer_sizes"] = c.layer_sizes;
    j["l2_lambda"] = c.l2_lambda;
    j["learning_rate"] = c.learning_rate;
    j["momentum"] = c.momentum;
    j["batch_size"] = c.batch_size;
    j["max_epochs"] = c.max_epochs;
    j["early_stop_patience"] = c.early_stop_patience;
    j["use_bias"] = c.use_bias;
    return j;
}

inline ModelConfig model_config_from_json(const nlohmann::ordered_json& j) {
    ModelConfig c;
    c.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
    c.l2_lambda = j.at("l2_lambda").get<double>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.momentum = j.at("momentum").get<double>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.max_epochs = j.at("max_epochs").get<std::size_t>();
    c.early_stop_patience = j.at("early_stop_patience").get<std::size_t>();
    c.use_bias = j.at("use_bias").get<bool>();
    return c;
}

inline std::string serialize_checkpoint(const Model& model) {
    std::string payload;
    nlohmann::ordered_json shapes = nlohmann::ordered_json::array();
    for (std::size_t l = 0; l < model.params.layers(); ++l) {
        const auto& w = model.params.weights[l];
        const auto& b = model.params.biases[l];
        shapes.push_back({{"rows", w.rows()}, {"cols", w.cols()}, {"bias", b.size()}});
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) detail::put_f64(payload, w(r, c));
        for (Eigen::Index r = 0; r < b.size(); ++r) detail::put_f64(payload, b(r));
    }
    nlohmann::ordered_json header;
    header["config"] = model_config_json(model.config);
    header["config_fingerprint"] = hex64(fnv1a64(header["config"].dump()));
    header["layout"] = {{"fingerprint", model.layout.fingerprint},
                        {"fingerprint_hash", model.layout.fingerprint_hash()},
                        {"cardinalities", model.layout.cards}};
    header["shapes"] = std::move(shapes);
    header["training"] = {{"seed", model.info.seed},
                          {"epochs_run", model.info.epochs_run},
                          {"best_epoch", model.info.best_epoch},
                          {"best_validation_loss", model.info.best_validation_loss}};
    header["payload_bytes"] = payload.size();
    header["payload_checksum"] = "fnv1a64:" + hex64(fnv1a64(payload));

    std::string out = checkpoint_magic;
    out += '\n';
    out += header.dump();
    out += '\n';
    out += payload;
    return out;
}

inline Model deserialize_checkpoint(const std::string& bytes) {
    const std::string magic = std::string(checkpoint_magic) + "\n";
    if (bytes.compare(0, magic.size(), magic) != 0) throw std::runtime_error("not a bnapprox checkpoint");
    const auto header_end = bytes.find('\n', magic.size());
    if (header_end == std::string::npos) throw std::runtime_error("checkpoint: truncated header");
    const auto header = nlohmann::ordered_json::parse(bytes.substr(magic.size(), header_end - magic.size()));
    const std::string payload = bytes.substr(header_end + 1);
    if (payload.size() != header.at("payload_bytes").get<std::size_t>())
        throw std::runtime_error("checkpoint: payload size mismatch");
    if ("fnv1a64:" + hex64(fnv1a64(payload)) != header.at("payload_checksum").get<std::string>())
        throw std::runtime_error("checkpoint: payload checksum mismatch");

    Model m;
    m.config = model_config_from_json(header.at("config"));
    const auto cards = header.at("layout").at("cardinalities").get<std::vector<std::size_t>>();
    for (std::size_t c : cards) {
        m.layout.offsets.push_back(m.layout.total_dim);
        m.layout.cards.push_back(c);
        m.layout.total_dim += c;
    }
    m.layout.fingerprint = header.at("layout").at("fingerprint").get<std::string>();
    m.config.validate(m.layout);
    const auto& tr = header.at("training");
    m.info.seed = tr.at("seed").get<std::uint64_t>();
    m.info.epochs_run = tr.at("epochs_run").get<std::size_t>();
    m.info.best_epoch = tr.at("best_epoch").get<std::size_t>();
    m.info.best_validation_loss = tr.at("best_validation_loss").is_null()
                                      ? std::numeric_limits<double>::infinity()
                                      : tr.at("best_validation_loss").get<double>();

    m.params = Parameters::zeros(m.config);
    const auto& shapes = header.at("shapes");
    if (shapes.size() != m.params.layers()) throw std::runtime_error("checkpoint: layer count mismatch");
    const auto* p = reinterpret_cast<const unsigned char*>(payload.data());
    std::size_t offset = 0;
    auto next = [&]() {
        if (offset + 8 > payload.size()) throw std::runtime_error("checkpoint: payload too short");
        const double v = detail::get_f64(p + offset);
        offset += 8;
        return v;
    };
    for (std::size_t l = 0; l < m.params.layers(); ++l) {
        auto& w = m.params.weights[l];
        auto& b = m.params.biases[l];
        if (shapes[l].at("rows").get<Eigen::Index>() != w.rows() || shapes[l].at("cols").get<Eigen::Index>() != w.cols() ||
            shapes[l].at("bias").get<Eigen::Index>() != b.size())
            throw std::runtime_error("checkpoint: layer " + std::to_string(l) + " shape disagrees with config");
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = next();
        for (Eigen::Index r = 0; r < b.size(); ++r) b(r) = next();
    }
    if (offset != payload.size()) throw std::runtime_error("checkpoint: trailing payload bytes");
    return m;
}

inline void save_checkpoint(const std::string& path, const Model& model) { write_file(path, serialize_checkpoint(model)); }

inline Model load_checkpoint(const std::string& path) { return deserialize_checkpoint(read_file(path)); }

/// Throws unless `model` was trained against `net`'s encoding.
inline void check_model_matches(const Model& model, const Network& net) {
    if (!(model.layout == EncodingLayout::of(net)))
        throw std::runtime_error("model was trained for a different network (layout fingerprint mismatch)");
}

}  // namespace bnapprox
