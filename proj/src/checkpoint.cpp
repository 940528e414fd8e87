#include "piro/checkpoint.hpp"

#include <stdexcept>

#include <json.hpp>

#include "piro/io.hpp"

namespace piro {

namespace {

constexpr int kFormatVersion = 1;

nlohmann::json tensor_to_json(const Tensor& t) {
    return nlohmann::json{{"shape", t.shape}, {"data", t.data}};
}

Tensor tensor_from_json(const nlohmann::json& j) {
    return Tensor(j.at("shape").get<std::vector<std::size_t>>(),
                  j.at("data").get<std::vector<double>>());
}

}  // namespace

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
    nlohmann::json j;
    j["format_version"] = kFormatVersion;
    const EncoderConfig& cfg = checkpoint.encoder.config;
    j["config"] = {{"input_dim", cfg.input_dim},
                   {"backbone_widths", cfg.backbone_widths},
                   {"obj_dim", cfg.obj_dim},
                   {"cat_dim", cfg.cat_dim},
                   {"dropout_rate", cfg.dropout_rate},
                   {"dual_space", cfg.dual_space}};
    nlohmann::json tensors = nlohmann::json::object();
    checkpoint.encoder.visit([&](const std::string& name, const Tensor& t) {
        tensors[name] = tensor_to_json(t);
    });
    tensors["classifier.weight"] = tensor_to_json(checkpoint.classifier.weight);
    j["tensors"] = std::move(tensors);

    nlohmann::json optimizer;
    optimizer["step"] = checkpoint.optimizer.step;
    nlohmann::json m = nlohmann::json::object(), v = nlohmann::json::object();
    for (const auto& [name, t] : checkpoint.optimizer.first_moment) m[name] = tensor_to_json(t);
    for (const auto& [name, t] : checkpoint.optimizer.second_moment) v[name] = tensor_to_json(t);
    optimizer["first_moment"] = std::move(m);
    optimizer["second_moment"] = std::move(v);
    j["optimizer"] = std::move(optimizer);

    atomic_write(path, j.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    nlohmann::json j = nlohmann::json::parse(read_file(path));
    if (j.at("format_version").get<int>() != kFormatVersion) {
        throw std::runtime_error("checkpoint: unsupported format version");
    }
    Checkpoint checkpoint;
    const nlohmann::json& cfg = j.at("config");
    EncoderConfig config;
    config.input_dim = cfg.at("input_dim").get<std::size_t>();
    config.backbone_widths = cfg.at("backbone_widths").get<std::vector<std::size_t>>();
    config.obj_dim = cfg.at("obj_dim").get<std::size_t>();
    config.cat_dim = cfg.at("cat_dim").get<std::size_t>();
    config.dropout_rate = cfg.at("dropout_rate").get<double>();
    config.dual_space = cfg.at("dual_space").get<bool>();
    checkpoint.encoder = EncoderParams::init(config, 0);

    const nlohmann::json& tensors = j.at("tensors");
    checkpoint.encoder.visit([&](const std::string& name, Tensor& t) {
        t = tensor_from_json(tensors.at(name));
    });
    checkpoint.classifier.weight = tensor_from_json(tensors.at("classifier.weight"));

    const nlohmann::json& optimizer = j.at("optimizer");
    checkpoint.optimizer.step = optimizer.at("step").get<std::size_t>();
    for (const auto& [name, t] : optimizer.at("first_moment").items()) {
        checkpoint.optimizer.first_moment.emplace(name, tensor_from_json(t));
    }
    for (const auto& [name, t] : optimizer.at("second_moment").items()) {
        checkpoint.optimizer.second_moment.emplace(name, tensor_from_json(t));
    }
    return checkpoint;
}

}  // namespace piro
