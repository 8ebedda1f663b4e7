#pragma once

#include <string>

#include "meshfield/model.hpp"

namespace meshfield {

inline constexpr const char* kCheckpointFormat = "meshfield-checkpoint";
inline constexpr int kCheckpointVersion = 1;

/// Checkpoint file: versioned JSON map of parameter name -> shape plus
/// row-major values, together with the model configuration and the
/// condition schema it was built for. Values are stored as doubles, so
/// a 64-bit round-trip is exact.
template <class T>
nlohmann::ordered_json checkpoint_to_json(const Model<T>& model) {
    nlohmann::ordered_json j;
    j["format"] = kCheckpointFormat;
    j["version"] = kCheckpointVersion;
    j["precision"] = sizeof(T) * 8;
    nlohmann::ordered_json cfg;
    to_json(cfg, model.config());
    j["model"] = cfg;
    auto& schema = j["schema"] = nlohmann::ordered_json::array();
    for (auto& g : model.schema().groups())
        schema.push_back({{"name", g.name}, {"dim", g.dim}});
    auto& params = j["params"] = nlohmann::ordered_json::object();
    for (auto& [name, tensor] : model.params()) {
        nlohmann::ordered_json jt;
        jt["shape"] = tensor.shape;
        auto& data = jt["data"] = nlohmann::ordered_json::array();
        for (T v : tensor.data) data.push_back(static_cast<double>(v));
        params[name] = std::move(jt);
    }
    return j;
}

template <class T>
Model<T> checkpoint_from_json(const nlohmann::json& j) {
    if (!j.contains("format") || j["format"] != kCheckpointFormat)
        throw ConfigError("checkpoint: missing or unexpected format field");
    if (j.at("version").get<int>() != kCheckpointVersion)
        throw ConfigError("checkpoint: unsupported version");
    const ModelConfig cfg = model_config_from_json(j.at("model"));
    std::vector<ConditionGroup> groups;
    for (auto& g : j.at("schema"))
        groups.push_back({g.at("name").get<std::string>(), g.at("dim").get<std::size_t>()});
    ConditionSchema schema(std::move(groups));

    ParamStore<T> params;
    for (auto& [name, jt] : j.at("params").items()) {
        Tensor<T> tensor(jt.at("shape").template get<std::vector<std::size_t>>());
        const auto& data = jt.at("data");
        if (data.size() != tensor.size()) throw ConfigError("checkpoint: data length mismatch for " + name);
        for (std::size_t i = 0; i < tensor.size(); ++i)
            tensor[i] = static_cast<T>(data[i].template get<double>());
        params.emplace(name, std::move(tensor));
    }
    // a fresh init of the same config must have the same parameter inventory
    const auto expected = init_params<T>(cfg, schema, 0);
    if (expected.size() != params.size()) throw ConfigError("checkpoint: parameter inventory mismatch");
    for (auto& [name, tensor] : expected) {
        const auto it = params.find(name);
        if (it == params.end()) throw ConfigError("checkpoint: missing parameter " + name);
        if (it->second.shape != tensor.shape) throw ConfigError("checkpoint: shape mismatch for " + name);
    }
    return Model<T>(cfg, schema, std::move(params));
}

template <class T>
void save_checkpoint(const Model<T>& model, const std::string& path) {
    write_text_file(path, checkpoint_to_json(model).dump(1) + "\n");
}

template <class T>
Model<T> load_checkpoint(const std::string& path) {
    try {
        return checkpoint_from_json<T>(nlohmann::json::parse(read_text_file(path)));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("checkpoint parse error in " + path + ": " + e.what());
    }
}

}  // namespace meshfield
