#pragma once

#include <string>
#include <vector>

#include "meshfield/benchmarks.hpp"
#include "meshfield/training.hpp"

namespace meshfield {

inline constexpr int kRunConfigVersion = 1;

inline void train_config_to_json(nlohmann::ordered_json& j, const TrainConfig& c) {
    j = nlohmann::ordered_json{{"optimizer", c.optimizer},
                               {"lr", c.lr},
                               {"epochs", c.epochs},
                               {"steps_per_epoch", c.steps_per_epoch},
                               {"batch_instances", c.batch_instances},
                               {"loss", to_string(c.loss)},
                               {"data_points", c.data_points},
                               {"colloc_points", c.colloc_points},
                               {"boundary_points", c.boundary_points},
                               {"weight_pde", c.weight_pde},
                               {"weight_data", c.weight_data},
                               {"weight_bc", c.weight_bc},
                               {"weight_decay", c.weight_decay},
                               {"stencil_h_rel", c.stencil_h_rel},
                               {"val_points", c.val_points},
                               {"val_field", c.val_field}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
    for (auto& [key, val] : j.items()) {
        if (key == "optimizer") c.optimizer = val.get<std::string>();
        else if (key == "lr") c.lr = val.get<double>();
        else if (key == "epochs") c.epochs = val.get<int>();
        else if (key == "steps_per_epoch") c.steps_per_epoch = val.get<int>();
        else if (key == "batch_instances") c.batch_instances = val.get<int>();
        else if (key == "loss") c.loss = loss_kind_from(val.get<std::string>());
        else if (key == "data_points") c.data_points = val.get<int>();
        else if (key == "colloc_points") c.colloc_points = val.get<int>();
        else if (key == "boundary_points") c.boundary_points = val.get<int>();
        else if (key == "weight_pde") c.weight_pde = val.get<double>();
        else if (key == "weight_data") c.weight_data = val.get<double>();
        else if (key == "weight_bc") c.weight_bc = val.get<double>();
        else if (key == "weight_decay") c.weight_decay = val.get<double>();
        else if (key == "stencil_h_rel") c.stencil_h_rel = val.get<double>();
        else if (key == "val_points") c.val_points = val.get<int>();
        else if (key == "val_field") c.val_field = val.get<int>();
        else throw ConfigError("train config: unknown key '" + key + "'");
    }
    c.validate();
    return c;
}

/// One experiment: benchmark, model and optimizer settings, schema, and
/// file locations. Field defaults come from the per-benchmark tables;
/// JSON overlays them, command-line flags overlay the JSON.
struct RunConfig {
    std::string benchmark = "poisson";
    std::uint64_t seed = 0;
    int precision = 64;
    ModelConfig model;
    TrainConfig train;
    std::vector<ConditionGroup> schema;
    std::string data_dir;  // dataset directory (gen output)
    std::string out_dir = "out";

    ConditionSchema condition_schema() const { return ConditionSchema(schema); }
};

/// Reference configurations per benchmark. Model rows follow the
/// published configuration table; optimizer rows are the desk-scale
/// Adam substitutions (the published settings lean on L-BFGS phases).
inline RunConfig default_run_config(const std::string& benchmark) {
    RunConfig rc;
    rc.benchmark = benchmark;
    if (benchmark == "poisson") {
        rc.model.d_emb = 16;
        rc.model.patch_size = 4;
        rc.model.hilbert_order = 16;
        rc.model.d_model = 32;
        rc.model.n_encoder = 2;
        rc.model.n_decoder = 2;
        rc.model.n_head = 1;
        rc.model.output_dim = 1;
        rc.model.embedding = EmbeddingKind::feedforward;
        rc.schema = {{"source", 1}};
        rc.train.loss = LossKind::poisson;
        rc.train.lr = 2e-3;
        rc.train.epochs = 60;
        rc.train.steps_per_epoch = 20;
        rc.train.data_points = 256;
        rc.train.colloc_points = 64;
        rc.train.weight_pde = 1e-3;
        rc.train.val_points = 512;
    } else if (benchmark == "beam2d") {
        rc.model.d_emb = 32;
        rc.model.patch_size = 128;
        rc.model.hilbert_order = 16;
        rc.model.d_model = 128;
        rc.model.n_encoder = 2;
        rc.model.n_decoder = 2;
        rc.model.n_head = 2;
        rc.model.output_dim = 5;
        rc.model.embedding = EmbeddingKind::gated;
        rc.schema = {{"traction", 1}};
        rc.train.loss = LossKind::data_only;
        rc.train.lr = 1e-3;
        rc.train.epochs = 40;
        rc.train.steps_per_epoch = 25;
        rc.train.batch_instances = 2;
        rc.train.data_points = 128;
        rc.train.val_points = 256;
        rc.train.val_field = 0;
    } else if (benchmark == "heatsink2d") {
        rc.model.d_emb = 32;
        rc.model.patch_size = 64;
        rc.model.hilbert_order = 16;
        rc.model.d_model = 128;
        rc.model.n_encoder = 2;
        rc.model.n_decoder = 2;
        rc.model.n_head = 2;
        rc.model.output_dim = 1;
        rc.model.embedding = EmbeddingKind::gated;
        rc.schema = {{"dirichlet", 1}, {"neumann", 4}};
        rc.train.loss = LossKind::conduction;
        rc.train.lr = 1e-3;
        rc.train.epochs = 100;
        rc.train.steps_per_epoch = 10;
        rc.train.batch_instances = 2;
        rc.train.colloc_points = 64;
        rc.train.boundary_points = 48;
    } else if (benchmark == "ambiguity") {
        rc.model.d_emb = 16;
        rc.model.patch_size = 16;
        rc.model.hilbert_order = 16;
        rc.model.d_model = 64;
        rc.model.n_encoder = 2;
        rc.model.n_decoder = 2;
        rc.model.n_head = 2;
        rc.model.output_dim = 1;
        rc.model.embedding = EmbeddingKind::gated;
        rc.schema = {{"dirichlet", 1}, {"neumann", 4}};
        rc.train.loss = LossKind::conduction;
        rc.train.lr = 2e-3;
        rc.train.epochs = 40;
        rc.train.steps_per_epoch = 10;
        rc.train.batch_instances = 2;
        rc.train.colloc_points = 48;
        rc.train.boundary_points = 32;
    } else {
        throw ConfigError("unknown benchmark '" + benchmark + "'");
    }
    return rc;
}

inline nlohmann::ordered_json run_config_to_json(const RunConfig& rc) {
    nlohmann::ordered_json j;
    j["version"] = kRunConfigVersion;
    j["benchmark"] = rc.benchmark;
    j["seed"] = rc.seed;
    j["precision"] = rc.precision;
    nlohmann::ordered_json jm;
    to_json(jm, rc.model);
    j["model"] = jm;
    nlohmann::ordered_json jt;
    train_config_to_json(jt, rc.train);
    j["train"] = jt;
    auto& js = j["schema"] = nlohmann::ordered_json::array();
    for (auto& g : rc.schema) js.push_back({{"name", g.name}, {"dim", g.dim}});
    j["paths"] = {{"data", rc.data_dir}, {"out", rc.out_dir}};
    return j;
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    if (!j.contains("benchmark")) throw ConfigError("run config: missing 'benchmark'");
    RunConfig rc = default_run_config(j.at("benchmark").get<std::string>());
    for (auto& [key, val] : j.items()) {
        if (key == "version") {
            if (val.get<int>() != kRunConfigVersion) throw ConfigError("run config: unsupported version");
        } else if (key == "benchmark") {
            // consumed above
        } else if (key == "seed") rc.seed = val.get<std::uint64_t>();
        else if (key == "precision") {
            rc.precision = val.get<int>();
            if (rc.precision != 32 && rc.precision != 64)
                throw ConfigError("run config: precision must be 32 or 64");
        } else if (key == "model") rc.model = model_config_from_json(val, rc.model);
        else if (key == "train") rc.train = train_config_from_json(val, rc.train);
        else if (key == "schema") {
            rc.schema.clear();
            for (auto& g : val)
                rc.schema.push_back({g.at("name").get<std::string>(), g.at("dim").get<std::size_t>()});
        } else if (key == "paths") {
            for (auto& [pk, pv] : val.items()) {
                if (pk == "data") rc.data_dir = pv.get<std::string>();
                else if (pk == "out") rc.out_dir = pv.get<std::string>();
                else throw ConfigError("run config: unknown path key '" + pk + "'");
            }
        } else {
            throw ConfigError("run config: unknown key '" + key + "'");
        }
    }
    ConditionSchema check(rc.schema);  // validates names and dims
    rc.model.validate();
    rc.train.validate();
    return rc;
}

inline RunConfig load_run_config(const std::string& path) {
    try {
        return run_config_from_json(nlohmann::json::parse(read_text_file(path)));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("run config parse error in " + path + ": " + e.what());
    }
}

}  // namespace meshfield
