#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "meshfield/conditions.hpp"
#include "meshfield/hilbert.hpp"
#include "meshfield/io.hpp"

namespace meshfield {

/// Unstructured 2D node set with per-node condition samples. Connectivity
/// is irrelevant here; the serialization step only needs coordinates.
class Mesh {
public:
    struct Group {
        std::vector<double> values;  // node-major, group dim per node
        std::vector<char> present;
    };

    Mesh() = default;

    Mesh(std::vector<std::array<double, 2>> nodes, ConditionSchema schema,
         std::optional<BBox> bbox = std::nullopt)
        : nodes_(std::move(nodes)), schema_(std::move(schema)) {
        if (nodes_.empty()) throw ConfigError("mesh: needs at least one node");
        bbox_ = bbox ? *bbox : BBox::of(nodes_);
        for (auto& p : nodes_)
            if (!bbox_.contains(p[0], p[1])) throw ConfigError("mesh: node outside bounding box");
        groups_.resize(schema_.group_count());
        for (std::size_t k = 0; k < groups_.size(); ++k) {
            groups_[k].values.assign(nodes_.size() * schema_.group(k).dim, 0.0);
            groups_[k].present.assign(nodes_.size(), 0);
        }
    }

    std::size_t size() const { return nodes_.size(); }
    const std::vector<std::array<double, 2>>& nodes() const { return nodes_; }
    std::array<double, 2> node(std::size_t i) const { return nodes_[i]; }
    const BBox& bbox() const { return bbox_; }
    const ConditionSchema& schema() const { return schema_; }
    const Group& group(std::size_t k) const { return groups_[k]; }

    void set_condition(const std::string& group, std::size_t node, const std::vector<double>& value) {
        const auto k = schema_.find(group);
        if (!k) throw ConfigError("mesh: unknown condition group '" + group + "'");
        const std::size_t dim = schema_.group(*k).dim;
        if (value.size() != dim) throw ConfigError("mesh: value dim mismatch for group '" + group + "'");
        for (double v : value)
            if (!std::isfinite(v)) throw NumericError("mesh: non-finite condition value");
        auto& g = groups_[*k];
        std::copy(value.begin(), value.end(), g.values.begin() + node * dim);
        g.present[node] = 1;
    }

    ConditionRecord record(std::size_t i) const {
        ConditionRecord rec;
        rec.values.resize(schema_.group_count());
        for (std::size_t k = 0; k < schema_.group_count(); ++k) {
            if (!groups_[k].present[i]) continue;
            const std::size_t dim = schema_.group(k).dim;
            rec.values[k] = std::vector<double>(groups_[k].values.begin() + i * dim,
                                                groups_[k].values.begin() + (i + 1) * dim);
        }
        return rec;
    }

    /// New mesh with nodes (and conditions) listed in a different order.
    Mesh reordered(const std::vector<std::size_t>& order) const {
        std::vector<std::array<double, 2>> nodes(order.size());
        for (std::size_t i = 0; i < order.size(); ++i) nodes[i] = nodes_[order[i]];
        Mesh out(std::move(nodes), schema_, bbox_);
        for (std::size_t k = 0; k < schema_.group_count(); ++k) {
            const std::size_t dim = schema_.group(k).dim;
            for (std::size_t i = 0; i < order.size(); ++i) {
                if (!groups_[k].present[order[i]]) continue;
                out.groups_[k].present[i] = 1;
                std::copy(groups_[k].values.begin() + order[i] * dim,
                          groups_[k].values.begin() + (order[i] + 1) * dim,
                          out.groups_[k].values.begin() + i * dim);
            }
        }
        return out;
    }

private:
    std::vector<std::array<double, 2>> nodes_;
    ConditionSchema schema_;
    std::vector<Group> groups_;
    BBox bbox_;
};

/// Hilbert codes, sort permutation, and patch layout for a mesh.
inline SerializationPlan reserialize(const Mesh& mesh, int order, std::size_t patch_size) {
    return plan_serialization(mesh.nodes(), mesh.bbox(), order, patch_size);
}

// ---- mesh file format -------------------------------------------------------

inline nlohmann::ordered_json mesh_to_json(const Mesh& mesh) {
    nlohmann::ordered_json j;
    auto& nodes = j["nodes"] = nlohmann::ordered_json::array();
    for (auto& p : mesh.nodes()) nodes.push_back({p[0], p[1]});
    auto& groups = j["groups"] = nlohmann::ordered_json::object();
    for (std::size_t k = 0; k < mesh.schema().group_count(); ++k) {
        const auto& g = mesh.schema().group(k);
        nlohmann::ordered_json jg;
        jg["dim"] = g.dim;
        auto& vals = jg["values"] = nlohmann::ordered_json::object();
        for (std::size_t i = 0; i < mesh.size(); ++i) {
            if (!mesh.group(k).present[i]) continue;
            auto v = nlohmann::ordered_json::array();
            for (std::size_t d = 0; d < g.dim; ++d) v.push_back(mesh.group(k).values[i * g.dim + d]);
            vals[std::to_string(i)] = v;
        }
        groups[g.name] = jg;
    }
    j["bbox"] = {{mesh.bbox().xmin, mesh.bbox().ymin}, {mesh.bbox().xmax, mesh.bbox().ymax}};
    return j;
}

inline Mesh mesh_from_json(const nlohmann::json& j) {
    if (!j.contains("nodes") || !j["nodes"].is_array() || j["nodes"].empty())
        throw ConfigError("mesh json: missing or empty 'nodes'");
    std::vector<std::array<double, 2>> nodes;
    for (auto& p : j["nodes"]) nodes.push_back({p.at(0).get<double>(), p.at(1).get<double>()});

    std::vector<ConditionGroup> groups;
    if (j.contains("groups")) {
        for (auto& [name, jg] : j["groups"].items())
            groups.push_back({name, jg.at("dim").get<std::size_t>()});
    }
    std::optional<BBox> bbox;
    if (j.contains("bbox")) {
        const auto& b = j["bbox"];
        bbox = BBox{b.at(0).at(0).get<double>(), b.at(0).at(1).get<double>(),
                    b.at(1).at(0).get<double>(), b.at(1).at(1).get<double>()};
    }
    Mesh mesh(std::move(nodes), ConditionSchema(std::move(groups)), bbox);
    if (j.contains("groups")) {
        for (auto& [name, jg] : j["groups"].items()) {
            for (auto& [idx, vals] : jg.at("values").items()) {
                const std::size_t i = std::stoul(idx);
                if (i >= mesh.size()) throw ConfigError("mesh json: node index out of range");
                mesh.set_condition(name, i, vals.get<std::vector<double>>());
            }
        }
    }
    return mesh;
}

inline void save_mesh(const Mesh& mesh, const std::string& path) {
    write_text_file(path, mesh_to_json(mesh).dump(1) + "\n");
}

inline Mesh load_mesh_json(const std::string& path) {
    try {
        return mesh_from_json(nlohmann::json::parse(read_text_file(path)));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("mesh json parse error in " + path + ": " + e.what());
    }
}

/// CSV import: header `x,y` plus named columns. A dim-1 group uses its
/// bare name; a dim-d group uses `name.0 .. name.d-1`. Empty cells mark
/// the group absent at that node.
inline Mesh mesh_from_csv(const std::string& path) {
    const auto rows = read_csv(path);
    if (rows.size() < 2) throw ConfigError("mesh csv: need a header and at least one node row");
    const auto& header = rows[0];
    if (header.size() < 2 || header[0] != "x" || header[1] != "y")
        throw ConfigError("mesh csv: header must start with x,y");

    // group name -> ordered column indices
    std::vector<std::pair<std::string, std::vector<std::size_t>>> cols;
    for (std::size_t c = 2; c < header.size(); ++c) {
        std::string name = header[c];
        if (const auto dot = name.rfind('.'); dot != std::string::npos &&
                                              name.find_first_not_of("0123456789", dot + 1) == std::string::npos)
            name = name.substr(0, dot);
        if (cols.empty() || cols.back().first != name) cols.push_back({name, {}});
        cols.back().second.push_back(c);
    }
    std::vector<ConditionGroup> groups;
    for (auto& [name, idx] : cols) groups.push_back({name, idx.size()});

    std::vector<std::array<double, 2>> nodes;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() != header.size()) throw ConfigError("mesh csv: ragged row");
        nodes.push_back({std::stod(rows[r][0]), std::stod(rows[r][1])});
    }
    Mesh mesh(std::move(nodes), ConditionSchema(std::move(groups)));
    for (std::size_t r = 1; r < rows.size(); ++r) {
        for (auto& [name, idx] : cols) {
            if (rows[r][idx[0]].empty()) continue;
            std::vector<double> v;
            for (std::size_t c : idx) {
                if (rows[r][c].empty()) throw ConfigError("mesh csv: partially filled group '" + name + "'");
                v.push_back(std::stod(rows[r][c]));
            }
            mesh.set_condition(name, r - 1, v);
        }
    }
    return mesh;
}

inline Mesh load_mesh(const std::string& path) {
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".csv") return mesh_from_csv(path);
    return load_mesh_json(path);
}

}  // namespace meshfield
