#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "meshfield/common.hpp"

namespace meshfield {

struct ConditionGroup {
    std::string name;
    std::size_t dim = 1;
};

/// Ordered list of condition groups a problem carries per node, e.g.
/// physical parameters, initial values, and the boundary condition
/// families with their data (value, normal, coefficients). The order is
/// part of the contract: embeddings concatenate blocks in schema order.
class ConditionSchema {
public:
    ConditionSchema() = default;

    explicit ConditionSchema(std::vector<ConditionGroup> groups) : groups_(std::move(groups)) {
        for (std::size_t i = 0; i < groups_.size(); ++i) {
            if (groups_[i].dim < 1) throw ConfigError("schema: group dim must be >= 1");
            for (std::size_t j = i + 1; j < groups_.size(); ++j)
                if (groups_[i].name == groups_[j].name)
                    throw ConfigError("schema: duplicate group name '" + groups_[i].name + "'");
        }
    }

    std::size_t group_count() const { return groups_.size(); }
    const ConditionGroup& group(std::size_t k) const { return groups_[k]; }
    const std::vector<ConditionGroup>& groups() const { return groups_; }

    std::optional<std::size_t> find(const std::string& name) const {
        for (std::size_t k = 0; k < groups_.size(); ++k)
            if (groups_[k].name == name) return k;
        return std::nullopt;
    }

    /// Sum of raw group dims.
    std::size_t raw_width() const {
        std::size_t w = 0;
        for (auto& g : groups_) w += g.dim;
        return w;
    }

    /// Sum of (dim + 1) over groups: the concatenated width after the
    /// per-group dimension expansion.
    std::size_t expanded_width() const {
        std::size_t w = 0;
        for (auto& g : groups_) w += g.dim + 1;
        return w;
    }

    bool operator==(const ConditionSchema& o) const {
        if (groups_.size() != o.groups_.size()) return false;
        for (std::size_t k = 0; k < groups_.size(); ++k)
            if (groups_[k].name != o.groups_[k].name || groups_[k].dim != o.groups_[k].dim)
                return false;
        return true;
    }

private:
    std::vector<ConditionGroup> groups_;
};

/// Per-node condition sample: an optional value vector per schema group.
/// Present-with-zeros and absent are distinct states.
struct ConditionRecord {
    std::vector<std::optional<std::vector<double>>> values;

    bool present(std::size_t k) const { return values[k].has_value(); }
};

struct AssembledRecord {
    std::vector<std::vector<double>> blocks;  // block k has the group's raw dim; zeros when absent
    std::vector<bool> mask;                   // presence per group
};

/// Flattens a record into schema-ordered raw blocks plus the presence
/// mask the gate consumes. Absent groups emit zero blocks; the mask is
/// what keeps them distinguishable from genuine zeros.
inline AssembledRecord assemble(const ConditionRecord& rec, const ConditionSchema& schema) {
    if (rec.values.size() != schema.group_count())
        throw ConfigError("assemble: record group count does not match schema");
    AssembledRecord out;
    out.blocks.resize(schema.group_count());
    out.mask.resize(schema.group_count());
    for (std::size_t k = 0; k < schema.group_count(); ++k) {
        const std::size_t dim = schema.group(k).dim;
        if (rec.values[k]) {
            if (rec.values[k]->size() != dim)
                throw ConfigError("assemble: value dim mismatch in group '" + schema.group(k).name + "'");
            for (double v : *rec.values[k])
                if (!std::isfinite(v)) throw NumericError("assemble: non-finite condition value");
            out.blocks[k] = *rec.values[k];
            out.mask[k] = true;
        } else {
            out.blocks[k].assign(dim, 0.0);
            out.mask[k] = false;
        }
    }
    return out;
}

/// Single-vector thermal boundary encoding [T, n_x, n_y, dT/dx, dT/dy]
/// with missing components zero-filled. This is the ambiguous baseline
/// the gated embedding exists to beat: a Dirichlet zero-temperature
/// sample and a Neumann zero-flux sample with masked normal both encode
/// to the zero vector.
inline std::array<double, 5> encode_bc_vector(const ConditionRecord& rec, const ConditionSchema& schema) {
    std::array<double, 5> out{0, 0, 0, 0, 0};
    if (auto kd = schema.find("dirichlet")) {
        if (rec.values[*kd]) out[0] = (*rec.values[*kd])[0];
    }
    if (auto kn = schema.find("neumann")) {
        if (rec.values[*kn]) {
            const auto& v = *rec.values[*kn];
            for (std::size_t i = 0; i < 4 && i < v.size(); ++i) out[1 + i] = v[i];
        }
    }
    return out;
}

}  // namespace meshfield
