#pragma once

#include <string>
#include <vector>

#include "meshfield/mesh.hpp"
#include "meshfield/tape.hpp"

namespace meshfield {

/// How per-node conditions become embedding vectors.
///
/// - gated: per-group linear expansion to dim+1 plus a parameter-free
///   presence gate, then a two-layer head. Absent groups contribute an
///   exact zero block, so a present zero value (which lands on the
///   expansion bias) stays distinguishable from missing data.
/// - feedforward: raw concatenated group values through the head; for
///   problems without heterogeneous condition inputs.
/// - bc_vector / bc_vector_type: the single-vector thermal boundary
///   encoding (optionally with a type indicator input); the baselines
///   the gated layer is compared against.
enum class EmbeddingKind { gated, feedforward, bc_vector, bc_vector_type };

inline std::string to_string(EmbeddingKind k) {
    switch (k) {
        case EmbeddingKind::gated: return "gce";
        case EmbeddingKind::feedforward: return "feedforward";
        case EmbeddingKind::bc_vector: return "bc_vector";
        case EmbeddingKind::bc_vector_type: return "bc_vector_type";
    }
    throw ConfigError("unknown embedding kind");
}

inline EmbeddingKind embedding_kind_from(const std::string& s) {
    if (s == "gce") return EmbeddingKind::gated;
    if (s == "feedforward") return EmbeddingKind::feedforward;
    if (s == "bc_vector") return EmbeddingKind::bc_vector;
    if (s == "bc_vector_type") return EmbeddingKind::bc_vector_type;
    throw ConfigError("unknown embedding kind '" + s + "'");
}

/// Width of the vector entering the embedding head.
inline std::size_t embed_input_width(EmbeddingKind kind, const ConditionSchema& schema) {
    switch (kind) {
        case EmbeddingKind::gated: return schema.expanded_width();
        case EmbeddingKind::feedforward: return schema.raw_width();
        case EmbeddingKind::bc_vector: return 5;
        case EmbeddingKind::bc_vector_type: return 6;
    }
    throw ConfigError("unknown embedding kind");
}

/// Batched raw condition inputs for one mesh (or one record).
template <class T>
struct EmbedInputs {
    std::size_t count = 0;
    // gated: one value matrix (L x dim) and one 0/1 mask matrix
    // (L x dim+1) per group; the mask zeroes expanded blocks of absent
    // groups.
    std::vector<Tensor<T>> group_values;
    std::vector<Tensor<T>> group_masks;
    // non-gated kinds: a single dense input matrix
    Tensor<T> flat;
};

template <class T>
EmbedInputs<T> build_embed_inputs(const Mesh& mesh, EmbeddingKind kind) {
    const auto& schema = mesh.schema();
    const std::size_t L = mesh.size();
    EmbedInputs<T> in;
    in.count = L;
    if (kind == EmbeddingKind::gated) {
        for (std::size_t k = 0; k < schema.group_count(); ++k) {
            const std::size_t dim = schema.group(k).dim;
            Tensor<T> vals({L, dim});
            Tensor<T> mask({L, dim + 1});
            const auto& g = mesh.group(k);
            for (std::size_t i = 0; i < L; ++i) {
                if (!g.present[i]) continue;
                for (std::size_t d = 0; d < dim; ++d)
                    vals(i, d) = static_cast<T>(g.values[i * dim + d]);
                for (std::size_t d = 0; d <= dim; ++d) mask(i, d) = T(1);
            }
            in.group_values.push_back(std::move(vals));
            in.group_masks.push_back(std::move(mask));
        }
        return in;
    }
    if (kind == EmbeddingKind::feedforward) {
        in.flat = Tensor<T>({L, schema.raw_width()});
        std::size_t off = 0;
        for (std::size_t k = 0; k < schema.group_count(); ++k) {
            const std::size_t dim = schema.group(k).dim;
            const auto& g = mesh.group(k);
            for (std::size_t i = 0; i < L; ++i)
                if (g.present[i])
                    for (std::size_t d = 0; d < dim; ++d)
                        in.flat(i, off + d) = static_cast<T>(g.values[i * dim + d]);
            off += dim;
        }
        return in;
    }
    // thermal single-vector encodings
    const std::size_t width = embed_input_width(kind, schema);
    const auto kd = schema.find("dirichlet");
    const auto kn = schema.find("neumann");
    if (!kd || !kn)
        throw ConfigError("bc_vector embedding requires 'dirichlet' and 'neumann' groups");
    in.flat = Tensor<T>({L, width});
    for (std::size_t i = 0; i < L; ++i) {
        const auto vec = encode_bc_vector(mesh.record(i), schema);
        for (std::size_t d = 0; d < 5; ++d) in.flat(i, d) = static_cast<T>(vec[d]);
        if (kind == EmbeddingKind::bc_vector_type) {
            T type = T(0);
            if (mesh.group(*kd).present[i]) type = T(1);
            else if (mesh.group(*kn).present[i]) type = T(-1);
            in.flat(i, 5) = type;
        }
    }
    return in;
}

/// Inputs for a single record, for the per-node contract and its tests.
template <class T>
EmbedInputs<T> build_embed_inputs(const ConditionRecord& rec, const ConditionSchema& schema,
                                  EmbeddingKind kind) {
    Mesh one({{0.0, 0.0}}, schema);
    for (std::size_t k = 0; k < schema.group_count(); ++k)
        if (rec.values[k]) one.set_condition(schema.group(k).name, 0, *rec.values[k]);
    return build_embed_inputs<T>(one, kind);
}

namespace detail {

template <class T>
typename GradientTape<T>::Var dense(GradientTape<T>& t, typename GradientTape<T>::Var x,
                                    typename GradientTape<T>::Var w, typename GradientTape<T>::Var b) {
    return t.add_row_bias(t.matmul(x, w), b);
}

template <class T>
typename GradientTape<T>::Var wavelet(GradientTape<T>& t, typename GradientTape<T>::Var x,
                                      typename GradientTape<T>::Var w1,
                                      typename GradientTape<T>::Var w2) {
    return t.add(t.smul(w1, t.sin(x)), t.smul(w2, t.cos(x)));
}

}  // namespace detail

/// The expansion-and-gate stage: every group is mapped to dim+1 through
/// its own linear layer, then rows of absent groups are zeroed. Returns
/// the schema-ordered concatenation, one row per node.
template <class T, class Lookup>
typename GradientTape<T>::Var gated_blocks(GradientTape<T>& t, const Lookup& vars,
                                           const EmbedInputs<T>& in, const ConditionSchema& schema) {
    using Var = typename GradientTape<T>::Var;
    std::vector<Var> blocks;
    for (std::size_t k = 0; k < schema.group_count(); ++k) {
        Var vals = t.constant(in.group_values[k]);
        Var mask = t.constant(in.group_masks[k]);
        Var expanded = detail::dense(t, vals, vars("embed.expand." + std::to_string(k) + ".w"),
                                     vars("embed.expand." + std::to_string(k) + ".b"));
        // the gate: absent rows become exact zero blocks
        blocks.push_back(t.mul(expanded, mask));
    }
    return t.concat_cols(blocks);
}

/// Condition embedding forward pass: produces one d_emb row per node.
/// `vars` resolves parameter names registered on the tape.
template <class T, class Lookup>
typename GradientTape<T>::Var embed_conditions(GradientTape<T>& t, const Lookup& vars,
                                               const EmbedInputs<T>& in,
                                               const ConditionSchema& schema, EmbeddingKind kind) {
    using Var = typename GradientTape<T>::Var;
    Var joined = kind == EmbeddingKind::gated ? gated_blocks(t, vars, in, schema)
                                              : t.constant(in.flat);
    Var h = detail::dense(t, joined, vars("embed.mlp1.w"), vars("embed.mlp1.b"));
    h = detail::wavelet(t, h, vars("embed.act.w1"), vars("embed.act.w2"));
    return detail::dense(t, h, vars("embed.mlp2.w"), vars("embed.mlp2.b"));
}

}  // namespace meshfield
