#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "meshfield/gce.hpp"
#include "meshfield/hilbert.hpp"
#include "meshfield/mesh.hpp"
#include "meshfield/tape.hpp"

namespace meshfield {

enum class AttentionKind { dot_product, linear };

inline std::string to_string(AttentionKind k) {
    return k == AttentionKind::dot_product ? "dot_product" : "linear";
}

inline AttentionKind attention_kind_from(const std::string& s) {
    if (s == "dot_product") return AttentionKind::dot_product;
    if (s == "linear") return AttentionKind::linear;
    throw ConfigError("unknown attention kind '" + s + "'");
}

struct ModelConfig {
    std::size_t coord_dim = 2;
    std::size_t d_emb = 16;
    std::size_t patch_size = 4;
    int hilbert_order = 16;
    std::size_t d_model = 32;
    std::size_t n_encoder = 2;
    std::size_t n_decoder = 2;
    std::size_t n_head = 1;
    AttentionKind attention = AttentionKind::dot_product;
    std::size_t output_dim = 1;
    bool encoder_only = false;
    EmbeddingKind embedding = EmbeddingKind::gated;

    void validate() const {
        if (d_model % n_head != 0) throw ConfigError("model: d_model must be divisible by n_head");
        if (coord_dim < 1 || coord_dim > 3) throw ConfigError("model: coord_dim must be 1, 2 or 3");
        if (hilbert_order < 1 || hilbert_order > 31) throw ConfigError("model: hilbert_order out of range");
        if (d_emb < 1 || d_model < 1 || output_dim < 1 || patch_size < 1 || n_head < 1)
            throw ConfigError("model: dimensions must be positive");
    }
};

inline void to_json(nlohmann::ordered_json& j, const ModelConfig& c) {
    j = nlohmann::ordered_json{{"coord_dim", c.coord_dim},
                               {"d_emb", c.d_emb},
                               {"patch_size", c.patch_size},
                               {"hilbert_order", c.hilbert_order},
                               {"d_model", c.d_model},
                               {"n_encoder", c.n_encoder},
                               {"n_decoder", c.n_decoder},
                               {"n_head", c.n_head},
                               {"attention", to_string(c.attention)},
                               {"output_dim", c.output_dim},
                               {"encoder_only", c.encoder_only},
                               {"embedding", to_string(c.embedding)}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig c = {}) {
    for (auto& [key, val] : j.items()) {
        if (key == "coord_dim") c.coord_dim = val.get<std::size_t>();
        else if (key == "d_emb") c.d_emb = val.get<std::size_t>();
        else if (key == "patch_size") c.patch_size = val.get<std::size_t>();
        else if (key == "hilbert_order") c.hilbert_order = val.get<int>();
        else if (key == "d_model") c.d_model = val.get<std::size_t>();
        else if (key == "n_encoder") c.n_encoder = val.get<std::size_t>();
        else if (key == "n_decoder") c.n_decoder = val.get<std::size_t>();
        else if (key == "n_head") c.n_head = val.get<std::size_t>();
        else if (key == "attention") c.attention = attention_kind_from(val.get<std::string>());
        else if (key == "output_dim") c.output_dim = val.get<std::size_t>();
        else if (key == "encoder_only") c.encoder_only = val.get<bool>();
        else if (key == "embedding") c.embedding = embedding_kind_from(val.get<std::string>());
        else throw ConfigError("model config: unknown key '" + key + "'");
    }
    c.validate();
    return c;
}

// ---- parameters --------------------------------------------------------------

template <class T>
using ParamStore = std::map<std::string, Tensor<T>>;

namespace detail {

template <class T>
void add_dense(ParamStore<T>& p, Rng& rng, const std::string& name, std::size_t in, std::size_t out,
               double bias_lo = 0.0, double bias_hi = 0.0) {
    Tensor<T> w({in, out});
    const double bound = std::sqrt(6.0 / static_cast<double>(in));
    for (auto& v : w.data) v = static_cast<T>(rng.uniform(-bound, bound));
    Tensor<T> b({out});
    if (bias_hi > bias_lo)
        for (auto& v : b.data) v = static_cast<T>(rng.uniform(bias_lo, bias_hi));
    p.emplace(name + ".w", std::move(w));
    p.emplace(name + ".b", std::move(b));
}

template <class T>
void add_wavelet(ParamStore<T>& p, const std::string& name) {
    p.emplace(name + ".w1", Tensor<T>::scalar(T(1)));
    p.emplace(name + ".w2", Tensor<T>::scalar(T(1)));
}

template <class T>
void add_layernorm(ParamStore<T>& p, const std::string& name, std::size_t dim) {
    p.emplace(name + ".g", Tensor<T>({dim}, T(1)));
    p.emplace(name + ".b", Tensor<T>({dim}, T(0)));
}

template <class T>
void add_linear(ParamStore<T>& p, Rng& rng, const std::string& name, std::size_t in, std::size_t out) {
    Tensor<T> w({in, out});
    const double bound = std::sqrt(6.0 / static_cast<double>(in));
    for (auto& v : w.data) v = static_cast<T>(rng.uniform(-bound, bound));
    p.emplace(name + ".w", std::move(w));
}

// q/k/v projections carry no bias: a key bias cannot change dot-product
// attention output, so it would be a dead parameter
template <class T>
void add_attention(ParamStore<T>& p, Rng& rng, const std::string& name, std::size_t d_model) {
    add_linear(p, rng, name + ".q", d_model, d_model);
    add_linear(p, rng, name + ".k", d_model, d_model);
    add_linear(p, rng, name + ".v", d_model, d_model);
    add_dense(p, rng, name + ".o", d_model, d_model);
}

template <class T>
void add_feedforward(ParamStore<T>& p, Rng& rng, const std::string& name, std::size_t d_model) {
    add_dense(p, rng, name + ".l1", d_model, d_model);
    add_wavelet(p, name + ".act");
    add_dense(p, rng, name + ".l2", d_model, d_model);
}

}  // namespace detail

/// Fresh parameter set for a configuration. The expansion biases start
/// away from zero so present-zero and absent inputs separate from the
/// first step.
template <class T>
ParamStore<T> init_params(const ModelConfig& cfg, const ConditionSchema& schema, std::uint64_t seed) {
    cfg.validate();
    ParamStore<T> p;
    Rng rng(seed);

    detail::add_dense(p, rng, "posenc.l1", cfg.coord_dim, cfg.d_emb);
    detail::add_wavelet(p, "posenc.act");
    detail::add_dense(p, rng, "posenc.l2", cfg.d_emb, cfg.d_emb);

    if (cfg.embedding == EmbeddingKind::gated) {
        for (std::size_t k = 0; k < schema.group_count(); ++k) {
            const std::size_t dim = schema.group(k).dim;
            detail::add_dense(p, rng, "embed.expand." + std::to_string(k), dim, dim + 1, 0.1, 0.5);
        }
    }
    const std::size_t c_in = embed_input_width(cfg.embedding, schema);
    detail::add_dense(p, rng, "embed.mlp1", c_in, cfg.d_emb);
    detail::add_wavelet(p, "embed.act");
    detail::add_dense(p, rng, "embed.mlp2", cfg.d_emb, cfg.d_emb);

    detail::add_dense(p, rng, "patch", cfg.patch_size * cfg.d_emb, cfg.d_model);
    for (std::size_t i = 0; i < cfg.n_encoder; ++i) {
        const std::string b = "enc." + std::to_string(i);
        detail::add_layernorm(p, b + ".ln1", cfg.d_model);
        detail::add_attention(p, rng, b + ".attn", cfg.d_model);
        detail::add_layernorm(p, b + ".ln2", cfg.d_model);
        detail::add_feedforward(p, rng, b + ".ff", cfg.d_model);
    }
    detail::add_layernorm(p, "enc.final_ln", cfg.d_model);

    if (cfg.encoder_only) {
        detail::add_dense(p, rng, "unpatch", cfg.d_model, cfg.patch_size * cfg.d_model);
    } else {
        detail::add_dense(p, rng, "query", cfg.d_emb, cfg.d_model);
        for (std::size_t i = 0; i < cfg.n_decoder; ++i) {
            const std::string b = "dec." + std::to_string(i);
            detail::add_layernorm(p, b + ".ln1", cfg.d_model);
            detail::add_attention(p, rng, b + ".attn", cfg.d_model);
            detail::add_layernorm(p, b + ".ln2", cfg.d_model);
            detail::add_feedforward(p, rng, b + ".ff", cfg.d_model);
        }
        detail::add_layernorm(p, "dec.final_ln", cfg.d_model);
    }
    detail::add_dense(p, rng, "head", cfg.d_model, cfg.output_dim);
    return p;
}

/// Tape-registered parameters, resolvable by name.
template <class T>
class TapeVars {
public:
    using Var = typename GradientTape<T>::Var;

    TapeVars(GradientTape<T>& tape, const ParamStore<T>& params) {
        for (auto& [name, tensor] : params) vars_.emplace(name, tape.param(name, tensor));
    }

    Var operator()(const std::string& name) const {
        const auto it = vars_.find(name);
        if (it == vars_.end()) throw ConfigError("unknown parameter '" + name + "'");
        return it->second;
    }

private:
    std::map<std::string, Var> vars_;
};

// ---- forward pass -------------------------------------------------------------

/// Decoder cross-attention weights recorded during a forward pass
/// (dot-product attention only).
struct AttentionCapture {
    struct Entry {
        std::size_t layer = 0;
        std::size_t head = 0;
        Tensor<double> weights;  // queries x memory tokens
    };
    std::vector<Entry> entries;
};

/// Affine map of the mesh bounding box onto [-1,1]^2; a degenerate axis
/// maps to 0. Wavelet activations behave best on bounded inputs.
template <class T>
Tensor<T> normalize_points(const std::vector<std::array<double, 2>>& pts, const BBox& box,
                           std::size_t coord_dim = 2) {
    Tensor<T> out({pts.size(), coord_dim});
    const double w = box.width(), h = box.height();
    for (std::size_t i = 0; i < pts.size(); ++i) {
        out(i, 0) = static_cast<T>(w > 0 ? 2.0 * (pts[i][0] - box.xmin) / w - 1.0 : 0.0);
        if (coord_dim > 1) out(i, 1) = static_cast<T>(h > 0 ? 2.0 * (pts[i][1] - box.ymin) / h - 1.0 : 0.0);
    }
    return out;
}

template <class T>
typename GradientTape<T>::Var positional_encode(GradientTape<T>& t, const TapeVars<T>& v,
                                                typename GradientTape<T>::Var coords) {
    auto h = detail::dense(t, coords, v("posenc.l1.w"), v("posenc.l1.b"));
    h = detail::wavelet(t, h, v("posenc.act.w1"), v("posenc.act.w2"));
    return detail::dense(t, h, v("posenc.l2.w"), v("posenc.l2.b"));
}

/// Multi-head attention between a query stream and a key/value stream.
/// Dot-product attention materializes row-stochastic weights; linear
/// attention normalizes kernel features per channel and runs in time
/// linear in the key count.
template <class T>
typename GradientTape<T>::Var attention(GradientTape<T>& t, const TapeVars<T>& v,
                                        const std::string& prefix,
                                        typename GradientTape<T>::Var x_q,
                                        typename GradientTape<T>::Var x_kv,
                                        const ModelConfig& cfg, AttentionCapture* capture = nullptr,
                                        std::size_t layer = 0) {
    using Var = typename GradientTape<T>::Var;
    const std::size_t d_head = cfg.d_model / cfg.n_head;
    Var q = t.matmul(x_q, v(prefix + ".q.w"));
    Var k = t.matmul(x_kv, v(prefix + ".k.w"));
    Var val = t.matmul(x_kv, v(prefix + ".v.w"));

    std::vector<Var> heads;
    for (std::size_t h = 0; h < cfg.n_head; ++h) {
        Var qh = t.slice_cols(q, h * d_head, (h + 1) * d_head);
        Var kh = t.slice_cols(k, h * d_head, (h + 1) * d_head);
        Var vh = t.slice_cols(val, h * d_head, (h + 1) * d_head);
        if (cfg.attention == AttentionKind::dot_product) {
            Var scores = t.scale(t.matmul(qh, kh, false, true),
                                 T(1) / static_cast<T>(std::sqrt(double(d_head))));
            Var weights = t.softmax_rows(scores);
            if (capture) {
                AttentionCapture::Entry e;
                e.layer = layer;
                e.head = h;
                const auto& wt = t.value(weights);
                e.weights = Tensor<double>(wt.shape);
                for (std::size_t i = 0; i < wt.size(); ++i) e.weights[i] = static_cast<double>(wt[i]);
                capture->entries.push_back(std::move(e));
            }
            heads.push_back(t.matmul(weights, vh));
        } else {
            Var qf = t.softmax_rows(qh);
            Var kf = t.softmax_rows(kh);
            Var kv = t.matmul(kf, vh, true, false);  // d_head x d_head
            Var num = t.matmul(qf, kv);
            Var ones = t.constant(Tensor<T>({t.value(kh).shape[0], 1}, T(1)));
            Var den = t.matmul(qf, t.matmul(kf, ones, true, false));
            heads.push_back(t.div_by_col(num, den));
        }
    }
    Var joined = cfg.n_head == 1 ? heads[0] : t.concat_cols(heads);
    return detail::dense(t, joined, v(prefix + ".o.w"), v(prefix + ".o.b"));
}

namespace detail {

template <class T>
typename GradientTape<T>::Var layernorm(GradientTape<T>& t, const TapeVars<T>& v,
                                        const std::string& name, typename GradientTape<T>::Var x) {
    return t.layernorm_rows(x, v(name + ".g"), v(name + ".b"));
}

template <class T>
typename GradientTape<T>::Var feedforward(GradientTape<T>& t, const TapeVars<T>& v,
                                          const std::string& prefix,
                                          typename GradientTape<T>::Var x) {
    auto h = dense(t, x, v(prefix + ".l1.w"), v(prefix + ".l1.b"));
    h = wavelet(t, h, v(prefix + ".act.w1"), v(prefix + ".act.w2"));
    return dense(t, h, v(prefix + ".l2.w"), v(prefix + ".l2.b"));
}

}  // namespace detail

/// Per-node embeddings: positional encoding of normalized coordinates
/// plus the condition embedding, summed.
template <class T>
typename GradientTape<T>::Var embed_nodes(GradientTape<T>& t, const TapeVars<T>& v, const Mesh& mesh,
                                          const ModelConfig& cfg) {
    auto coords = t.constant(normalize_points<T>(mesh.nodes(), mesh.bbox(), cfg.coord_dim));
    auto pos = positional_encode(t, v, coords);
    const auto inputs = build_embed_inputs<T>(mesh, cfg.embedding);
    auto cond = embed_conditions(t, v, inputs, mesh.schema(), cfg.embedding);
    return t.add(pos, cond);
}

template <class T>
struct EncodeResult {
    typename GradientTape<T>::Var memory;
    SerializationPlan plan;
};

/// Mesh -> token sequence -> encoder stack. Tokens are patches of the
/// Hilbert-sorted node embeddings; padding inside the final patch is
/// zero rows, so no attention mask is needed.
template <class T>
EncodeResult<T> encode(GradientTape<T>& t, const TapeVars<T>& v, const Mesh& mesh,
                       const ModelConfig& cfg) {
    using Var = typename GradientTape<T>::Var;
    auto emb = embed_nodes(t, v, mesh, cfg);
    SerializationPlan plan = reserialize(mesh, cfg.hilbert_order, cfg.patch_size);
    Var x = t.gather_rows(emb, plan.perm);
    const std::size_t pad = plan.padded_length() - mesh.size();
    if (pad > 0) x = t.pad_rows(x, pad);
    x = t.reshape(x, {plan.token_count(), cfg.patch_size * cfg.d_emb});
    x = detail::dense(t, x, v("patch.w"), v("patch.b"));

    for (std::size_t i = 0; i < cfg.n_encoder; ++i) {
        const std::string b = "enc." + std::to_string(i);
        Var ln = detail::layernorm(t, v, b + ".ln1", x);
        x = t.add(x, attention(t, v, b + ".attn", ln, ln, cfg));
        x = t.add(x, detail::feedforward(t, v, b + ".ff", detail::layernorm(t, v, b + ".ln2", x)));
    }
    return {detail::layernorm(t, v, "enc.final_ln", x), std::move(plan)};
}

/// Query points -> predictions. Queries never attend to each other, so
/// any batch partition of a query set yields identical results.
template <class T>
typename GradientTape<T>::Var decode(GradientTape<T>& t, const TapeVars<T>& v,
                                     typename GradientTape<T>::Var memory,
                                     typename GradientTape<T>::Var queries_norm,
                                     const ModelConfig& cfg, AttentionCapture* capture = nullptr) {
    using Var = typename GradientTape<T>::Var;
    Var q = positional_encode(t, v, queries_norm);
    q = detail::dense(t, q, v("query.w"), v("query.b"));
    for (std::size_t i = 0; i < cfg.n_decoder; ++i) {
        const std::string b = "dec." + std::to_string(i);
        q = t.add(q, attention(t, v, b + ".attn", detail::layernorm(t, v, b + ".ln1", q), memory,
                               cfg, capture, i));
        q = t.add(q, detail::feedforward(t, v, b + ".ff", detail::layernorm(t, v, b + ".ln2", q)));
    }
    q = detail::layernorm(t, v, "dec.final_ln", q);
    return detail::dense(t, q, v("head.w"), v("head.b"));
}

/// Encoder-only variant: the mesh nodes are their own queries. Token
/// features are projected back to per-node rows, the Hilbert permutation
/// is inverted, and the head runs per node.
template <class T>
typename GradientTape<T>::Var encoder_only_forward(GradientTape<T>& t, const TapeVars<T>& v,
                                                   const Mesh& mesh, const ModelConfig& cfg) {
    auto enc = encode(t, v, mesh, cfg);
    auto x = detail::dense(t, enc.memory, v("unpatch.w"), v("unpatch.b"));
    x = t.reshape(x, {enc.plan.token_count() * cfg.patch_size, cfg.d_model});
    if (enc.plan.padded_length() > mesh.size()) x = t.slice_rows(x, 0, mesh.size());
    x = t.gather_rows(x, enc.plan.inverse);
    return detail::dense(t, x, v("head.w"), v("head.b"));
}

/// Full forward pass at arbitrary query coordinates (decoder mode) or at
/// the mesh nodes themselves (encoder-only mode, queries ignored).
template <class T>
typename GradientTape<T>::Var forward(GradientTape<T>& t, const TapeVars<T>& v, const Mesh& mesh,
                                      const std::vector<std::array<double, 2>>& queries,
                                      const ModelConfig& cfg, AttentionCapture* capture = nullptr) {
    if (cfg.encoder_only) return encoder_only_forward(t, v, mesh, cfg);
    auto enc = encode(t, v, mesh, cfg);
    auto qn = t.constant(normalize_points<T>(queries, mesh.bbox(), cfg.coord_dim));
    return decode(t, v, enc.memory, qn, cfg, capture);
}

// ---- convenience wrapper -------------------------------------------------------

template <class T>
class Model {
public:
    Model() = default;

    Model(ModelConfig cfg, ConditionSchema schema, std::uint64_t seed)
        : cfg_(std::move(cfg)), schema_(std::move(schema)),
          params_(init_params<T>(cfg_, schema_, seed)) {}

    Model(ModelConfig cfg, ConditionSchema schema, ParamStore<T> params)
        : cfg_(std::move(cfg)), schema_(std::move(schema)), params_(std::move(params)) {}

    const ModelConfig& config() const { return cfg_; }
    const ConditionSchema& schema() const { return schema_; }
    ParamStore<T>& params() { return params_; }
    const ParamStore<T>& params() const { return params_; }

    /// Forward-only evaluation on a frozen parameter set.
    Tensor<T> predict(const Mesh& mesh, const std::vector<std::array<double, 2>>& queries,
                      AttentionCapture* capture = nullptr) const {
        GradientTape<T> tape;
        TapeVars<T> vars(tape, params_);
        auto out = forward(tape, vars, mesh, queries, cfg_, capture);
        return tape.value(out);
    }

private:
    ModelConfig cfg_;
    ConditionSchema schema_;
    ParamStore<T> params_;
};

}  // namespace meshfield
