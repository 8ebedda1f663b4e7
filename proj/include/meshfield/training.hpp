#pragma once

#include <chrono>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "meshfield/benchmarks.hpp"
#include "meshfield/model.hpp"

namespace meshfield {

// ---- metric --------------------------------------------------------------------

/// Mean over items of ||pred - truth||_2 / ||truth||_2. Items are
/// test-set entries (one field over one instance's points here).
inline double relative_l2(const std::vector<std::pair<std::vector<double>, std::vector<double>>>& items) {
    if (items.empty()) throw ConfigError("relative_l2: no items");
    double acc = 0;
    for (auto& [pred, truth] : items) {
        if (pred.size() != truth.size()) throw ConfigError("relative_l2: size mismatch");
        double num = 0, den = 0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            num += (pred[i] - truth[i]) * (pred[i] - truth[i]);
            den += truth[i] * truth[i];
        }
        if (den == 0) throw ConfigError("relative_l2: zero-norm ground truth item");
        acc += std::sqrt(num) / std::sqrt(den);
    }
    return acc / double(items.size());
}

// ---- finite-difference stencils ---------------------------------------------------

/// Plain five-point Laplacian of a scalar function; the oracle-side
/// counterpart of the taped version below.
inline double stencil_laplacian(const std::function<double(double, double)>& f, double x, double y,
                                double h) {
    return (f(x + h, y) + f(x - h, y) + f(x, y + h) + f(x, y - h) - 4.0 * f(x, y)) / (h * h);
}

template <class T>
struct QueryStencil {
    std::vector<std::array<double, 2>> queries;
    Tensor<T> combine;  // rows: one residual-input per stencil center
};

/// Five-point Laplacian over extra decoder queries: K centers become 5K
/// queries and a K x 5K combination matrix with weights 1/h^2.
template <class T>
QueryStencil<T> laplacian_stencil(const std::vector<std::array<double, 2>>& centers, double h) {
    QueryStencil<T> s;
    const std::size_t k = centers.size();
    s.combine = Tensor<T>({k, 5 * k});
    const T w = static_cast<T>(1.0 / (h * h));
    for (std::size_t i = 0; i < k; ++i) {
        const auto [x, y] = centers[i];
        s.queries.push_back({x, y});
        s.queries.push_back({x + h, y});
        s.queries.push_back({x - h, y});
        s.queries.push_back({x, y + h});
        s.queries.push_back({x, y - h});
        s.combine(i, 5 * i) = T(-4) * w;
        for (std::size_t j = 1; j < 5; ++j) s.combine(i, 5 * i + j) = w;
    }
    return s;
}

/// Central-difference directional derivative n . grad at boundary points:
/// 4 queries per center, weights n/(2h).
template <class T>
QueryStencil<T> normal_gradient_stencil(const std::vector<FluxSample>& samples, double h) {
    QueryStencil<T> s;
    const std::size_t k = samples.size();
    s.combine = Tensor<T>({k, 4 * k});
    for (std::size_t i = 0; i < k; ++i) {
        const auto& b = samples[i];
        s.queries.push_back({b.x + h, b.y});
        s.queries.push_back({b.x - h, b.y});
        s.queries.push_back({b.x, b.y + h});
        s.queries.push_back({b.x, b.y - h});
        const T wx = static_cast<T>(b.nx / (2.0 * h));
        const T wy = static_cast<T>(b.ny / (2.0 * h));
        s.combine(i, 4 * i) = wx;
        s.combine(i, 4 * i + 1) = -wx;
        s.combine(i, 4 * i + 2) = wy;
        s.combine(i, 4 * i + 3) = -wy;
    }
    return s;
}

/// Taped Laplacian of the decoded field at one point, via five extra
/// decoder queries. Differentiable with respect to the parameters.
template <class T>
typename GradientTape<T>::Var fd_laplacian(GradientTape<T>& t, const TapeVars<T>& v,
                                           typename GradientTape<T>::Var memory, const Mesh& mesh,
                                           const DomainGeom& domain, double x, double y, double h,
                                           const ModelConfig& cfg) {
    if (h <= 0) throw ConfigError("fd_laplacian: step must be positive");
    if (!domain.contains_with_margin(x, y, h))
        throw ConfigError("fd_laplacian: stencil leaves the domain");
    const auto s = laplacian_stencil<T>({{x, y}}, h);
    auto qn = t.constant(normalize_points<T>(s.queries, mesh.bbox(), cfg.coord_dim));
    auto u = decode(t, v, memory, qn, cfg);
    return t.matmul(t.constant(s.combine), t.slice_cols(u, 0, 1));
}

// ---- losses ------------------------------------------------------------------------

struct LossTerms {
    double total = 0, pde = 0, data = 0, bottom = 0, top = 0, other = 0;

    LossTerms& operator+=(const LossTerms& o) {
        total += o.total;
        pde += o.pde;
        data += o.data;
        bottom += o.bottom;
        top += o.top;
        other += o.other;
        return *this;
    }

    LossTerms& operator*=(double s) {
        total *= s;
        pde *= s;
        data *= s;
        bottom *= s;
        top *= s;
        other *= s;
        return *this;
    }
};

enum class LossKind { data_only, poisson, conduction };

inline std::string to_string(LossKind k) {
    switch (k) {
        case LossKind::data_only: return "data";
        case LossKind::poisson: return "poisson";
        case LossKind::conduction: return "conduction";
    }
    throw ConfigError("unknown loss kind");
}

inline LossKind loss_kind_from(const std::string& s) {
    if (s == "data") return LossKind::data_only;
    if (s == "poisson") return LossKind::poisson;
    if (s == "conduction") return LossKind::conduction;
    throw ConfigError("unknown loss kind '" + s + "'");
}

struct TrainConfig {
    std::string optimizer = "adam";
    double lr = 1e-3;
    int epochs = 50;
    int steps_per_epoch = 10;
    int batch_instances = 1;
    LossKind loss = LossKind::poisson;
    // per-instance per-step sampling budgets (0 = use everything)
    int data_points = 128;
    int colloc_points = 64;
    int boundary_points = 48;
    std::uint64_t seed = 0;
    double weight_pde = 1.0, weight_data = 1.0, weight_bc = 1.0;
    double weight_decay = 0.0;
    double stencil_h_rel = 1e-3;  // stencil step as a fraction of the largest bbox extent
    int val_points = 512;         // eval subsample per instance (0 = all)
    int val_field = 0;            // output column tracked for best-checkpoint selection
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    void validate() const {
        if (optimizer != "adam") throw ConfigError("train: only the adam optimizer is built in");
        if (lr <= 0 || epochs < 0 || steps_per_epoch < 1 || batch_instances < 1)
            throw ConfigError("train: bad optimization settings");
        if (stencil_h_rel <= 0) throw ConfigError("train: stencil step must be positive");
    }
};

template <class T>
struct StepLoss {
    typename GradientTape<T>::Var total;
    LossTerms values;
};

/// Sum of squared prediction errors over labeled points.
template <class T>
typename GradientTape<T>::Var mse_data_loss(GradientTape<T>& t, typename GradientTape<T>::Var pred,
                                            const Tensor<T>& truth) {
    auto diff = t.sub(pred, t.constant(truth));
    return t.reduce_sum(t.mul(diff, diff));
}

namespace detail {

template <class T>
Tensor<T> cast_tensor(const Tensor<double>& src) {
    Tensor<T> out(src.shape);
    for (std::size_t i = 0; i < src.size(); ++i) out[i] = static_cast<T>(src[i]);
    return out;
}

inline std::vector<std::size_t> sample_indices(std::size_t n, int budget, Rng& rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    if (budget <= 0 || std::size_t(budget) >= n) return idx;
    rng.shuffle(idx.begin(), idx.end());
    idx.resize(std::size_t(budget));
    return idx;
}

}  // namespace detail

/// Builds the per-instance loss on an open tape. The encoder runs once;
/// every residual term rides on extra decoder queries.
template <class T>
StepLoss<T> instance_loss(GradientTape<T>& t, const TapeVars<T>& v, const PDEInstance& inst,
                          const ModelConfig& cfg, const TrainConfig& tc, Rng& rng) {
    using Var = typename GradientTape<T>::Var;
    if (cfg.encoder_only && tc.loss != LossKind::data_only)
        throw ConfigError("train: encoder-only mode supports data losses only");

    auto enc = encode(t, v, inst.mesh, cfg);
    const BBox ext = inst.domain.rects.empty() ? inst.mesh.bbox() : inst.domain.bounds();
    const double h = tc.stencil_h_rel * std::max(ext.width(), ext.height());

    StepLoss<T> out;
    std::vector<Var> terms;
    auto decode_at = [&](const std::vector<std::array<double, 2>>& pts) {
        auto qn = t.constant(normalize_points<T>(pts, inst.mesh.bbox(), cfg.coord_dim));
        return decode(t, v, enc.memory, qn, cfg);
    };

    // labeled data
    if ((tc.loss == LossKind::data_only || tc.loss == LossKind::poisson) && !inst.data_points.empty()) {
        const auto idx = detail::sample_indices(inst.data_points.size(), tc.data_points, rng);
        std::vector<std::array<double, 2>> pts;
        Tensor<double> truth({idx.size(), inst.data_values.shape[1]});
        for (std::size_t i = 0; i < idx.size(); ++i) {
            pts.push_back(inst.data_points[idx[i]]);
            for (std::size_t j = 0; j < truth.shape[1]; ++j)
                truth(i, j) = inst.data_values(idx[i], j);
        }
        Var pred = cfg.encoder_only
                       ? forward(t, v, inst.mesh, {}, cfg)
                       : decode_at(pts);
        if (cfg.encoder_only) {
            // labels must align with mesh nodes in encoder-only mode
            if (inst.data_points.size() != inst.mesh.size())
                throw ConfigError("train: encoder-only data labels must cover mesh nodes");
            std::vector<std::size_t> rows(idx.begin(), idx.end());
            pred = t.gather_rows(pred, rows);
        }
        Var loss = t.scale(mse_data_loss(t, pred, detail::cast_tensor<T>(truth)), T(tc.weight_data));
        out.values.data = static_cast<double>(t.value(loss).item());
        terms.push_back(loss);
    }

    // interior residual
    if (tc.loss == LossKind::poisson || tc.loss == LossKind::conduction) {
        std::vector<std::array<double, 2>> centers;
        Rng crng = rng.fork(17);
        for (int i = 0; i < tc.colloc_points; ++i)
            centers.push_back(inst.domain.sample_interior(crng, h));
        const auto st = laplacian_stencil<T>(centers, h);
        auto u = decode_at(st.queries);
        Var lap = t.matmul(t.constant(st.combine), t.slice_cols(u, 0, 1));
        Tensor<T> src({centers.size(), 1});
        if (inst.source)
            for (std::size_t i = 0; i < centers.size(); ++i)
                src(i, 0) = static_cast<T>(inst.source(centers[i][0], centers[i][1]));
        // r = -lap(u) - f
        Var resid = t.sub(t.scale(lap, T(-1)), t.constant(src));
        Var loss = t.scale(t.reduce_sum(t.mul(resid, resid)), T(tc.weight_pde));
        out.values.pde = static_cast<double>(t.value(loss).item());
        terms.push_back(loss);
    }

    // boundary residuals
    if (tc.loss == LossKind::conduction) {
        auto value_term = [&](const std::vector<BoundarySample>& samples, double& slot,
                              std::uint64_t tag) {
            if (samples.empty()) return;
            Rng brng = rng.fork(tag);
            auto idx = detail::sample_indices(samples.size(), tc.boundary_points, brng);
            std::vector<std::array<double, 2>> pts;
            Tensor<T> target({idx.size(), 1});
            for (std::size_t i = 0; i < idx.size(); ++i) {
                pts.push_back({samples[idx[i]].x, samples[idx[i]].y});
                target(i, 0) = static_cast<T>(samples[idx[i]].target);
            }
            auto pred = t.slice_cols(decode_at(pts), 0, 1);
            auto diff = t.sub(pred, t.constant(target));
            auto loss = t.scale(t.reduce_sum(t.mul(diff, diff)), T(tc.weight_bc));
            slot = static_cast<double>(t.value(loss).item());
            terms.push_back(loss);
        };
        value_term(inst.bc_value, out.values.bottom, 23);
        value_term(inst.bc_value_top, out.values.top, 24);

        if (!inst.bc_flux.empty()) {
            Rng frng = rng.fork(29);
            auto idx = detail::sample_indices(inst.bc_flux.size(), tc.boundary_points, frng);
            std::vector<FluxSample> picked;
            for (std::size_t i : idx) picked.push_back(inst.bc_flux[i]);
            const auto st = normal_gradient_stencil<T>(picked, h);
            auto u = decode_at(st.queries);
            Var grad_n = t.matmul(t.constant(st.combine), t.slice_cols(u, 0, 1));
            Tensor<T> qn({picked.size(), 1});
            for (std::size_t i = 0; i < picked.size(); ++i) qn(i, 0) = static_cast<T>(picked[i].qn);
            Var resid = t.sub(grad_n, t.constant(qn));
            Var loss = t.scale(t.reduce_sum(t.mul(resid, resid)), T(tc.weight_bc));
            out.values.other = static_cast<double>(t.value(loss).item());
            terms.push_back(loss);
        }
    }

    if (terms.empty()) throw ConfigError("train: instance produced no loss terms");
    Var total = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) total = t.add(total, terms[i]);
    out.total = total;
    out.values.total = static_cast<double>(t.value(total).item());
    return out;
}

/// Poisson total loss (residual + data) for one instance; thin wrapper
/// used by tests and the ablation paths.
template <class T>
StepLoss<T> poisson_loss(GradientTape<T>& t, const TapeVars<T>& v, const PDEInstance& inst,
                         const ModelConfig& cfg, const TrainConfig& tc, Rng& rng) {
    TrainConfig c = tc;
    c.loss = LossKind::poisson;
    return instance_loss(t, v, inst, cfg, c, rng);
}

/// Conduction loss: interior residual plus squared boundary residuals
/// (prescribed-value bottom/top, prescribed-flux elsewhere).
template <class T>
StepLoss<T> heatsink_loss(GradientTape<T>& t, const TapeVars<T>& v, const PDEInstance& inst,
                          const ModelConfig& cfg, const TrainConfig& tc, Rng& rng) {
    TrainConfig c = tc;
    c.loss = LossKind::conduction;
    return instance_loss(t, v, inst, cfg, c, rng);
}

// ---- optimizer ----------------------------------------------------------------------

template <class T>
struct AdamState {
    std::map<std::string, Tensor<T>> m, v;
    long step = 0;
};

/// One decoupled-weight-decay Adam update with bias correction.
template <class T>
void adam_step(ParamStore<T>& params, const std::map<std::string, Tensor<T>>& grads,
               AdamState<T>& state, const TrainConfig& tc) {
    state.step += 1;
    const double b1 = tc.beta1, b2 = tc.beta2;
    const double c1 = 1.0 - std::pow(b1, double(state.step));
    const double c2 = 1.0 - std::pow(b2, double(state.step));
    for (auto& [name, p] : params) {
        const auto git = grads.find(name);
        if (git == grads.end()) throw ConfigError("adam: missing gradient for " + name);
        const auto& g = git->second;
        if (!g.all_finite()) throw NumericError("adam: non-finite gradient for " + name);
        auto& m = state.m.try_emplace(name, Tensor<T>(p.shape)).first->second;
        auto& v = state.v.try_emplace(name, Tensor<T>(p.shape)).first->second;
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = static_cast<T>(b1 * m[i] + (1.0 - b1) * g[i]);
            v[i] = static_cast<T>(b2 * v[i] + (1.0 - b2) * g[i] * g[i]);
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            double update = tc.lr * mhat / (std::sqrt(vhat) + tc.eps);
            if (tc.weight_decay > 0) update += tc.lr * tc.weight_decay * p[i];
            p[i] = static_cast<T>(p[i] - update);
        }
    }
}

// ---- evaluation -----------------------------------------------------------------------

using FieldFn = std::function<double(const double*)>;

inline FieldFn field_column(std::size_t j) {
    return [j](const double* row) { return row[j]; };
}

/// Joint stress magnitude from the three stress columns starting at j0.
inline FieldFn field_von_mises(std::size_t j0) {
    return [j0](const double* row) { return von_mises(row[j0], row[j0 + 1], row[j0 + 2]); };
}

/// Relative L2 over instances: each instance's eval set is one item.
/// `max_points` strides the eval set down for cheap validation.
template <class T>
double evaluate_rel_l2(const Model<T>& model, const std::vector<PDEInstance>& instances,
                       const FieldFn& field, std::size_t max_points = 0) {
    std::vector<std::pair<std::vector<double>, std::vector<double>>> items;
    for (const auto& inst : instances) {
        if (inst.eval_points.empty()) continue;
        std::vector<std::size_t> idx;
        const std::size_t n = inst.eval_points.size();
        const std::size_t stride = (max_points > 0 && n > max_points) ? (n + max_points - 1) / max_points : 1;
        for (std::size_t i = 0; i < n; i += stride) idx.push_back(i);

        std::vector<std::array<double, 2>> pts;
        for (std::size_t i : idx) pts.push_back(inst.eval_points[i]);
        const Tensor<T> pred = model.predict(inst.mesh, pts);

        std::vector<double> prow(pred.shape[1]), trow(inst.eval_values.shape[1]);
        std::vector<double> pv, tv;
        for (std::size_t r = 0; r < idx.size(); ++r) {
            for (std::size_t j = 0; j < prow.size(); ++j) prow[j] = static_cast<double>(pred(r, j));
            for (std::size_t j = 0; j < trow.size(); ++j) trow[j] = inst.eval_values(idx[r], j);
            pv.push_back(field(prow.data()));
            tv.push_back(field(trow.data()));
        }
        items.emplace_back(std::move(pv), std::move(tv));
    }
    if (items.empty()) throw ConfigError("evaluate: no instances carry evaluation data");
    return relative_l2(items);
}

// ---- training loop ---------------------------------------------------------------------

struct EpochLog {
    int epoch = 0;
    LossTerms train;
    double val_rel_l2 = 0;
    double seconds = 0;
};

template <class T>
struct TrainResult {
    std::vector<EpochLog> history;
    ParamStore<T> best_params;
    double best_val = 0;
    int best_epoch = 0;
    bool diverged = false;
    std::string divergence_note;
};

/// Instances used for an epoch; lets benchmarks with per-epoch sampled
/// conditions regenerate while fixed datasets return themselves.
using EpochSampler = std::function<const std::vector<PDEInstance>&(int epoch)>;

template <class T>
TrainResult<T> train(Model<T>& model, const EpochSampler& epoch_instances,
                     const std::vector<PDEInstance>& val_instances, const TrainConfig& tc,
                     std::function<void(const EpochLog&)> on_epoch = {}) {
    tc.validate();
    model.config().validate();
    Rng rng(tc.seed);

    TrainResult<T> result;
    result.best_params = model.params();
    bool have_best = false;
    AdamState<T> opt;

    const bool has_val = [&] {
        for (auto& inst : val_instances)
            if (!inst.eval_points.empty()) return true;
        return false;
    }();

    for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto& instances = epoch_instances(epoch);
        if (instances.empty()) throw ConfigError("train: epoch sampler returned no instances");

        std::vector<std::size_t> order(instances.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order.begin(), order.end());
        std::size_t cursor = 0;

        LossTerms epoch_terms;
        ParamStore<T> last_good = model.params();
        try {
            for (int step = 0; step < tc.steps_per_epoch; ++step) {
                last_good = model.params();
                GradientTape<T> tape;
                TapeVars<T> vars(tape, model.params());
                typename GradientTape<T>::Var total;
                LossTerms step_terms;
                for (int b = 0; b < tc.batch_instances; ++b) {
                    const auto& inst = instances[order[cursor % order.size()]];
                    ++cursor;
                    Rng srng = rng.fork(std::uint64_t(epoch) * 10007 + std::uint64_t(step) * 101 + b);
                    auto loss = instance_loss(tape, vars, inst, model.config(), tc, srng);
                    step_terms += loss.values;
                    total = (b == 0) ? loss.total : tape.add(total, loss.total);
                }
                tape.backward(total);
                adam_step(model.params(), tape.grads_by_name(), opt, tc);
                epoch_terms += step_terms;
            }
        } catch (const NumericError& e) {
            model.params() = last_good;
            result.diverged = true;
            result.divergence_note = e.what();
            if (!have_best) {
                result.best_params = model.params();
                have_best = true;
            }
            break;
        }
        epoch_terms *= 1.0 / double(tc.steps_per_epoch);

        EpochLog log;
        log.epoch = epoch;
        log.train = epoch_terms;
        log.val_rel_l2 = has_val
                             ? evaluate_rel_l2(model, val_instances, field_column(std::size_t(tc.val_field)),
                                               std::size_t(tc.val_points))
                             : std::numeric_limits<double>::quiet_NaN();
        log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.history.push_back(log);
        if (on_epoch) on_epoch(log);

        const double score = has_val ? log.val_rel_l2 : log.train.total;
        if (!have_best || score < result.best_val) {
            result.best_val = score;
            result.best_epoch = epoch;
            result.best_params = model.params();
            have_best = true;
        }
    }
    if (!have_best) result.best_params = model.params();
    return result;
}

/// Fixed-dataset convenience overload.
template <class T>
TrainResult<T> train(Model<T>& model, const std::vector<PDEInstance>& train_instances,
                     const std::vector<PDEInstance>& val_instances, const TrainConfig& tc,
                     std::function<void(const EpochLog&)> on_epoch = {}) {
    return train(model, EpochSampler([&](int) -> const std::vector<PDEInstance>& { return train_instances; }),
                 val_instances, tc, std::move(on_epoch));
}

}  // namespace meshfield
