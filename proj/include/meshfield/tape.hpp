#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "meshfield/tensor.hpp"

namespace meshfield {

/// Reverse-mode differentiation over dense tensors.
///
/// A tape owns one forward computation: leaves are registered with
/// constant()/input()/param(), operations append nodes in topological
/// order, and backward() accumulates gradients by walking the node list
/// in reverse. Every operation validates shapes and rejects non-finite
/// results. Single-threaded; one tape per training step.
template <class T>
class GradientTape {
public:
    struct Var {
        std::uint32_t id = 0xffffffffu;
        bool valid() const { return id != 0xffffffffu; }
    };

    // ---- leaves ----------------------------------------------------------

    Var constant(Tensor<T> v) { return push(std::move(v), false, {}); }

    Var input(Tensor<T> v) { return push(std::move(v), true, {}); }

    Var param(const std::string& name, const Tensor<T>& v) {
        Var id = push(v, true, {});
        params_.emplace_back(name, id.id);
        return id;
    }

    // ---- access ----------------------------------------------------------

    const Tensor<T>& value(Var v) const { return nodes_[v.id].value; }

    const Tensor<T>& grad(Var v) {
        auto& n = nodes_[v.id];
        if (n.grad.size() == 0) n.grad = zeros_like(n.value);
        return n.grad;
    }

    /// Gradient of the last backward() per registered parameter name.
    /// Parameters the loss never touched report zero gradients.
    std::map<std::string, Tensor<T>> grads_by_name() {
        std::map<std::string, Tensor<T>> out;
        for (auto& [name, id] : params_) out.emplace(name, grad(Var{id}));
        return out;
    }

    std::size_t node_count() const { return nodes_.size(); }

    // ---- elementwise and linear algebra -----------------------------------

    Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false) {
        const auto& A = value(a);
        const auto& B = value(b);
        require(A.rank() == 2 && B.rank() == 2, "matmul: operands must be rank-2");
        const std::size_t m = trans_a ? A.shape[1] : A.shape[0];
        const std::size_t k = trans_a ? A.shape[0] : A.shape[1];
        const std::size_t kb = trans_b ? B.shape[1] : B.shape[0];
        const std::size_t n = trans_b ? B.shape[0] : B.shape[1];
        require(k == kb, "matmul: inner extents differ " + A.shape_str() + " x " + B.shape_str());
        Tensor<T> out({m, n});
        gemm(A, trans_a, B, trans_b, out, false);
        return push_op(std::move(out), {a, b}, [a, b, trans_a, trans_b](GradientTape& t, Var self) {
            const Tensor<T>& dC = t.grad(self);
            if (t.wants_grad(a)) {
                Tensor<T>& dA = t.grad_buf(a);
                if (!trans_a && !trans_b) t.gemm(dC, false, t.value(b), true, dA, true);
                else if (!trans_a && trans_b) t.gemm(dC, false, t.value(b), false, dA, true);
                else if (trans_a && !trans_b) t.gemm(t.value(b), false, dC, true, dA, true);
                else t.gemm(t.value(b), true, dC, true, dA, true);
            }
            if (t.wants_grad(b)) {
                Tensor<T>& dB = t.grad_buf(b);
                if (!trans_a && !trans_b) t.gemm(t.value(a), true, dC, false, dB, true);
                else if (!trans_a && trans_b) t.gemm(dC, true, t.value(a), false, dB, true);
                else if (trans_a && !trans_b) t.gemm(t.value(a), false, dC, false, dB, true);
                else t.gemm(dC, true, t.value(a), true, dB, true);
            }
        });
    }

    Var add(Var a, Var b) {
        return binary_same_shape(a, b, "add",
            [](T x, T y) { return x + y; },
            [](GradientTape& t, Var a2, Var b2, Var self) {
                const auto& d = t.grad(self);
                t.accumulate(a2, d.data.data(), T(1));
                t.accumulate(b2, d.data.data(), T(1));
            });
    }

    Var sub(Var a, Var b) {
        return binary_same_shape(a, b, "sub",
            [](T x, T y) { return x - y; },
            [](GradientTape& t, Var a2, Var b2, Var self) {
                const auto& d = t.grad(self);
                t.accumulate(a2, d.data.data(), T(1));
                t.accumulate(b2, d.data.data(), T(-1));
            });
    }

    Var mul(Var a, Var b) {
        return binary_same_shape(a, b, "mul",
            [](T x, T y) { return x * y; },
            [](GradientTape& t, Var a2, Var b2, Var self) {
                const auto& d = t.grad(self);
                const auto& va = t.value(a2);
                const auto& vb = t.value(b2);
                if (t.wants_grad(a2)) {
                    auto& g = t.grad_buf(a2);
                    for (std::size_t i = 0; i < g.size(); ++i) g[i] += d[i] * vb[i];
                }
                if (t.wants_grad(b2)) {
                    auto& g = t.grad_buf(b2);
                    for (std::size_t i = 0; i < g.size(); ++i) g[i] += d[i] * va[i];
                }
            });
    }

    Var div(Var a, Var b) {
        return binary_same_shape(a, b, "div",
            [](T x, T y) { return x / y; },
            [](GradientTape& t, Var a2, Var b2, Var self) {
                const auto& d = t.grad(self);
                const auto& va = t.value(a2);
                const auto& vb = t.value(b2);
                if (t.wants_grad(a2)) {
                    auto& g = t.grad_buf(a2);
                    for (std::size_t i = 0; i < g.size(); ++i) g[i] += d[i] / vb[i];
                }
                if (t.wants_grad(b2)) {
                    auto& g = t.grad_buf(b2);
                    for (std::size_t i = 0; i < g.size(); ++i) g[i] -= d[i] * va[i] / (vb[i] * vb[i]);
                }
            });
    }

    /// (r x c) + broadcast row vector (c)
    Var add_row_bias(Var x, Var b) {
        const auto& X = value(x);
        const auto& B = value(b);
        require(X.rank() == 2 && B.rank() == 1 && X.shape[1] == B.shape[0],
                "add_row_bias: want (r x c) + (c), got " + X.shape_str() + " + " + B.shape_str());
        Tensor<T> out = X;
        const std::size_t r = X.shape[0], c = X.shape[1];
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] += B[j];
        return push_op(std::move(out), {x, b}, [x, b, r, c](GradientTape& t, Var self) {
            const auto& d = t.grad(self);
            t.accumulate(x, d.data.data(), T(1));
            if (t.wants_grad(b)) {
                auto& g = t.grad_buf(b);
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) g[j] += d[i * c + j];
            }
        });
    }

    Var scale(Var a, T s) {
        Tensor<T> out = value(a);
        for (auto& v : out.data) v *= s;
        return push_op(std::move(out), {a}, [a, s](GradientTape& t, Var self) {
            t.accumulate(a, t.grad(self).data.data(), s);
        });
    }

    /// scalar variable times tensor
    Var smul(Var s, Var x) {
        const auto& S = value(s);
        require(S.size() == 1, "smul: first operand must be scalar");
        Tensor<T> out = value(x);
        const T sv = S.data[0];
        for (auto& v : out.data) v *= sv;
        return push_op(std::move(out), {s, x}, [s, x, sv](GradientTape& t, Var self) {
            const auto& d = t.grad(self);
            t.accumulate(x, d.data.data(), sv);
            if (t.wants_grad(s)) {
                const auto& vx = t.value(x);
                T acc = 0;
                for (std::size_t i = 0; i < d.size(); ++i) acc += d[i] * vx[i];
                t.grad_buf(s).data[0] += acc;
            }
        });
    }

    // ---- structural ops ----------------------------------------------------

    Var concat_cols(const std::vector<Var>& parts) {
        require(!parts.empty(), "concat_cols: empty input");
        const std::size_t r = value(parts[0]).shape[0];
        std::size_t ctot = 0;
        for (Var p : parts) {
            const auto& v = value(p);
            require(v.rank() == 2 && v.shape[0] == r, "concat_cols: row mismatch");
            ctot += v.shape[1];
        }
        Tensor<T> out({r, ctot});
        std::size_t off = 0;
        for (Var p : parts) {
            const auto& v = value(p);
            const std::size_t c = v.shape[1];
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) out.data[i * ctot + off + j] = v.data[i * c + j];
            off += c;
        }
        std::vector<Var> deps = parts;
        return push_op(std::move(out), deps, [parts, r, ctot](GradientTape& t, Var self) {
            const auto& d = t.grad(self);
            std::size_t off = 0;
            for (Var p : parts) {
                const std::size_t c = t.value(p).shape[1];
                if (t.wants_grad(p)) {
                    auto& g = t.grad_buf(p);
                    for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < c; ++j) g.data[i * c + j] += d.data[i * ctot + off + j];
                }
                off += c;
            }
        });
    }

    Var slice_cols(Var a, std::size_t c0, std::size_t c1) {
        const auto& A = value(a);
        require(A.rank() == 2 && c0 < c1 && c1 <= A.shape[1], "slice_cols: bad range");
        const std::size_t r = A.shape[0], c = A.shape[1], w = c1 - c0;
        Tensor<T> out({r, w});
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < w; ++j) out.data[i * w + j] = A.data[i * c + c0 + j];
        return push_op(std::move(out), {a}, [a, r, c, c0, w](GradientTape& t, Var self) {
            if (!t.wants_grad(a)) return;
            const auto& d = t.grad(self);
            auto& g = t.grad_buf(a);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < w; ++j) g.data[i * c + c0 + j] += d.data[i * w + j];
        });
    }

    Var slice_rows(Var a, std::size_t r0, std::size_t r1) {
        const auto& A = value(a);
        require(A.rank() == 2 && r0 < r1 && r1 <= A.shape[0], "slice_rows: bad range");
        const std::size_t c = A.shape[1], h = r1 - r0;
        Tensor<T> out({h, c});
        std::copy(A.data.begin() + r0 * c, A.data.begin() + r1 * c, out.data.begin());
        return push_op(std::move(out), {a}, [a, r0, c, h](GradientTape& t, Var self) {
            if (!t.wants_grad(a)) return;
            const auto& d = t.grad(self);
            auto& g = t.grad_buf(a);
            for (std::size_t i = 0; i < h * c; ++i) g.data[r0 * c + i] += d.data[i];
        });
    }

    /// out[i, :] = a[idx[i], :]; duplicate indices accumulate in backward
    Var gather_rows(Var a, std::vector<std::size_t> idx) {
        const auto& A = value(a);
        require(A.rank() == 2, "gather_rows: want rank-2");
        const std::size_t c = A.shape[1];
        Tensor<T> out({idx.size(), c});
        for (std::size_t i = 0; i < idx.size(); ++i) {
            require(idx[i] < A.shape[0], "gather_rows: index out of range");
            std::copy(A.data.begin() + idx[i] * c, A.data.begin() + (idx[i] + 1) * c,
                      out.data.begin() + i * c);
        }
        return push_op(std::move(out), {a}, [a, idx = std::move(idx), c](GradientTape& t, Var self) {
            if (!t.wants_grad(a)) return;
            const auto& d = t.grad(self);
            auto& g = t.grad_buf(a);
            for (std::size_t i = 0; i < idx.size(); ++i)
                for (std::size_t j = 0; j < c; ++j) g.data[idx[i] * c + j] += d.data[i * c + j];
        });
    }

    /// append `extra` zero rows
    Var pad_rows(Var a, std::size_t extra) {
        const auto& A = value(a);
        require(A.rank() == 2, "pad_rows: want rank-2");
        const std::size_t r = A.shape[0], c = A.shape[1];
        Tensor<T> out({r + extra, c});
        std::copy(A.data.begin(), A.data.end(), out.data.begin());
        return push_op(std::move(out), {a}, [a, r, c](GradientTape& t, Var self) {
            if (!t.wants_grad(a)) return;
            const auto& d = t.grad(self);
            auto& g = t.grad_buf(a);
            for (std::size_t i = 0; i < r * c; ++i) g.data[i] += d.data[i];
        });
    }

    Var reshape(Var a, std::vector<std::size_t> s) {
        const auto& A = value(a);
        require(Tensor<T>::extent(s) == A.size(), "reshape: element count mismatch");
        Tensor<T> out;
        out.shape = std::move(s);
        out.data = A.data;
        return push_op(std::move(out), {a}, [a](GradientTape& t, Var self) {
            t.accumulate(a, t.grad(self).data.data(), T(1));
        });
    }

    // ---- reductions and nonlinearities -------------------------------------

    Var softmax_rows(Var a) {
        const auto& A = value(a);
        require(A.rank() == 1 || A.rank() == 2, "softmax_rows: want rank-1 or rank-2");
        const std::size_t r = A.rank() == 2 ? A.shape[0] : 1;
        const std::size_t c = A.rank() == 2 ? A.shape[1] : A.shape[0];
        Tensor<T> out = A;
        for (std::size_t i = 0; i < r; ++i) {
            T* row = out.data.data() + i * c;
            T mx = row[0];
            for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
            T sum = 0;
            for (std::size_t j = 0; j < c; ++j) {
                row[j] = std::exp(row[j] - mx);
                sum += row[j];
            }
            for (std::size_t j = 0; j < c; ++j) row[j] /= sum;
        }
        return push_op(std::move(out), {a}, [a, r, c](GradientTape& t, Var self) {
            if (!t.wants_grad(a)) return;
            const auto& y = t.value(self);
            const auto& d = t.grad(self);
            auto& g = t.grad_buf(a);
            for (std::size_t i = 0; i < r; ++i) {
                const T* yr = y.data.data() + i * c;
                const T* dr = d.data.data() + i * c;
                T dot = 0;
                for (std::size_t j = 0; j < c; ++j) dot += yr[j] * dr[j];
                for (std::size_t j = 0; j < c; ++j) g.data[i * c + j] += yr[j] * (dr[j] - dot);
            }
        });
    }

    /// Row-wise layer normalization with learnable affine parameters.
    Var layernorm_rows(Var x, Var gamma, Var beta) {
        const auto& X = value(x);
        const auto& G = value(gamma);
        const auto& B = value(beta);
        require(X.rank() == 2, "layernorm_rows: want rank-2 input");
        const std::size_t r = X.shape[0], c = X.shape[1];
        require(G.rank() == 1 && G.shape[0] == c && B.rank() == 1 && B.shape[0] == c,
                "layernorm_rows: affine parameter shape mismatch");
        constexpr T eps = T(1e-5);
        Tensor<T> out({r, c});
        std::vector<T> rstd(r), mean(r);
        for (std::size_t i = 0; i < r; ++i) {
            const T* row = X.data.data() + i * c;
            T mu = 0;
            for (std::size_t j = 0; j < c; ++j) mu += row[j];
            mu /= T(c);
            T var = 0;
            for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
            var /= T(c);
            const T rs = T(1) / std::sqrt(var + eps);
            mean[i] = mu;
            rstd[i] = rs;
            for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] = (row[j] - mu) * rs * G[j] + B[j];
        }
        return push_op(std::move(out), {x, gamma, beta},
            [x, gamma, beta, r, c, mean = std::move(mean), rstd = std::move(rstd)](GradientTape& t, Var self) {
                const auto& d = t.grad(self);
                const auto& X2 = t.value(x);
                const auto& G2 = t.value(gamma);
                for (std::size_t i = 0; i < r; ++i) {
                    const T* xr = X2.data.data() + i * c;
                    const T* dr = d.data.data() + i * c;
                    if (t.wants_grad(gamma) || t.wants_grad(beta)) {
                        for (std::size_t j = 0; j < c; ++j) {
                            const T xhat = (xr[j] - mean[i]) * rstd[i];
                            if (t.wants_grad(gamma)) t.grad_buf(gamma).data[j] += dr[j] * xhat;
                            if (t.wants_grad(beta)) t.grad_buf(beta).data[j] += dr[j];
                        }
                    }
                    if (t.wants_grad(x)) {
                        T sum_dxhat = 0, sum_dxhat_xhat = 0;
                        for (std::size_t j = 0; j < c; ++j) {
                            const T xhat = (xr[j] - mean[i]) * rstd[i];
                            const T dxhat = dr[j] * G2[j];
                            sum_dxhat += dxhat;
                            sum_dxhat_xhat += dxhat * xhat;
                        }
                        auto& g = t.grad_buf(x);
                        for (std::size_t j = 0; j < c; ++j) {
                            const T xhat = (xr[j] - mean[i]) * rstd[i];
                            const T dxhat = dr[j] * G2[j];
                            g.data[i * c + j] +=
                                rstd[i] * (dxhat - sum_dxhat / T(c) - xhat * sum_dxhat_xhat / T(c));
                        }
                    }
                }
            });
    }

    Var reduce_sum(Var a) {
        const auto& A = value(a);
        T s = 0;
        for (T v : A.data) s += v;
        return push_op(Tensor<T>::scalar(s), {a}, [a](GradientTape& t, Var self) {
            if (!t.wants_grad(a)) return;
            const T d = t.grad(self).data[0];
            auto& g = t.grad_buf(a);
            for (auto& v : g.data) v += d;
        });
    }

    Var reduce_mean(Var a) {
        const auto& A = value(a);
        const std::size_t n = A.size();
        require(n > 0, "reduce_mean: empty tensor");
        T s = 0;
        for (T v : A.data) s += v;
        s /= T(n);
        return push_op(Tensor<T>::scalar(s), {a}, [a, n](GradientTape& t, Var self) {
            if (!t.wants_grad(a)) return;
            const T d = t.grad(self).data[0] / T(n);
            auto& g = t.grad_buf(a);
            for (auto& v : g.data) v += d;
        });
    }

    Var sin(Var a) {
        return unary(a, [](T v) { return std::sin(v); },
            [a](GradientTape& t, Var self) {
                if (!t.wants_grad(a)) return;
                const auto& d = t.grad(self);
                const auto& va = t.value(a);
                auto& g = t.grad_buf(a);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += d[i] * std::cos(va[i]);
            });
    }

    Var cos(Var a) {
        return unary(a, [](T v) { return std::cos(v); },
            [a](GradientTape& t, Var self) {
                if (!t.wants_grad(a)) return;
                const auto& d = t.grad(self);
                const auto& va = t.value(a);
                auto& g = t.grad_buf(a);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] -= d[i] * std::sin(va[i]);
            });
    }

    Var exp(Var a) {
        return unary(a, [](T v) { return std::exp(v); },
            [a](GradientTape& t, Var self) {
                if (!t.wants_grad(a)) return;
                const auto& d = t.grad(self);
                const auto& y = t.value(self);
                auto& g = t.grad_buf(a);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += d[i] * y[i];
            });
    }

    /// out[i,j] = x[i,j] / col[i,0]
    Var div_by_col(Var x, Var col) {
        const auto& X = value(x);
        const auto& C = value(col);
        require(X.rank() == 2 && C.rank() == 2 && C.shape[1] == 1 && C.shape[0] == X.shape[0],
                "div_by_col: want (r x c) / (r x 1)");
        const std::size_t r = X.shape[0], c = X.shape[1];
        Tensor<T> out = X;
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] /= C.data[i];
        return push_op(std::move(out), {x, col}, [x, col, r, c](GradientTape& t, Var self) {
            const auto& d = t.grad(self);
            const auto& vc = t.value(col);
            if (t.wants_grad(x)) {
                auto& g = t.grad_buf(x);
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) g.data[i * c + j] += d.data[i * c + j] / vc.data[i];
            }
            if (t.wants_grad(col)) {
                const auto& y = t.value(self);
                auto& g = t.grad_buf(col);
                for (std::size_t i = 0; i < r; ++i) {
                    T acc = 0;
                    for (std::size_t j = 0; j < c; ++j) acc += d.data[i * c + j] * y.data[i * c + j];
                    g.data[i] -= acc / vc.data[i];
                }
            }
        });
    }

    // ---- backward ----------------------------------------------------------

    void backward(Var loss) {
        require(value(loss).size() == 1, "backward: loss must be a scalar");
        grad_buf(loss).data[0] = T(1);
        for (std::uint32_t i = loss.id + 1; i-- > 0;) {
            auto& n = nodes_[i];
            if (n.backward && n.grad.size() != 0) n.backward(*this, Var{i});
        }
    }

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;  // empty until touched
        bool needs_grad = false;
        std::function<void(GradientTape&, Var)> backward;
    };

    // deque keeps value()/grad() references stable while new nodes append
    std::deque<Node> nodes_;
    std::vector<std::pair<std::string, std::uint32_t>> params_;

    static void require(bool ok, const std::string& msg) {
        if (!ok) throw ConfigError(msg);
    }

    bool wants_grad(Var v) const { return nodes_[v.id].needs_grad; }

    Tensor<T>& grad_buf(Var v) {
        auto& n = nodes_[v.id];
        if (n.grad.size() == 0) n.grad = zeros_like(n.value);
        return n.grad;
    }

    void accumulate(Var v, const T* d, T s) {
        if (!wants_grad(v)) return;
        auto& g = grad_buf(v);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * d[i];
    }

    Var push(Tensor<T> v, bool needs_grad, std::function<void(GradientTape&, Var)> bw) {
        if (!v.all_finite()) throw NumericError("tape: non-finite tensor");
        Node n;
        n.value = std::move(v);
        n.needs_grad = needs_grad;
        n.backward = std::move(bw);
        nodes_.push_back(std::move(n));
        return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
    }

    Var push_op(Tensor<T> v, const std::vector<Var>& parents,
                std::function<void(GradientTape&, Var)> bw) {
        bool ng = false;
        for (Var p : parents) ng = ng || nodes_[p.id].needs_grad;
        return push(std::move(v), ng, ng ? std::move(bw) : std::function<void(GradientTape&, Var)>{});
    }

    template <class FwdFn, class BwdFn>
    Var unary(Var a, FwdFn f, BwdFn bw) {
        Tensor<T> out = value(a);
        for (auto& v : out.data) v = f(v);
        return push_op(std::move(out), {a}, bw);
    }

    template <class FwdFn, class BwdFn>
    Var binary_same_shape(Var a, Var b, const char* name, FwdFn f, BwdFn bw) {
        const auto& A = value(a);
        const auto& B = value(b);
        require(A.same_shape(B), std::string(name) + ": shape mismatch " + A.shape_str() + " vs " + B.shape_str());
        Tensor<T> out = A;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(out[i], B[i]);
        return push_op(std::move(out), {a, b},
            [a, b, bw](GradientTape& t, Var self) { bw(t, a, b, self); });
    }

    /// C (+)= op(A) * op(B)
    void gemm(const Tensor<T>& A, bool ta, const Tensor<T>& B, bool tb, Tensor<T>& C, bool acc) {
        const std::size_t m = ta ? A.shape[1] : A.shape[0];
        const std::size_t k = ta ? A.shape[0] : A.shape[1];
        const std::size_t n = tb ? B.shape[0] : B.shape[1];
        if (!acc) std::fill(C.data.begin(), C.data.end(), T(0));
        const T* a = A.data.data();
        const T* b = B.data.data();
        T* c = C.data.data();
        if (!ta && !tb) {
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const T av = a[i * k + p];
                    if (av == T(0)) continue;
                    const T* brow = b + p * n;
                    T* crow = c + i * n;
                    for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
                }
        } else if (!ta && tb) {
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    const T* arow = a + i * k;
                    const T* brow = b + j * k;
                    T s = 0;
                    for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
                    c[i * n + j] += s;
                }
        } else if (ta && !tb) {
            for (std::size_t p = 0; p < k; ++p)
                for (std::size_t i = 0; i < m; ++i) {
                    const T av = a[p * m + i];
                    if (av == T(0)) continue;
                    const T* brow = b + p * n;
                    T* crow = c + i * n;
                    for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
                }
        } else {
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t p = 0; p < k; ++p) {
                    const T bv = b[j * k + p];
                    if (bv == T(0)) continue;
                    for (std::size_t i = 0; i < m; ++i) c[i * n + j] += a[p * m + i] * bv;
                }
        }
        if (!C.all_finite()) throw NumericError("gemm: non-finite result");
    }
};

}  // namespace meshfield
