#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "vmr/graph.hpp"
#include "vmr/tensor.hpp"

namespace vmr {

namespace detail {

// c(r x t) += a(r x s) . b(s x t)
inline void mm_acc(const real* a, std::size_t r, std::size_t s, const real* b, std::size_t t, real* c) {
    for (std::size_t i = 0; i < r; ++i) {
        const real* ai = a + i * s;
        real* ci = c + i * t;
        for (std::size_t k = 0; k < s; ++k) {
            const real av = ai[k];
            const real* bk = b + k * t;
            for (std::size_t j = 0; j < t; ++j) ci[j] += av * bk[j];
        }
    }
}

// c(r x t) += a(r x s) . b(t x s)^T
inline void mm_abt_acc(const real* a, std::size_t r, std::size_t s, const real* b, std::size_t t, real* c) {
    for (std::size_t i = 0; i < r; ++i) {
        const real* ai = a + i * s;
        for (std::size_t j = 0; j < t; ++j) {
            const real* bj = b + j * s;
            real acc = 0.0;
            for (std::size_t k = 0; k < s; ++k) acc += ai[k] * bj[k];
            c[i * t + j] += acc;
        }
    }
}

// c(s x t) += a(r x s)^T . b(r x t)
inline void mm_atb_acc(const real* a, std::size_t r, std::size_t s, const real* b, std::size_t t, real* c) {
    for (std::size_t i = 0; i < r; ++i) {
        const real* ai = a + i * s;
        const real* bi = b + i * t;
        for (std::size_t k = 0; k < s; ++k) {
            const real av = ai[k];
            real* ck = c + k * t;
            for (std::size_t j = 0; j < t; ++j) ck[j] += av * bi[j];
        }
    }
}

inline real sigmoid_scalar(real x) {
    if (x >= 0.0) {
        const real e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const real e = std::exp(x);
    return e / (1.0 + e);
}

enum class Broadcast { None, Row };

inline Broadcast ew_mode(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() == b.shape()) return Broadcast::None;
    if (a.rank() == 2) {
        if (b.rank() == 1 && b.shape()[0] == a.cols()) return Broadcast::Row;
        if (b.rank() == 2 && b.rows() == 1 && b.cols() == a.cols()) return Broadcast::Row;
    }
    throw ShapeError(msg(op, " shape mismatch: ", shape_str(a.shape()), " vs ", shape_str(b.shape()),
                         " (equal shapes or leading-axis broadcast only)"));
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
        throw ShapeError(msg("matmul shape mismatch: ", shape_str(a.shape()), " x ", shape_str(b.shape())));
    }
    const std::size_t r = a.rows(), s = a.cols(), t = b.cols();
    Tensor out = Tensor::zeros({r, t});
    detail::mm_acc(a.data(), r, s, b.data(), t, out.data());
    Graph* g = Graph::active();
    if (g && (g->tracked(a) || g->tracked(b))) {
        const int ia = g->input_id(a), ib = g->input_id(b);
        g->emit("matmul", out, {ia, ib}, [a, b, ia, ib, r, s, t](Graph& gr, int self) {
            const auto& go = gr.grad(self);
            if (ia >= 0) detail::mm_abt_acc(go.data(), r, t, b.data(), s, gr.grad(ia).data());
            if (ib >= 0) detail::mm_atb_acc(a.data(), r, s, go.data(), t, gr.grad(ib).data());
        });
    }
    return out;
}

inline Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw ShapeError(msg("transpose requires rank-2, got ", shape_str(a.shape())));
    const std::size_t r = a.rows(), c = a.cols();
    Tensor out = Tensor::zeros({c, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out(j, i) = a(i, j);
    Graph* g = Graph::active();
    if (g && g->tracked(a)) {
        const int ia = g->input_id(a);
        g->emit("transpose", out, {ia}, [ia, r, c](Graph& gr, int self) {
            const auto& go = gr.grad(self);
            auto& da = gr.grad(ia);
            for (std::size_t i = 0; i < c; ++i)
                for (std::size_t j = 0; j < r; ++j) da[j * c + i] += go[i * r + j];
        });
    }
    return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    const auto mode = detail::ew_mode("add", a, b);
    Tensor out = Tensor::zeros(a.shape());
    const std::size_t n = a.numel();
    if (mode == detail::Broadcast::None) {
        for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
    } else {
        const std::size_t c = a.cols();
        for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i % c];
    }
    Graph* g = Graph::active();
    if (g && (g->tracked(a) || g->tracked(b))) {
        const int ia = g->input_id(a), ib = g->input_id(b);
        g->emit("add", out, {ia, ib}, [ia, ib, n, mode, a](Graph& gr, int self) {
            const auto& go = gr.grad(self);
            if (ia >= 0) {
                auto& da = gr.grad(ia);
                for (std::size_t i = 0; i < n; ++i) da[i] += go[i];
            }
            if (ib >= 0) {
                auto& db = gr.grad(ib);
                if (mode == detail::Broadcast::None) {
                    for (std::size_t i = 0; i < n; ++i) db[i] += go[i];
                } else {
                    const std::size_t c = a.cols();
                    for (std::size_t i = 0; i < n; ++i) db[i % c] += go[i];
                }
            }
        });
    }
    return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    const auto mode = detail::ew_mode("mul", a, b);
    Tensor out = Tensor::zeros(a.shape());
    const std::size_t n = a.numel();
    if (mode == detail::Broadcast::None) {
        for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
    } else {
        const std::size_t c = a.cols();
        for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i % c];
    }
    Graph* g = Graph::active();
    if (g && (g->tracked(a) || g->tracked(b))) {
        const int ia = g->input_id(a), ib = g->input_id(b);
        g->emit("mul", out, {ia, ib}, [a, b, ia, ib, n, mode](Graph& gr, int self) {
            const auto& go = gr.grad(self);
            const std::size_t c = mode == detail::Broadcast::Row ? a.cols() : 0;
            if (ia >= 0) {
                auto& da = gr.grad(ia);
                if (mode == detail::Broadcast::None) {
                    for (std::size_t i = 0; i < n; ++i) da[i] += go[i] * b[i];
                } else {
                    for (std::size_t i = 0; i < n; ++i) da[i] += go[i] * b[i % c];
                }
            }
            if (ib >= 0) {
                auto& db = gr.grad(ib);
                if (mode == detail::Broadcast::None) {
                    for (std::size_t i = 0; i < n; ++i) db[i] += go[i] * a[i];
                } else {
                    for (std::size_t i = 0; i < n; ++i) db[i % c] += go[i] * a[i];
                }
            }
        });
    }
    return out;
}

inline Tensor scale(const Tensor& a, real c) {
    Tensor out = Tensor::zeros(a.shape());
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) out[i] = c * a[i];
    Graph* g = Graph::active();
    if (g && g->tracked(a)) {
        const int ia = g->input_id(a);
        g->emit("scale", out, {ia}, [ia, c, n](Graph& gr, int self) {
            const auto& go = gr.grad(self);
            auto& da = gr.grad(ia);
            for (std::size_t i = 0; i < n; ++i) da[i] += c * go[i];
        });
    }
    return out;
}

inline Tensor neg(const Tensor& a) { return scale(a, -1.0); }

inline Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

inline Tensor sum(const Tensor& a) {
    real total = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) total += a[i];
    Tensor out = Tensor::scalar(total);
    Graph* g = Graph::active();
    if (g && g->tracked(a)) {
        const int ia = g->input_id(a);
        const std::size_t n = a.numel();
        g->emit("sum", out, {ia}, [ia, n](Graph& gr, int self) {
            const real go = gr.grad(self)[0];
            auto& da = gr.grad(ia);
            for (std::size_t i = 0; i < n; ++i) da[i] += go;
        });
    }
    return out;
}

inline Tensor sigmoid(const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape());
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) out[i] = detail::sigmoid_scalar(a[i]);
    Graph* g = Graph::active();
    if (g && g->tracked(a)) {
        const int ia = g->input_id(a);
        g->emit("sigmoid", out, {ia}, [ia, out, n](Graph& gr, int self) {
            const auto& go = gr.grad(self);
            auto& da = gr.grad(ia);
            for (std::size_t i = 0; i < n; ++i) da[i] += go[i] * out[i] * (1.0 - out[i]);
        });
    }
    return out;
}

inline Tensor tanh(const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape());
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(a[i]);
    Graph* g = Graph::active();
    if (g && g->tracked(a)) {
        const int ia = g->input_id(a);
        g->emit("tanh", out, {ia}, [ia, out, n](Graph& gr, int self) {
            const auto& go = gr.grad(self);
            auto& da = gr.grad(ia);
            for (std::size_t i = 0; i < n; ++i) da[i] += go[i] * (1.0 - out[i] * out[i]);
        });
    }
    return out;
}

inline Tensor relu(const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape());
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
    Graph* g = Graph::active();
    if (g && g->tracked(a)) {
        const int ia = g->input_id(a);
        g->emit("relu", out, {ia}, [ia, a, n](Graph& gr, int self) {
            const auto& go = gr.grad(self);
            auto& da = gr.grad(ia);
            for (std::size_t i = 0; i < n; ++i) {
                if (a[i] > 0.0) da[i] += go[i];
            }
        });
    }
    return out;
}

inline Tensor log(const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape());
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) {
        if (a[i] <= 0.0) throw DomainError(msg("log of non-positive input ", a[i], " at index ", i));
        out[i] = std::log(a[i]);
    }
    Graph* g = Graph::active();
    if (g && g->tracked(a)) {
        const int ia = g->input_id(a);
        g->emit("log", out, {ia}, [ia, a, n](Graph& gr, int self) {
            const auto& go = gr.grad(self);
            auto& da = gr.grad(ia);
            for (std::size_t i = 0; i < n; ++i) da[i] += go[i] / a[i];
        });
    }
    return out;
}

// Gradient passes only where the input is strictly inside (lo, hi).
inline Tensor clamp(const Tensor& a, real lo, real hi) {
    if (lo > hi) throw DomainError(msg("clamp bounds inverted: ", lo, " > ", hi));
    Tensor out = Tensor::zeros(a.shape());
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) out[i] = std::min(hi, std::max(lo, a[i]));
    Graph* g = Graph::active();
    if (g && g->tracked(a)) {
        const int ia = g->input_id(a);
        g->emit("clamp", out, {ia}, [ia, a, lo, hi, n](Graph& gr, int self) {
            const auto& go = gr.grad(self);
            auto& da = gr.grad(ia);
            for (std::size_t i = 0; i < n; ++i) {
                if (a[i] > lo && a[i] < hi) da[i] += go[i];
            }
        });
    }
    return out;
}

// Elementwise smooth-L1: 0.5*x^2 for |x| < 1, |x| - 0.5 otherwise.
inline Tensor smooth_l1(const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape());
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) {
        const real x = a[i];
        out[i] = std::abs(x) < 1.0 ? 0.5 * x * x : std::abs(x) - 0.5;
    }
    Graph* g = Graph::active();
    if (g && g->tracked(a)) {
        const int ia = g->input_id(a);
        g->emit("smooth_l1", out, {ia}, [ia, a, n](Graph& gr, int self) {
            const auto& go = gr.grad(self);
            auto& da = gr.grad(ia);
            for (std::size_t i = 0; i < n; ++i) da[i] += go[i] * std::min(1.0, std::max(-1.0, a[i]));
        });
    }
    return out;
}

// Row softmax with per-row max subtraction.
inline Tensor softmax_rows(const Tensor& a) {
    if (a.rank() != 2) throw ShapeError(msg("softmax_rows requires rank-2, got ", shape_str(a.shape())));
    const std::size_t r = a.rows(), c = a.cols();
    Tensor out = Tensor::zeros({r, c});
    for (std::size_t i = 0; i < r; ++i) {
        real m = a(i, 0);
        for (std::size_t j = 1; j < c; ++j) m = std::max(m, a(i, j));
        real z = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            const real e = std::exp(a(i, j) - m);
            out(i, j) = e;
            z += e;
        }
        for (std::size_t j = 0; j < c; ++j) out(i, j) /= z;
    }
    Graph* g = Graph::active();
    if (g && g->tracked(a)) {
        const int ia = g->input_id(a);
        g->emit("softmax_rows", out, {ia}, [ia, out, r, c](Graph& gr, int self) {
            const auto& go = gr.grad(self);
            auto& da = gr.grad(ia);
            for (std::size_t i = 0; i < r; ++i) {
                real dot = 0.0;
                for (std::size_t j = 0; j < c; ++j) dot += go[i * c + j] * out(i, j);
                for (std::size_t j = 0; j < c; ++j) da[i * c + j] += out(i, j) * (go[i * c + j] - dot);
            }
        });
    }
    return out;
}

inline Tensor concat(int axis, const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat of zero tensors");
    if (axis != 0 && axis != 1) throw ShapeError(msg("concat axis must be 0 or 1, got ", axis));
    for (const Tensor& p : parts) {
        if (p.rank() != 2) throw ShapeError(msg("concat requires rank-2 parts, got ", shape_str(p.shape())));
    }
    std::size_t rows = parts[0].rows(), cols = parts[0].cols();
    if (axis == 0) {
        rows = 0;
        for (const Tensor& p : parts) {
            if (p.cols() != cols) {
                throw ShapeError(msg("concat axis 0 column mismatch: ", shape_str(parts[0].shape()), " vs ",
                                     shape_str(p.shape())));
            }
            rows += p.rows();
        }
    } else {
        cols = 0;
        for (const Tensor& p : parts) {
            if (p.rows() != rows) {
                throw ShapeError(msg("concat axis 1 row mismatch: ", shape_str(parts[0].shape()), " vs ",
                                     shape_str(p.shape())));
            }
            cols += p.cols();
        }
    }
    Tensor out = Tensor::zeros({rows, cols});
    if (axis == 0) {
        std::size_t r0 = 0;
        for (const Tensor& p : parts) {
            std::copy(p.data(), p.data() + p.numel(), out.data() + r0 * cols);
            r0 += p.rows();
        }
    } else {
        std::size_t c0 = 0;
        for (const Tensor& p : parts) {
            for (std::size_t i = 0; i < rows; ++i)
                std::copy(p.data() + i * p.cols(), p.data() + (i + 1) * p.cols(), out.data() + i * cols + c0);
            c0 += p.cols();
        }
    }
    Graph* g = Graph::active();
    bool any = false;
    if (g) {
        for (const Tensor& p : parts) any = any || g->tracked(p);
    }
    if (g && any) {
        std::vector<int> ids;
        std::vector<std::size_t> extents;
        ids.reserve(parts.size());
        for (const Tensor& p : parts) {
            ids.push_back(g->input_id(p));
            extents.push_back(axis == 0 ? p.rows() : p.cols());
        }
        g->emit("concat", out, ids, [ids, extents, axis, rows, cols](Graph& gr, int self) {
            const auto& go = gr.grad(self);
            std::size_t off = 0;
            for (std::size_t k = 0; k < ids.size(); ++k) {
                const std::size_t ext = extents[k];
                if (ids[k] >= 0) {
                    auto& dp = gr.grad(ids[k]);
                    if (axis == 0) {
                        for (std::size_t i = 0; i < ext * cols; ++i) dp[i] += go[off * cols + i];
                    } else {
                        for (std::size_t i = 0; i < rows; ++i)
                            for (std::size_t j = 0; j < ext; ++j) dp[i * ext + j] += go[i * cols + off + j];
                    }
                }
                off += ext;
            }
        });
    }
    return out;
}

inline Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t r1) {
    if (a.rank() != 2) throw ShapeError(msg("slice_rows requires rank-2, got ", shape_str(a.shape())));
    if (r0 >= r1 || r1 > a.rows()) {
        throw ShapeError(msg("slice_rows [", r0, ",", r1, ") out of range for ", shape_str(a.shape())));
    }
    const std::size_t c = a.cols(), h = r1 - r0;
    Tensor out({h, c}, std::vector<real>(a.data() + r0 * c, a.data() + r1 * c));
    Graph* g = Graph::active();
    if (g && g->tracked(a)) {
        const int ia = g->input_id(a);
        g->emit("slice_rows", out, {ia}, [ia, r0, h, c](Graph& gr, int self) {
            const auto& go = gr.grad(self);
            auto& da = gr.grad(ia);
            for (std::size_t i = 0; i < h * c; ++i) da[r0 * c + i] += go[i];
        });
    }
    return out;
}

inline Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw ShapeError(msg("reshape ", shape_str(a.shape()), " -> ", shape_str(shape), " changes element count"));
    }
    Tensor out(std::move(shape), a.values());
    Graph* g = Graph::active();
    if (g && g->tracked(a)) {
        const int ia = g->input_id(a);
        const std::size_t n = a.numel();
        g->emit("reshape", out, {ia}, [ia, n](Graph& gr, int self) {
            const auto& go = gr.grad(self);
            auto& da = gr.grad(ia);
            for (std::size_t i = 0; i < n; ++i) da[i] += go[i];
        });
    }
    return out;
}

// All-pairs row sums: out[(i*m)+j, :] = a[i, :] + b[j, :].
inline Tensor pairwise_add(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) {
        throw ShapeError(msg("pairwise_add shape mismatch: ", shape_str(a.shape()), " vs ", shape_str(b.shape())));
    }
    const std::size_t n = a.rows(), m = b.rows(), c = a.cols();
    Tensor out = Tensor::zeros({n * m, c});
    for (std::size_t i = 0; i < n; ++i) {
        const real* ai = a.data() + i * c;
        for (std::size_t j = 0; j < m; ++j) {
            const real* bj = b.data() + j * c;
            real* o = out.data() + (i * m + j) * c;
            for (std::size_t k = 0; k < c; ++k) o[k] = ai[k] + bj[k];
        }
    }
    Graph* g = Graph::active();
    if (g && (g->tracked(a) || g->tracked(b))) {
        const int ia = g->input_id(a), ib = g->input_id(b);
        g->emit("pairwise_add", out, {ia, ib}, [ia, ib, n, m, c](Graph& gr, int self) {
            const auto& go = gr.grad(self);
            if (ia >= 0) {
                auto& da = gr.grad(ia);
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < m; ++j)
                        for (std::size_t k = 0; k < c; ++k) da[i * c + k] += go[(i * m + j) * c + k];
            }
            if (ib >= 0) {
                auto& db = gr.grad(ib);
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < m; ++j)
                        for (std::size_t k = 0; k < c; ++k) db[j * c + k] += go[(i * m + j) * c + k];
            }
        });
    }
    return out;
}

// Row gather with scatter-add backward; used for trainable embedding lookup.
inline Tensor gather_rows(const Tensor& table, const std::vector<int>& idx) {
    if (table.rank() != 2) throw ShapeError(msg("gather_rows requires rank-2 table, got ", shape_str(table.shape())));
    const std::size_t c = table.cols();
    Tensor out = Tensor::zeros({idx.size(), c});
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= table.rows()) {
            throw DomainError(msg("gather_rows index ", idx[i], " out of range [0,", table.rows(), ")"));
        }
        std::copy(table.data() + static_cast<std::size_t>(idx[i]) * c,
                  table.data() + (static_cast<std::size_t>(idx[i]) + 1) * c, out.data() + i * c);
    }
    Graph* g = Graph::active();
    if (g && g->tracked(table)) {
        const int it = g->input_id(table);
        g->emit("gather_rows", out, {it}, [it, idx, c](Graph& gr, int self) {
            const auto& go = gr.grad(self);
            auto& dt = gr.grad(it);
            for (std::size_t i = 0; i < idx.size(); ++i)
                for (std::size_t k = 0; k < c; ++k) dt[static_cast<std::size_t>(idx[i]) * c + k] += go[i * c + k];
        });
    }
    return out;
}

}  // namespace vmr
