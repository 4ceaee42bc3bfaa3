#pragma once

#include <memory>
#include <string>
#include <vector>

#include "vmr/ops.hpp"
#include "vmr/params.hpp"

namespace vmr {

namespace detail {

// y(rows) += m(rows x cols) . x(cols)
inline void mv_acc(const real* m, std::size_t rows, std::size_t cols, const real* x, real* y) {
    for (std::size_t i = 0; i < rows; ++i) {
        const real* mi = m + i * cols;
        real acc = 0.0;
        for (std::size_t k = 0; k < cols; ++k) acc += mi[k] * x[k];
        y[i] += acc;
    }
}

// y(cols) += m(rows x cols)^T . x(rows)
inline void mtv_acc(const real* m, std::size_t rows, std::size_t cols, const real* x, real* y) {
    for (std::size_t i = 0; i < rows; ++i) {
        const real xi = x[i];
        const real* mi = m + i * cols;
        for (std::size_t k = 0; k < cols; ++k) y[k] += xi * mi[k];
    }
}

// m(rows x cols) += a(rows) outer b(cols)
inline void outer_acc(real* m, const real* a, std::size_t rows, const real* b, std::size_t cols) {
    for (std::size_t i = 0; i < rows; ++i) {
        const real ai = a[i];
        real* mi = m + i * cols;
        for (std::size_t k = 0; k < cols; ++k) mi[k] += ai * b[k];
    }
}

}  // namespace detail

// One direction of a GRU: update gate z, reset gate r, tanh candidate.
// State update: h_t = (1 - z_t) * h_prev + z_t * cand_t.
struct GruBlock {
    Tensor w_update, w_reset, w_cand;  // state x input
    Tensor u_update, u_reset, u_cand;  // state x state
    Tensor b_update, b_reset, b_cand;  // state

    std::size_t state_dim() const { return w_update.rows(); }
    std::size_t input_dim() const { return w_update.cols(); }

    static GruBlock init(std::size_t state, std::size_t input, std::uint64_t seed, const std::string& prefix) {
        GruBlock b;
        auto mat = [&](const char* leaf, std::size_t r, std::size_t c) {
            Rng rng(mix_seed(seed, prefix + "." + leaf));
            return glorot(r, c, rng);
        };
        b.w_update = mat("w_update", state, input);
        b.w_reset = mat("w_reset", state, input);
        b.w_cand = mat("w_cand", state, input);
        b.u_update = mat("u_update", state, state);
        b.u_reset = mat("u_reset", state, state);
        b.u_cand = mat("u_cand", state, state);
        b.b_update = Tensor::zeros({state});
        b.b_reset = Tensor::zeros({state});
        b.b_cand = Tensor::zeros({state});
        return b;
    }

    void register_params(ParamTree& tree, const std::string& prefix) {
        tree.add(prefix + ".w_update", w_update);
        tree.add(prefix + ".w_reset", w_reset);
        tree.add(prefix + ".w_cand", w_cand);
        tree.add(prefix + ".u_update", u_update);
        tree.add(prefix + ".u_reset", u_reset);
        tree.add(prefix + ".u_cand", u_cand);
        tree.add(prefix + ".b_update", b_update);
        tree.add(prefix + ".b_reset", b_reset);
        tree.add(prefix + ".b_cand", b_cand);
    }
};

namespace detail {

struct GruCache {
    std::vector<real> z, r, n;  // gate activations per step, T x state
};

}  // namespace detail

// Runs the cell over all rows of seq (T x input), zero initial state, and
// returns the state at every step as a T x state matrix (row t is the state
// after consuming row t in scan order). reverse scans from the last row.
// Recorded as a single graph node; the backward pass is handwritten BPTT.
inline Tensor gru_scan(const Tensor& seq, const GruBlock& p, bool reverse) {
    if (seq.rank() != 2) throw ShapeError(msg("gru_scan input must be rank-2, got ", shape_str(seq.shape())));
    const std::size_t T = seq.rows(), din = seq.cols(), hh = p.state_dim();
    if (T == 0) throw ShapeError("gru_scan over empty sequence");
    if (din != p.input_dim()) {
        throw ShapeError(msg("gru_scan input width ", din, " does not match cell input ", p.input_dim()));
    }

    auto cache = std::make_shared<detail::GruCache>();
    cache->z.resize(T * hh);
    cache->r.resize(T * hh);
    cache->n.resize(T * hh);
    Tensor out = Tensor::zeros({T, hh});

    std::vector<real> az(hh), ar(hh), an(hh), q(hh);
    const real* hp = nullptr;  // previous state in scan order; null = zeros
    for (std::size_t s = 0; s < T; ++s) {
        const std::size_t t = reverse ? T - 1 - s : s;
        const real* x = seq.data() + t * din;
        real* z = cache->z.data() + t * hh;
        real* r = cache->r.data() + t * hh;
        real* n = cache->n.data() + t * hh;
        real* h = out.data() + t * hh;

        std::copy(p.b_update.data(), p.b_update.data() + hh, az.begin());
        std::copy(p.b_reset.data(), p.b_reset.data() + hh, ar.begin());
        std::copy(p.b_cand.data(), p.b_cand.data() + hh, an.begin());
        detail::mv_acc(p.w_update.data(), hh, din, x, az.data());
        detail::mv_acc(p.w_reset.data(), hh, din, x, ar.data());
        detail::mv_acc(p.w_cand.data(), hh, din, x, an.data());
        if (hp) {
            detail::mv_acc(p.u_update.data(), hh, hh, hp, az.data());
            detail::mv_acc(p.u_reset.data(), hh, hh, hp, ar.data());
        }
        for (std::size_t j = 0; j < hh; ++j) {
            z[j] = detail::sigmoid_scalar(az[j]);
            r[j] = detail::sigmoid_scalar(ar[j]);
            q[j] = hp ? r[j] * hp[j] : 0.0;
        }
        if (hp) detail::mv_acc(p.u_cand.data(), hh, hh, q.data(), an.data());
        for (std::size_t j = 0; j < hh; ++j) {
            n[j] = std::tanh(an[j]);
            h[j] = hp ? (1.0 - z[j]) * hp[j] + z[j] * n[j] : z[j] * n[j];
        }
        hp = h;
    }

    Graph* g = Graph::active();
    bool track = false;
    if (g) {
        track = g->tracked(seq) || g->tracked(p.w_update) || g->tracked(p.w_reset) || g->tracked(p.w_cand) ||
                g->tracked(p.u_update) || g->tracked(p.u_reset) || g->tracked(p.u_cand) ||
                g->tracked(p.b_update) || g->tracked(p.b_reset) || g->tracked(p.b_cand);
    }
    if (track) {
        const int iseq = g->input_id(seq);
        const int iwz = g->input_id(p.w_update), iwr = g->input_id(p.w_reset), iwh = g->input_id(p.w_cand);
        const int iuz = g->input_id(p.u_update), iur = g->input_id(p.u_reset), iuh = g->input_id(p.u_cand);
        const int ibz = g->input_id(p.b_update), ibr = g->input_id(p.b_reset), ibh = g->input_id(p.b_cand);
        GruBlock pc = p;
        g->emit("gru_scan", out,
                {iseq, iwz, iwr, iwh, iuz, iur, iuh, ibz, ibr, ibh},
                [seq, pc, cache, out, reverse, T, din, hh, iseq, iwz, iwr, iwh, iuz, iur, iuh, ibz, ibr,
                 ibh](Graph& gr, int self) {
                    const auto& go = gr.grad(self);
                    real* dseq = iseq >= 0 ? gr.grad(iseq).data() : nullptr;
                    real* dwz = iwz >= 0 ? gr.grad(iwz).data() : nullptr;
                    real* dwr = iwr >= 0 ? gr.grad(iwr).data() : nullptr;
                    real* dwh = iwh >= 0 ? gr.grad(iwh).data() : nullptr;
                    real* duz = iuz >= 0 ? gr.grad(iuz).data() : nullptr;
                    real* dur = iur >= 0 ? gr.grad(iur).data() : nullptr;
                    real* duh = iuh >= 0 ? gr.grad(iuh).data() : nullptr;
                    real* dbz = ibz >= 0 ? gr.grad(ibz).data() : nullptr;
                    real* dbr = ibr >= 0 ? gr.grad(ibr).data() : nullptr;
                    real* dbh = ibh >= 0 ? gr.grad(ibh).data() : nullptr;

                    std::vector<real> carry(hh, 0.0), dh(hh), dz(hh), dn(hh), dan(hh), dq(hh), dr(hh), dar(hh),
                        daz(hh), dhp(hh), q(hh);
                    for (std::size_t s = T; s-- > 0;) {
                        const std::size_t t = reverse ? T - 1 - s : s;
                        const std::size_t tp = reverse ? t + 1 : t - 1;  // scan-previous row
                        const real* hp = s > 0 ? out.data() + tp * hh : nullptr;
                        const real* x = seq.data() + t * din;
                        const real* z = cache->z.data() + t * hh;
                        const real* r = cache->r.data() + t * hh;
                        const real* n = cache->n.data() + t * hh;

                        for (std::size_t j = 0; j < hh; ++j) {
                            dh[j] = go[t * hh + j] + carry[j];
                            const real hpj = hp ? hp[j] : 0.0;
                            dz[j] = dh[j] * (n[j] - hpj);
                            dn[j] = dh[j] * z[j];
                            dhp[j] = dh[j] * (1.0 - z[j]);
                            dan[j] = dn[j] * (1.0 - n[j] * n[j]);
                            q[j] = hp ? r[j] * hp[j] : 0.0;
                            daz[j] = dz[j] * z[j] * (1.0 - z[j]);
                        }
                        if (dwh) detail::outer_acc(dwh, dan.data(), hh, x, din);
                        if (dbh)
                            for (std::size_t j = 0; j < hh; ++j) dbh[j] += dan[j];
                        if (dseq) detail::mtv_acc(pc.w_cand.data(), hh, din, dan.data(), dseq + t * din);
                        if (duh) detail::outer_acc(duh, dan.data(), hh, q.data(), hh);
                        std::fill(dq.begin(), dq.end(), 0.0);
                        detail::mtv_acc(pc.u_cand.data(), hh, hh, dan.data(), dq.data());
                        for (std::size_t j = 0; j < hh; ++j) {
                            const real hpj = hp ? hp[j] : 0.0;
                            dr[j] = dq[j] * hpj;
                            dhp[j] += dq[j] * r[j];
                            dar[j] = dr[j] * r[j] * (1.0 - r[j]);
                        }
                        if (dwz) detail::outer_acc(dwz, daz.data(), hh, x, din);
                        if (dwr) detail::outer_acc(dwr, dar.data(), hh, x, din);
                        if (dbz)
                            for (std::size_t j = 0; j < hh; ++j) dbz[j] += daz[j];
                        if (dbr)
                            for (std::size_t j = 0; j < hh; ++j) dbr[j] += dar[j];
                        if (dseq) {
                            detail::mtv_acc(pc.w_update.data(), hh, din, daz.data(), dseq + t * din);
                            detail::mtv_acc(pc.w_reset.data(), hh, din, dar.data(), dseq + t * din);
                        }
                        if (hp) {
                            if (duz) detail::outer_acc(duz, daz.data(), hh, hp, hh);
                            if (dur) detail::outer_acc(dur, dar.data(), hh, hp, hh);
                            detail::mtv_acc(pc.u_update.data(), hh, hh, daz.data(), dhp.data());
                            detail::mtv_acc(pc.u_reset.data(), hh, hh, dar.data(), dhp.data());
                        }
                        carry = dhp;
                    }
                });
    }
    return out;
}

// Bidirectional scan; row t is [forward state at t ; backward state at t].
inline Tensor bigru(const Tensor& seq, const GruBlock& fwd, const GruBlock& bwd) {
    return concat(1, {gru_scan(seq, fwd, false), gru_scan(seq, bwd, true)});
}

}  // namespace vmr
