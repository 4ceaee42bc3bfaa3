#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "vmr/ops.hpp"
#include "vmr/params.hpp"

namespace vmr {

// Per-frame fusion of the two streams: attentive aggregation of word
// representations, mutual (cross) gating, low-rank bilinear fusion.
struct InteractionParams {
    Tensor w_score_video, w_score_query, b_score, w_score_out;  // additive attention scorer
    Tensor w_gate_video, b_gate_video, w_gate_query, b_gate_query;
    Tensor w_fuse_video, w_fuse_query, p_fuse, b_fuse;  // low-rank bilinear path
    Tensor w_cat, b_cat;                                // concat+projection path (no-BF ablation)

    static InteractionParams init(std::size_t width, std::uint64_t seed, const std::string& prefix,
                                  bool no_bf) {
        InteractionParams p;
        auto mat = [&](const char* leaf, std::size_t r, std::size_t c) {
            Rng rng(mix_seed(seed, prefix + "." + leaf));
            return glorot(r, c, rng);
        };
        p.w_score_video = mat("w_score_video", width, width);
        p.w_score_query = mat("w_score_query", width, width);
        p.b_score = Tensor::zeros({width});
        p.w_score_out = mat("w_score_out", width, 1);
        p.w_gate_video = mat("w_gate_video", width, width);
        p.b_gate_video = Tensor::zeros({width});
        p.w_gate_query = mat("w_gate_query", width, width);
        p.b_gate_query = Tensor::zeros({width});
        if (no_bf) {
            p.w_cat = mat("w_cat", width, 2 * width);
            p.b_cat = Tensor::zeros({width});
        } else {
            p.w_fuse_video = mat("w_fuse_video", width, width);
            p.w_fuse_query = mat("w_fuse_query", width, width);
            p.p_fuse = mat("p_fuse", width, width);
            p.b_fuse = Tensor::zeros({width});
        }
        return p;
    }

    void register_params(ParamTree& tree, const std::string& prefix, bool no_cg, bool no_bf) {
        tree.add(prefix + ".w_score_video", w_score_video);
        tree.add(prefix + ".w_score_query", w_score_query);
        tree.add(prefix + ".b_score", b_score);
        tree.add(prefix + ".w_score_out", w_score_out);
        if (!no_cg) {
            tree.add(prefix + ".w_gate_video", w_gate_video);
            tree.add(prefix + ".b_gate_video", b_gate_video);
            tree.add(prefix + ".w_gate_query", w_gate_query);
            tree.add(prefix + ".b_gate_query", b_gate_query);
        }
        if (no_bf) {
            tree.add(prefix + ".w_cat", w_cat);
            tree.add(prefix + ".b_cat", b_cat);
        } else {
            tree.add(prefix + ".w_fuse_video", w_fuse_video);
            tree.add(prefix + ".w_fuse_query", w_fuse_query);
            tree.add(prefix + ".p_fuse", p_fuse);
            tree.add(prefix + ".b_fuse", b_fuse);
        }
    }
};

// Frame-to-word score matrix: M[i][j] = w^T tanh(W1 hv_i + W2 ol_j + b).
inline Tensor attention_matrix(const Tensor& hv, const Tensor& ol, const InteractionParams& p) {
    const std::size_t n = hv.rows(), m = ol.rows();
    Tensor pair = pairwise_add(matmul(hv, transpose(p.w_score_video)),
                               matmul(ol, transpose(p.w_score_query)));  // (n*m) x width
    Tensor scores = matmul(tanh(add(pair, p.b_score)), p.w_score_out);   // (n*m) x 1
    return reshape(scores, {n, m});
}

// Row-softmax of the score matrix and the per-frame convex combination of
// word vectors it induces. Returns (aggregated n x width, weights n x m).
inline std::pair<Tensor, Tensor> aggregate(const Tensor& scores, const Tensor& ol) {
    if (scores.rank() != 2 || ol.rank() != 2 || scores.cols() != ol.rows()) {
        throw ShapeError(msg("aggregate shape mismatch: ", shape_str(scores.shape()), " vs ",
                             shape_str(ol.shape())));
    }
    Tensor weights = softmax_rows(scores);
    return {matmul(weights, ol), weights};
}

// Mutual gating: the video-derived gate scales the query side and vice versa.
inline std::pair<Tensor, Tensor> cross_gate(const Tensor& hv, const Tensor& hs, const InteractionParams& p) {
    if (hv.shape() != hs.shape()) {
        throw ShapeError(msg("cross_gate width mismatch: ", shape_str(hv.shape()), " vs ", shape_str(hs.shape())));
    }
    Tensor gate_from_video = sigmoid(add(matmul(hv, transpose(p.w_gate_video)), p.b_gate_video));
    Tensor gate_from_query = sigmoid(add(matmul(hs, transpose(p.w_gate_query)), p.b_gate_query));
    return {mul(hv, gate_from_query), mul(hs, gate_from_video)};
}

// Low-rank bilinear fusion; the no-BF ablation concatenates and projects.
inline Tensor bilinear_fuse(const Tensor& hv, const Tensor& hs, const InteractionParams& p, bool no_bf = false) {
    if (hv.shape() != hs.shape()) {
        throw ShapeError(msg("bilinear_fuse width mismatch: ", shape_str(hv.shape()), " vs ",
                             shape_str(hs.shape())));
    }
    if (no_bf) {
        return add(matmul(concat(1, {hv, hs}), transpose(p.w_cat)), p.b_cat);
    }
    Tensor lhs = sigmoid(matmul(hv, transpose(p.w_fuse_video)));
    Tensor rhs = sigmoid(matmul(hs, transpose(p.w_fuse_query)));
    return add(matmul(mul(lhs, rhs), transpose(p.p_fuse)), p.b_fuse);
}

struct CrossModalOut {
    Tensor fused;     // n x width
    Tensor attn_row;  // n x m row-stochastic weights, as used for aggregation
};

// Full per-frame interaction chain: score, aggregate, gate (unless ablated),
// fuse.
inline CrossModalOut cross_modal(const Tensor& hv, const Tensor& ol, const InteractionParams& p, bool no_cg,
                                 bool no_bf) {
    Tensor scores = attention_matrix(hv, ol, p);
    auto [aggregated, weights] = aggregate(scores, ol);
    Tensor gated_video = hv, gated_query = aggregated;
    if (!no_cg) {
        auto [gv, gq] = cross_gate(hv, aggregated, p);
        gated_video = gv;
        gated_query = gq;
    }
    return {bilinear_fuse(gated_video, gated_query, p, no_bf), weights};
}

// Dense matrix export for heatmap rendering. Header line "n m", then n
// space-separated rows; %.17g keeps the doubles bit-exact through a
// round-trip.
inline void write_attention_matrix(const std::string& path, const Tensor& weights) {
    if (weights.rank() != 2) {
        throw ShapeError(msg("attention export expects rank-2, got ", shape_str(weights.shape())));
    }
    std::ofstream out(path);
    if (!out) throw IoError(msg("cannot open ", path, " for writing"));
    out << weights.rows() << " " << weights.cols() << "\n";
    char buf[40];
    for (std::size_t i = 0; i < weights.rows(); ++i) {
        for (std::size_t j = 0; j < weights.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", weights(i, j));
            out << (j ? " " : "") << buf;
        }
        out << "\n";
    }
    if (!out) throw IoError(msg("failed writing ", path));
}

inline Tensor read_attention_matrix(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(msg("cannot open ", path));
    std::size_t n = 0, m = 0;
    if (!(in >> n >> m) || n == 0 || m == 0) throw IoError(msg("bad attention matrix header in ", path));
    Tensor out = Tensor::zeros({n, m});
    for (std::size_t i = 0; i < n * m; ++i) {
        if (!(in >> out[i])) throw IoError(msg("attention matrix truncated in ", path));
    }
    return out;
}

}  // namespace vmr
