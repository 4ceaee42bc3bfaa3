#pragma once

#include <string>
#include <vector>

#include "vmr/rnn.hpp"

namespace vmr {

// Multi-head attention weights. Queries/keys/values enter in column layout
// (features x positions); every head projects to d_k = d_v = d_model / heads.
struct AttentionParams {
    std::vector<Tensor> w_query, w_key, w_value;  // d_k x d_model each
    Tensor w_out;                                 // d_model x (heads * d_v)
    std::size_t heads = 0;
    std::size_t model_dim = 0;

    std::size_t head_dim() const { return model_dim / heads; }

    static AttentionParams init(std::size_t model_dim, std::size_t heads, std::uint64_t seed,
                                const std::string& prefix) {
        if (heads == 0 || model_dim % heads != 0) {
            throw ConfigError(msg("head count ", heads, " does not divide model width ", model_dim));
        }
        AttentionParams p;
        p.heads = heads;
        p.model_dim = model_dim;
        const std::size_t dk = model_dim / heads;
        for (std::size_t i = 0; i < heads; ++i) {
            auto mat = [&](const char* leaf) {
                Rng rng(mix_seed(seed, prefix + ".head" + std::to_string(i) + "." + leaf));
                return glorot(dk, model_dim, rng);
            };
            p.w_query.push_back(mat("w_query"));
            p.w_key.push_back(mat("w_key"));
            p.w_value.push_back(mat("w_value"));
        }
        Rng rng(mix_seed(seed, prefix + ".w_out"));
        p.w_out = glorot(model_dim, model_dim, rng);
        return p;
    }

    void register_params(ParamTree& tree, const std::string& prefix) {
        for (std::size_t i = 0; i < heads; ++i) {
            const std::string h = prefix + ".head" + std::to_string(i);
            tree.add(h + ".w_query", w_query[i]);
            tree.add(h + ".w_key", w_key[i]);
            tree.add(h + ".w_value", w_value[i]);
        }
        tree.add(prefix + ".w_out", w_out);
    }
};

// Softmax(Q^T K / sqrt(d_k)) over keys; row i holds query i's weights.
inline Tensor attention_weights(const Tensor& q_cols, const Tensor& k_cols) {
    if (q_cols.rank() != 2 || k_cols.rank() != 2 || q_cols.rows() != k_cols.rows()) {
        throw ShapeError(msg("attention dims mismatch: Q ", shape_str(q_cols.shape()), " vs K ",
                             shape_str(k_cols.shape())));
    }
    const real inv_sqrt = 1.0 / std::sqrt(static_cast<real>(q_cols.rows()));
    return softmax_rows(scale(matmul(transpose(q_cols), k_cols), inv_sqrt));
}

// Scaled dot-product attention in column layout: Q is d_k x n_q, K is
// d_k x n_k, V is d_v x n_k. Output row i is the value aggregation for
// query i (n_q x d_v).
inline Tensor scaled_dot_attention(const Tensor& q_cols, const Tensor& k_cols, const Tensor& v_cols) {
    if (v_cols.rank() != 2 || v_cols.cols() != k_cols.cols()) {
        throw ShapeError(msg("attention value count ", shape_str(v_cols.shape()), " does not match keys ",
                             shape_str(k_cols.shape())));
    }
    return matmul(attention_weights(q_cols, k_cols), transpose(v_cols));
}

// Parallel heads over projected subspaces, concatenated and re-projected.
// Inputs and output are in column layout (d_model x positions).
inline Tensor multi_head(const Tensor& q_cols, const Tensor& k_cols, const Tensor& v_cols,
                         const AttentionParams& p) {
    if (q_cols.rows() != p.model_dim || k_cols.rows() != p.model_dim || v_cols.rows() != p.model_dim) {
        throw ShapeError(msg("multi_head expects ", p.model_dim, "-row inputs, got Q ",
                             shape_str(q_cols.shape())));
    }
    std::vector<Tensor> head_cols;
    head_cols.reserve(p.heads);
    for (std::size_t i = 0; i < p.heads; ++i) {
        Tensor head = scaled_dot_attention(matmul(p.w_query[i], q_cols), matmul(p.w_key[i], k_cols),
                                           matmul(p.w_value[i], v_cols));
        head_cols.push_back(transpose(head));  // d_v x n_q
    }
    return matmul(p.w_out, concat(0, head_cols));
}

struct VideoEncoderParams {
    Tensor w_in, b_in;  // frame-feature adapter, model_dim x feat_dim
    AttentionParams attn;
    GruBlock fwd, bwd;

    static VideoEncoderParams init(std::size_t model_dim, std::size_t feat_dim, std::size_t heads,
                                   std::uint64_t seed, const std::string& prefix) {
        VideoEncoderParams p;
        Rng rng(mix_seed(seed, prefix + ".w_in"));
        p.w_in = glorot(model_dim, feat_dim, rng);
        p.b_in = Tensor::zeros({model_dim});
        p.attn = AttentionParams::init(model_dim, heads, seed, prefix + ".attn");
        p.fwd = GruBlock::init(model_dim / 2, model_dim, seed, prefix + ".gru.fwd");
        p.bwd = GruBlock::init(model_dim / 2, model_dim, seed, prefix + ".gru.bwd");
        return p;
    }

    void register_params(ParamTree& tree, const std::string& prefix, bool no_sa) {
        tree.add(prefix + ".w_in", w_in);
        tree.add(prefix + ".b_in", b_in);
        if (!no_sa) attn.register_params(tree, prefix + ".attn");
        fwd.register_params(tree, prefix + ".gru.fwd");
        bwd.register_params(tree, prefix + ".gru.bwd");
    }
};

// Frames (rows) are adapted to the model width, pass through residual
// multi-head self-attention (skipped by the no-SA ablation), then a BiGRU
// supplies the temporal context. Output is n x model_dim.
inline Tensor encode_video(const Tensor& frames, const VideoEncoderParams& p, bool no_sa = false) {
    if (frames.rank() != 2 || frames.rows() == 0) {
        throw ShapeError(msg("encode_video needs a nonempty frame matrix, got ", shape_str(frames.shape())));
    }
    Tensor x = add(matmul(frames, transpose(p.w_in)), p.b_in);  // n x model_dim
    if (!no_sa) {
        Tensor cols = transpose(x);
        x = add(transpose(multi_head(cols, cols, cols, p.attn)), x);
    }
    return bigru(x, p.fwd, p.bwd);
}

}  // namespace vmr
