#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vmr/config.hpp"
#include "vmr/cross_modal.hpp"
#include "vmr/data_io.hpp"
#include "vmr/moment_head.hpp"
#include "vmr/query_encoder.hpp"
#include "vmr/video_encoder.hpp"

namespace vmr {

// Data-bound model settings: RunConfig narrowed to what the network needs,
// plus the dimensions discovered from the dataset.
struct ModelConfig {
    std::size_t hidden = 512;
    std::size_t heads = 8;
    std::size_t gcn_layers = 2;  // effective count; the no-GCN ablation is 0 layers
    bool no_sa = false, no_cg = false, no_bf = false;
    bool gcn_original = false;
    bool train_embeddings = false;
    std::vector<real> widths;
    real clear_lambda = 0.3, high_gamma = 0.7, alpha = 0.001;
    std::size_t feat_dim = 500;
    std::size_t embed_dim = 300;
    std::size_t label_count = 2;
    std::uint64_t seed = 1;

    static ModelConfig from_run(const RunConfig& rc, std::size_t feat_dim, std::size_t label_count,
                                std::size_t embed_dim = 300) {
        validate(rc);
        ModelConfig mc;
        mc.hidden = rc.hidden;
        mc.heads = rc.heads;
        mc.gcn_layers = rc.no_gcn ? 0 : rc.gcn_layers;
        mc.no_sa = rc.no_sa;
        mc.no_cg = rc.no_cg;
        mc.no_bf = rc.no_bf;
        mc.gcn_original = rc.gcn_original;
        mc.train_embeddings = rc.train_embeddings;
        mc.widths = rc.widths;
        mc.clear_lambda = rc.clear_lambda;
        mc.high_gamma = rc.high_gamma;
        mc.alpha = rc.alpha;
        mc.feat_dim = feat_dim;
        mc.embed_dim = embed_dim;
        mc.label_count = label_count;
        mc.seed = rc.seed;
        return mc;
    }
};

struct ModelParams {
    GruBlock query_fwd, query_bwd;
    std::vector<GcnLayerParams> gcn;
    VideoEncoderParams video;
    InteractionParams interaction;
    HeadParams head;
    Tensor embed_table;  // defined only when embeddings train
    ParamTree tree;
};

// Builds every trainable tensor. Each tensor is seeded independently from
// (seed, parameter name), so a parameter's initial values do not depend on
// which ablation blocks exist around it.
inline ModelParams init_model(const ModelConfig& cfg, const EmbeddingTable* table = nullptr) {
    if (cfg.hidden % 2 != 0) throw ConfigError("hidden width must be even");
    ModelParams p;
    const std::size_t half = cfg.hidden / 2;
    p.query_fwd = GruBlock::init(half, cfg.embed_dim, cfg.seed, "query_gru.fwd");
    p.query_bwd = GruBlock::init(half, cfg.embed_dim, cfg.seed, "query_gru.bwd");
    for (std::size_t l = 0; l < cfg.gcn_layers; ++l) {
        p.gcn.push_back(GcnLayerParams::init(cfg.hidden, cfg.label_count, cfg.seed,
                                             "gcn.layer" + std::to_string(l)));
    }
    p.video = VideoEncoderParams::init(cfg.hidden, cfg.feat_dim, cfg.heads, cfg.seed, "video");
    p.interaction = InteractionParams::init(cfg.hidden, cfg.seed, "interaction", cfg.no_bf);
    p.head = HeadParams::init(cfg.hidden, cfg.widths.size(), cfg.seed, "head");

    p.query_fwd.register_params(p.tree, "query_gru.fwd");
    p.query_bwd.register_params(p.tree, "query_gru.bwd");
    for (std::size_t l = 0; l < cfg.gcn_layers; ++l) {
        p.gcn[l].register_params(p.tree, "gcn.layer" + std::to_string(l));
    }
    p.video.register_params(p.tree, "video", cfg.no_sa);
    p.interaction.register_params(p.tree, "interaction", cfg.no_cg, cfg.no_bf);
    p.head.register_params(p.tree, "head");

    if (cfg.train_embeddings) {
        if (!table) throw ConfigError("train_embeddings needs an embedding table");
        p.embed_table = table->rows.clone();
        p.tree.add("embed.table", p.embed_table);
    }
    return p;
}

// A query/video pair with everything the network consumes precomputed.
struct PreparedSample {
    std::string query_id, video_id;
    Tensor embed;  // m x embed_dim constant (frozen-embedding path)
    std::vector<int> token_ids;  // rows into the trainable table, when used
    DepGraph graph;
    Tensor video;  // n x feat_dim constant
    Interval target_steps;
    CandidateSet candidates;
    std::size_t n = 0;
    double duration = 0.0;
};

inline PreparedSample prepare_sample(const QueryRecord& record, const VideoFeatures& features,
                                     LabelVocab& labels, const ModelConfig& cfg,
                                     const EmbeddingTable* table = nullptr) {
    if (record.video_id != features.id) {
        throw DataError(msg("query ", record.query_id, " paired with wrong video ", features.id));
    }
    std::vector<DepEdge> edges;
    edges.reserve(record.edges.size());
    for (const auto& [head, dep, label] : record.edges) {
        edges.push_back(DepEdge{head, dep, labels.frozen() ? labels.id(label) : labels.add_or_get(label)});
    }
    PreparedSample s{record.query_id,
                     record.video_id,
                     embed_tokens(record.tokens, cfg.train_embeddings ? nullptr : table, cfg.embed_dim),
                     {},
                     DepGraph(static_cast<int>(record.tokens.size()), edges),
                     features.as_tensor(),
                     {},
                     {},
                     features.n,
                     record.duration};
    if (cfg.train_embeddings) {
        if (!table) throw ConfigError("train_embeddings needs an embedding table");
        s.token_ids.reserve(record.tokens.size());
        for (const std::string& tok : record.tokens) {
            const auto it = table->index.find(tok);
            if (it == table->index.end()) {
                throw DataError(msg("token '", tok, "' missing from the trainable embedding table"));
            }
            s.token_ids.push_back(it->second);
        }
    }
    s.target_steps = Interval{seconds_to_steps(record.moment_start, features.n, record.duration),
                              seconds_to_steps(record.moment_end, features.n, record.duration)};
    s.candidates = enumerate_candidates(features.n, cfg.widths);
    if (s.candidates.items.empty()) {
        throw DataError(msg("no candidate window fits video ", record.video_id, " of length ", features.n));
    }
    return s;
}

// Builds the combined token->row table used when embeddings train: known
// tokens keep their external vectors, everything else gets its deterministic
// pseudo-embedding row.
inline EmbeddingTable build_embedding_table(const std::vector<QueryRecord>& records,
                                            const EmbeddingTable* base, std::size_t dim) {
    EmbeddingTable out;
    out.dim = dim;
    std::vector<real> rows;
    for (const QueryRecord& r : records) {
        for (const std::string& tok : r.tokens) {
            if (out.index.count(tok)) continue;
            out.index.emplace(tok, static_cast<int>(out.index.size()));
            bool copied = false;
            if (base) {
                const auto it = base->index.find(tok);
                if (it != base->index.end()) {
                    const auto* src = base->rows.data() + static_cast<std::size_t>(it->second) * dim;
                    rows.insert(rows.end(), src, src + dim);
                    copied = true;
                }
            }
            if (!copied) {
                const auto v = pseudo_embedding(tok, dim);
                rows.insert(rows.end(), v.begin(), v.end());
            }
        }
    }
    out.rows = Tensor({out.index.size(), dim}, std::move(rows));
    return out;
}

struct ForwardOut {
    Tensor scores;    // n x k
    Tensor offsets;   // n x 2k
    Tensor attn_row;  // n x m cross-modal attention weights
};

inline ForwardOut model_forward(const ModelParams& p, const ModelConfig& cfg, const PreparedSample& s) {
    Tensor embed = cfg.train_embeddings && p.embed_table.defined() ? gather_rows(p.embed_table, s.token_ids)
                                                                   : s.embed;
    Tensor hq = bigru(embed, p.query_fwd, p.query_bwd);
    Tensor ol = syngcn_stack(hq, s.graph, p.gcn, cfg.gcn_original);
    Tensor hv = encode_video(s.video, p.video, cfg.no_sa);
    CrossModalOut cm = cross_modal(hv, ol, p.interaction, cfg.no_cg, cfg.no_bf);
    HeadOut head = score_offsets(cm.fused, p.head);
    return {head.scores, head.offsets, cm.attn_row};
}

inline Tensor model_loss(const ModelParams& p, const ModelConfig& cfg, const PreparedSample& s,
                         ForwardOut* out = nullptr) {
    ForwardOut f = model_forward(p, cfg, s);
    Tensor align = alignment_loss(f.scores, s.target_steps, s.candidates, cfg.clear_lambda);
    Tensor reg = regression_loss(f.offsets, s.target_steps, s.candidates, cfg.high_gamma);
    if (out) *out = f;
    return total_loss(align, reg, cfg.alpha);
}

}  // namespace vmr
