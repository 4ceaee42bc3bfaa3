#pragma once

#include <iostream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "vmr/rnn.hpp"

namespace vmr {

// Closed vocabulary of dependency relation labels, frozen at data ingestion.
// Two reserved slots: every node's self-loop and an UNK bucket for labels
// unseen at freeze time.
class LabelVocab {
public:
    static constexpr int kSelf = 0;
    static constexpr int kUnk = 1;

    LabelVocab() : names_{"<self>", "<unk>"} {
        index_.emplace(names_[0], 0);
        index_.emplace(names_[1], 1);
    }

    int add_or_get(const std::string& label) {
        auto it = index_.find(label);
        if (it != index_.end()) return it->second;
        if (frozen_) {
            warn_unknown(label);
            return kUnk;
        }
        int id = static_cast<int>(names_.size());
        names_.push_back(label);
        index_.emplace(label, id);
        return id;
    }

    int id(const std::string& label) const {
        auto it = index_.find(label);
        if (it != index_.end()) return it->second;
        warn_unknown(label);
        return kUnk;
    }

    void freeze() { frozen_ = true; }
    bool frozen() const { return frozen_; }
    std::size_t size() const { return names_.size(); }
    const std::vector<std::string>& names() const { return names_; }

    static LabelVocab from_names(const std::vector<std::string>& names) {
        LabelVocab v;
        if (names.size() < 2 || names[0] != "<self>" || names[1] != "<unk>") {
            throw DataError("label vocabulary must start with <self>, <unk>");
        }
        for (std::size_t i = 2; i < names.size(); ++i) {
            v.names_.push_back(names[i]);
            v.index_.emplace(names[i], static_cast<int>(i));
        }
        v.freeze();
        return v;
    }

private:
    static void warn_unknown(const std::string& label) {
        std::cerr << "warning: unknown dependency label '" << label << "' mapped to <unk>\n";
    }

    std::vector<std::string> names_;
    std::unordered_map<std::string, int> index_;
    bool frozen_ = false;
};

struct DepEdge {
    int head;
    int dep;
    int label;
};

// Directed labeled dependency graph over the query tokens. Construction
// validates indices, rejects duplicate (head, dependent) pairs and appends
// exactly one self-loop per node carrying the reserved SELF label.
class DepGraph {
public:
    DepGraph(int node_count, const std::vector<DepEdge>& parse_edges) : node_count_(node_count) {
        if (node_count <= 0) throw DataError("dependency graph needs at least one node");
        std::unordered_set<long long> seen;
        for (const DepEdge& e : parse_edges) {
            if (e.head < 0 || e.head >= node_count || e.dep < 0 || e.dep >= node_count) {
                throw DataError(msg("dependency edge (", e.head, " -> ", e.dep, ") out of range [0,", node_count, ")"));
            }
            const long long key = static_cast<long long>(e.head) * node_count + e.dep;
            if (!seen.insert(key).second) {
                throw DataError(msg("duplicate dependency edge (", e.head, " -> ", e.dep, ")"));
            }
            edges_.push_back(e);
        }
        for (int i = 0; i < node_count; ++i) edges_.push_back(DepEdge{i, i, LabelVocab::kSelf});
    }

    int node_count() const { return node_count_; }
    const std::vector<DepEdge>& edges() const { return edges_; }  // includes self-loops

private:
    int node_count_;
    std::vector<DepEdge> edges_;
};

// External word vectors keyed by token (GloVe-style text file).
struct EmbeddingTable {
    std::unordered_map<std::string, int> index;
    Tensor rows;  // vocab x dim
    std::size_t dim = 0;
};

// Deterministic unit-norm pseudo-embedding for an out-of-vocabulary token,
// keyed only by the token string.
inline std::vector<real> pseudo_embedding(const std::string& token, std::size_t dim) {
    Rng rng(mix_seed(0x9d5e1e30c0ffee11ULL, token));
    std::vector<real> v(dim);
    real norm2 = 0.0;
    for (real& x : v) {
        x = rng.normal();
        norm2 += x * x;
    }
    const real inv = 1.0 / std::sqrt(norm2);
    for (real& x : v) x *= inv;
    return v;
}

// Word features for a query: table rows for known tokens, pseudo-embeddings
// otherwise. Pass table = nullptr for the all-pseudo fallback.
inline Tensor embed_tokens(const std::vector<std::string>& tokens, const EmbeddingTable* table,
                           std::size_t dim = 300) {
    if (tokens.empty()) throw DataError("cannot embed an empty query");
    if (table && table->dim != dim) {
        throw DataError(msg("embedding table dim ", table->dim, " does not match requested ", dim));
    }
    Tensor out = Tensor::zeros({tokens.size(), dim});
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const int row = table ? (table->index.count(tokens[i]) ? table->index.at(tokens[i]) : -1) : -1;
        if (row >= 0) {
            std::copy(table->rows.data() + static_cast<std::size_t>(row) * dim,
                      table->rows.data() + (static_cast<std::size_t>(row) + 1) * dim, out.data() + i * dim);
        } else {
            const auto v = pseudo_embedding(tokens[i], dim);
            std::copy(v.begin(), v.end(), out.data() + i * dim);
        }
    }
    return out;
}

// One graph-convolution layer: three direction-specific transforms and one
// bias per edge label. label_bias row 0 is the self-loop label, row 1 the
// UNK bucket.
struct GcnLayerParams {
    Tensor w_along;    // messages following an arc (head -> dependent node)
    Tensor w_against;  // messages against an arc
    Tensor w_self;     // self-loops
    Tensor label_bias;  // labels x width

    static GcnLayerParams init(std::size_t width, std::size_t labels, std::uint64_t seed,
                               const std::string& prefix) {
        GcnLayerParams p;
        auto mat = [&](const char* leaf) {
            Rng rng(mix_seed(seed, prefix + "." + leaf));
            return glorot(width, width, rng);
        };
        p.w_along = mat("w_along");
        p.w_against = mat("w_against");
        p.w_self = mat("w_self");
        p.label_bias = Tensor::zeros({labels, width});
        return p;
    }

    void register_params(ParamTree& tree, const std::string& prefix) {
        tree.add(prefix + ".w_along", w_along);
        tree.add(prefix + ".w_against", w_against);
        tree.add(prefix + ".w_self", w_self);
        tree.add(prefix + ".label_bias", label_bias);
    }
};

namespace detail {

struct GcnMessageMatrices {
    Tensor along;    // [i][j] = 1 iff arc j -> i
    Tensor against;  // [i][j] = 1 iff arc i -> j
    Tensor self;     // identity
    Tensor label_count;  // [i][lab] = #incident edges at i carrying lab
};

inline GcnMessageMatrices gcn_matrices(const DepGraph& graph, std::size_t labels) {
    const auto m = static_cast<std::size_t>(graph.node_count());
    GcnMessageMatrices mm{Tensor::zeros({m, m}), Tensor::zeros({m, m}), Tensor::zeros({m, m}),
                          Tensor::zeros({m, labels})};
    static bool warned_label = false;
    for (const DepEdge& e : graph.edges()) {
        std::size_t lab = static_cast<std::size_t>(e.label);
        if (e.label < 0 || lab >= labels) {
            if (!warned_label) {
                std::cerr << "warning: dependency label id " << e.label << " outside bias table, using <unk>\n";
                warned_label = true;
            }
            lab = LabelVocab::kUnk;
        }
        const auto h = static_cast<std::size_t>(e.head), d = static_cast<std::size_t>(e.dep);
        if (e.head == e.dep) {
            mm.self(h, h) = 1.0;
            mm.label_count(h, lab) += 1.0;
        } else {
            mm.along(d, h) = 1.0;      // dependent receives from head, along the arc
            mm.against(h, d) = 1.0;    // head receives from dependent, against the arc
            mm.label_count(d, lab) += 1.0;
            mm.label_count(h, lab) += 1.0;
        }
    }
    return mm;
}

}  // namespace detail

// Syntactic graph convolution over the dependency graph: each node aggregates
// its in-neighbors, out-neighbors and itself through a direction-specific
// transform plus a label-specific bias, then keeps a residual of its input.
// original_mode drops direction and label awareness: one shared transform
// (w_along) and one shared bias (the self-loop row) over the undirected graph.
inline Tensor syngcn_layer(const Tensor& h, const DepGraph& graph, const GcnLayerParams& p,
                           bool original_mode = false) {
    const auto m = static_cast<std::size_t>(graph.node_count());
    if (h.rank() != 2 || h.rows() != m) {
        throw ShapeError(msg("syngcn_layer features ", shape_str(h.shape()), " do not match ", m, " graph nodes"));
    }
    const std::size_t labels = p.label_bias.rows();
    const auto mm = detail::gcn_matrices(graph, labels);
    Tensor pre;
    if (original_mode) {
        Tensor undirected = Tensor::zeros({m, m});
        for (std::size_t i = 0; i < m * m; ++i) {
            undirected[i] = mm.along[i] + mm.against[i] + mm.self[i];
        }
        Tensor degree = Tensor::zeros({m, 1});
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < m; ++j) degree(i, 0) += undirected(i, j);
        }
        Tensor shared_bias = slice_rows(p.label_bias, LabelVocab::kSelf, LabelVocab::kSelf + 1);
        pre = add(matmul(matmul(undirected, h), transpose(p.w_along)), matmul(degree, shared_bias));
    } else {
        pre = add(add(matmul(matmul(mm.along, h), transpose(p.w_along)),
                      matmul(matmul(mm.against, h), transpose(p.w_against))),
                  add(matmul(matmul(mm.self, h), transpose(p.w_self)), matmul(mm.label_count, p.label_bias)));
    }
    return add(relu(pre), h);
}

// Stacked layers, each with its own parameters, residual after every layer.
// An empty parameter list is the identity (the no-GCN ablation).
inline Tensor syngcn_stack(const Tensor& h, const DepGraph& graph, const std::vector<GcnLayerParams>& layers,
                           bool original_mode = false) {
    Tensor out = h;
    for (const GcnLayerParams& p : layers) out = syngcn_layer(out, graph, p, original_mode);
    return out;
}

}  // namespace vmr
