#pragma once

#include <functional>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "vmr/grad_check.hpp"
#include "vmr/model.hpp"

namespace vmr {

// Adaptive-moment optimizer over a parameter tree. State is keyed by name;
// updates run serially in sorted-name order.
class Adam {
public:
    explicit Adam(real lr, real beta1 = 0.9, real beta2 = 0.999, real eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(ParamTree& params, const std::map<std::string, std::vector<real>>& grads) {
        ++t_;
        const real bc1 = 1.0 - std::pow(beta1_, static_cast<real>(t_));
        const real bc2 = 1.0 - std::pow(beta2_, static_cast<real>(t_));
        for (auto& [name, tensor] : params.items()) {
            const auto git = grads.find(name);
            if (git == grads.end()) continue;
            const auto& g = git->second;
            auto& slot = state_[name];
            if (slot.m.empty()) {
                slot.m.assign(tensor.numel(), 0.0);
                slot.v.assign(tensor.numel(), 0.0);
            }
            for (std::size_t i = 0; i < tensor.numel(); ++i) {
                slot.m[i] = beta1_ * slot.m[i] + (1.0 - beta1_) * g[i];
                slot.v[i] = beta2_ * slot.v[i] + (1.0 - beta2_) * g[i] * g[i];
                const real mhat = slot.m[i] / bc1;
                const real vhat = slot.v[i] / bc2;
                tensor[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    std::size_t steps_taken() const { return t_; }

private:
    struct Slot {
        std::vector<real> m, v;
    };
    real lr_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    std::map<std::string, Slot> state_;
};

struct TrainResult {
    std::size_t epochs_run = 0;
    std::vector<real> epoch_loss;  // mean per-sample loss per epoch
};

struct TrainHooks {
    // Called after each epoch with (epoch index from 1, mean loss);
    // returning false stops training early.
    std::function<bool(std::size_t, real)> after_epoch;
};

namespace detail {

struct SampleGrad {
    real loss = 0.0;
    GradMap grads;
};

// Forward+backward for every index in [begin, end) of order, writing into slots.
inline void run_span(const ModelParams& params, const ModelConfig& cfg,
                     const std::vector<PreparedSample>& samples, const std::vector<std::size_t>& order,
                     std::size_t begin, std::size_t end, std::vector<SampleGrad>& slots,
                     std::size_t slot_base) {
    for (std::size_t i = begin; i < end; ++i) {
        Graph g;
        Tensor loss = model_loss(params, cfg, samples[order[i]]);
        slots[slot_base + (i - begin)].loss = loss.item();
        slots[slot_base + (i - begin)].grads = g.backward(loss);
    }
}

}  // namespace detail

// Mini-batch training of the joint loss. Batch items run on `threads`
// workers over read-only parameters; gradients merge by summation in sample
// order, so results are bit-identical for any worker count.
inline TrainResult train_model(ModelParams& params, const ModelConfig& cfg, const RunConfig& rc,
                               const std::vector<PreparedSample>& samples, TrainHooks hooks = {}) {
    if (samples.empty()) throw DataError("training set is empty");
    Adam opt(rc.lr);
    TrainResult result;
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    const std::size_t threads = std::max<std::size_t>(1, rc.threads);
    for (std::size_t epoch = 1; epoch <= rc.epochs; ++epoch) {
        Rng shuffle_rng(mix_seed(rc.seed, "batch_order", epoch));
        shuffle_rng.shuffle(order);
        real epoch_loss = 0.0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += rc.batch_size) {
            const std::size_t b1 = std::min(order.size(), b0 + rc.batch_size);
            const std::size_t count = b1 - b0;
            std::vector<detail::SampleGrad> slots(count);
            if (threads == 1 || count == 1) {
                detail::run_span(params, cfg, samples, order, b0, b1, slots, 0);
            } else {
                const std::size_t workers = std::min(threads, count);
                std::vector<std::thread> pool;
                pool.reserve(workers);
                for (std::size_t w = 0; w < workers; ++w) {
                    const std::size_t lo = b0 + count * w / workers;
                    const std::size_t hi = b0 + count * (w + 1) / workers;
                    pool.emplace_back([&, lo, hi] {
                        detail::run_span(params, cfg, samples, order, lo, hi, slots, lo - b0);
                    });
                }
                for (auto& t : pool) t.join();
            }

            // Merge in sample order; the average over the batch feeds Adam.
            std::map<std::string, std::vector<real>> merged;
            const real inv = 1.0 / static_cast<real>(count);
            for (std::size_t s = 0; s < count; ++s) {
                if (!std::isfinite(slots[s].loss)) {
                    throw Error(msg("training diverged: non-finite loss in batch starting at index ", b0,
                                    " (epoch ", epoch, ")"));
                }
                epoch_loss += slots[s].loss;
                for (auto& [name, tensor] : params.tree.items()) {
                    const auto git = slots[s].grads.find(tensor.impl());
                    if (git == slots[s].grads.end()) continue;
                    auto& acc = merged[name];
                    if (acc.empty()) acc.assign(tensor.numel(), 0.0);
                    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += git->second[i];
                }
            }
            for (auto& [name, g] : merged) {
                for (real& x : g) x *= inv;
            }
            opt.step(params.tree, merged);
        }
        epoch_loss /= static_cast<real>(order.size());
        result.epochs_run = epoch;
        result.epoch_loss.push_back(epoch_loss);
        if (hooks.after_epoch && !hooks.after_epoch(epoch, epoch_loss)) break;
    }
    return result;
}

// ---- checkpointing ---------------------------------------------------------

struct Checkpoint {
    RunConfig config;
    std::size_t feat_dim = 0;
    std::size_t embed_dim = 300;
    std::vector<std::string> labels;
    std::vector<std::string> embed_vocab;  // nonempty only when embeddings train
    std::map<std::string, Tensor> params;
    std::size_t epoch = 0;
};

namespace detail {

inline void put_u64(std::ofstream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t get_u64(std::ifstream& in, const std::string& path) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) throw IoError(msg("checkpoint truncated: ", path));
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

inline void put_str(std::ofstream& out, const std::string& s) {
    put_u64(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_str(std::ifstream& in, const std::string& path) {
    const std::uint64_t len = get_u64(in, path);
    std::string s(len, '\0');
    if (len && !in.read(s.data(), static_cast<std::streamsize>(len))) {
        throw IoError(msg("checkpoint truncated: ", path));
    }
    return s;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const RunConfig& rc, std::size_t feat_dim,
                            std::size_t embed_dim, const std::vector<std::string>& labels,
                            const ParamTree& params, std::size_t epoch,
                            const std::vector<std::string>& embed_vocab = {}) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(msg("cannot open ", path, " for writing"));
    out.write("VMCK", 4);
    detail::put_u64(out, 1);  // version
    detail::put_str(out, serialize_config(rc));
    detail::put_u64(out, feat_dim);
    detail::put_u64(out, embed_dim);
    detail::put_u64(out, epoch);
    detail::put_u64(out, labels.size());
    for (const std::string& l : labels) detail::put_str(out, l);
    detail::put_u64(out, embed_vocab.size());
    for (const std::string& t : embed_vocab) detail::put_str(out, t);
    detail::put_u64(out, params.tensor_count());
    for (const auto& [name, t] : params.items()) {
        detail::put_str(out, name);
        detail::put_u64(out, t.rank());
        for (std::size_t d : t.shape()) detail::put_u64(out, d);
        for (std::size_t i = 0; i < t.numel(); ++i) {
            std::uint64_t bits;
            static_assert(sizeof(real) == 8);
            std::memcpy(&bits, &t[i], 8);
            detail::put_u64(out, bits);
        }
    }
    if (!out) throw IoError(msg("failed writing ", path));
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(msg("cannot open ", path));
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "VMCK", 4) != 0) {
        throw IoError(msg("bad checkpoint magic in ", path));
    }
    if (detail::get_u64(in, path) != 1) throw IoError(msg("unsupported checkpoint version in ", path));
    Checkpoint ck;
    ck.config = parse_config(detail::get_str(in, path));
    ck.feat_dim = detail::get_u64(in, path);
    ck.embed_dim = detail::get_u64(in, path);
    ck.epoch = detail::get_u64(in, path);
    const std::uint64_t label_count = detail::get_u64(in, path);
    for (std::uint64_t i = 0; i < label_count; ++i) ck.labels.push_back(detail::get_str(in, path));
    const std::uint64_t vocab_count = detail::get_u64(in, path);
    for (std::uint64_t i = 0; i < vocab_count; ++i) ck.embed_vocab.push_back(detail::get_str(in, path));
    const std::uint64_t tensor_count = detail::get_u64(in, path);
    for (std::uint64_t i = 0; i < tensor_count; ++i) {
        const std::string name = detail::get_str(in, path);
        const std::uint64_t rank = detail::get_u64(in, path);
        Shape shape(rank);
        for (auto& d : shape) d = detail::get_u64(in, path);
        std::vector<real> vals(shape_numel(shape));
        for (real& v : vals) {
            const std::uint64_t bits = detail::get_u64(in, path);
            std::memcpy(&v, &bits, 8);
        }
        ck.params.emplace(name, Tensor(std::move(shape), std::move(vals)));
    }
    return ck;
}

struct RestoredModel {
    ModelConfig cfg;
    ModelParams params;
    LabelVocab labels;
    EmbeddingTable embed_table;  // populated only when embeddings trained
    bool has_embed_table = false;
    std::size_t epoch = 0;
};

// Rebuilds the model a checkpoint describes and overwrites its parameters.
inline RestoredModel restore_model(const Checkpoint& ck) {
    LabelVocab labels = LabelVocab::from_names(ck.labels);
    const ModelConfig mc = ModelConfig::from_run(ck.config, ck.feat_dim, labels.size(), ck.embed_dim);
    RestoredModel rm{mc, {}, std::move(labels), {}, false, ck.epoch};
    if (mc.train_embeddings) {
        if (ck.embed_vocab.empty()) throw DataError("checkpoint trains embeddings but stores no vocabulary");
        rm.embed_table.dim = ck.embed_dim;
        for (const std::string& tok : ck.embed_vocab) {
            rm.embed_table.index.emplace(tok, static_cast<int>(rm.embed_table.index.size()));
        }
        rm.embed_table.rows = Tensor::zeros({ck.embed_vocab.size(), ck.embed_dim});
        rm.has_embed_table = true;
    }
    rm.params = init_model(mc, rm.has_embed_table ? &rm.embed_table : nullptr);
    if (rm.params.tree.tensor_count() != ck.params.size()) {
        throw DataError(msg("checkpoint holds ", ck.params.size(), " tensors, model expects ",
                            rm.params.tree.tensor_count()));
    }
    for (auto& [name, tensor] : rm.params.tree.items()) {
        const auto it = ck.params.find(name);
        if (it == ck.params.end()) throw DataError(msg("checkpoint missing parameter ", name));
        if (it->second.shape() != tensor.shape()) {
            throw DataError(msg("checkpoint parameter ", name, " has shape ", shape_str(it->second.shape()),
                                ", expected ", shape_str(tensor.shape())));
        }
        tensor.values() = it->second.values();
    }
    return rm;
}

}  // namespace vmr
