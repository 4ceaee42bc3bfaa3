#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "vmr/rnn.hpp"

namespace vmr {

struct Interval {
    real start = 0.0;
    real end = 0.0;

    real length() const { return end - start; }
    bool valid() const { return std::isfinite(start) && std::isfinite(end) && start < end; }
};

// Temporal intersection-over-union of two intervals on the real line.
inline real iou(const Interval& a, const Interval& b) {
    if (!a.valid() || !b.valid()) throw DomainError("iou of an invalid interval");
    const real inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
    const real uni = a.length() + b.length() - inter;
    return inter / uni;
}

struct Candidate {
    std::size_t step;       // time step the window is centred on
    std::size_t width_idx;  // index into the configured width list
    Interval iv;
};

// Multi-scale anchor windows (i - w/2, i + w/2) at every time step, with
// out-of-bounds windows discarded at enumeration.
struct CandidateSet {
    std::size_t length = 0;  // sequence length n
    std::vector<real> widths;
    std::vector<Candidate> items;
};

inline CandidateSet enumerate_candidates(std::size_t n, const std::vector<real>& widths) {
    if (n == 0) throw DomainError("enumerate_candidates over empty sequence");
    for (real w : widths) {
        if (!(w > 0.0)) throw DomainError(msg("candidate width must be positive, got ", w));
    }
    CandidateSet set;
    set.length = n;
    set.widths = widths;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < widths.size(); ++j) {
            const real s = static_cast<real>(i) - widths[j] / 2.0;
            const real e = static_cast<real>(i) + widths[j] / 2.0;
            if (s < 0.0 || e > static_cast<real>(n)) continue;
            set.items.push_back(Candidate{i, j, Interval{s, e}});
        }
    }
    return set;
}

// Final BiGRU plus the two fully connected heads: per-step confidence scores
// for the k window widths (sigmoid) and 2k boundary offsets (linear).
struct HeadParams {
    GruBlock fwd, bwd;
    Tensor w_score, b_score;    // k x width
    Tensor w_offset, b_offset;  // 2k x width

    static HeadParams init(std::size_t width, std::size_t k, std::uint64_t seed, const std::string& prefix) {
        HeadParams p;
        p.fwd = GruBlock::init(width / 2, width, seed, prefix + ".gru.fwd");
        p.bwd = GruBlock::init(width / 2, width, seed, prefix + ".gru.bwd");
        Rng r1(mix_seed(seed, prefix + ".w_score"));
        p.w_score = glorot(k, width, r1);
        p.b_score = Tensor::zeros({k});
        Rng r2(mix_seed(seed, prefix + ".w_offset"));
        p.w_offset = glorot(2 * k, width, r2);
        p.b_offset = Tensor::zeros({2 * k});
        return p;
    }

    void register_params(ParamTree& tree, const std::string& prefix) {
        fwd.register_params(tree, prefix + ".gru.fwd");
        bwd.register_params(tree, prefix + ".gru.bwd");
        tree.add(prefix + ".w_score", w_score);
        tree.add(prefix + ".b_score", b_score);
        tree.add(prefix + ".w_offset", w_offset);
        tree.add(prefix + ".b_offset", b_offset);
    }
};

struct HeadOut {
    Tensor scores;   // n x k, in (0,1)
    Tensor offsets;  // n x 2k, (start, end) pairs in timestep units
};

inline HeadOut score_offsets(const Tensor& fused, const HeadParams& p) {
    Tensor hf = bigru(fused, p.fwd, p.bwd);
    return {sigmoid(add(matmul(hf, transpose(p.w_score)), p.b_score)),
            add(matmul(hf, transpose(p.w_offset)), p.b_offset)};
}

// Soft-label alignment loss over the enumerated candidates: each candidate's
// target is its IoU with the ground-truth moment, reset to zero below the
// clearing threshold. Scores are clamped to [eps, 1-eps] before the logs.
inline Tensor alignment_loss(const Tensor& scores, const Interval& target, const CandidateSet& cands,
                             real clear_threshold) {
    if (clear_threshold < 0.0 || clear_threshold >= 1.0) {
        throw DomainError(msg("clearing threshold ", clear_threshold, " outside [0,1)"));
    }
    if (cands.items.empty()) throw DomainError("alignment_loss with no valid candidates");
    const std::size_t n = scores.rows(), k = scores.cols();
    Tensor labels = Tensor::zeros({n, k});
    Tensor mask = Tensor::zeros({n, k});
    Tensor inv_labels = Tensor::zeros({n, k});
    for (const Candidate& c : cands.items) {
        real overlap = iou(c.iv, target);
        if (overlap < clear_threshold) overlap = 0.0;
        labels(c.step, c.width_idx) = overlap;
        inv_labels(c.step, c.width_idx) = 1.0 - overlap;
        mask(c.step, c.width_idx) = 1.0;
    }
    constexpr real eps = 1e-7;
    Tensor cs = clamp(scores, eps, 1.0 - eps);
    Tensor one = Tensor::full({n, k}, 1.0);
    Tensor term = add(mul(inv_labels, log(sub(one, cs))), mul(labels, log(cs)));
    const real count = static_cast<real>(cands.items.size());
    return scale(sum(mul(term, mask)), -1.0 / count);
}

// Smooth-L1 boundary regression over the high-score set (raw IoU above the
// high-score threshold). Zero when that set is empty.
inline Tensor regression_loss(const Tensor& offsets, const Interval& target, const CandidateSet& cands,
                              real high_threshold) {
    if (high_threshold <= 0.0 || high_threshold > 1.0) {
        throw DomainError(msg("high-score threshold ", high_threshold, " outside (0,1]"));
    }
    const std::size_t n = offsets.rows(), two_k = offsets.cols();
    Tensor want = Tensor::zeros({n, two_k});
    Tensor mask = Tensor::zeros({n, two_k});
    std::size_t members = 0;
    for (const Candidate& c : cands.items) {
        if (iou(c.iv, target) <= high_threshold) continue;
        want(c.step, 2 * c.width_idx) = target.start - c.iv.start;
        want(c.step, 2 * c.width_idx + 1) = target.end - c.iv.end;
        mask(c.step, 2 * c.width_idx) = 1.0;
        mask(c.step, 2 * c.width_idx + 1) = 1.0;
        ++members;
    }
    if (members == 0) return Tensor::scalar(0.0);
    Tensor diff = mul(sub(want, offsets), mask);
    return scale(sum(smooth_l1(diff)), 1.0 / static_cast<real>(members));
}

inline Tensor total_loss(const Tensor& align, const Tensor& reg, real alpha) {
    if (alpha < 0.0) throw DomainError(msg("loss balance alpha must be nonnegative, got ", alpha));
    return add(align, scale(reg, alpha));
}

struct Prediction {
    Interval iv;  // refined boundaries, timestep units
    real score;
    std::size_t step;
    std::size_t width_idx;
};

// Refines every candidate by its predicted offsets, clamps to [0, n], drops
// degenerate windows, ranks by score and applies greedy NMS. Ties in score
// break toward the earlier start, then the smaller width.
inline std::vector<Prediction> predict(const Tensor& scores, const Tensor& offsets, const CandidateSet& cands,
                                       real nms_threshold, std::size_t top_k) {
    if (nms_threshold <= 0.0 || nms_threshold > 1.0) {
        throw DomainError(msg("nms threshold ", nms_threshold, " outside (0,1]"));
    }
    if (top_k == 0) throw DomainError("predict needs top_k >= 1");
    std::vector<Prediction> pool;
    pool.reserve(cands.items.size());
    const real n = static_cast<real>(cands.length);
    for (const Candidate& c : cands.items) {
        const real ds = offsets(c.step, 2 * c.width_idx);
        const real de = offsets(c.step, 2 * c.width_idx + 1);
        Interval refined{std::min(n, std::max(0.0, c.iv.start + ds)),
                         std::min(n, std::max(0.0, c.iv.end + de))};
        if (refined.start >= refined.end) continue;
        pool.push_back(Prediction{refined, scores(c.step, c.width_idx), c.step, c.width_idx});
    }
    std::sort(pool.begin(), pool.end(), [&](const Prediction& a, const Prediction& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.iv.start != b.iv.start) return a.iv.start < b.iv.start;
        if (cands.widths[a.width_idx] != cands.widths[b.width_idx]) {
            return cands.widths[a.width_idx] < cands.widths[b.width_idx];
        }
        return a.step < b.step;
    });
    std::vector<Prediction> kept;
    for (const Prediction& p : pool) {
        bool suppressed = false;
        for (const Prediction& q : kept) {
            if (iou(p.iv, q.iv) > nms_threshold) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) {
            kept.push_back(p);
            if (kept.size() == top_k) break;
        }
    }
    return kept;
}

}  // namespace vmr
