#pragma once

#include <chrono>
#include <thread>
#include <vector>

#include "vmr/model.hpp"

namespace vmr {

struct MetricsReport {
    std::vector<std::pair<Criterion, real>> values;     // R(n, m) per criterion
    std::vector<std::vector<real>> per_query_ious;      // ranked prediction IoUs per query
    double eval_seconds = 0.0;
    std::size_t query_count = 0;
};

// Fraction of queries with at least one of the first n ranked predictions
// exceeding IoU m. The ranked IoU lists may be shorter than n.
inline real recall_at(const std::vector<std::vector<real>>& per_query_ious, std::size_t top_n, real min_iou) {
    if (per_query_ious.empty()) return 0.0;
    std::size_t hits = 0;
    for (const auto& ious : per_query_ious) {
        const std::size_t limit = std::min(top_n, ious.size());
        for (std::size_t i = 0; i < limit; ++i) {
            if (ious[i] > min_iou) {
                ++hits;
                break;
            }
        }
    }
    return static_cast<real>(hits) / static_cast<real>(per_query_ious.size());
}

// Runs prediction for every query (read-only model, optionally threaded) and
// scores each criterion. top_k for NMS selection is the largest requested n.
inline MetricsReport evaluate(const ModelParams& params, const ModelConfig& cfg,
                              const std::vector<PreparedSample>& samples,
                              const std::vector<Criterion>& criteria, real nms_threshold,
                              std::size_t threads = 1) {
    if (criteria.empty()) throw ConfigError("evaluate needs at least one criterion");
    const auto start = std::chrono::steady_clock::now();
    std::size_t top_k = 1;
    for (const Criterion& c : criteria) top_k = std::max(top_k, c.top_n);

    MetricsReport report;
    report.query_count = samples.size();
    report.per_query_ious.resize(samples.size());

    auto run_span = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const PreparedSample& s = samples[i];
            const ForwardOut out = model_forward(params, cfg, s);
            const auto preds = predict(out.scores, out.offsets, s.candidates, nms_threshold, top_k);
            auto& ious = report.per_query_ious[i];
            ious.reserve(preds.size());
            for (const Prediction& p : preds) ious.push_back(iou(p.iv, s.target_steps));
        }
    };
    const std::size_t workers = std::min(std::max<std::size_t>(1, threads), std::max<std::size_t>(1, samples.size()));
    if (workers <= 1) {
        run_span(0, samples.size());
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            const std::size_t lo = samples.size() * w / workers;
            const std::size_t hi = samples.size() * (w + 1) / workers;
            pool.emplace_back([&, lo, hi] { run_span(lo, hi); });
        }
        for (auto& t : pool) t.join();
    }

    for (const Criterion& c : criteria) {
        report.values.emplace_back(c, recall_at(report.per_query_ious, c.top_n, c.min_iou));
    }
    report.eval_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

struct PredictionRecord {
    std::string query_id, video_id;
    std::vector<Prediction> ranked;  // timestep units
    std::size_t n = 0;
    double duration = 0.0;
};

inline std::vector<PredictionRecord> predict_dataset(const ModelParams& params, const ModelConfig& cfg,
                                                     const std::vector<PreparedSample>& samples,
                                                     real nms_threshold, std::size_t top_k) {
    std::vector<PredictionRecord> out;
    out.reserve(samples.size());
    for (const PreparedSample& s : samples) {
        const ForwardOut f = model_forward(params, cfg, s);
        out.push_back(PredictionRecord{s.query_id, s.video_id,
                                       predict(f.scores, f.offsets, s.candidates, nms_threshold, top_k), s.n,
                                       s.duration});
    }
    return out;
}

// One JSON record per query; intervals in both timestep and second units.
inline void write_predictions(const std::string& path, const std::vector<PredictionRecord>& records) {
    std::ofstream out(path);
    if (!out) throw IoError(msg("cannot open ", path, " for writing"));
    for (const PredictionRecord& r : records) {
        nlohmann::json j;
        j["query_id"] = r.query_id;
        j["video_id"] = r.video_id;
        auto preds = nlohmann::json::array();
        for (const Prediction& p : r.ranked) {
            preds.push_back({{"start_steps", p.iv.start},
                             {"end_steps", p.iv.end},
                             {"start_seconds", steps_to_seconds(p.iv.start, r.n, r.duration)},
                             {"end_seconds", steps_to_seconds(p.iv.end, r.n, r.duration)},
                             {"score", p.score}});
        }
        j["predictions"] = preds;
        out << j.dump() << "\n";
    }
    if (!out) throw IoError(msg("failed writing ", path));
}

}  // namespace vmr
