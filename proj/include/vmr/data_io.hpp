#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "vmr/rng.hpp"
#include "vmr/tensor.hpp"

namespace vmr {

constexpr std::size_t kDefaultFrameCap = 200;

struct VideoFeatures {
    std::string id;
    std::size_t n = 0;    // frames kept (after any downsampling)
    std::size_t dim = 0;
    std::vector<float> data;  // n x dim row-major
    double duration = 0.0;    // seconds; filled when paired with a query
    std::size_t original_n = 0;

    Tensor as_tensor() const {
        std::vector<real> v(data.begin(), data.end());
        return Tensor({n, dim}, std::move(v));
    }
};

namespace detail {

inline void put_u32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(const unsigned char* b) {
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

}  // namespace detail

// Binary frame-feature layout: magic "VMRF", then n and d as 32-bit
// little-endian unsigned, then n*d IEEE-754 floats, little-endian, row-major.
inline void save_features(const std::string& path, const VideoFeatures& vf) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(msg("cannot open ", path, " for writing"));
    out.write("VMRF", 4);
    detail::put_u32(out, static_cast<std::uint32_t>(vf.n));
    detail::put_u32(out, static_cast<std::uint32_t>(vf.dim));
    for (float f : vf.data) {
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        detail::put_u32(out, bits);
    }
    if (!out) throw IoError(msg("failed writing ", path));
}

// Loads a feature file; sequences longer than cap are uniformly downsampled
// by index selection: frame t of the result is source frame floor(t * n / cap).
inline VideoFeatures load_features(const std::string& path, std::size_t cap = kDefaultFrameCap) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError(msg("cannot open ", path));
    const auto file_size = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    unsigned char header[12];
    if (file_size < 12 || !in.read(reinterpret_cast<char*>(header), 12)) {
        throw IoError(msg("feature header truncated in ", path, ": expected 12 bytes, have ", file_size));
    }
    if (std::memcmp(header, "VMRF", 4) != 0) throw IoError(msg("bad feature magic in ", path));
    const std::size_t n = detail::get_u32(header + 4);
    const std::size_t d = detail::get_u32(header + 8);
    if (n == 0 || d == 0) throw IoError(msg("feature header declares empty matrix ", n, "x", d, " in ", path));
    const std::size_t expect = 12 + n * d * 4;
    if (file_size != expect) {
        throw IoError(msg("feature file ", path, " has ", file_size, " bytes, expected ", expect));
    }
    std::vector<unsigned char> raw(n * d * 4);
    if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
        throw IoError(msg("feature payload truncated in ", path));
    }
    std::vector<float> all(n * d);
    for (std::size_t i = 0; i < all.size(); ++i) {
        const std::uint32_t bits = detail::get_u32(raw.data() + i * 4);
        std::memcpy(&all[i], &bits, 4);
        if (!std::isfinite(all[i])) throw IoError(msg("non-finite feature value at index ", i, " in ", path));
    }
    VideoFeatures vf;
    vf.id = std::filesystem::path(path).stem().string();
    vf.dim = d;
    vf.original_n = n;
    if (n > cap) {
        vf.n = cap;
        vf.data.resize(cap * d);
        for (std::size_t t = 0; t < cap; ++t) {
            const std::size_t src = t * n / cap;
            std::copy(all.begin() + static_cast<std::ptrdiff_t>(src * d),
                      all.begin() + static_cast<std::ptrdiff_t>((src + 1) * d),
                      vf.data.begin() + static_cast<std::ptrdiff_t>(t * d));
        }
    } else {
        vf.n = n;
        vf.data = std::move(all);
    }
    return vf;
}

inline real seconds_to_steps(real sec, std::size_t n, real duration) {
    return sec * static_cast<real>(n) / duration;
}

inline real steps_to_seconds(real steps, std::size_t n, real duration) {
    return steps * duration / static_cast<real>(n);
}

struct QueryRecord {
    std::string query_id;
    std::string video_id;
    std::vector<std::string> tokens;
    std::vector<std::tuple<int, int, std::string>> edges;  // head, dependent, label
    double moment_start = 0.0;  // seconds
    double moment_end = 0.0;
    double duration = 0.0;
};

// Line-delimited JSON records:
//   {"query_id": "...", "video_id": "...", "tokens": [...],
//    "edges": [[head, dep, "label"], ...], "moment": [s, e], "duration": d}
inline std::vector<QueryRecord> load_queries(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(msg("cannot open ", path));
    std::vector<QueryRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
            QueryRecord r;
            r.query_id = j.at("query_id").get<std::string>();
            r.video_id = j.at("video_id").get<std::string>();
            r.tokens = j.at("tokens").get<std::vector<std::string>>();
            for (const auto& e : j.at("edges")) {
                if (!e.is_array() || e.size() != 3) throw DataError("edge is not a [head, dep, label] triple");
                r.edges.emplace_back(e[0].get<int>(), e[1].get<int>(), e[2].get<std::string>());
            }
            const auto& m = j.at("moment");
            if (!m.is_array() || m.size() != 2) throw DataError("moment is not a [start, end] pair");
            r.moment_start = m[0].get<double>();
            r.moment_end = m[1].get<double>();
            r.duration = j.at("duration").get<double>();

            if (r.tokens.empty()) throw DataError("empty token list");
            if (!(r.moment_start >= 0.0 && r.moment_start < r.moment_end && r.moment_end <= r.duration)) {
                throw DataError(msg("moment [", r.moment_start, ",", r.moment_end,
                                    "] violates 0 <= s < e <= duration (duration ", r.duration, ")"));
            }
            const int t = static_cast<int>(r.tokens.size());
            for (const auto& [head, dep, label] : r.edges) {
                if (head < 0 || head >= t || dep < 0 || dep >= t) {
                    throw DataError(msg("edge (", head, " -> ", dep, ") out of range for ", t, " tokens"));
                }
                if (label.empty()) throw DataError("empty edge label");
            }
            out.push_back(std::move(r));
        } catch (const nlohmann::json::exception& e) {
            throw DataError(msg(path, ":", lineno, ": malformed record: ", e.what()));
        } catch (const DataError& e) {
            throw DataError(msg(path, ":", lineno, ": ", e.what()));
        }
    }
    return out;
}

inline void save_queries(const std::string& path, const std::vector<QueryRecord>& records) {
    std::ofstream out(path);
    if (!out) throw IoError(msg("cannot open ", path, " for writing"));
    for (const QueryRecord& r : records) {
        nlohmann::json j;
        j["query_id"] = r.query_id;
        j["video_id"] = r.video_id;
        j["tokens"] = r.tokens;
        auto edges = nlohmann::json::array();
        for (const auto& [head, dep, label] : r.edges) edges.push_back({head, dep, label});
        j["edges"] = edges;
        j["moment"] = {r.moment_start, r.moment_end};
        j["duration"] = r.duration;
        out << j.dump() << "\n";
    }
    if (!out) throw IoError(msg("failed writing ", path));
}

struct DatasetStats {
    std::size_t count = 0;
    double mean_video_seconds = 0.0;
    double mean_target_seconds = 0.0;
    double mean_query_length = 0.0;
};

inline DatasetStats dataset_stats(const std::vector<QueryRecord>& records) {
    DatasetStats s;
    s.count = records.size();
    if (records.empty()) return s;
    for (const QueryRecord& r : records) {
        s.mean_video_seconds += r.duration;
        s.mean_target_seconds += r.moment_end - r.moment_start;
        s.mean_query_length += static_cast<double>(r.tokens.size());
    }
    const auto c = static_cast<double>(s.count);
    s.mean_video_seconds /= c;
    s.mean_target_seconds /= c;
    s.mean_query_length /= c;
    return s;
}

// Desk-scale synthetic data with plantable ground truth: each token owns a
// fixed unit signature vector; frames inside the target moment carry the
// normalized mean of the query's token signatures plus Gaussian noise, frames
// outside carry noise alone. One frame is one second, so step and second
// units coincide.
struct SynthConfig {
    std::size_t vocab_size = 50;
    std::size_t feature_dim = 32;
    std::size_t len_min = 60, len_max = 120;      // video length range, steps
    std::size_t width_min = 10, width_max = 30;   // moment width range, steps
    double snr = 10.0;                            // per-coordinate power ratio
    std::size_t train_count = 800, test_count = 200;
    std::uint64_t seed = 7;
};

struct SynthDataset {
    std::vector<VideoFeatures> features;
    std::vector<QueryRecord> train, test;
};

inline std::vector<real> synth_token_signature(std::uint64_t seed, std::size_t token, std::size_t dim) {
    Rng rng(mix_seed(seed, "token_signature", token));
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

inline SynthDataset gen_synthetic(const SynthConfig& cfg) {
    if (cfg.vocab_size == 0 || cfg.feature_dim == 0 || cfg.len_min == 0 || cfg.width_min == 0 ||
        cfg.len_min > cfg.len_max || cfg.width_min > cfg.width_max || !(cfg.snr > 0.0)) {
        throw ConfigError("invalid synthetic data config");
    }
    if (cfg.width_max > cfg.len_min) {
        throw ConfigError(msg("moment width range (max ", cfg.width_max, ") exceeds video length range (min ",
                              cfg.len_min, ")"));
    }
    const real sigma = std::isinf(cfg.snr)
                           ? 0.0
                           : 1.0 / std::sqrt(static_cast<real>(cfg.feature_dim) * cfg.snr);
    static const char* kLabels[] = {"nsubj", "dobj", "det", "amod", "advmod", "prep"};

    SynthDataset ds;
    Rng rng(mix_seed(cfg.seed, "synth_stream"));
    auto make_split = [&](std::vector<QueryRecord>& split, std::size_t count, const char* tag) {
        for (std::size_t s = 0; s < count; ++s) {
            char idbuf[32];
            std::snprintf(idbuf, sizeof idbuf, "%s%05zu", tag, s);
            const std::string sid = idbuf;

            const auto n = static_cast<std::size_t>(rng.range(cfg.len_min, cfg.len_max));
            const auto w = static_cast<std::size_t>(rng.range(cfg.width_min, cfg.width_max));
            const auto start = static_cast<std::size_t>(rng.below(n - w + 1));

            const auto token_count = static_cast<std::size_t>(rng.range(4, 10));
            std::vector<std::string> tokens(token_count);
            std::vector<std::size_t> token_ids(token_count);
            for (std::size_t i = 0; i < token_count; ++i) {
                token_ids[i] = static_cast<std::size_t>(rng.below(cfg.vocab_size));
                char tb[16];
                std::snprintf(tb, sizeof tb, "w%03zu", token_ids[i]);
                tokens[i] = tb;
            }

            QueryRecord q;
            q.query_id = "q_" + sid;
            q.video_id = "v_" + sid;
            q.tokens = tokens;
            // Chain-shaped parse alternating arc direction, labels cycling.
            for (std::size_t i = 0; i + 1 < token_count; ++i) {
                const int a = static_cast<int>(i), b = static_cast<int>(i + 1);
                const char* lab = kLabels[i % (sizeof kLabels / sizeof kLabels[0])];
                if (i % 2 == 0) {
                    q.edges.emplace_back(a, b, lab);
                } else {
                    q.edges.emplace_back(b, a, lab);
                }
            }
            q.moment_start = static_cast<double>(start);
            q.moment_end = static_cast<double>(start + w);
            q.duration = static_cast<double>(n);
            split.push_back(std::move(q));

            std::vector<real> mean(cfg.feature_dim, 0.0);
            for (std::size_t id : token_ids) {
                const auto sig = synth_token_signature(cfg.seed, id, cfg.feature_dim);
                for (std::size_t c = 0; c < cfg.feature_dim; ++c) mean[c] += sig[c];
            }
            real norm2 = 0.0;
            for (real& x : mean) {
                x /= static_cast<real>(token_count);
                norm2 += x * x;
            }
            const real inv = norm2 > 0.0 ? 1.0 / std::sqrt(norm2) : 0.0;
            for (real& x : mean) x *= inv;

            VideoFeatures vf;
            vf.id = "v_" + sid;
            vf.n = n;
            vf.original_n = n;
            vf.dim = cfg.feature_dim;
            vf.duration = static_cast<double>(n);
            vf.data.resize(n * cfg.feature_dim);
            for (std::size_t f = 0; f < n; ++f) {
                const bool inside = f >= start && f < start + w;
                for (std::size_t c = 0; c < cfg.feature_dim; ++c) {
                    const real noise = sigma == 0.0 ? 0.0 : sigma * rng.normal();
                    vf.data[f * cfg.feature_dim + c] = static_cast<float>((inside ? mean[c] : 0.0) + noise);
                }
            }
            ds.features.push_back(std::move(vf));
        }
    };
    make_split(ds.train, cfg.train_count, "tr");
    make_split(ds.test, cfg.test_count, "te");
    return ds;
}

struct Dataset {
    std::vector<QueryRecord> records;
    std::unordered_map<std::string, VideoFeatures> features;
};

inline Dataset load_dataset(const std::string& queries_path, const std::string& features_dir,
                            std::size_t cap = kDefaultFrameCap) {
    Dataset ds;
    ds.records = load_queries(queries_path);
    for (const QueryRecord& r : ds.records) {
        if (ds.features.count(r.video_id)) continue;
        const std::string path = (std::filesystem::path(features_dir) / (r.video_id + ".feat")).string();
        VideoFeatures vf = load_features(path, cap);
        vf.duration = r.duration;
        ds.features.emplace(r.video_id, std::move(vf));
    }
    return ds;
}

inline Dataset synth_split(const SynthDataset& src, bool train) {
    Dataset ds;
    ds.records = train ? src.train : src.test;
    std::unordered_map<std::string, const VideoFeatures*> index;
    for (const VideoFeatures& vf : src.features) index.emplace(vf.id, &vf);
    for (const QueryRecord& r : ds.records) {
        const auto it = index.find(r.video_id);
        if (it == index.end()) throw DataError(msg("missing features for video ", r.video_id));
        ds.features.emplace(r.video_id, *it->second);
    }
    return ds;
}

inline void write_synth(const SynthDataset& ds, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "features");
    for (const VideoFeatures& vf : ds.features) {
        save_features((fs::path(dir) / "features" / (vf.id + ".feat")).string(), vf);
    }
    save_queries((fs::path(dir) / "train.jsonl").string(), ds.train);
    save_queries((fs::path(dir) / "test.jsonl").string(), ds.test);
}

}  // namespace vmr
