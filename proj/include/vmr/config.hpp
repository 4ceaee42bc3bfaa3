#pragma once

#include <cstdio>
#include <cstdlib>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "vmr/common.hpp"

namespace vmr {

struct Criterion {
    std::size_t top_n = 1;
    real min_iou = 0.5;
};

// Run settings; every field can be set from a flat key=value config file or
// overridden on the command line.
struct RunConfig {
    std::vector<real> widths = {16, 32, 64, 96, 128, 160, 196};
    real clear_lambda = 0.3;  // IoU floor below which alignment labels reset to 0
    real high_gamma = 0.7;    // IoU floor for the boundary-regression set
    real alpha = 0.001;       // regression weight in the total loss
    std::size_t gcn_layers = 2;
    std::size_t heads = 8;
    std::size_t hidden = 512;
    real lr = 0.001;
    std::size_t batch_size = 128;
    std::size_t epochs = 20;
    std::uint64_t seed = 1;
    bool no_gcn = false, no_sa = false, no_cg = false, no_bf = false;
    real nms_threshold = 0.5;
    std::vector<Criterion> criteria = {{1, 0.3}, {1, 0.5}, {1, 0.7}, {5, 0.3}, {5, 0.5}, {5, 0.7}};
    // extras beyond the core set
    std::size_t threads = 1;
    bool train_embeddings = false;
    bool gcn_original = false;
    std::size_t frame_cap = 200;
};

inline std::string format_real(real v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string widths_to_string(const std::vector<real>& widths) {
    std::string s;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        if (i) s += ",";
        s += format_real(widths[i]);
    }
    return s;
}

inline std::vector<real> parse_widths(const std::string& s) {
    std::vector<real> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        char* end = nullptr;
        const real v = std::strtod(item.c_str(), &end);
        if (end == item.c_str()) throw ConfigError(msg("bad width value '", item, "'"));
        out.push_back(v);
    }
    if (out.empty()) throw ConfigError("widths list is empty");
    return out;
}

inline std::string criteria_to_string(const std::vector<Criterion>& cs) {
    std::string s;
    for (std::size_t i = 0; i < cs.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(cs[i].top_n) + ":" + format_real(cs[i].min_iou);
    }
    return s;
}

inline std::vector<Criterion> parse_criteria(const std::string& s) {
    std::vector<Criterion> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw ConfigError(msg("criterion '", item, "' is not n:m"));
        out.push_back(Criterion{static_cast<std::size_t>(std::strtoull(item.c_str(), nullptr, 10)),
                                std::strtod(item.c_str() + colon + 1, nullptr)});
    }
    if (out.empty()) throw ConfigError("criteria list is empty");
    return out;
}

inline void validate(const RunConfig& c) {
    if (c.widths.empty()) throw ConfigError("widths must be nonempty");
    for (real w : c.widths) {
        if (!(w > 0.0)) throw ConfigError(msg("width must be positive, got ", w));
    }
    if (c.clear_lambda < 0.0 || c.clear_lambda >= 1.0) throw ConfigError("lambda outside [0,1)");
    if (c.high_gamma <= 0.0 || c.high_gamma > 1.0) throw ConfigError("gamma outside (0,1]");
    if (c.alpha < 0.0) throw ConfigError("alpha must be nonnegative");
    if (c.nms_threshold <= 0.0 || c.nms_threshold > 1.0) throw ConfigError("nms_threshold outside (0,1]");
    if (c.hidden == 0 || c.hidden % 2 != 0) throw ConfigError("hidden width must be even and positive");
    if (c.heads == 0 || c.hidden % c.heads != 0) throw ConfigError("heads must divide hidden width");
    if (c.batch_size == 0) throw ConfigError("batch_size must be positive");
    if (c.lr < 0.0) throw ConfigError("lr must be nonnegative");
    for (const Criterion& cr : c.criteria) {
        if (cr.top_n < 1) throw ConfigError("criterion n must be >= 1");
        if (!(cr.min_iou > 0.0 && cr.min_iou < 1.0)) throw ConfigError("criterion m outside (0,1)");
    }
}

inline std::string serialize_config(const RunConfig& c) {
    std::ostringstream out;
    out << "widths = " << widths_to_string(c.widths) << "\n";
    out << "lambda = " << format_real(c.clear_lambda) << "\n";
    out << "gamma = " << format_real(c.high_gamma) << "\n";
    out << "alpha = " << format_real(c.alpha) << "\n";
    out << "gcn_layers = " << c.gcn_layers << "\n";
    out << "heads = " << c.heads << "\n";
    out << "hidden = " << c.hidden << "\n";
    out << "lr = " << format_real(c.lr) << "\n";
    out << "batch_size = " << c.batch_size << "\n";
    out << "epochs = " << c.epochs << "\n";
    out << "seed = " << c.seed << "\n";
    out << "no_gcn = " << (c.no_gcn ? 1 : 0) << "\n";
    out << "no_sa = " << (c.no_sa ? 1 : 0) << "\n";
    out << "no_cg = " << (c.no_cg ? 1 : 0) << "\n";
    out << "no_bf = " << (c.no_bf ? 1 : 0) << "\n";
    out << "nms_threshold = " << format_real(c.nms_threshold) << "\n";
    out << "criteria = " << criteria_to_string(c.criteria) << "\n";
    out << "threads = " << c.threads << "\n";
    out << "train_embeddings = " << (c.train_embeddings ? 1 : 0) << "\n";
    out << "gcn_original = " << (c.gcn_original ? 1 : 0) << "\n";
    out << "frame_cap = " << c.frame_cap << "\n";
    return out.str();
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw ConfigError(msg("bad boolean '", v, "' for key ", key));
}

}  // namespace detail

// Applies key=value lines (# comments allowed) on top of the given config.
inline RunConfig parse_config(const std::string& text, RunConfig base = {}) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError(msg("config line ", lineno, " is not key = value: ", t));
        const std::string key = detail::trim(t.substr(0, eq));
        const std::string val = detail::trim(t.substr(eq + 1));
        if (key == "widths") {
            base.widths = parse_widths(val);
        } else if (key == "lambda") {
            base.clear_lambda = std::strtod(val.c_str(), nullptr);
        } else if (key == "gamma") {
            base.high_gamma = std::strtod(val.c_str(), nullptr);
        } else if (key == "alpha") {
            base.alpha = std::strtod(val.c_str(), nullptr);
        } else if (key == "gcn_layers") {
            base.gcn_layers = std::strtoull(val.c_str(), nullptr, 10);
        } else if (key == "heads") {
            base.heads = std::strtoull(val.c_str(), nullptr, 10);
        } else if (key == "hidden") {
            base.hidden = std::strtoull(val.c_str(), nullptr, 10);
        } else if (key == "lr") {
            base.lr = std::strtod(val.c_str(), nullptr);
        } else if (key == "batch_size") {
            base.batch_size = std::strtoull(val.c_str(), nullptr, 10);
        } else if (key == "epochs") {
            base.epochs = std::strtoull(val.c_str(), nullptr, 10);
        } else if (key == "seed") {
            base.seed = std::strtoull(val.c_str(), nullptr, 10);
        } else if (key == "no_gcn") {
            base.no_gcn = detail::parse_bool(val, key);
        } else if (key == "no_sa") {
            base.no_sa = detail::parse_bool(val, key);
        } else if (key == "no_cg") {
            base.no_cg = detail::parse_bool(val, key);
        } else if (key == "no_bf") {
            base.no_bf = detail::parse_bool(val, key);
        } else if (key == "nms_threshold") {
            base.nms_threshold = std::strtod(val.c_str(), nullptr);
        } else if (key == "criteria") {
            base.criteria = parse_criteria(val);
        } else if (key == "threads") {
            base.threads = std::strtoull(val.c_str(), nullptr, 10);
        } else if (key == "train_embeddings") {
            base.train_embeddings = detail::parse_bool(val, key);
        } else if (key == "gcn_original") {
            base.gcn_original = detail::parse_bool(val, key);
        } else if (key == "frame_cap") {
            base.frame_cap = std::strtoull(val.c_str(), nullptr, 10);
        } else {
            throw ConfigError(msg("unknown config key '", key, "' at line ", lineno));
        }
    }
    return base;
}

}  // namespace vmr
