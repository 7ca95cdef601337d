#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "radnet/detect.hpp"
#include "radnet/error.hpp"
#include "radnet/network.hpp"

// Structured-text run configuration: "[section]" headers and "key: value"
// lines, one section per module.  Every knob has a default matching the
// reference setting; unknown sections or keys are rejected so typos cannot
// silently fall back to defaults.  config_text renders the fully resolved
// state in canonical order (doubles in shortest round-trip form), so an
// echoed config reloads to an identical configuration and can be hashed.

namespace radnet {

struct TrainConfig {
    double alpha = 0.4;  // auxiliary loss weight
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t steps = 500;
    std::int64_t checkpoint_every = 100;
    std::uint64_t seed = 1;  // weight init and scene order
    std::string precision = "f32";
};

struct DataConfig {
    std::int64_t scenes = 8;
    std::uint64_t seed = 1;
    double split = 0.75;
    std::int64_t difficulty = 1;
    std::int64_t frames = 8;
    std::int64_t rows = 128;
    std::int64_t cols = 128;
};

struct DetectConfig {
    std::vector<double> k_cls = {0.02, 0.03, 0.05};
    double meters_per_bin = 0.23;
    double range_floor_m = 0.5;
    double fov_rad = 1.5707963267948966;
    double min_score = 0.1;
    double nms_threshold = 0.6;
    bool nms_same_class_only = false;
};

struct EvalConfig {
    double threshold_lo = 0.5;
    double threshold_hi = 0.9;
    double threshold_step = 0.05;
};

struct Config {
    ModelConfig model;
    TrainConfig train;
    DataConfig data;
    DetectConfig detect;
    EvalConfig eval;

    OlsParams ols_params() const {
        OlsParams p;
        p.k_cls = detect.k_cls;
        p.meters_per_bin = detect.meters_per_bin;
        p.range_floor_m = detect.range_floor_m;
        p.fov_rad = detect.fov_rad;
        p.rows = data.rows;
        p.cols = data.cols;
        p.nms_same_class_only = detect.nms_same_class_only;
        return p;
    }

    std::vector<double> eval_thresholds() const {
        std::vector<double> out;
        for (int i = 0;; ++i) {
            const double t = eval.threshold_lo + eval.threshold_step * i;
            if (t > eval.threshold_hi + 1e-9) break;
            out.push_back(t);
        }
        return out;
    }

    void validate() const {
        validate_model_config(model);
        if (model.classes != static_cast<std::int64_t>(detect.k_cls.size())) {
            throw ValidationError("model class count " + std::to_string(model.classes) +
                                  " does not match the tolerance table size " +
                                  std::to_string(detect.k_cls.size()));
        }
        if (model.gamma_init < 0.0 || model.gamma_init > 1.0) {
            throw ValidationError("gamma_init must lie in [0, 1]");
        }
        if (train.alpha < 0.0) throw ValidationError("alpha must be nonnegative");
        if (train.lr <= 0.0) throw ValidationError("lr must be positive");
        if (train.beta1 < 0.0 || train.beta1 >= 1.0 || train.beta2 < 0.0 || train.beta2 >= 1.0) {
            throw ValidationError("adam betas must lie in [0, 1)");
        }
        if (train.eps <= 0.0) throw ValidationError("adam eps must be positive");
        if (train.steps < 0) throw ValidationError("step count must be nonnegative");
        if (train.checkpoint_every < 1) throw ValidationError("checkpoint_every must be at least 1");
        if (train.precision != "f32" && train.precision != "f64") {
            throw ValidationError("precision must be f32 or f64, got '" + train.precision + "'");
        }
        if (data.scenes < 1) throw ValidationError("dataset needs at least one scene");
        if (data.split < 0.0 || data.split > 1.0) throw ValidationError("split must lie in [0, 1]");
        if (data.difficulty < 0) throw ValidationError("difficulty must be nonnegative");
        if (data.frames < 1) throw ValidationError("frame count must be positive");
        ols_params().validate();
        if (detect.min_score < 0.0 || detect.min_score > 1.0) {
            throw ValidationError("min_score must lie in [0, 1]");
        }
        if (detect.nms_threshold < 0.0 || detect.nms_threshold > 1.0) {
            throw ValidationError("nms_threshold must lie in [0, 1]");
        }
        if (eval.threshold_lo <= 0.0 || eval.threshold_hi > 1.0 || eval.threshold_lo > eval.threshold_hi) {
            throw ValidationError("eval thresholds must satisfy 0 < lo <= hi <= 1");
        }
        if (eval.threshold_step <= 0.0) throw ValidationError("eval threshold step must be positive");
    }
};

namespace detail {

inline std::string fmt_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::string fmt_bool(bool v) { return v ? "true" : "false"; }

template <typename V>
std::string fmt_list(const std::vector<V>& vs) {
    std::string out;
    for (std::size_t i = 0; i < vs.size(); ++i) {
        if (i) out += ' ';
        if constexpr (std::is_same_v<V, double>) {
            out += fmt_double(vs[i]);
        } else {
            out += std::to_string(vs[i]);
        }
    }
    return out;
}

inline std::string fmt_arr3(const std::array<std::int64_t, 3>& a) {
    return std::to_string(a[0]) + ' ' + std::to_string(a[1]) + ' ' + std::to_string(a[2]);
}

struct ConfigValue {
    std::string text;
    std::int64_t line;

    std::int64_t as_i64() const {
        try {
            std::size_t used = 0;
            const std::int64_t v = std::stoll(text, &used);
            if (used != text.size()) throw std::invalid_argument(text);
            return v;
        } catch (const std::exception&) {
            throw ValidationError("line " + std::to_string(line) + ": expected an integer, got '" + text + "'");
        }
    }

    std::uint64_t as_u64() const {
        try {
            std::size_t used = 0;
            const std::uint64_t v = std::stoull(text, &used);
            if (used != text.size() || text.find('-') != std::string::npos) throw std::invalid_argument(text);
            return v;
        } catch (const std::exception&) {
            throw ValidationError("line " + std::to_string(line) + ": expected an unsigned integer, got '" +
                                  text + "'");
        }
    }

    double as_f64() const {
        try {
            std::size_t used = 0;
            const double v = std::stod(text, &used);
            if (used != text.size()) throw std::invalid_argument(text);
            return v;
        } catch (const std::exception&) {
            throw ValidationError("line " + std::to_string(line) + ": expected a number, got '" + text + "'");
        }
    }

    bool as_bool() const {
        if (text == "true") return true;
        if (text == "false") return false;
        throw ValidationError("line " + std::to_string(line) + ": expected true or false, got '" + text + "'");
    }

    std::vector<std::string> tokens() const {
        std::istringstream ss(text);
        std::vector<std::string> out;
        std::string tok;
        while (ss >> tok) out.push_back(tok);
        return out;
    }

    std::vector<std::int64_t> as_i64_list() const {
        std::vector<std::int64_t> out;
        for (const auto& tok : tokens()) out.push_back(ConfigValue{tok, line}.as_i64());
        if (out.empty()) throw ValidationError("line " + std::to_string(line) + ": expected a list of integers");
        return out;
    }

    std::vector<double> as_f64_list() const {
        std::vector<double> out;
        for (const auto& tok : tokens()) out.push_back(ConfigValue{tok, line}.as_f64());
        if (out.empty()) throw ValidationError("line " + std::to_string(line) + ": expected a list of numbers");
        return out;
    }

    std::array<std::int64_t, 3> as_arr3() const {
        const auto list = as_i64_list();
        if (list.size() != 3) {
            throw ValidationError("line " + std::to_string(line) + ": expected exactly 3 integers, got " +
                                  std::to_string(list.size()));
        }
        return {list[0], list[1], list[2]};
    }
};

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace detail

inline Config parse_config(std::istream& is) {
    Config cfg;
    std::string section;
    std::string line;
    std::int64_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw ValidationError("line " + std::to_string(line_no) + ": unterminated section");
            section = t.substr(1, t.size() - 2);
            if (section != "model" && section != "train" && section != "data" && section != "detect" &&
                section != "eval") {
                throw ValidationError("line " + std::to_string(line_no) + ": unknown section [" + section + "]");
            }
            continue;
        }
        const auto colon = t.find(':');
        if (colon == std::string::npos) {
            throw ValidationError("line " + std::to_string(line_no) + ": expected 'key: value', got '" + t + "'");
        }
        const std::string key = detail::trim(t.substr(0, colon));
        const detail::ConfigValue v{detail::trim(t.substr(colon + 1)), line_no};
        if (section.empty()) {
            throw ValidationError("line " + std::to_string(line_no) + ": key '" + key + "' before any section");
        }

        if (section == "model") {
            if (key == "in_channels") cfg.model.in_channels = v.as_i64();
            else if (key == "classes") cfg.model.classes = v.as_i64();
            else if (key == "widths") cfg.model.stage_widths = v.as_i64_list();
            else if (key == "heads") cfg.model.stage_heads = v.as_i64_list();
            else if (key == "window") cfg.model.window = v.as_arr3();
            else if (key == "displacement") cfg.model.displacement = v.as_arr3();
            else if (key == "embed_kernel") cfg.model.embed_kernel = v.as_arr3();
            else if (key == "embed_stride") cfg.model.embed_stride = v.as_arr3();
            else if (key == "pattern") cfg.model.shift_pattern = v.text;
            else if (key == "shift_ratio") cfg.model.channel_shift_ratio = v.as_f64();
            else if (key == "ffn_ratio") cfg.model.ffn_ratio = v.as_i64();
            else if (key == "relative_bias") cfg.model.relative_bias = v.as_bool();
            else if (key == "cmam_share_qk") cfg.model.cmam_share_qk = v.as_bool();
            else if (key == "cmam_scale_logits") cfg.model.cmam_scale_logits = v.as_bool();
            else if (key == "cmam_max_similarity_bytes") cfg.model.cmam_max_similarity_bytes = v.as_i64();
            else if (key == "gamma_init") cfg.model.gamma_init = v.as_f64();
            else if (key == "beta_init") cfg.model.beta_init = v.as_f64();
            else if (key == "init_stddev") cfg.model.init_stddev = v.as_f64();
            else throw ValidationError("line " + std::to_string(line_no) + ": unknown key 'model." + key + "'");
        } else if (section == "train") {
            if (key == "alpha") cfg.train.alpha = v.as_f64();
            else if (key == "lr") cfg.train.lr = v.as_f64();
            else if (key == "beta1") cfg.train.beta1 = v.as_f64();
            else if (key == "beta2") cfg.train.beta2 = v.as_f64();
            else if (key == "eps") cfg.train.eps = v.as_f64();
            else if (key == "steps") cfg.train.steps = v.as_i64();
            else if (key == "checkpoint_every") cfg.train.checkpoint_every = v.as_i64();
            else if (key == "seed") cfg.train.seed = v.as_u64();
            else if (key == "precision") cfg.train.precision = v.text;
            else throw ValidationError("line " + std::to_string(line_no) + ": unknown key 'train." + key + "'");
        } else if (section == "data") {
            if (key == "scenes") cfg.data.scenes = v.as_i64();
            else if (key == "seed") cfg.data.seed = v.as_u64();
            else if (key == "split") cfg.data.split = v.as_f64();
            else if (key == "difficulty") cfg.data.difficulty = v.as_i64();
            else if (key == "frames") cfg.data.frames = v.as_i64();
            else if (key == "rows") cfg.data.rows = v.as_i64();
            else if (key == "cols") cfg.data.cols = v.as_i64();
            else throw ValidationError("line " + std::to_string(line_no) + ": unknown key 'data." + key + "'");
        } else if (section == "detect") {
            if (key == "k_cls") cfg.detect.k_cls = v.as_f64_list();
            else if (key == "meters_per_bin") cfg.detect.meters_per_bin = v.as_f64();
            else if (key == "range_floor_m") cfg.detect.range_floor_m = v.as_f64();
            else if (key == "fov_rad") cfg.detect.fov_rad = v.as_f64();
            else if (key == "min_score") cfg.detect.min_score = v.as_f64();
            else if (key == "nms_threshold") cfg.detect.nms_threshold = v.as_f64();
            else if (key == "nms_same_class_only") cfg.detect.nms_same_class_only = v.as_bool();
            else throw ValidationError("line " + std::to_string(line_no) + ": unknown key 'detect." + key + "'");
        } else {
            if (key == "threshold_lo") cfg.eval.threshold_lo = v.as_f64();
            else if (key == "threshold_hi") cfg.eval.threshold_hi = v.as_f64();
            else if (key == "threshold_step") cfg.eval.threshold_step = v.as_f64();
            else throw ValidationError("line " + std::to_string(line_no) + ": unknown key 'eval." + key + "'");
        }
    }
    cfg.validate();
    return cfg;
}

inline Config load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    return parse_config(in);
}

inline std::string config_text(const Config& cfg) {
    using detail::fmt_arr3;
    using detail::fmt_bool;
    using detail::fmt_double;
    using detail::fmt_list;
    std::ostringstream os;
    os << "[model]\n";
    os << "in_channels: " << cfg.model.in_channels << '\n';
    os << "classes: " << cfg.model.classes << '\n';
    os << "widths: " << fmt_list(cfg.model.stage_widths) << '\n';
    os << "heads: " << fmt_list(cfg.model.stage_heads) << '\n';
    os << "window: " << fmt_arr3(cfg.model.window) << '\n';
    os << "displacement: " << fmt_arr3(cfg.model.displacement) << '\n';
    os << "embed_kernel: " << fmt_arr3(cfg.model.embed_kernel) << '\n';
    os << "embed_stride: " << fmt_arr3(cfg.model.embed_stride) << '\n';
    os << "pattern: " << cfg.model.shift_pattern << '\n';
    os << "shift_ratio: " << fmt_double(cfg.model.channel_shift_ratio) << '\n';
    os << "ffn_ratio: " << cfg.model.ffn_ratio << '\n';
    os << "relative_bias: " << fmt_bool(cfg.model.relative_bias) << '\n';
    os << "cmam_share_qk: " << fmt_bool(cfg.model.cmam_share_qk) << '\n';
    os << "cmam_scale_logits: " << fmt_bool(cfg.model.cmam_scale_logits) << '\n';
    os << "cmam_max_similarity_bytes: " << cfg.model.cmam_max_similarity_bytes << '\n';
    os << "gamma_init: " << fmt_double(cfg.model.gamma_init) << '\n';
    os << "beta_init: " << fmt_double(cfg.model.beta_init) << '\n';
    os << "init_stddev: " << fmt_double(cfg.model.init_stddev) << '\n';
    os << "\n[train]\n";
    os << "alpha: " << fmt_double(cfg.train.alpha) << '\n';
    os << "lr: " << fmt_double(cfg.train.lr) << '\n';
    os << "beta1: " << fmt_double(cfg.train.beta1) << '\n';
    os << "beta2: " << fmt_double(cfg.train.beta2) << '\n';
    os << "eps: " << fmt_double(cfg.train.eps) << '\n';
    os << "steps: " << cfg.train.steps << '\n';
    os << "checkpoint_every: " << cfg.train.checkpoint_every << '\n';
    os << "seed: " << cfg.train.seed << '\n';
    os << "precision: " << cfg.train.precision << '\n';
    os << "\n[data]\n";
    os << "scenes: " << cfg.data.scenes << '\n';
    os << "seed: " << cfg.data.seed << '\n';
    os << "split: " << fmt_double(cfg.data.split) << '\n';
    os << "difficulty: " << cfg.data.difficulty << '\n';
    os << "frames: " << cfg.data.frames << '\n';
    os << "rows: " << cfg.data.rows << '\n';
    os << "cols: " << cfg.data.cols << '\n';
    os << "\n[detect]\n";
    os << "k_cls: " << fmt_list(cfg.detect.k_cls) << '\n';
    os << "meters_per_bin: " << fmt_double(cfg.detect.meters_per_bin) << '\n';
    os << "range_floor_m: " << fmt_double(cfg.detect.range_floor_m) << '\n';
    os << "fov_rad: " << fmt_double(cfg.detect.fov_rad) << '\n';
    os << "min_score: " << fmt_double(cfg.detect.min_score) << '\n';
    os << "nms_threshold: " << fmt_double(cfg.detect.nms_threshold) << '\n';
    os << "nms_same_class_only: " << fmt_bool(cfg.detect.nms_same_class_only) << '\n';
    os << "\n[eval]\n";
    os << "threshold_lo: " << fmt_double(cfg.eval.threshold_lo) << '\n';
    os << "threshold_hi: " << fmt_double(cfg.eval.threshold_hi) << '\n';
    os << "threshold_step: " << fmt_double(cfg.eval.threshold_step) << '\n';
    return os.str();
}

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string config_hash(const Config& cfg) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(config_text(cfg))));
    return buf;
}

// Hash over the fields that determine a training trajectory step for step:
// the model, the data settings and the optimizer.  The step budget and the
// checkpoint cadence only decide when a run stops, so a checkpoint stays
// usable when those change; detection and eval settings are post-processing.
inline std::string trajectory_hash(const Config& cfg) {
    Config reduced = cfg;
    reduced.train.steps = 1;
    reduced.train.checkpoint_every = 1;
    reduced.detect = DetectConfig{};
    reduced.eval = EvalConfig{};
    return config_hash(reduced);
}

}  // namespace radnet
