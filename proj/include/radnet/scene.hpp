#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "radnet/container.hpp"
#include "radnet/detect.hpp"
#include "radnet/error.hpp"
#include "radnet/tensor.hpp"

// Synthetic radar scenes: objects are point reflectors moving linearly across
// the range-azimuth grid.  Each contributes a complex Gaussian blob whose
// width grows with range and whose phase is random per object per frame; the
// magnitude image therefore looks like a (very) idealized RF frame.  Ground
// truth confidence maps are rendered with the same range-scaled tolerances
// the evaluation metric uses.

namespace radnet {

// One reflector: a class label, a reflectivity amplitude, and a per-frame
// (range, azimuth) position.
struct ObjectTrack {
    std::int64_t class_id = 0;
    double amplitude = 1.0;
    std::vector<std::array<double, 2>> path;  // per frame {range_m, azimuth_rad}
};

struct SceneSpec {
    std::int64_t frames = 0;
    std::vector<ObjectTrack> objects;
    double noise_std = 0.0;
    std::uint64_t seed = 0;
};

// Fractional grid coordinates of a continuous position.  These invert
// OlsParams::range_of_row / azimuth_of_col (above the range floor).
inline double row_coord_of_range(double range_m, const OlsParams& params) {
    return range_m / params.meters_per_bin;
}

inline double col_coord_of_azimuth(double azimuth_rad, const OlsParams& params) {
    if (params.cols <= 1) return 0.0;
    return (azimuth_rad / params.fov_rad + 0.5) * static_cast<double>(params.cols - 1);
}

inline void validate_scene(const SceneSpec& spec, const OlsParams& params) {
    if (spec.frames < 1) throw ValidationError("scene needs at least one frame");
    for (std::size_t o = 0; o < spec.objects.size(); ++o) {
        const ObjectTrack& obj = spec.objects[o];
        params.k_for(obj.class_id);
        if (static_cast<std::int64_t>(obj.path.size()) != spec.frames) {
            throw ValidationError("object " + std::to_string(o) + " has " + std::to_string(obj.path.size()) +
                                  " path entries for " + std::to_string(spec.frames) + " frames");
        }
        for (const auto& pos : obj.path) {
            const std::int64_t row = std::llround(row_coord_of_range(pos[0], params));
            const std::int64_t col = std::llround(col_coord_of_azimuth(pos[1], params));
            if (row < 0 || row >= params.rows || col < 0 || col >= params.cols) {
                throw ValidationError("object " + std::to_string(o) + " leaves the sensed area at cell (" +
                                      std::to_string(row) + "," + std::to_string(col) + ")");
            }
        }
    }
}

// Deterministic scene draw.  Difficulty scales everything that makes a scene
// hard: object count (1 to 4), motion speed, and noise floor.  Difficulty 0
// is the degenerate case used by smoke tests: one static object, no noise.
inline SceneSpec synth_scene(std::uint64_t seed, std::int64_t difficulty, std::int64_t frames = 8,
                             const OlsParams& params = OlsParams{}) {
    if (difficulty < 0) throw ValidationError("difficulty must be nonnegative");
    if (frames < 1) throw ValidationError("scene needs at least one frame");
    params.validate();

    Rng rng(seed);
    SceneSpec spec;
    spec.frames = frames;
    spec.seed = seed;
    spec.noise_std = 0.02 * static_cast<double>(difficulty);

    const std::int64_t extra = std::min<std::int64_t>(3, difficulty);
    const std::int64_t n_objects = 1 + rng.uniform_int(extra + 1);
    const double margin = 3.0;
    const double row_lo = margin, row_hi = static_cast<double>(params.rows - 1) - margin;
    const double col_lo = margin, col_hi = static_cast<double>(params.cols - 1) - margin;
    if (row_lo >= row_hi || col_lo >= col_hi) {
        throw ValidationError("grid too small to place objects away from the border");
    }
    const double speed_max = 0.15 * static_cast<double>(difficulty);  // bins per frame

    for (std::int64_t o = 0; o < n_objects; ++o) {
        ObjectTrack obj;
        obj.class_id = rng.uniform_int(static_cast<std::int64_t>(params.k_cls.size()));
        obj.amplitude = rng.uniform(0.8, 1.6);

        // Linear motion in bin coordinates; resample until the endpoints stay
        // inside the margin (linearity covers every frame in between).
        double row0 = 0.0, col0 = 0.0, vr = 0.0, vc = 0.0;
        for (int attempt = 0; attempt < 256; ++attempt) {
            row0 = rng.uniform(row_lo, row_hi);
            col0 = rng.uniform(col_lo, col_hi);
            vr = rng.uniform(-speed_max, speed_max);
            vc = rng.uniform(-speed_max, speed_max);
            const double row1 = row0 + vr * static_cast<double>(frames - 1);
            const double col1 = col0 + vc * static_cast<double>(frames - 1);
            if (row1 >= row_lo && row1 <= row_hi && col1 >= col_lo && col1 <= col_hi) break;
            vr = vc = 0.0;  // a static object is always in bounds
        }

        for (std::int64_t t = 0; t < frames; ++t) {
            const double row = row0 + vr * static_cast<double>(t);
            const double col = col0 + vc * static_cast<double>(t);
            const double range = row * params.meters_per_bin;
            const double azimuth = (col / static_cast<double>(params.cols - 1) - 0.5) * params.fov_rad;
            obj.path.push_back({range, azimuth});
        }
        spec.objects.push_back(std::move(obj));
    }
    validate_scene(spec, params);
    return spec;
}

// Complex RF volume [2, T, H, W] (channel 0 real, channel 1 imaginary).
// Each object adds a Gaussian blob of magnitude amplitude*exp(-d^2/2sigma^2)
// with a per-object-per-frame random phase; blob width grows with range.
// Noise and phase use independent streams so re-rendering with a different
// phase_seed leaves the noise (and hence the magnitude image of a single
// object) unchanged.
inline Tensor<float> render_rf(const SceneSpec& spec, const OlsParams& params, std::uint64_t phase_seed) {
    validate_scene(spec, params);
    const std::int64_t T = spec.frames, H = params.rows, W = params.cols;
    Tensor<float> out({2, T, H, W}, "cthw");
    const std::int64_t plane = T * H * W;

    Rng phase_rng(phase_seed);
    constexpr double two_pi = 6.283185307179586476925286766559;
    for (const ObjectTrack& obj : spec.objects) {
        for (std::int64_t t = 0; t < T; ++t) {
            const double phase = phase_rng.uniform(0.0, two_pi);
            const double re_unit = std::cos(phase), im_unit = std::sin(phase);
            const double r0 = row_coord_of_range(obj.path[static_cast<std::size_t>(t)][0], params);
            const double c0 = col_coord_of_azimuth(obj.path[static_cast<std::size_t>(t)][1], params);
            const double sigma = 1.5 + 0.05 * r0;
            const std::int64_t radius = static_cast<std::int64_t>(std::ceil(4.0 * sigma));
            const std::int64_t r_lo = std::max<std::int64_t>(0, std::llround(r0) - radius);
            const std::int64_t r_hi = std::min<std::int64_t>(H - 1, std::llround(r0) + radius);
            const std::int64_t c_lo = std::max<std::int64_t>(0, std::llround(c0) - radius);
            const std::int64_t c_hi = std::min<std::int64_t>(W - 1, std::llround(c0) + radius);
            for (std::int64_t r = r_lo; r <= r_hi; ++r) {
                for (std::int64_t c = c_lo; c <= c_hi; ++c) {
                    const double dr = static_cast<double>(r) - r0;
                    const double dc = static_cast<double>(c) - c0;
                    const double mag = obj.amplitude * std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
                    const std::int64_t at = (t * H + r) * W + c;
                    out[at] += static_cast<float>(mag * re_unit);
                    out[plane + at] += static_cast<float>(mag * im_unit);
                }
            }
        }
    }

    if (spec.noise_std > 0.0) {
        Rng noise_rng(spec.seed ^ 0x6e6f697365ull);
        for (std::int64_t i = 0; i < out.numel(); ++i) {
            out[i] += static_cast<float>(noise_rng.normal() * spec.noise_std);
        }
    }
    return out;
}

inline Tensor<float> render_rf(const SceneSpec& spec, const OlsParams& params) {
    return render_rf(spec, params, spec.seed ^ 0x7068617365ull);
}

// Integer-cell object centers for every frame, sorted for stable file output.
inline std::vector<Annotation> annotations_of(const SceneSpec& spec, const OlsParams& params) {
    validate_scene(spec, params);
    std::vector<Annotation> out;
    for (const ObjectTrack& obj : spec.objects) {
        for (std::int64_t t = 0; t < spec.frames; ++t) {
            Annotation a;
            a.frame = t;
            a.row = std::llround(row_coord_of_range(obj.path[static_cast<std::size_t>(t)][0], params));
            a.col = std::llround(col_coord_of_azimuth(obj.path[static_cast<std::size_t>(t)][1], params));
            a.class_id = obj.class_id;
            out.push_back(a);
        }
    }
    std::sort(out.begin(), out.end(), annotation_order);
    return out;
}

// Ground-truth confidence maps [T, H, W, classes].  Every object writes a
// Gaussian with peak exactly 1.0 at its cell into its class channel, with
// sigma = range * k_cls converted to bins — the same tolerance unit the
// location-similarity metric uses.  Overlaps combine by elementwise max so
// values stay in [0, 1].
inline Tensor<float> render_gt_confmaps(const std::vector<Annotation>& annotations, const OlsParams& params,
                                        std::int64_t frames) {
    params.validate();
    if (frames < 1) throw ValidationError("confidence maps need at least one frame");
    const std::int64_t H = params.rows, W = params.cols;
    const std::int64_t C = static_cast<std::int64_t>(params.k_cls.size());
    Tensor<float> out({frames, H, W, C}, "thwc");

    for (const Annotation& a : annotations) {
        if (a.frame < 0 || a.frame >= frames) {
            throw ValidationError("annotation frame " + std::to_string(a.frame) + " outside 0.." +
                                  std::to_string(frames - 1));
        }
        if (a.row < 0 || a.row >= H || a.col < 0 || a.col >= W) {
            throw ValidationError("annotation cell (" + std::to_string(a.row) + "," + std::to_string(a.col) +
                                  ") outside the grid");
        }
        const double sigma = params.range_of_row(a.row) * params.k_for(a.class_id) / params.meters_per_bin;
        const std::int64_t radius = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(4.0 * sigma)));
        const std::int64_t r_lo = std::max<std::int64_t>(0, a.row - radius);
        const std::int64_t r_hi = std::min<std::int64_t>(H - 1, a.row + radius);
        const std::int64_t c_lo = std::max<std::int64_t>(0, a.col - radius);
        const std::int64_t c_hi = std::min<std::int64_t>(W - 1, a.col + radius);
        for (std::int64_t r = r_lo; r <= r_hi; ++r) {
            for (std::int64_t c = c_lo; c <= c_hi; ++c) {
                const double dr = static_cast<double>(r - a.row);
                const double dc = static_cast<double>(c - a.col);
                const float g = static_cast<float>(std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma)));
                float& cell = out[((a.frame * H + r) * W + c) * C + a.class_id];
                cell = std::max(cell, g);
            }
        }
    }
    return out;
}

// One object per line: frame, class name, row, col.
inline void write_annotations(std::ostream& os, const std::vector<Annotation>& annotations,
                              const std::vector<std::string>& class_names) {
    for (const Annotation& a : annotations) {
        if (a.class_id < 0 || a.class_id >= static_cast<std::int64_t>(class_names.size())) {
            throw ValidationError("annotation class id " + std::to_string(a.class_id) + " has no name");
        }
        os << a.frame << ' ' << class_names[static_cast<std::size_t>(a.class_id)] << ' ' << a.row << ' '
           << a.col << '\n';
    }
}

inline std::vector<Annotation> read_annotations(std::istream& is, const std::vector<std::string>& class_names) {
    std::vector<Annotation> out;
    std::string line;
    std::int64_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        Annotation a;
        std::string cls;
        if (!(ss >> a.frame >> cls >> a.row >> a.col)) {
            throw ValidationError("malformed annotation on line " + std::to_string(line_no) + ": " + line);
        }
        const auto it = std::find(class_names.begin(), class_names.end(), cls);
        if (it == class_names.end()) {
            throw ValidationError("unknown class '" + cls + "' on line " + std::to_string(line_no));
        }
        a.class_id = static_cast<std::int64_t>(it - class_names.begin());
        out.push_back(a);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dataset directories: scene_NNN.mrnv (records "rf" and "gt"), scene_NNN.ann,
// and a manifest.txt of "key: value" lines.

struct DatasetOptions {
    std::int64_t n_scenes = 8;
    std::uint64_t seed = 1;
    double split = 0.75;  // fraction of scenes in the training list
    std::int64_t difficulty = 1;
    std::int64_t frames = 8;
    OlsParams params;
    bool force = false;
};

struct DatasetManifest {
    std::uint64_t seed = 0;
    std::int64_t difficulty = 0;
    std::int64_t frames = 0;
    std::int64_t rows = 0;
    std::int64_t cols = 0;
    std::int64_t classes = 0;
    double split = 0.0;
    std::vector<std::string> train;
    std::vector<std::string> test;
};

inline std::string scene_name(std::int64_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "scene_%03lld", static_cast<long long>(index));
    return buf;
}

inline std::uint64_t scene_seed(std::uint64_t dataset_seed, std::int64_t index) {
    return dataset_seed ^ (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(index + 1));
}

inline std::string manifest_text(const DatasetManifest& m) {
    std::ostringstream os;
    os << "seed: " << m.seed << '\n';
    os << "difficulty: " << m.difficulty << '\n';
    os << "frames: " << m.frames << '\n';
    os << "rows: " << m.rows << '\n';
    os << "cols: " << m.cols << '\n';
    os << "classes: " << m.classes << '\n';
    char split[32];
    std::snprintf(split, sizeof(split), "%.6f", m.split);
    os << "split: " << split << '\n';
    for (const auto& name : m.train) os << "train: " << name << '\n';
    for (const auto& name : m.test) os << "test: " << name << '\n';
    return os.str();
}

inline DatasetManifest parse_manifest(std::istream& is) {
    DatasetManifest m;
    std::string line;
    std::int64_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const auto colon = line.find(": ");
        if (colon == std::string::npos) {
            throw ValidationError("malformed manifest line " + std::to_string(line_no) + ": " + line);
        }
        const std::string key = line.substr(0, colon);
        const std::string value = line.substr(colon + 2);
        try {
            if (key == "seed") m.seed = std::stoull(value);
            else if (key == "difficulty") m.difficulty = std::stoll(value);
            else if (key == "frames") m.frames = std::stoll(value);
            else if (key == "rows") m.rows = std::stoll(value);
            else if (key == "cols") m.cols = std::stoll(value);
            else if (key == "classes") m.classes = std::stoll(value);
            else if (key == "split") m.split = std::stod(value);
            else if (key == "train") m.train.push_back(value);
            else if (key == "test") m.test.push_back(value);
            else throw ValidationError("unknown manifest key '" + key + "'");
        } catch (const std::invalid_argument&) {
            throw ValidationError("manifest line " + std::to_string(line_no) + " has a non-numeric value: " + line);
        }
    }
    return m;
}

inline DatasetManifest load_manifest(const std::string& dir) {
    const std::string path = dir + "/manifest.txt";
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    return parse_manifest(in);
}

struct SceneFiles {
    Tensor<float> rf;
    Tensor<float> gt;
    std::vector<Annotation> annotations;
};

inline SceneFiles load_scene(const std::string& dir, const std::string& name,
                             const std::vector<std::string>& class_names = default_class_names()) {
    SceneFiles s;
    const std::string volume_path = dir + "/" + name + ".mrnv";
    s.rf = load_volume(volume_path, "rf");
    s.gt = load_volume(volume_path, "gt");
    const std::string ann_path = dir + "/" + name + ".ann";
    std::ifstream in(ann_path);
    if (!in) throw IoError("cannot open " + ann_path);
    s.annotations = read_annotations(in, class_names);
    return s;
}

// Generates n_scenes synthetic scenes into dir, rendering in parallel (one
// file per scene, so writers never share a file) and writing the manifest
// last.  Deterministic for a fixed option set.
inline DatasetManifest make_dataset(const std::string& dir, const DatasetOptions& opt) {
    opt.params.validate();
    if (opt.n_scenes < 1) throw ValidationError("dataset needs at least one scene");
    if (opt.split < 0.0 || opt.split > 1.0) throw ValidationError("split must be in [0, 1]");

    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const std::string manifest_path = dir + "/manifest.txt";
    if (!opt.force && fs::exists(manifest_path)) {
        throw IoError(dir + " already contains a dataset (enable force to overwrite)");
    }

    std::mutex error_mx;
    std::exception_ptr first_error;
    const auto render_one = [&](std::int64_t i) {
        const SceneSpec spec = synth_scene(scene_seed(opt.seed, i), opt.difficulty, opt.frames, opt.params);
        const Tensor<float> rf = render_rf(spec, opt.params);
        const std::vector<Annotation> anns = annotations_of(spec, opt.params);
        const Tensor<float> gt = render_gt_confmaps(anns, opt.params, opt.frames);
        const std::string name = scene_name(i);
        save_volumes(dir + "/" + name + ".mrnv", {{"rf", rf}, {"gt", gt}});
        std::ofstream ann(dir + "/" + name + ".ann", std::ios::trunc);
        if (!ann) throw IoError("cannot write " + dir + "/" + name + ".ann");
        write_annotations(ann, anns, default_class_names());
    };

    const unsigned hw = std::thread::hardware_concurrency();
    const std::int64_t n_threads = std::clamp<std::int64_t>(hw == 0 ? 1 : hw, 1, opt.n_scenes);
    std::vector<std::thread> pool;
    for (std::int64_t t = 0; t < n_threads; ++t) {
        pool.emplace_back([&, t] {
            for (std::int64_t i = t; i < opt.n_scenes; i += n_threads) {
                try {
                    render_one(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mx);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);

    DatasetManifest m;
    m.seed = opt.seed;
    m.difficulty = opt.difficulty;
    m.frames = opt.frames;
    m.rows = opt.params.rows;
    m.cols = opt.params.cols;
    m.classes = static_cast<std::int64_t>(opt.params.k_cls.size());
    m.split = opt.split;
    const std::int64_t n_train =
        std::clamp<std::int64_t>(std::llround(opt.split * static_cast<double>(opt.n_scenes)), 0, opt.n_scenes);
    for (std::int64_t i = 0; i < opt.n_scenes; ++i) {
        (i < n_train ? m.train : m.test).push_back(scene_name(i));
    }

    std::ofstream mf(manifest_path, std::ios::trunc);
    if (!mf) throw IoError("cannot write " + manifest_path);
    mf << manifest_text(m);
    if (!mf) throw IoError("short write to " + manifest_path);
    return m;
}

}  // namespace radnet
