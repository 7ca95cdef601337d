#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "radnet/error.hpp"
#include "radnet/tensor.hpp"

namespace radnet {

struct Detection {
    std::int64_t frame = 0;
    std::int64_t row = 0;
    std::int64_t col = 0;
    std::int64_t class_id = 0;
    double score = 0.0;
};

struct Annotation {
    std::int64_t frame = 0;
    std::int64_t row = 0;
    std::int64_t col = 0;
    std::int64_t class_id = 0;
};

// Geometry and tolerance constants for object-location similarity.  Rows map
// linearly to range (with a positive floor so the similarity scale never
// collapses at row zero); columns spread across the azimuth field of view,
// and distances are Euclidean in the Cartesian projection.
struct OlsParams {
    std::vector<double> k_cls = {0.02, 0.03, 0.05};
    double meters_per_bin = 0.23;
    double range_floor_m = 0.5;
    double fov_rad = 1.5707963267948966;  // total azimuth span across columns
    std::int64_t rows = 128;
    std::int64_t cols = 128;
    bool nms_same_class_only = false;

    void validate() const {
        if (meters_per_bin <= 0.0) throw ValidationError("meters_per_bin must be positive");
        if (range_floor_m <= 0.0) throw ValidationError("range floor must be positive");
        if (rows <= 0 || cols <= 0) throw ValidationError("grid extents must be positive");
        if (k_cls.empty()) throw ValidationError("at least one class tolerance is required");
        for (double k : k_cls) {
            if (k <= 0.0) throw ValidationError("class tolerance constants must be positive");
        }
    }

    double k_for(std::int64_t class_id) const {
        if (class_id < 0 || class_id >= static_cast<std::int64_t>(k_cls.size())) {
            throw ValidationError("class id " + std::to_string(class_id) + " outside tolerance table of size " +
                                  std::to_string(k_cls.size()));
        }
        return k_cls[static_cast<std::size_t>(class_id)];
    }

    double range_of_row(std::int64_t row) const {
        return std::max(range_floor_m, static_cast<double>(row) * meters_per_bin);
    }

    double azimuth_of_col(std::int64_t col) const {
        if (cols <= 1) return 0.0;
        return (static_cast<double>(col) / static_cast<double>(cols - 1) - 0.5) * fov_rad;
    }

    double distance_m(std::int64_t r1, std::int64_t c1, std::int64_t r2, std::int64_t c2) const {
        if (r1 == r2 && c1 == c2) return 0.0;
        const double ra = range_of_row(r1), rb = range_of_row(r2);
        const double ta = azimuth_of_col(c1), tb = azimuth_of_col(c2);
        const double xa = ra * std::sin(ta), ya = ra * std::cos(ta);
        const double xb = rb * std::sin(tb), yb = rb * std::cos(tb);
        return std::hypot(xa - xb, ya - yb);
    }
};

// Class labels matching the default k_cls tolerance table, smallest object
// class first.
inline const std::vector<std::string>& default_class_names() {
    static const std::vector<std::string> names = {"pedestrian", "cyclist", "car"};
    return names;
}

// Location similarity: exp(-d^2 / (2 (s*k)^2)), 1 at zero distance and
// exp(-1/2) when the distance equals one tolerance unit s*k.
inline double ols(double d, double s, double k) {
    if (s <= 0.0) throw ValidationError("ols needs positive object range, got " + std::to_string(s));
    if (k <= 0.0) throw ValidationError("ols needs a positive tolerance constant, got " + std::to_string(k));
    if (d < 0.0) throw ValidationError("ols distance must be nonnegative");
    const double unit = s * k;
    return std::exp(-(d * d) / (2.0 * unit * unit));
}

// Score-descending order with a full lexicographic tie-break so every
// downstream pass is deterministic.
inline bool detection_order(const Detection& a, const Detection& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.frame, a.row, a.col, a.class_id) < std::tie(b.frame, b.row, b.col, b.class_id);
}

inline bool annotation_order(const Annotation& a, const Annotation& b) {
    return std::tie(a.frame, a.row, a.col, a.class_id) < std::tie(b.frame, b.row, b.col, b.class_id);
}

// Strict 8-neighbor maxima per frame and class channel; border cells compare
// only their in-bounds neighbors.  conf is [T, H, W, classes].
template <typename T>
std::vector<Detection> find_peaks(const Tensor<T>& conf, double min_score) {
    if (conf.rank() != 4) {
        throw DimensionError("find_peaks expects [T,H,W,classes], got " + shape_str(conf.shape()));
    }
    const std::int64_t t_n = conf.extent(0), h = conf.extent(1), w = conf.extent(2), n_cls = conf.extent(3);
    std::vector<Detection> peaks;
    for (std::int64_t t = 0; t < t_n; ++t) {
        for (std::int64_t r = 0; r < h; ++r) {
            for (std::int64_t c = 0; c < w; ++c) {
                for (std::int64_t k = 0; k < n_cls; ++k) {
                    const double v = static_cast<double>(conf[conf.offset(t, r, c, k)]);
                    if (v < min_score) continue;
                    bool is_peak = true;
                    for (std::int64_t dr = -1; dr <= 1 && is_peak; ++dr) {
                        for (std::int64_t dc = -1; dc <= 1; ++dc) {
                            if (dr == 0 && dc == 0) continue;
                            const std::int64_t nr = r + dr, nc = c + dc;
                            if (nr < 0 || nr >= h || nc < 0 || nc >= w) continue;
                            if (static_cast<double>(conf[conf.offset(t, nr, nc, k)]) >= v) {
                                is_peak = false;
                                break;
                            }
                        }
                    }
                    if (is_peak) peaks.push_back({t, r, c, k, v});
                }
            }
        }
    }
    return peaks;
}

// Greedy suppression: repeatedly keep the best remaining peak and drop every
// peak whose similarity with it exceeds the threshold.  Similarity is
// evaluated with the kept peak's range and tolerance constant; suppression
// only ever applies within a frame.
inline std::vector<Detection> ols_nms(std::vector<Detection> peaks, const OlsParams& params, double threshold) {
    params.validate();
    std::sort(peaks.begin(), peaks.end(), detection_order);
    std::vector<char> removed(peaks.size(), 0);
    std::vector<Detection> kept;
    for (std::size_t i = 0; i < peaks.size(); ++i) {
        if (removed[i]) continue;
        const Detection& p = peaks[i];
        kept.push_back(p);
        const double s = params.range_of_row(p.row);
        const double k = params.k_for(p.class_id);
        for (std::size_t j = i + 1; j < peaks.size(); ++j) {
            if (removed[j]) continue;
            const Detection& q = peaks[j];
            if (q.frame != p.frame) continue;
            if (params.nms_same_class_only && q.class_id != p.class_id) continue;
            const double d = params.distance_m(p.row, p.col, q.row, q.col);
            if (ols(d, s, k) > threshold) removed[j] = 1;
        }
    }
    return kept;
}

inline std::vector<double> ols_thresholds() {
    std::vector<double> out;
    for (int i = 0; i < 9; ++i) out.push_back(0.5 + 0.05 * i);
    return out;
}

struct ThresholdPoint {
    double threshold = 0.0;
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
    double precision = 0.0;
    double recall = 0.0;
};

struct ClassEval {
    std::int64_t class_id = 0;
    double ap = 0.0;
    double ar = 0.0;
    std::vector<ThresholdPoint> points;
};

struct EvalResult {
    double ap = 0.0;
    double ar = 0.0;
    std::vector<ThresholdPoint> points;
    std::vector<ClassEval> per_class;
};

// Greedy one-to-one matching per threshold: detections in descending score
// order claim the unmatched same-class, same-frame ground truth with the
// highest similarity (measured at the ground truth's range), provided it
// clears the threshold.  Precision and recall pool every frame and class;
// the averages over the threshold sweep give AP and AR.
inline EvalResult match_and_score(std::vector<Detection> dets, std::vector<Annotation> gts,
                                  const OlsParams& params,
                                  const std::vector<double>& thresholds = ols_thresholds()) {
    params.validate();
    if (thresholds.empty()) throw ValidationError("threshold sweep must be non-empty");
    std::sort(dets.begin(), dets.end(), detection_order);
    std::sort(gts.begin(), gts.end(), annotation_order);

    const std::int64_t n_cls = static_cast<std::int64_t>(params.k_cls.size());
    std::vector<std::int64_t> gt_per_class(static_cast<std::size_t>(n_cls), 0);
    for (const Annotation& g : gts) {
        if (g.class_id < 0 || g.class_id >= n_cls) {
            throw ValidationError("annotation class id " + std::to_string(g.class_id) + " outside tolerance table");
        }
        ++gt_per_class[static_cast<std::size_t>(g.class_id)];
    }

    EvalResult result;
    result.per_class.resize(static_cast<std::size_t>(n_cls));
    for (std::int64_t c = 0; c < n_cls; ++c) result.per_class[static_cast<std::size_t>(c)].class_id = c;

    const auto ratio = [](std::int64_t num, std::int64_t den) {
        return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
    };

    for (double tau : thresholds) {
        std::vector<char> taken(gts.size(), 0);
        std::vector<std::int64_t> tp_cls(static_cast<std::size_t>(n_cls), 0);
        std::vector<std::int64_t> fp_cls(static_cast<std::size_t>(n_cls), 0);
        for (const Detection& det : dets) {
            if (det.class_id < 0 || det.class_id >= n_cls) {
                throw ValidationError("detection class id " + std::to_string(det.class_id) +
                                      " outside tolerance table");
            }
            std::int64_t best = -1;
            double best_ols = -1.0;
            for (std::size_t gi = 0; gi < gts.size(); ++gi) {
                if (taken[gi]) continue;
                const Annotation& g = gts[gi];
                if (g.frame != det.frame || g.class_id != det.class_id) continue;
                const double d = params.distance_m(det.row, det.col, g.row, g.col);
                const double o = ols(d, params.range_of_row(g.row), params.k_for(g.class_id));
                if (o > best_ols) {
                    best_ols = o;
                    best = static_cast<std::int64_t>(gi);
                }
            }
            if (best >= 0 && best_ols >= tau) {
                taken[static_cast<std::size_t>(best)] = 1;
                ++tp_cls[static_cast<std::size_t>(det.class_id)];
            } else {
                ++fp_cls[static_cast<std::size_t>(det.class_id)];
            }
        }

        ThresholdPoint pooled;
        pooled.threshold = tau;
        for (std::int64_t c = 0; c < n_cls; ++c) {
            const std::size_t ci = static_cast<std::size_t>(c);
            ThresholdPoint pt;
            pt.threshold = tau;
            pt.tp = tp_cls[ci];
            pt.fp = fp_cls[ci];
            pt.fn = gt_per_class[ci] - tp_cls[ci];
            pt.precision = ratio(pt.tp, pt.tp + pt.fp);
            pt.recall = ratio(pt.tp, pt.tp + pt.fn);
            result.per_class[ci].points.push_back(pt);
            pooled.tp += pt.tp;
            pooled.fp += pt.fp;
            pooled.fn += pt.fn;
        }
        pooled.precision = ratio(pooled.tp, pooled.tp + pooled.fp);
        pooled.recall = ratio(pooled.tp, pooled.tp + pooled.fn);
        result.points.push_back(pooled);
    }

    const double n_t = static_cast<double>(thresholds.size());
    for (const ThresholdPoint& pt : result.points) {
        result.ap += pt.precision;
        result.ar += pt.recall;
    }
    result.ap /= n_t;
    result.ar /= n_t;
    for (ClassEval& ce : result.per_class) {
        for (const ThresholdPoint& pt : ce.points) {
            ce.ap += pt.precision;
            ce.ar += pt.recall;
        }
        ce.ap /= n_t;
        ce.ar /= n_t;
    }
    return result;
}

// ---------------------------------------------------------------------------
// text formats

inline std::string format_score(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

// One detection per line: frame, row, col, class name, score.
inline void write_detections(std::ostream& os, const std::vector<Detection>& dets,
                             const std::vector<std::string>& class_names) {
    for (const Detection& d : dets) {
        if (d.class_id < 0 || d.class_id >= static_cast<std::int64_t>(class_names.size())) {
            throw ValidationError("detection class id " + std::to_string(d.class_id) + " has no name");
        }
        os << d.frame << ' ' << d.row << ' ' << d.col << ' '
           << class_names[static_cast<std::size_t>(d.class_id)] << ' ' << format_score(d.score) << '\n';
    }
}

inline std::vector<Detection> read_detections(std::istream& is, const std::vector<std::string>& class_names) {
    std::vector<Detection> out;
    std::string line;
    std::int64_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        Detection d;
        std::string cls;
        if (!(ss >> d.frame >> d.row >> d.col >> cls >> d.score)) {
            throw ValidationError("malformed detection on line " + std::to_string(line_no) + ": " + line);
        }
        const auto it = std::find(class_names.begin(), class_names.end(), cls);
        if (it == class_names.end()) {
            throw ValidationError("unknown class name '" + cls + "' on line " + std::to_string(line_no));
        }
        d.class_id = static_cast<std::int64_t>(it - class_names.begin());
        out.push_back(d);
    }
    return out;
}

// Export order: frame ascending, then score descending within the frame.
inline void sort_for_export(std::vector<Detection>& dets) {
    std::sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
        if (a.frame != b.frame) return a.frame < b.frame;
        return detection_order(a, b);
    });
}

inline std::string format_eval(const EvalResult& result, const std::vector<std::string>& class_names) {
    std::ostringstream os;
    os << "thresholds: " << result.points.size() << '\n';
    os << "overall ap: " << format_score(result.ap) << '\n';
    os << "overall ar: " << format_score(result.ar) << '\n';
    for (const ClassEval& ce : result.per_class) {
        const std::string name = ce.class_id < static_cast<std::int64_t>(class_names.size())
                                     ? class_names[static_cast<std::size_t>(ce.class_id)]
                                     : "class" + std::to_string(ce.class_id);
        os << "class " << name << " ap: " << format_score(ce.ap) << '\n';
        os << "class " << name << " ar: " << format_score(ce.ar) << '\n';
    }
    for (const ThresholdPoint& pt : result.points) {
        char tau[16];
        std::snprintf(tau, sizeof(tau), "%.2f", pt.threshold);
        os << "threshold " << tau << " precision: " << format_score(pt.precision)
           << " recall: " << format_score(pt.recall) << '\n';
    }
    return os.str();
}

}  // namespace radnet
