#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "radnet/tensor.hpp"

// Central-difference gradient verification. The model is run in double
// precision; each probed parameter element is nudged by +/-h and the loss
// difference is compared against the analytic gradient.

namespace radnet {

struct GradCheckOptions {
    double h = 1e-5;
    double tolerance = 1e-4;
    // Differences below this are treated as zero: with a sum-reduced loss of
    // magnitude L the central difference only resolves ~L*eps/h, so tiny
    // gradients would otherwise report spurious relative errors.
    double abs_tolerance = 1e-6;
    // 0 = probe every element; otherwise a deterministic sample per block.
    std::int64_t max_probes_per_block = 0;
    std::uint64_t probe_seed = 17;
};

struct GradCheckBlockReport {
    std::string name;
    std::int64_t probes = 0;
    double max_rel_err = 0.0;
    std::int64_t worst_index = -1;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckBlockReport> blocks;
    double max_rel_err = 0.0;
    std::string worst_block;
    bool non_finite = false;

    bool pass(double tolerance) const { return !non_finite && max_rel_err < tolerance; }
};

inline double grad_rel_err(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    return std::abs(analytic - numeric) / denom;
}

// `loss` must recompute the full forward pass from current parameter values.
// `params` carry analytic gradients already populated by one backward pass.
inline GradCheckReport gradcheck(const std::vector<Parameter<double>*>& params,
                                 const std::function<double()>& loss, const GradCheckOptions& opt = {}) {
    GradCheckReport report;
    for (Parameter<double>* p : params) {
        GradCheckBlockReport block;
        block.name = p->name;
        const std::int64_t n = p->value.numel();

        std::vector<std::int64_t> probe_indices;
        if (opt.max_probes_per_block > 0 && n > opt.max_probes_per_block) {
            // Deterministic sample without replacement, seeded per block name
            // so reruns probe identical elements.
            std::uint64_t h = 1469598103934665603ULL;
            for (char c : p->name) h = (h ^ static_cast<std::uint64_t>(static_cast<unsigned char>(c))) * 1099511628211ULL;
            Rng rng(opt.probe_seed ^ h);
            std::vector<std::int64_t> all(static_cast<std::size_t>(n));
            for (std::int64_t i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
            for (std::int64_t i = 0; i < opt.max_probes_per_block; ++i) {
                const std::int64_t j = i + rng.uniform_int(n - i);
                std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(j)]);
            }
            probe_indices.assign(all.begin(), all.begin() + opt.max_probes_per_block);
            std::sort(probe_indices.begin(), probe_indices.end());
        } else {
            probe_indices.resize(static_cast<std::size_t>(n));
            for (std::int64_t i = 0; i < n; ++i) probe_indices[static_cast<std::size_t>(i)] = i;
        }

        for (std::int64_t idx : probe_indices) {
            const double saved = p->value[idx];
            p->value[idx] = saved + opt.h;
            const double up = loss();
            p->value[idx] = saved - opt.h;
            const double down = loss();
            p->value[idx] = saved;
            const double numeric = (up - down) / (2.0 * opt.h);
            const double analytic = p->grad[idx];
            if (!std::isfinite(numeric) || !std::isfinite(analytic)) {
                report.non_finite = true;
            }
            const double rel = std::abs(analytic - numeric) <= opt.abs_tolerance
                                   ? 0.0
                                   : grad_rel_err(analytic, numeric);
            ++block.probes;
            if (rel > block.max_rel_err) {
                block.max_rel_err = rel;
                block.worst_index = idx;
                block.analytic_at_worst = analytic;
                block.numeric_at_worst = numeric;
            }
        }
        if (block.max_rel_err > report.max_rel_err) {
            report.max_rel_err = block.max_rel_err;
            report.worst_block = block.name;
        }
        report.blocks.push_back(std::move(block));
    }
    return report;
}

}  // namespace radnet
