#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "radnet/tensor.hpp"

// Temporal mixing by pure index remapping on [T,H,W,C] volumes. A patch
// shift tiles a k-by-k mosaic of frame offsets over the spatial grid and
// moves whole patches (all channels together) across frames, wrapping
// modulo T; a channel shift swaps fixed channel bands with the previous /
// next frame, zero-filling at the sequence ends. Neither touches values
// arithmetically, which tests enforce with an instrumented scalar.

namespace radnet {

struct ShiftPattern {
    std::vector<int> cell;  // row-major k*k temporal offsets
    int k = 1;
    std::string name = "custom";

    int offset_at(std::int64_t h, std::int64_t w) const {
        return cell[static_cast<std::size_t>((h % k) * k + (w % k))];
    }
};

inline void validate_pattern(const ShiftPattern& p) {
    if (p.k <= 0) throw ValidationError("shift pattern cell edge must be positive");
    if (p.cell.size() != static_cast<std::size_t>(p.k) * static_cast<std::size_t>(p.k)) {
        throw ValidationError("shift pattern '" + p.name + "' needs " + std::to_string(p.k * p.k) +
                              " offsets, got " + std::to_string(p.cell.size()));
    }
    bool has_zero = false;
    for (int v : p.cell) {
        if (v == 0) has_zero = true;
    }
    if (!has_zero) throw ValidationError("shift pattern '" + p.name + "' must keep some patches in place (offset 0)");
}

inline ShiftPattern make_pattern(const std::string& name) {
    ShiftPattern p;
    p.name = name;
    if (name == "A") {
        p.k = 2;
        p.cell = {0, -1, +1, 0};
    } else if (name == "B") {
        p.k = 2;
        p.cell = {0, -1, +1, +2};
    } else if (name == "C") {
        p.k = 3;
        p.cell = {-4, -3, -2, -1, 0, +1, +2, +3, +4};
    } else {
        throw ValidationError("unknown shift pattern '" + name + "' (expected A, B, or C)");
    }
    validate_pattern(p);
    return p;
}

inline ShiftPattern make_custom_pattern(std::vector<int> cell, int k) {
    ShiftPattern p;
    p.cell = std::move(cell);
    p.k = k;
    validate_pattern(p);
    return p;
}

namespace detail {

inline std::int64_t wrap_frame(std::int64_t t, std::int64_t span) {
    std::int64_t m = t % span;
    return m < 0 ? m + span : m;
}

template <typename T>
Tensor<T> patch_shift_impl(const Tensor<T>& x, const ShiftPattern& pattern, int direction) {
    if (x.rank() != 4) throw DimensionError("patch shift expects [T,H,W,C], got " + shape_str(x.shape()));
    validate_pattern(pattern);
    const std::int64_t ts = x.extent(0), hs = x.extent(1), ws = x.extent(2), cs = x.extent(3);
    Tensor<T> y(x.shape(), x.axes().c_str());
    for (std::int64_t t = 0; t < ts; ++t) {
        for (std::int64_t h = 0; h < hs; ++h) {
            for (std::int64_t w = 0; w < ws; ++w) {
                const std::int64_t src_t = wrap_frame(t + direction * pattern.offset_at(h, w), ts);
                const T* src = x.data() + ((src_t * hs + h) * ws + w) * cs;
                T* dst = y.data() + ((t * hs + h) * ws + w) * cs;
                for (std::int64_t c = 0; c < cs; ++c) dst[c] = src[c];
            }
        }
    }
    return y;
}

}  // namespace detail

// output[t,h,w,:] = input[(t + cell[h mod k, w mod k]) mod T, h, w, :]
template <typename T>
Tensor<T> patch_shift(const Tensor<T>& x, const ShiftPattern& pattern) {
    return detail::patch_shift_impl(x, pattern, +1);
}

// Exact inverse: patch_shift_back(patch_shift(x, p), p) == x bitwise.
template <typename T>
Tensor<T> patch_shift_back(const Tensor<T>& x, const ShiftPattern& pattern) {
    return detail::patch_shift_impl(x, pattern, -1);
}

// Shifted channel count: floor(C * ratio), rounded down to even so both
// directions move the same number of bands.
inline std::int64_t shifted_channels(std::int64_t c, double ratio) {
    if (ratio < 0.0 || ratio > 1.0) throw ValidationError("channel shift ratio must lie in [0,1]");
    std::int64_t n = static_cast<std::int64_t>(static_cast<double>(c) * ratio);
    if (n % 2 != 0) --n;
    return n < 0 ? 0 : n;
}

// Band [0, C/8): taken from frame t-1 (zeros at t=0).
// Band [C/8, C/4): taken from frame t+1 (zeros at t=T-1).
// Remaining channels pass through unchanged. (Band sizes follow the ratio;
// the C/8 figures are the default ratio 0.25.)
template <typename T>
Tensor<T> channel_shift(const Tensor<T>& x, double ratio) {
    if (x.rank() != 4) throw DimensionError("channel shift expects [T,H,W,C], got " + shape_str(x.shape()));
    const std::int64_t ts = x.extent(0), hs = x.extent(1), ws = x.extent(2), cs = x.extent(3);
    const std::int64_t per_dir = shifted_channels(cs, ratio) / 2;
    Tensor<T> y(x.shape(), x.axes().c_str());
    for (std::int64_t t = 0; t < ts; ++t) {
        for (std::int64_t h = 0; h < hs; ++h) {
            for (std::int64_t w = 0; w < ws; ++w) {
                T* dst = y.data() + ((t * hs + h) * ws + w) * cs;
                const T* same = x.data() + ((t * hs + h) * ws + w) * cs;
                const T* prev = t > 0 ? x.data() + (((t - 1) * hs + h) * ws + w) * cs : nullptr;
                const T* next = t + 1 < ts ? x.data() + (((t + 1) * hs + h) * ws + w) * cs : nullptr;
                for (std::int64_t c = 0; c < per_dir; ++c) dst[c] = prev ? prev[c] : T(0);
                for (std::int64_t c = per_dir; c < 2 * per_dir; ++c) dst[c] = next ? next[c] : T(0);
                for (std::int64_t c = 2 * per_dir; c < cs; ++c) dst[c] = same[c];
            }
        }
    }
    return y;
}

// Adjoint of channel_shift: a value copied from [t-1, c] shows up only at
// [t, c], so its gradient is gathered from [t+1, c]; band-0/1 originals are
// overwritten and get zero gradient through those channels.
template <typename T>
Tensor<T> channel_shift_backward(const Tensor<T>& dy, double ratio) {
    const std::int64_t ts = dy.extent(0), hs = dy.extent(1), ws = dy.extent(2), cs = dy.extent(3);
    const std::int64_t per_dir = shifted_channels(cs, ratio) / 2;
    Tensor<T> dx(dy.shape());
    for (std::int64_t t = 0; t < ts; ++t) {
        for (std::int64_t h = 0; h < hs; ++h) {
            for (std::int64_t w = 0; w < ws; ++w) {
                T* dst = dx.data() + ((t * hs + h) * ws + w) * cs;
                const T* same = dy.data() + ((t * hs + h) * ws + w) * cs;
                const T* from_next = t + 1 < ts ? dy.data() + (((t + 1) * hs + h) * ws + w) * cs : nullptr;
                const T* from_prev = t > 0 ? dy.data() + (((t - 1) * hs + h) * ws + w) * cs : nullptr;
                for (std::int64_t c = 0; c < per_dir; ++c) dst[c] = from_next ? from_next[c] : T(0);
                for (std::int64_t c = per_dir; c < 2 * per_dir; ++c) dst[c] = from_prev ? from_prev[c] : T(0);
                for (std::int64_t c = 2 * per_dir; c < cs; ++c) dst[c] = same[c];
            }
        }
    }
    return dx;
}

}  // namespace radnet
