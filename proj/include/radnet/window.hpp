#pragma once

#include <array>
#include <cstdint>

#include "radnet/tensor.hpp"

// Non-overlapping 3D window bookkeeping over [T,H,W,C] volumes. Extents
// that do not divide the window are zero-padded up to the next multiple and
// a validity mask marks the pad cells. A window layout optionally carries a
// cyclic displacement: partitioning then reads from the displaced canvas
// (equivalent to rolling the padded volume by -disp before slicing), and
// every cell is labeled with a region id so attention can refuse pairs that
// were not neighbors before the roll.

namespace radnet {

struct WindowLayout {
    std::array<std::int64_t, 3> extent{};   // original T,H,W
    std::array<std::int64_t, 3> padded{};   // padded to window multiples
    std::array<std::int64_t, 3> window{};   // window edge lengths
    std::array<std::int64_t, 3> counts{};   // windows per axis
    std::array<std::int64_t, 3> disp{};     // effective cyclic displacement
    std::int64_t n_windows = 0;             // product of counts
    std::int64_t window_len = 0;            // tokens per window
    Tensor<std::uint8_t> valid;             // [N, P] 1 = real cell
    Tensor<std::int32_t> region;            // [N, P] pre-displacement region id
};

namespace detail {

// Region slice of a coordinate before the roll: 0 for the bulk, 1 for the
// [size-window, size-disp) band, 2 for the trailing [size-disp, size) band.
inline int region_slice(std::int64_t coord, std::int64_t size, std::int64_t window, std::int64_t disp) {
    if (disp == 0) return 0;
    if (coord < size - window) return 0;
    if (coord < size - disp) return 1;
    return 2;
}

}  // namespace detail

inline WindowLayout make_window_layout(std::array<std::int64_t, 3> extent, std::array<std::int64_t, 3> window,
                                       std::array<std::int64_t, 3> disp = {0, 0, 0}) {
    WindowLayout L;
    L.extent = extent;
    L.window = window;
    for (int a = 0; a < 3; ++a) {
        if (extent[a] <= 0) throw DimensionError("window layout needs positive extents");
        if (window[a] <= 0) throw ValidationError("window edge lengths must be positive");
        if (disp[a] < 0 || disp[a] >= window[a]) {
            throw ValidationError("window displacement must lie in [0, window)");
        }
        L.padded[a] = (extent[a] + window[a] - 1) / window[a] * window[a];
        L.counts[a] = L.padded[a] / window[a];
        // A displacement only has an effect when the axis spans more than one
        // window; degenerate axes keep every cell in one region.
        L.disp[a] = extent[a] > window[a] ? disp[a] : 0;
    }
    L.n_windows = L.counts[0] * L.counts[1] * L.counts[2];
    L.window_len = window[0] * window[1] * window[2];
    L.valid = Tensor<std::uint8_t>({L.n_windows, L.window_len});
    L.region = Tensor<std::int32_t>({L.n_windows, L.window_len});

    for (std::int64_t w = 0; w < L.n_windows; ++w) {
        const std::int64_t wt = w / (L.counts[1] * L.counts[2]);
        const std::int64_t wh = (w / L.counts[2]) % L.counts[1];
        const std::int64_t ww = w % L.counts[2];
        for (std::int64_t p = 0; p < L.window_len; ++p) {
            const std::int64_t lt = p / (window[1] * window[2]);
            const std::int64_t lh = (p / window[2]) % window[1];
            const std::int64_t lw = p % window[2];
            // canvas coordinate after the roll; source coordinate before it
            const std::int64_t ct = wt * window[0] + lt;
            const std::int64_t ch = wh * window[1] + lh;
            const std::int64_t cw = ww * window[2] + lw;
            const std::int64_t st = (ct + L.disp[0]) % L.padded[0];
            const std::int64_t sh = (ch + L.disp[1]) % L.padded[1];
            const std::int64_t sw = (cw + L.disp[2]) % L.padded[2];
            const bool ok = st < extent[0] && sh < extent[1] && sw < extent[2];
            L.valid[w * L.window_len + p] = ok ? 1 : 0;
            const int r = (detail::region_slice(st, L.padded[0], window[0], L.disp[0]) * 3 +
                           detail::region_slice(sh, L.padded[1], window[1], L.disp[1])) *
                              3 +
                          detail::region_slice(sw, L.padded[2], window[2], L.disp[2]);
            L.region[w * L.window_len + p] = r;
        }
    }
    return L;
}

// Source coordinate (in the original, un-rolled volume) for a token slot.
inline std::array<std::int64_t, 3> window_source_coord(const WindowLayout& L, std::int64_t w, std::int64_t p) {
    const std::int64_t wt = w / (L.counts[1] * L.counts[2]);
    const std::int64_t wh = (w / L.counts[2]) % L.counts[1];
    const std::int64_t ww = w % L.counts[2];
    const std::int64_t lt = p / (L.window[1] * L.window[2]);
    const std::int64_t lh = (p / L.window[2]) % L.window[1];
    const std::int64_t lw = p % L.window[2];
    return {(wt * L.window[0] + lt + L.disp[0]) % L.padded[0],
            (wh * L.window[1] + lh + L.disp[1]) % L.padded[1],
            (ww * L.window[2] + lw + L.disp[2]) % L.padded[2]};
}

// [T,H,W,C] -> [N,P,C]; pad cells become zero tokens.
template <typename T>
Tensor<T> window_partition(const Tensor<T>& x, const WindowLayout& L) {
    if (x.rank() != 4 || x.extent(0) != L.extent[0] || x.extent(1) != L.extent[1] || x.extent(2) != L.extent[2]) {
        throw DimensionError("window partition layout mismatch: volume " + shape_str(x.shape()));
    }
    const std::int64_t c = x.extent(3);
    Tensor<T> tokens({L.n_windows, L.window_len, c});
    for (std::int64_t w = 0; w < L.n_windows; ++w) {
        for (std::int64_t p = 0; p < L.window_len; ++p) {
            if (!L.valid[w * L.window_len + p]) continue;
            const auto s = window_source_coord(L, w, p);
            const T* src = x.data() + ((s[0] * L.extent[1] + s[1]) * L.extent[2] + s[2]) * c;
            T* dst = tokens.data() + (w * L.window_len + p) * c;
            for (std::int64_t i = 0; i < c; ++i) dst[i] = src[i];
        }
    }
    return tokens;
}

// [N,P,C] -> [T,H,W,C]; pad tokens are dropped. Exact adjoint of
// window_partition, and its inverse on the valid region.
template <typename T>
Tensor<T> window_merge(const Tensor<T>& tokens, const WindowLayout& L) {
    if (tokens.rank() != 3 || tokens.extent(0) != L.n_windows || tokens.extent(1) != L.window_len) {
        throw DimensionError("window merge layout mismatch: tokens " + shape_str(tokens.shape()));
    }
    const std::int64_t c = tokens.extent(2);
    Tensor<T> x({L.extent[0], L.extent[1], L.extent[2], c});
    for (std::int64_t w = 0; w < L.n_windows; ++w) {
        for (std::int64_t p = 0; p < L.window_len; ++p) {
            if (!L.valid[w * L.window_len + p]) continue;
            const auto s = window_source_coord(L, w, p);
            const T* src = tokens.data() + (w * L.window_len + p) * c;
            T* dst = x.data() + ((s[0] * L.extent[1] + s[1]) * L.extent[2] + s[2]) * c;
            for (std::int64_t i = 0; i < c; ++i) dst[i] = src[i];
        }
    }
    return x;
}

// Cyclic roll of the three leading axes of [T,H,W,C]: out[i] = in[(i - shift) mod n].
template <typename T>
Tensor<T> roll3d(const Tensor<T>& x, std::array<std::int64_t, 3> shift) {
    if (x.rank() != 4) throw DimensionError("roll3d expects [T,H,W,C], got " + shape_str(x.shape()));
    const std::int64_t ts = x.extent(0), hs = x.extent(1), ws = x.extent(2), cs = x.extent(3);
    auto wrap = [](std::int64_t v, std::int64_t n) { return ((v % n) + n) % n; };
    Tensor<T> y(x.shape(), x.axes().c_str());
    for (std::int64_t t = 0; t < ts; ++t) {
        const std::int64_t st = wrap(t - shift[0], ts);
        for (std::int64_t h = 0; h < hs; ++h) {
            const std::int64_t sh = wrap(h - shift[1], hs);
            for (std::int64_t w = 0; w < ws; ++w) {
                const std::int64_t sw = wrap(w - shift[2], ws);
                const T* src = x.data() + ((st * hs + sh) * ws + sw) * cs;
                T* dst = y.data() + ((t * hs + h) * ws + w) * cs;
                for (std::int64_t c = 0; c < cs; ++c) dst[c] = src[c];
            }
        }
    }
    return y;
}

}  // namespace radnet
