#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <type_traits>

#include "radnet/tensor.hpp"

// Forward/backward primitives. Every backward here is the exact adjoint of
// its forward; the finite-difference oracle in gradcheck.hpp is the referee.
// All loops accumulate each output element in a fixed sequential order, so
// results are bit-stable across runs.

namespace radnet {

// ---------------------------------------------------------------------------
// matmul

// [m,k] x [k,n] -> [m,n]; with rank>2 operands, leading axes are broadcast
// batch axes (they must match, or one operand may omit them entirely).
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() < 2 || b.rank() < 2) {
        throw DimensionError("matmul needs rank>=2 operands: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    const std::int64_t m = a.extent(a.rank() - 2);
    const std::int64_t k = a.extent(a.rank() - 1);
    const std::int64_t kb = b.extent(b.rank() - 2);
    const std::int64_t n = b.extent(b.rank() - 1);
    if (k != kb) {
        throw DimensionError("matmul inner extents disagree: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    std::vector<std::int64_t> lead_a(a.shape().begin(), a.shape().end() - 2);
    std::vector<std::int64_t> lead_b(b.shape().begin(), b.shape().end() - 2);
    if (!lead_a.empty() && !lead_b.empty() && lead_a != lead_b) {
        throw DimensionError("matmul batch extents disagree: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    const std::vector<std::int64_t>& lead = lead_a.empty() ? lead_b : lead_a;
    std::int64_t batch = 1;
    for (auto e : lead) batch *= e;

    std::vector<std::int64_t> out_shape = lead;
    out_shape.push_back(m);
    out_shape.push_back(n);
    Tensor<T> c(out_shape);

    const std::int64_t as = lead_a.empty() ? 0 : m * k;
    const std::int64_t bs = lead_b.empty() ? 0 : kb * n;
    for (std::int64_t q = 0; q < batch; ++q) {
        const T* pa = a.data() + q * as;
        const T* pb = b.data() + q * bs;
        T* pc = c.data() + q * m * n;
        for (std::int64_t i = 0; i < m; ++i) {
            T* crow = pc + i * n;
            for (std::int64_t kk = 0; kk < k; ++kk) {
                const T av = pa[i * k + kk];
                const T* brow = pb + kk * n;
                for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }
    return c;
}

// a [m,k] x b^T where b is [n,k] -> [m,n]. Shares the batch rules of matmul.
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
    const std::int64_t m = a.extent(a.rank() - 2);
    const std::int64_t k = a.extent(a.rank() - 1);
    const std::int64_t n = b.extent(b.rank() - 2);
    if (k != b.extent(b.rank() - 1)) {
        throw DimensionError("matmul_nt inner extents disagree: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    std::vector<std::int64_t> lead_a(a.shape().begin(), a.shape().end() - 2);
    std::vector<std::int64_t> lead_b(b.shape().begin(), b.shape().end() - 2);
    if (!lead_a.empty() && !lead_b.empty() && lead_a != lead_b) {
        throw DimensionError("matmul_nt batch extents disagree: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    const std::vector<std::int64_t>& lead = lead_a.empty() ? lead_b : lead_a;
    std::int64_t batch = 1;
    for (auto e : lead) batch *= e;
    std::vector<std::int64_t> out_shape = lead;
    out_shape.push_back(m);
    out_shape.push_back(n);
    Tensor<T> c(out_shape);
    const std::int64_t as = lead_a.empty() ? 0 : m * k;
    const std::int64_t bs = lead_b.empty() ? 0 : n * k;
    for (std::int64_t q = 0; q < batch; ++q) {
        const T* pa = a.data() + q * as;
        const T* pb = b.data() + q * bs;
        T* pc = c.data() + q * m * n;
        for (std::int64_t i = 0; i < m; ++i) {
            const T* arow = pa + i * k;
            for (std::int64_t j = 0; j < n; ++j) {
                const T* brow = pb + j * k;
                T acc(0);
                for (std::int64_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
                pc[i * n + j] = acc;
            }
        }
    }
    return c;
}

// a^T where a is [k,m], times b [k,n] -> [m,n].
template <typename T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b) {
    const std::int64_t k = a.extent(a.rank() - 2);
    const std::int64_t m = a.extent(a.rank() - 1);
    if (k != b.extent(b.rank() - 2)) {
        throw DimensionError("matmul_tn inner extents disagree: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    const std::int64_t n = b.extent(b.rank() - 1);
    std::vector<std::int64_t> lead_a(a.shape().begin(), a.shape().end() - 2);
    std::vector<std::int64_t> lead_b(b.shape().begin(), b.shape().end() - 2);
    if (!lead_a.empty() && !lead_b.empty() && lead_a != lead_b) {
        throw DimensionError("matmul_tn batch extents disagree: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    const std::vector<std::int64_t>& lead = lead_a.empty() ? lead_b : lead_a;
    std::int64_t batch = 1;
    for (auto e : lead) batch *= e;
    std::vector<std::int64_t> out_shape = lead;
    out_shape.push_back(m);
    out_shape.push_back(n);
    Tensor<T> c(out_shape);
    const std::int64_t as = lead_a.empty() ? 0 : k * m;
    const std::int64_t bs = lead_b.empty() ? 0 : k * n;
    for (std::int64_t q = 0; q < batch; ++q) {
        const T* pa = a.data() + q * as;
        const T* pb = b.data() + q * bs;
        T* pc = c.data() + q * m * n;
        for (std::int64_t kk = 0; kk < k; ++kk) {
            const T* arow = pa + kk * m;
            const T* brow = pb + kk * n;
            for (std::int64_t i = 0; i < m; ++i) {
                const T av = arow[i];
                T* crow = pc + i * n;
                for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }
    return c;
}

// ---------------------------------------------------------------------------
// softmax

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
    if (axis < 0) axis += x.rank();
    if (axis < 0 || axis >= x.rank()) throw DimensionError("softmax axis out of range for " + shape_str(x.shape()));
    std::int64_t outer = 1, inner = 1;
    const std::int64_t len = x.extent(axis);
    for (int i = 0; i < axis; ++i) outer *= x.extent(i);
    for (int i = axis + 1; i < x.rank(); ++i) inner *= x.extent(i);

    Tensor<T> y(x.shape(), x.axes().c_str());
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t in = 0; in < inner; ++in) {
            const T* px = x.data() + o * len * inner + in;
            T* py = y.data() + o * len * inner + in;
            T mx = px[0];
            for (std::int64_t i = 1; i < len; ++i) mx = std::max(mx, px[i * inner]);
            T sum(0);
            for (std::int64_t i = 0; i < len; ++i) {
                const T e = std::exp(px[i * inner] - mx);
                py[i * inner] = e;
                sum += e;
            }
            const T inv = T(1) / sum;
            for (std::int64_t i = 0; i < len; ++i) py[i * inner] *= inv;
        }
    }
    return y;
}

// dx = (dy - sum(dy*y)) * y along axis, given y = softmax(x).
template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& y, const Tensor<T>& dy, int axis) {
    require_same_shape(y, dy, "softmax_backward");
    if (axis < 0) axis += y.rank();
    std::int64_t outer = 1, inner = 1;
    const std::int64_t len = y.extent(axis);
    for (int i = 0; i < axis; ++i) outer *= y.extent(i);
    for (int i = axis + 1; i < y.rank(); ++i) inner *= y.extent(i);
    Tensor<T> dx(y.shape());
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t in = 0; in < inner; ++in) {
            const T* py = y.data() + o * len * inner + in;
            const T* pdy = dy.data() + o * len * inner + in;
            T* pdx = dx.data() + o * len * inner + in;
            T dot(0);
            for (std::int64_t i = 0; i < len; ++i) dot += pdy[i * inner] * py[i * inner];
            for (std::int64_t i = 0; i < len; ++i) pdx[i * inner] = (pdy[i * inner] - dot) * py[i * inner];
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// layer norm over the last (channel) axis

template <typename T>
struct LayerNormCache {
    Tensor<T> xhat;
    std::vector<T> inv_std;
};

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps,
                     LayerNormCache<T>* cache = nullptr) {
    const std::int64_t c = x.extent(x.rank() - 1);
    if (gain.numel() != c || bias.numel() != c) {
        throw DimensionError("layer_norm gain/bias extent vs channels: " + shape_str(x.shape()));
    }
    const std::int64_t rows = x.numel() / c;
    Tensor<T> y(x.shape(), x.axes().c_str());
    if (cache) {
        cache->xhat = Tensor<T>(x.shape());
        cache->inv_std.assign(static_cast<std::size_t>(rows), T(0));
    }
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* px = x.data() + r * c;
        T* py = y.data() + r * c;
        T mean(0);
        for (std::int64_t i = 0; i < c; ++i) mean += px[i];
        mean /= T(static_cast<double>(c));
        T var(0);
        for (std::int64_t i = 0; i < c; ++i) {
            const T d = px[i] - mean;
            var += d * d;
        }
        var /= T(static_cast<double>(c));
        const T inv = T(1) / std::sqrt(var + eps);
        for (std::int64_t i = 0; i < c; ++i) {
            const T xh = (px[i] - mean) * inv;
            py[i] = gain[i] * xh + bias[i];
            if (cache) cache->xhat[r * c + i] = xh;
        }
        if (cache) cache->inv_std[static_cast<std::size_t>(r)] = inv;
    }
    return y;
}

template <typename T>
Tensor<T> layer_norm_backward(const Tensor<T>& dy, const Tensor<T>& gain, const LayerNormCache<T>& cache,
                              Tensor<T>& dgain, Tensor<T>& dbias) {
    const std::int64_t c = gain.numel();
    const std::int64_t rows = dy.numel() / c;
    Tensor<T> dx(dy.shape());
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* pdy = dy.data() + r * c;
        const T* pxh = cache.xhat.data() + r * c;
        T* pdx = dx.data() + r * c;
        const T inv = cache.inv_std[static_cast<std::size_t>(r)];
        T sum_g(0), sum_gx(0);
        for (std::int64_t i = 0; i < c; ++i) {
            const T g = pdy[i] * gain[i];
            sum_g += g;
            sum_gx += g * pxh[i];
            dgain[i] += pdy[i] * pxh[i];
            dbias[i] += pdy[i];
        }
        const T cn = T(static_cast<double>(c));
        for (std::int64_t i = 0; i < c; ++i) {
            const T g = pdy[i] * gain[i];
            pdx[i] = (g - sum_g / cn - pxh[i] * sum_gx / cn) * inv;
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// conv3d, channels-first: x [Cin,T,H,W], w [Cout,Cin,kT,kH,kW]

inline std::int64_t conv_out_extent(std::int64_t in, std::int64_t k, std::int64_t s, std::int64_t p) {
    return (in + 2 * p - k) / s + 1;
}

template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<std::type_identity_t<T>>* bias,
                 std::array<std::int64_t, 3> stride, std::array<std::int64_t, 3> pad) {
    if (x.rank() != 4 || w.rank() != 5) {
        throw DimensionError("conv3d expects x [C,T,H,W] and kernel [Co,Ci,kT,kH,kW], got " +
                             shape_str(x.shape()) + " and " + shape_str(w.shape()));
    }
    const std::int64_t ci = x.extent(0), it = x.extent(1), ih = x.extent(2), iw = x.extent(3);
    const std::int64_t co = w.extent(0), kt = w.extent(2), kh = w.extent(3), kw = w.extent(4);
    if (w.extent(1) != ci) {
        throw DimensionError("conv3d channel mismatch: input " + shape_str(x.shape()) + " kernel " + shape_str(w.shape()));
    }
    const std::int64_t ot = conv_out_extent(it, kt, stride[0], pad[0]);
    const std::int64_t oh = conv_out_extent(ih, kh, stride[1], pad[1]);
    const std::int64_t ow = conv_out_extent(iw, kw, stride[2], pad[2]);
    if (ot <= 0 || oh <= 0 || ow <= 0) {
        throw DimensionError("conv3d kernel " + shape_str(w.shape()) + " larger than padded input " + shape_str(x.shape()));
    }
    Tensor<T> y({co, ot, oh, ow});
    for (std::int64_t oc = 0; oc < co; ++oc) {
        for (std::int64_t t = 0; t < ot; ++t) {
            const std::int64_t t0 = t * stride[0] - pad[0];
            for (std::int64_t h = 0; h < oh; ++h) {
                const std::int64_t h0 = h * stride[1] - pad[1];
                for (std::int64_t ww = 0; ww < ow; ++ww) {
                    const std::int64_t w0 = ww * stride[2] - pad[2];
                    T acc = bias ? (*bias)[oc] : T(0);
                    for (std::int64_t ic = 0; ic < ci; ++ic) {
                        for (std::int64_t dt = 0; dt < kt; ++dt) {
                            const std::int64_t ti = t0 + dt;
                            if (ti < 0 || ti >= it) continue;
                            for (std::int64_t dh = 0; dh < kh; ++dh) {
                                const std::int64_t hi = h0 + dh;
                                if (hi < 0 || hi >= ih) continue;
                                const T* prow = x.data() + ((ic * it + ti) * ih + hi) * iw;
                                const T* krow = w.data() + (((oc * ci + ic) * kt + dt) * kh + dh) * kw;
                                for (std::int64_t dw = 0; dw < kw; ++dw) {
                                    const std::int64_t wi = w0 + dw;
                                    if (wi < 0 || wi >= iw) continue;
                                    acc += prow[wi] * krow[dw];
                                }
                            }
                        }
                    }
                    y[((oc * ot + t) * oh + h) * ow + ww] = acc;
                }
            }
        }
    }
    return y;
}

// Gather-formulated adjoints: each grad element is accumulated by exactly one
// pass, in a fixed order.
template <typename T>
void conv3d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy,
                     std::array<std::int64_t, 3> stride, std::array<std::int64_t, 3> pad,
                     Tensor<T>& dx, Tensor<T>& dw_out, Tensor<T>* dbias) {
    const std::int64_t ci = x.extent(0), it = x.extent(1), ih = x.extent(2), iw = x.extent(3);
    const std::int64_t co = w.extent(0), kt = w.extent(2), kh = w.extent(3), kw = w.extent(4);
    const std::int64_t ot = dy.extent(1), oh = dy.extent(2), ow = dy.extent(3);

    dx = Tensor<T>(x.shape());
    // dL/dx[ic,ti,hi,wi] = sum over (oc, kernel offsets hitting that cell)
    for (std::int64_t ic = 0; ic < ci; ++ic) {
        for (std::int64_t ti = 0; ti < it; ++ti) {
            for (std::int64_t hi = 0; hi < ih; ++hi) {
                for (std::int64_t wi = 0; wi < iw; ++wi) {
                    T acc(0);
                    for (std::int64_t dt = 0; dt < kt; ++dt) {
                        const std::int64_t tnum = ti + pad[0] - dt;
                        if (tnum % stride[0] != 0) continue;
                        const std::int64_t t = tnum / stride[0];
                        if (t < 0 || t >= ot) continue;
                        for (std::int64_t dh = 0; dh < kh; ++dh) {
                            const std::int64_t hnum = hi + pad[1] - dh;
                            if (hnum % stride[1] != 0) continue;
                            const std::int64_t h = hnum / stride[1];
                            if (h < 0 || h >= oh) continue;
                            for (std::int64_t dw = 0; dw < kw; ++dw) {
                                const std::int64_t wnum = wi + pad[2] - dw;
                                if (wnum % stride[2] != 0) continue;
                                const std::int64_t wo = wnum / stride[2];
                                if (wo < 0 || wo >= ow) continue;
                                for (std::int64_t oc = 0; oc < co; ++oc) {
                                    acc += dy[((oc * ot + t) * oh + h) * ow + wo] *
                                           w[(((oc * ci + ic) * kt + dt) * kh + dh) * kw + dw];
                                }
                            }
                        }
                    }
                    dx[((ic * it + ti) * ih + hi) * iw + wi] = acc;
                }
            }
        }
    }

    // dL/dw[oc,ic,dt,dh,dw] = sum over output positions
    for (std::int64_t oc = 0; oc < co; ++oc) {
        for (std::int64_t ic = 0; ic < ci; ++ic) {
            for (std::int64_t dt = 0; dt < kt; ++dt) {
                for (std::int64_t dh = 0; dh < kh; ++dh) {
                    for (std::int64_t dw = 0; dw < kw; ++dw) {
                        T acc(0);
                        for (std::int64_t t = 0; t < ot; ++t) {
                            const std::int64_t ti = t * stride[0] - pad[0] + dt;
                            if (ti < 0 || ti >= it) continue;
                            for (std::int64_t h = 0; h < oh; ++h) {
                                const std::int64_t hi = h * stride[1] - pad[1] + dh;
                                if (hi < 0 || hi >= ih) continue;
                                for (std::int64_t wo = 0; wo < ow; ++wo) {
                                    const std::int64_t wi = wo * stride[2] - pad[2] + dw;
                                    if (wi < 0 || wi >= iw) continue;
                                    acc += dy[((oc * ot + t) * oh + h) * ow + wo] *
                                           x[((ic * it + ti) * ih + hi) * iw + wi];
                                }
                            }
                        }
                        dw_out[(((oc * ci + ic) * kt + dt) * kh + dh) * kw + dw] += acc;
                    }
                }
            }
        }
    }

    if (dbias) {
        for (std::int64_t oc = 0; oc < co; ++oc) {
            T acc(0);
            const T* p = dy.data() + oc * ot * oh * ow;
            for (std::int64_t i = 0; i < ot * oh * ow; ++i) acc += p[i];
            (*dbias)[oc] += acc;
        }
    }
}

// ---------------------------------------------------------------------------
// activations and losses

template <typename T>
T gelu_scalar(T x) {
    return T(0.5) * x * (T(1) + std::erf(x * T(0.70710678118654752440)));
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    Tensor<T> y(x.shape(), x.axes().c_str());
    for (std::int64_t i = 0; i < x.numel(); ++i) y[i] = gelu_scalar(x[i]);
    return y;
}

template <typename T>
Tensor<T> gelu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
    require_same_shape(x, dy, "gelu_backward");
    Tensor<T> dx(x.shape());
    const T inv_sqrt2 = T(0.70710678118654752440);
    const T inv_sqrt2pi = T(0.39894228040143267794);
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        const T v = x[i];
        const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
        const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
        dx[i] = dy[i] * (cdf + v * pdf);
    }
    return dx;
}

template <typename T>
T sigmoid_scalar(T x) {
    if (x >= T(0)) {
        const T e = std::exp(-x);
        return T(1) / (T(1) + e);
    }
    const T e = std::exp(x);
    return e / (T(1) + e);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    Tensor<T> y(x.shape(), x.axes().c_str());
    for (std::int64_t i = 0; i < x.numel(); ++i) y[i] = sigmoid_scalar(x[i]);
    return y;
}

template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& dy) {
    Tensor<T> dx(y.shape());
    for (std::int64_t i = 0; i < y.numel(); ++i) dx[i] = dy[i] * y[i] * (T(1) - y[i]);
    return dx;
}

enum class Reduction { Sum, Mean };

constexpr double kBceClamp = 1e-7;

// Summed negative log-likelihood over all cells (Mean divides by the count).
// Predictions are clamped to [1e-7, 1-1e-7] before the log.
template <typename T>
T bce(const Tensor<T>& pred, const Tensor<T>& target, Reduction red = Reduction::Sum) {
    require_same_shape(pred, target, "bce");
    const T lo = T(kBceClamp);
    const T hi = T(1) - T(kBceClamp);
    T total(0);
    for (std::int64_t i = 0; i < pred.numel(); ++i) {
        // branch form keeps NaN predictions NaN instead of clamping them
        T p = pred[i];
        if (p < lo) p = lo;
        else if (p > hi) p = hi;
        const T t = target[i];
        total -= t * std::log(p) + (T(1) - t) * std::log(T(1) - p);
    }
    if (red == Reduction::Mean) total /= T(static_cast<double>(pred.numel()));
    return total;
}

template <typename T>
Tensor<T> bce_backward(const Tensor<T>& pred, const Tensor<T>& target, Reduction red = Reduction::Sum,
                       T upstream = T(1)) {
    require_same_shape(pred, target, "bce_backward");
    const T lo = T(kBceClamp);
    const T hi = T(1) - T(kBceClamp);
    const T scale = red == Reduction::Mean ? upstream / T(static_cast<double>(pred.numel())) : upstream;
    Tensor<T> dp(pred.shape());
    for (std::int64_t i = 0; i < pred.numel(); ++i) {
        const T p = pred[i];
        if (p <= lo || p >= hi) {
            dp[i] = T(0);  // clamped region: flat
            continue;
        }
        dp[i] = scale * (-(target[i] / p) + (T(1) - target[i]) / (T(1) - p));
    }
    return dp;
}

// Seed gradient of summed clamp-free bce applied to a sigmoid output,
// evaluated in its algebraically simplified form d/dlogit = p - target.
// Chaining bce_backward through sigmoid_backward computes the same value but
// rounds p(1-p) to zero once the sigmoid saturates, freezing training; the
// simplified form keeps a restoring gradient there.
template <typename T>
Tensor<T> bce_sigmoid_backward(const Tensor<T>& pred, const Tensor<T>& target, T upstream = T(1)) {
    require_same_shape(pred, target, "bce_sigmoid_backward");
    Tensor<T> dlogits(pred.shape());
    for (std::int64_t i = 0; i < pred.numel(); ++i) {
        dlogits[i] = upstream * (pred[i] - target[i]);
    }
    return dlogits;
}

// ---------------------------------------------------------------------------
// nearest-neighbor upsampling by integer factors per axis

template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& x, const std::vector<std::int64_t>& factors) {
    if (static_cast<int>(factors.size()) != x.rank()) {
        throw DimensionError("upsample factors rank vs tensor " + shape_str(x.shape()));
    }
    for (auto f : factors) {
        if (f < 1) throw ValidationError("upsample factors must be positive integers");
    }
    std::vector<std::int64_t> out_shape(x.shape());
    for (std::size_t i = 0; i < out_shape.size(); ++i) out_shape[i] *= factors[i];
    Tensor<T> y(out_shape, x.axes().c_str());
    std::vector<std::int64_t> idx(out_shape.size(), 0);
    const std::int64_t n = y.numel();
    for (std::int64_t flat = 0; flat < n; ++flat) {
        std::int64_t rem = flat, src = 0;
        for (int d = 0; d < y.rank(); ++d) {
            std::int64_t stride = 1;
            for (int e = d + 1; e < y.rank(); ++e) stride *= out_shape[static_cast<std::size_t>(e)];
            const std::int64_t od = rem / stride;
            rem %= stride;
            src = src * x.extent(d) + od / factors[static_cast<std::size_t>(d)];
        }
        y[flat] = x[src];
    }
    return y;
}

template <typename T>
Tensor<T> upsample_nearest_backward(const Tensor<T>& dy, const std::vector<std::int64_t>& in_shape,
                                    const std::vector<std::int64_t>& factors) {
    Tensor<T> dx(in_shape);
    const std::int64_t n = dy.numel();
    for (std::int64_t flat = 0; flat < n; ++flat) {
        std::int64_t rem = flat, src = 0;
        for (int d = 0; d < dy.rank(); ++d) {
            std::int64_t stride = 1;
            for (int e = d + 1; e < dy.rank(); ++e) stride *= dy.extent(e);
            const std::int64_t od = rem / stride;
            rem %= stride;
            src = src * in_shape[static_cast<std::size_t>(d)] + od / factors[static_cast<std::size_t>(d)];
        }
        dx[src] += dy[flat];
    }
    return dx;
}

// ---------------------------------------------------------------------------
// depth-to-space: each cell of a [T, H, W, fh*fw*C] volume becomes an fh x fw
// spatial block of C-channel cells, row-major within the block

template <typename T>
Tensor<T> depth_to_space(const Tensor<T>& x, std::int64_t fh, std::int64_t fw) {
    if (x.rank() != 4) throw DimensionError("depth_to_space expects rank 4, got " + shape_str(x.shape()));
    if (fh < 1 || fw < 1) throw ValidationError("block factors must be positive integers");
    const std::int64_t t_n = x.extent(0), h = x.extent(1), w = x.extent(2), packed = x.extent(3);
    if (packed % (fh * fw) != 0) {
        throw DimensionError("channel extent " + std::to_string(packed) + " not divisible by block " +
                             std::to_string(fh) + "x" + std::to_string(fw));
    }
    const std::int64_t c = packed / (fh * fw);
    Tensor<T> y({t_n, h * fh, w * fw, c});
    for (std::int64_t t = 0; t < t_n; ++t) {
        for (std::int64_t r = 0; r < h; ++r) {
            for (std::int64_t col = 0; col < w; ++col) {
                const std::int64_t src = ((t * h + r) * w + col) * packed;
                for (std::int64_t dr = 0; dr < fh; ++dr) {
                    for (std::int64_t dc = 0; dc < fw; ++dc) {
                        const std::int64_t dst = ((t * h * fh + r * fh + dr) * w * fw + col * fw + dc) * c;
                        const std::int64_t slot = (dr * fw + dc) * c;
                        for (std::int64_t k = 0; k < c; ++k) y[dst + k] = x[src + slot + k];
                    }
                }
            }
        }
    }
    return y;
}

template <typename T>
Tensor<T> depth_to_space_backward(const Tensor<T>& dy, std::int64_t fh, std::int64_t fw) {
    if (dy.rank() != 4) throw DimensionError("depth_to_space expects rank 4, got " + shape_str(dy.shape()));
    const std::int64_t t_n = dy.extent(0), hf = dy.extent(1), wf = dy.extent(2), c = dy.extent(3);
    if (hf % fh != 0 || wf % fw != 0) {
        throw DimensionError("gradient extents " + shape_str(dy.shape()) + " not divisible by block " +
                             std::to_string(fh) + "x" + std::to_string(fw));
    }
    const std::int64_t h = hf / fh, w = wf / fw;
    Tensor<T> dx({t_n, h, w, fh * fw * c});
    for (std::int64_t t = 0; t < t_n; ++t) {
        for (std::int64_t r = 0; r < h; ++r) {
            for (std::int64_t col = 0; col < w; ++col) {
                const std::int64_t dst = ((t * h + r) * w + col) * fh * fw * c;
                for (std::int64_t dr = 0; dr < fh; ++dr) {
                    for (std::int64_t dc = 0; dc < fw; ++dc) {
                        const std::int64_t src = ((t * hf + r * fh + dr) * wf + col * fw + dc) * c;
                        const std::int64_t slot = (dr * fw + dc) * c;
                        for (std::int64_t k = 0; k < c; ++k) dx[dst + slot + k] = dy[src + k];
                    }
                }
            }
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// axis permutation (used around channels-first convolutions)

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& order) {
    if (static_cast<int>(order.size()) != x.rank()) {
        throw DimensionError("permute order rank vs tensor " + shape_str(x.shape()));
    }
    std::vector<std::int64_t> out_shape(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) out_shape[i] = x.extent(order[i]);
    Tensor<T> y(out_shape);
    std::vector<std::int64_t> in_strides(static_cast<std::size_t>(x.rank()), 1);
    for (int d = x.rank() - 2; d >= 0; --d) {
        in_strides[static_cast<std::size_t>(d)] = in_strides[static_cast<std::size_t>(d + 1)] * x.extent(d + 1);
    }
    const std::int64_t n = y.numel();
    for (std::int64_t flat = 0; flat < n; ++flat) {
        std::int64_t rem = flat, src = 0;
        for (int d = 0; d < y.rank(); ++d) {
            std::int64_t stride = 1;
            for (int e = d + 1; e < y.rank(); ++e) stride *= out_shape[static_cast<std::size_t>(e)];
            const std::int64_t od = rem / stride;
            rem %= stride;
            src += od * in_strides[static_cast<std::size_t>(order[static_cast<std::size_t>(d)])];
        }
        y[flat] = x[src];
    }
    return y;
}

inline std::vector<int> inverse_order(const std::vector<int>& order) {
    std::vector<int> inv(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) inv[static_cast<std::size_t>(order[i])] = static_cast<int>(i);
    return inv;
}

// ---------------------------------------------------------------------------
// concatenation along the last (channel) axis

template <typename T>
Tensor<T> concat_last(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != b.rank()) {
        throw DimensionError("concat rank mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    for (int d = 0; d + 1 < a.rank(); ++d) {
        if (a.extent(d) != b.extent(d)) {
            throw DimensionError("concat extent mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
        }
    }
    const std::int64_t ca = a.extent(a.rank() - 1);
    const std::int64_t cb = b.extent(b.rank() - 1);
    std::vector<std::int64_t> out_shape(a.shape());
    out_shape.back() = ca + cb;
    Tensor<T> y(out_shape);
    const std::int64_t rows = a.numel() / ca;
    for (std::int64_t r = 0; r < rows; ++r) {
        T* dst = y.data() + r * (ca + cb);
        const T* pa = a.data() + r * ca;
        const T* pb = b.data() + r * cb;
        for (std::int64_t i = 0; i < ca; ++i) dst[i] = pa[i];
        for (std::int64_t i = 0; i < cb; ++i) dst[ca + i] = pb[i];
    }
    return y;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_last(const Tensor<T>& x, std::int64_t ca) {
    const std::int64_t c = x.extent(x.rank() - 1);
    if (ca <= 0 || ca >= c) throw DimensionError("split point " + std::to_string(ca) + " outside " + shape_str(x.shape()));
    std::vector<std::int64_t> sa(x.shape()), sb(x.shape());
    sa.back() = ca;
    sb.back() = c - ca;
    Tensor<T> a(sa), b(sb);
    const std::int64_t rows = x.numel() / c;
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* src = x.data() + r * c;
        T* pa = a.data() + r * ca;
        T* pb = b.data() + r * (c - ca);
        for (std::int64_t i = 0; i < ca; ++i) pa[i] = src[i];
        for (std::int64_t i = 0; i < c - ca; ++i) pb[i] = src[ca + i];
    }
    return {std::move(a), std::move(b)};
}

}  // namespace radnet
