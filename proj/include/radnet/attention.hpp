#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "radnet/layers.hpp"
#include "radnet/window.hpp"

// Windowed multi-head attention over 3D volumes, in self- and cross-
// attention flavors, each with an optional cyclic displacement (the shifted
// variant masks token pairs that were not neighbors before the roll).
// Masked logits are forced to -1e30 so their softmax weights underflow to
// exactly zero. The self-attention layer keeps its K/V window projections
// around for a downstream cross-attention consumer, and its backward accepts
// the gradients that flowed into those exports.

namespace radnet {

constexpr double kMaskLogit = -1e30;

inline std::int64_t bias_table_len(std::array<std::int64_t, 3> window) {
    return (2 * window[0] - 1) * (2 * window[1] - 1) * (2 * window[2] - 1);
}

// [P,P] lookup from token pair (query, key) to the bias-table row for their
// relative 3D offset.
inline Tensor<std::int32_t> make_bias_index(std::array<std::int64_t, 3> window) {
    const std::int64_t p = window[0] * window[1] * window[2];
    Tensor<std::int32_t> index({p, p});
    auto coord = [&](std::int64_t i) {
        return std::array<std::int64_t, 3>{i / (window[1] * window[2]), (i / window[2]) % window[1],
                                           i % window[2]};
    };
    for (std::int64_t i = 0; i < p; ++i) {
        const auto ci = coord(i);
        for (std::int64_t j = 0; j < p; ++j) {
            const auto cj = coord(j);
            const std::int64_t dt = ci[0] - cj[0] + window[0] - 1;
            const std::int64_t dh = ci[1] - cj[1] + window[1] - 1;
            const std::int64_t dw = ci[2] - cj[2] + window[2] - 1;
            index[i * p + j] =
                static_cast<std::int32_t>((dt * (2 * window[1] - 1) + dh) * (2 * window[2] - 1) + dw);
        }
    }
    return index;
}

template <typename T>
struct AttendCache {
    Tensor<T> q, k, v;  // [N,P,C]
    Tensor<T> attn;     // [N,heads,P,P]
};

// Core attention over partitioned tokens. q,k,v are [N,P,C]; the layout
// supplies validity and region labels; bias_table may be null.
template <typename T>
Tensor<T> attend(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, const WindowLayout& L,
                 std::int64_t heads, const Tensor<T>* bias_table, const Tensor<std::int32_t>& bias_index,
                 AttendCache<T>* cache) {
    const std::int64_t n = L.n_windows, p = L.window_len, c = q.extent(2);
    if (c % heads != 0) {
        throw DimensionError("channel width " + std::to_string(c) + " not divisible by " +
                             std::to_string(heads) + " heads");
    }
    const std::int64_t hd = c / heads;
    const T scale = T(1.0 / std::sqrt(static_cast<double>(hd)));

    Tensor<T> out({n, p, c});
    if (cache) {
        cache->q = q;
        cache->k = k;
        cache->v = v;
        cache->attn = Tensor<T>({n, heads, p, p});
    }
    std::vector<T> logits(static_cast<std::size_t>(p) * static_cast<std::size_t>(p));
    for (std::int64_t w = 0; w < n; ++w) {
        const std::uint8_t* valid = L.valid.data() + w * p;
        const std::int32_t* region = L.region.data() + w * p;
        for (std::int64_t h = 0; h < heads; ++h) {
            const std::int64_t off = h * hd;
            for (std::int64_t i = 0; i < p; ++i) {
                const T* qi = q.data() + (w * p + i) * c + off;
                T* row = logits.data() + i * p;
                for (std::int64_t j = 0; j < p; ++j) {
                    if (!valid[j] || region[i] != region[j]) {
                        row[j] = T(kMaskLogit);
                        continue;
                    }
                    const T* kj = k.data() + (w * p + j) * c + off;
                    T acc(0);
                    for (std::int64_t d = 0; d < hd; ++d) acc += qi[d] * kj[d];
                    row[j] = acc * scale;
                    if (bias_table) row[j] += (*bias_table)[h * bias_table->extent(1) + bias_index[i * p + j]];
                }
                // row-wise softmax
                T mx = row[0];
                for (std::int64_t j = 1; j < p; ++j) mx = std::max(mx, row[j]);
                T sum(0);
                for (std::int64_t j = 0; j < p; ++j) {
                    row[j] = std::exp(row[j] - mx);
                    sum += row[j];
                }
                const T inv = T(1) / sum;
                T* oi = out.data() + (w * p + i) * c + off;
                for (std::int64_t j = 0; j < p; ++j) {
                    const T a = row[j] * inv;
                    if (cache) cache->attn[((w * heads + h) * p + i) * p + j] = a;
                    if (a != T(0)) {
                        const T* vj = v.data() + (w * p + j) * c + off;
                        for (std::int64_t d = 0; d < hd; ++d) oi[d] += a * vj[d];
                    }
                }
            }
        }
    }
    return out;
}

template <typename T>
void attend_backward(const Tensor<T>& dout, const AttendCache<T>& cache, const WindowLayout& L,
                     std::int64_t heads, Tensor<T>* dbias_table, const Tensor<std::int32_t>& bias_index,
                     Tensor<T>& dq, Tensor<T>& dk, Tensor<T>& dv) {
    const std::int64_t n = L.n_windows, p = L.window_len, c = cache.q.extent(2);
    const std::int64_t hd = c / heads;
    const T scale = T(1.0 / std::sqrt(static_cast<double>(hd)));

    dq = Tensor<T>(cache.q.shape());
    dk = Tensor<T>(cache.k.shape());
    dv = Tensor<T>(cache.v.shape());
    std::vector<T> dattn(static_cast<std::size_t>(p));
    std::vector<T> dlogits(static_cast<std::size_t>(p));
    for (std::int64_t w = 0; w < n; ++w) {
        for (std::int64_t h = 0; h < heads; ++h) {
            const std::int64_t off = h * hd;
            for (std::int64_t i = 0; i < p; ++i) {
                const T* doi = dout.data() + (w * p + i) * c + off;
                const T* arow = cache.attn.data() + ((w * heads + h) * p + i) * p;
                // dA and dV
                for (std::int64_t j = 0; j < p; ++j) {
                    const T a = arow[j];
                    const T* vj = cache.v.data() + (w * p + j) * c + off;
                    T acc(0);
                    for (std::int64_t d = 0; d < hd; ++d) acc += doi[d] * vj[d];
                    dattn[static_cast<std::size_t>(j)] = acc;
                    if (a != T(0)) {
                        T* dvj = dv.data() + (w * p + j) * c + off;
                        for (std::int64_t d = 0; d < hd; ++d) dvj[d] += a * doi[d];
                    }
                }
                // softmax adjoint; masked entries have a == 0 so dlogit == 0
                T dot(0);
                for (std::int64_t j = 0; j < p; ++j) dot += dattn[static_cast<std::size_t>(j)] * arow[j];
                for (std::int64_t j = 0; j < p; ++j) {
                    dlogits[static_cast<std::size_t>(j)] = (dattn[static_cast<std::size_t>(j)] - dot) * arow[j];
                }
                if (dbias_table) {
                    for (std::int64_t j = 0; j < p; ++j) {
                        const T g = dlogits[static_cast<std::size_t>(j)];
                        if (g != T(0)) {
                            (*dbias_table)[h * dbias_table->extent(1) + bias_index[i * p + j]] += g;
                        }
                    }
                }
                const T* qi = cache.q.data() + (w * p + i) * c + off;
                T* dqi = dq.data() + (w * p + i) * c + off;
                for (std::int64_t j = 0; j < p; ++j) {
                    const T g = dlogits[static_cast<std::size_t>(j)] * scale;
                    if (g == T(0)) continue;
                    const T* kj = cache.k.data() + (w * p + j) * c + off;
                    T* dkj = dk.data() + (w * p + j) * c + off;
                    for (std::int64_t d = 0; d < hd; ++d) {
                        dqi[d] += g * kj[d];
                        dkj[d] += g * qi[d];
                    }
                }
            }
        }
    }
}

template <typename T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "add_inplace");
    for (std::int64_t i = 0; i < a.numel(); ++i) a[i] += b[i];
}

// Window self-attention over a volume, plain (displacement 0) or shifted.
// Input is expected pre-normalized by the caller. Exports the partitioned
// K/V projections for cross-attention reuse.
template <typename T>
class WindowSelfAttention {
  public:
    WindowSelfAttention() = default;
    WindowSelfAttention(std::int64_t channels, std::int64_t heads, std::array<std::int64_t, 3> window,
                        std::array<std::int64_t, 3> disp, bool with_bias_table, const std::string& name)
        : wq_(channels, channels, name + ".q"),
          wk_(channels, channels, name + ".k"),
          wv_(channels, channels, name + ".v"),
          wo_(channels, channels, name + ".out"),
          heads_(heads),
          window_(window),
          disp_(disp),
          bias_index_(make_bias_index(window)) {
        if (channels % heads != 0) {
            throw DimensionError("channel width " + std::to_string(channels) + " not divisible by " +
                                 std::to_string(heads) + " heads");
        }
        if (with_bias_table) {
            bias_table_ = Parameter<T>({heads, bias_table_len(window)}, name + ".pos_bias");
        }
        has_bias_table_ = with_bias_table;
    }

    void init(Rng& rng, double stddev = 0.02) {
        wq_.init(rng, stddev);
        wk_.init(rng, stddev);
        wv_.init(rng, stddev);
        wo_.init(rng, stddev);
        if (has_bias_table_) init_trunc_normal(bias_table_, rng, stddev);
    }

    Tensor<T> forward(const Tensor<T>& x, bool training = true) {
        if (x.rank() != 4) throw DimensionError("attention expects [T,H,W,C], got " + shape_str(x.shape()));
        layout_ = make_window_layout({x.extent(0), x.extent(1), x.extent(2)}, window_, disp_);
        Tensor<T> qv = wq_.forward(x, training);
        Tensor<T> kv = wk_.forward(x, training);
        Tensor<T> vv = wv_.forward(x, training);
        Tensor<T> q_tok = window_partition(qv, layout_);
        k_export_ = window_partition(kv, layout_);
        v_export_ = window_partition(vv, layout_);
        Tensor<T> out_tok = attend(q_tok, k_export_, v_export_, layout_, heads_,
                                   has_bias_table_ ? &bias_table_.value : nullptr, bias_index_,
                                   training ? &cache_ : nullptr);
        Tensor<T> merged = window_merge(out_tok, layout_);
        return wo_.forward(merged, training);
    }

    // dk_export/dv_export: gradients that reached the exported K/V tokens
    // through a downstream consumer (same [N,P,C] layout), or null.
    Tensor<T> backward(const Tensor<T>& dy, const Tensor<T>* dk_export = nullptr,
                       const Tensor<T>* dv_export = nullptr) {
        Tensor<T> dmerged = wo_.backward(dy);
        Tensor<T> dout_tok = window_partition(dmerged, layout_);
        Tensor<T> dq_tok, dk_tok, dv_tok;
        attend_backward(dout_tok, cache_, layout_, heads_, has_bias_table_ ? &bias_table_.grad : nullptr,
                        bias_index_, dq_tok, dk_tok, dv_tok);
        if (dk_export) add_inplace(dk_tok, *dk_export);
        if (dv_export) add_inplace(dv_tok, *dv_export);
        Tensor<T> dqv = window_merge(dq_tok, layout_);
        Tensor<T> dkv = window_merge(dk_tok, layout_);
        Tensor<T> dvv = window_merge(dv_tok, layout_);
        Tensor<T> dx = wq_.backward(dqv);
        add_inplace(dx, wk_.backward(dkv));
        add_inplace(dx, wv_.backward(dvv));
        return dx;
    }

    void collect(std::vector<Parameter<T>*>& out) {
        wq_.collect(out);
        wk_.collect(out);
        wv_.collect(out);
        wo_.collect(out);
        if (has_bias_table_) out.push_back(&bias_table_);
    }

    const Tensor<T>& k_export() const { return k_export_; }
    const Tensor<T>& v_export() const { return v_export_; }
    const WindowLayout& layout() const { return layout_; }
    const Tensor<T>& attention_weights() const { return cache_.attn; }
    std::array<std::int64_t, 3> displacement() const { return disp_; }

    Linear<T> wq_, wk_, wv_, wo_;
    Parameter<T> bias_table_;

  private:
    std::int64_t heads_ = 1;
    std::array<std::int64_t, 3> window_{4, 4, 4};
    std::array<std::int64_t, 3> disp_{0, 0, 0};
    bool has_bias_table_ = false;
    Tensor<std::int32_t> bias_index_;
    WindowLayout layout_;
    AttendCache<T> cache_;
    Tensor<T> k_export_, v_export_;
};

// Cross-attention: queries from the local volume, keys/values taken from an
// exported [N,P,C] token set produced at the same resolution and
// displacement.
template <typename T>
class WindowCrossAttention {
  public:
    WindowCrossAttention() = default;
    WindowCrossAttention(std::int64_t channels, std::int64_t heads, std::array<std::int64_t, 3> window,
                         std::array<std::int64_t, 3> disp, bool with_bias_table, const std::string& name)
        : wq_(channels, channels, name + ".q"),
          wo_(channels, channels, name + ".out"),
          heads_(heads),
          window_(window),
          disp_(disp),
          bias_index_(make_bias_index(window)) {
        if (channels % heads != 0) {
            throw DimensionError("channel width " + std::to_string(channels) + " not divisible by " +
                                 std::to_string(heads) + " heads");
        }
        if (with_bias_table) {
            bias_table_ = Parameter<T>({heads, bias_table_len(window)}, name + ".pos_bias");
        }
        has_bias_table_ = with_bias_table;
    }

    void init(Rng& rng, double stddev = 0.02) {
        wq_.init(rng, stddev);
        wo_.init(rng, stddev);
        if (has_bias_table_) init_trunc_normal(bias_table_, rng, stddev);
    }

    Tensor<T> forward(const Tensor<T>& q_src, const Tensor<T>& k_prev, const Tensor<T>& v_prev,
                      bool training = true) {
        if (q_src.rank() != 4) {
            throw DimensionError("cross attention expects [T,H,W,C], got " + shape_str(q_src.shape()));
        }
        layout_ = make_window_layout({q_src.extent(0), q_src.extent(1), q_src.extent(2)}, window_, disp_);
        const std::vector<std::int64_t> want{layout_.n_windows, layout_.window_len, q_src.extent(3)};
        if (k_prev.shape() != want || v_prev.shape() != want) {
            throw DimensionError("cross attention resolution mismatch: queries need K/V tokens " +
                                 shape_str(want) + ", got " + shape_str(k_prev.shape()));
        }
        Tensor<T> qv = wq_.forward(q_src, training);
        Tensor<T> q_tok = window_partition(qv, layout_);
        Tensor<T> out_tok = attend(q_tok, k_prev, v_prev, layout_, heads_,
                                   has_bias_table_ ? &bias_table_.value : nullptr, bias_index_,
                                   training ? &cache_ : nullptr);
        Tensor<T> merged = window_merge(out_tok, layout_);
        return wo_.forward(merged, training);
    }

    // Returns the q_src gradient; accumulates the K/V token gradients into
    // dk_prev / dv_prev for the caller to route back to the exporter.
    Tensor<T> backward(const Tensor<T>& dy, Tensor<T>& dk_prev, Tensor<T>& dv_prev) {
        Tensor<T> dmerged = wo_.backward(dy);
        Tensor<T> dout_tok = window_partition(dmerged, layout_);
        Tensor<T> dq_tok, dk_tok, dv_tok;
        attend_backward(dout_tok, cache_, layout_, heads_, has_bias_table_ ? &bias_table_.grad : nullptr,
                        bias_index_, dq_tok, dk_tok, dv_tok);
        if (dk_prev.numel() == 0) {
            dk_prev = dk_tok;
        } else {
            add_inplace(dk_prev, dk_tok);
        }
        if (dv_prev.numel() == 0) {
            dv_prev = dv_tok;
        } else {
            add_inplace(dv_prev, dv_tok);
        }
        Tensor<T> dqv = window_merge(dq_tok, layout_);
        return wq_.backward(dqv);
    }

    void collect(std::vector<Parameter<T>*>& out) {
        wq_.collect(out);
        wo_.collect(out);
        if (has_bias_table_) out.push_back(&bias_table_);
    }

    const WindowLayout& layout() const { return layout_; }
    const Tensor<T>& attention_weights() const { return cache_.attn; }

    Linear<T> wq_, wo_;
    Parameter<T> bias_table_;

  private:
    std::int64_t heads_ = 1;
    std::array<std::int64_t, 3> window_{4, 4, 4};
    std::array<std::int64_t, 3> disp_{0, 0, 0};
    bool has_bias_table_ = false;
    Tensor<std::int32_t> bias_index_;
    WindowLayout layout_;
    AttendCache<T> cache_;
};

}  // namespace radnet
