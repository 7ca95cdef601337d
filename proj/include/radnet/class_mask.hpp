#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "radnet/layers.hpp"

// Class-space global attention. Features are projected into a
// class-dimensional space for queries and keys, a (THW)x(THW) similarity is
// softmaxed row-wise and applied to channel-preserving values, and the
// result re-enters the feature stream through a learnable scalar beta
// (initialized to zero, so the module starts as a residual identity) followed
// by a norm + feed-forward refinement. The raw query projection doubles as a
// per-class prior map for auxiliary supervision.

namespace radnet {

template <typename T>
struct ClassMaskOutput {
    Tensor<T> enhanced;  // [T,H,W,C]
    Tensor<T> prior;     // [T,H,W,class], pre-sigmoid
};

struct ClassMaskOptions {
    std::int64_t ffn_ratio = 4;
    bool share_qk = false;       // reuse the query embedding for keys
    bool scale_logits = false;   // multiply QK^T by 1/sqrt(class)
    std::int64_t max_similarity_bytes = 1ll << 30;
    double beta_init = 0.0;      // 0 starts the module as a residual identity
};

template <typename T>
class ClassMaskAttention {
  public:
    ClassMaskAttention() = default;
    static std::int64_t checked_classes(std::int64_t classes, std::int64_t channels) {
        if (classes < 1) throw ValidationError("class count must be at least 1");
        if (classes > channels) {
            throw ValidationError("class count " + std::to_string(classes) +
                                  " exceeds channel width " + std::to_string(channels));
        }
        return classes;
    }

    ClassMaskAttention(std::int64_t channels, std::int64_t classes, const ClassMaskOptions& opt,
                       const std::string& name)
        : embed_q_(channels, checked_classes(classes, channels), name + ".embed_q"),
          embed_k_(channels, classes, name + ".embed_k"),
          embed_v_(channels, channels, name + ".embed_v"),
          beta_({1}, name + ".beta"),
          norm_(channels, name + ".norm"),
          ffn_(channels, opt.ffn_ratio, name + ".ffn"),
          classes_(classes),
          opt_(opt) {}

    void init(Rng& rng, double stddev = 0.02) {
        embed_q_.init(rng, stddev);
        embed_k_.init(rng, stddev);
        embed_v_.init(rng, stddev);
        norm_.gain.value.fill(T(1));
        ffn_.init(rng, stddev);
        beta_.value[0] = static_cast<T>(opt_.beta_init);
    }

    // Bytes the row-stochastic similarity matrix would occupy for a volume.
    static std::int64_t similarity_bytes(std::int64_t thw) { return thw * thw * static_cast<std::int64_t>(sizeof(T)); }

    ClassMaskOutput<T> forward(const Tensor<T>& x, bool training = true) {
        if (x.rank() != 4) throw DimensionError("class attention expects [T,H,W,C], got " + shape_str(x.shape()));
        const std::int64_t thw = x.extent(0) * x.extent(1) * x.extent(2);
        const std::int64_t c = x.extent(3);
        const std::int64_t need = similarity_bytes(thw);
        if (need > opt_.max_similarity_bytes) {
            throw CapacityError("similarity matrix for " + std::to_string(thw) + " cells needs " +
                                std::to_string(need) + " bytes, over the configured limit of " +
                                std::to_string(opt_.max_similarity_bytes) + " bytes");
        }

        Tensor<T> prior4 = embed_q_.forward(x, training);
        Tensor<T> q = reshape(prior4, {thw, classes_});
        Tensor<T> k = opt_.share_qk ? q : reshape(embed_k_.forward(x, training), {thw, classes_});
        Tensor<T> v = reshape(embed_v_.forward(x, training), {thw, c});

        Tensor<T> logits = matmul_nt(q, k);
        if (opt_.scale_logits) {
            const T s = T(1.0 / std::sqrt(static_cast<double>(classes_)));
            for (std::int64_t i = 0; i < logits.numel(); ++i) logits[i] *= s;
        }
        Tensor<T> s = softmax(logits, 1);
        Tensor<T> mix2 = matmul(s, v);

        Tensor<T> xres(x.shape());
        const T beta = beta_.value[0];
        for (std::int64_t i = 0; i < x.numel(); ++i) xres[i] = beta * mix2[i] + x[i];

        Tensor<T> refined = ffn_.forward(norm_.forward(xres, training), training);
        ClassMaskOutput<T> out;
        out.enhanced = Tensor<T>(x.shape());
        for (std::int64_t i = 0; i < x.numel(); ++i) out.enhanced[i] = refined[i] + xres[i];
        out.prior = std::move(prior4);

        if (training) {
            q_ = std::move(q);
            k_shared_ = opt_.share_qk;
            if (!k_shared_) k_ = std::move(k);
            v_ = std::move(v);
            s_ = std::move(s);
            mix_ = std::move(mix2);
        }
        last_s_rows_ = thw;
        return out;
    }

    // denhanced: [T,H,W,C]; dprior: [T,H,W,class] or empty (no aux branch).
    Tensor<T> backward(const Tensor<T>& denhanced, const Tensor<T>& dprior) {
        const std::int64_t thw = last_s_rows_;
        const std::int64_t c = denhanced.extent(3);

        Tensor<T> dnormed = ffn_.backward(denhanced);
        Tensor<T> dxres = norm_.backward(dnormed);
        add_elems(dxres, denhanced);

        // xres = beta*mix + x
        const T beta = beta_.value[0];
        T dbeta(0);
        for (std::int64_t i = 0; i < dxres.numel(); ++i) dbeta += dxres[i] * mix_[i];
        beta_.grad[0] += dbeta;

        Tensor<T> dmix({thw, c});
        for (std::int64_t i = 0; i < dmix.numel(); ++i) dmix[i] = beta * dxres[i];

        const Tensor<T>& k = k_shared_ ? q_ : k_;
        Tensor<T> ds = matmul_nt(dmix, v_);
        Tensor<T> dv = matmul_tn(s_, dmix);
        Tensor<T> dlogits = softmax_backward(s_, ds, 1);
        if (opt_.scale_logits) {
            const T sc = T(1.0 / std::sqrt(static_cast<double>(classes_)));
            for (std::int64_t i = 0; i < dlogits.numel(); ++i) dlogits[i] *= sc;
        }
        Tensor<T> dq = matmul(dlogits, k);
        Tensor<T> dk = matmul_tn(dlogits, q_);

        if (dprior.numel() > 0) {
            for (std::int64_t i = 0; i < dq.numel(); ++i) dq[i] += dprior[i];
        }

        Tensor<T> dx(denhanced.shape());
        add_elems(dx, dxres);  // direct residual into x

        const auto vol_cls = std::vector<std::int64_t>{denhanced.extent(0), denhanced.extent(1),
                                                       denhanced.extent(2), classes_};
        if (k_shared_) {
            Tensor<T> dq_total = dq;
            add_elems(dq_total, dk);
            add_elems(dx, embed_q_.backward(reshape(dq_total, vol_cls)));
        } else {
            add_elems(dx, embed_q_.backward(reshape(dq, vol_cls)));
            add_elems(dx, embed_k_.backward(reshape(dk, vol_cls)));
        }
        add_elems(dx, embed_v_.backward(reshape(dv, denhanced.shape())));
        return dx;
    }

    void collect(std::vector<Parameter<T>*>& out) {
        embed_q_.collect(out);
        if (!opt_.share_qk) embed_k_.collect(out);
        embed_v_.collect(out);
        out.push_back(&beta_);
        norm_.collect(out);
        ffn_.collect(out);
    }

    const Tensor<T>& similarity() const { return s_; }
    const Tensor<T>& mixed_values() const { return mix_; }
    Parameter<T>& beta() { return beta_; }
    std::int64_t classes() const { return classes_; }

    Linear<T> embed_q_, embed_k_, embed_v_;
    Parameter<T> beta_;
    LayerNorm<T> norm_;
    Ffn<T> ffn_;

  private:
    static void add_elems(Tensor<T>& a, const Tensor<T>& b) {
        for (std::int64_t i = 0; i < a.numel(); ++i) a[i] += b[i];
    }

    std::int64_t classes_ = 1;
    ClassMaskOptions opt_;
    Tensor<T> q_, k_, v_, s_, mix_;
    bool k_shared_ = false;
    std::int64_t last_s_rows_ = 0;
};

}  // namespace radnet
