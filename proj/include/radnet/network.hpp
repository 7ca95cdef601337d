#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "radnet/adam.hpp"
#include "radnet/attention.hpp"
#include "radnet/class_mask.hpp"
#include "radnet/error.hpp"
#include "radnet/layers.hpp"
#include "radnet/ops.hpp"
#include "radnet/shift.hpp"
#include "radnet/tensor.hpp"
#include "radnet/window.hpp"

namespace radnet {

struct ModelConfig {
    std::int64_t in_channels = 2;
    std::int64_t classes = 3;
    std::vector<std::int64_t> stage_widths = {32, 64, 128};
    std::vector<std::int64_t> stage_heads = {2, 4, 8};
    std::array<std::int64_t, 3> window = {4, 4, 4};
    std::array<std::int64_t, 3> displacement = {2, 2, 2};
    std::array<std::int64_t, 3> embed_kernel = {9, 5, 5};
    std::array<std::int64_t, 3> embed_stride = {1, 2, 2};
    std::string shift_pattern = "C";
    double channel_shift_ratio = 0.25;
    std::int64_t ffn_ratio = 4;
    bool relative_bias = true;
    bool cmam_share_qk = false;
    bool cmam_scale_logits = false;
    std::int64_t cmam_max_similarity_bytes = 1ll << 30;
    double gamma_init = 0.5;
    double beta_init = 0.0;
    double init_stddev = 0.02;

    std::int64_t stages() const { return static_cast<std::int64_t>(stage_widths.size()); }
};

inline void validate_model_config(const ModelConfig& cfg) {
    if (cfg.stage_widths.empty()) throw ValidationError("model needs at least one stage");
    if (cfg.stage_heads.size() != cfg.stage_widths.size()) {
        throw ValidationError("stage head count " + std::to_string(cfg.stage_heads.size()) +
                              " does not match stage count " + std::to_string(cfg.stage_widths.size()));
    }
    for (std::size_t s = 0; s < cfg.stage_widths.size(); ++s) {
        if (cfg.stage_widths[s] <= 0) throw ValidationError("stage width must be positive");
        if (cfg.stage_heads[s] <= 0) throw ValidationError("stage head count must be positive");
        if (cfg.stage_widths[s] % cfg.stage_heads[s] != 0) {
            throw ValidationError("stage width " + std::to_string(cfg.stage_widths[s]) +
                                  " not divisible by head count " + std::to_string(cfg.stage_heads[s]));
        }
        if (s + 1 < cfg.stage_widths.size() && cfg.stage_widths[s + 1] != 2 * cfg.stage_widths[s]) {
            throw ValidationError("stage widths must double: " + std::to_string(cfg.stage_widths[s]) +
                                  " -> " + std::to_string(cfg.stage_widths[s + 1]));
        }
    }
    if (cfg.in_channels <= 0) throw ValidationError("input channel count must be positive");
    if (cfg.classes <= 0) throw ValidationError("class count must be positive");
    for (int a = 0; a < 3; ++a) {
        if (cfg.window[a] <= 0) throw ValidationError("window extents must be positive");
        if (cfg.displacement[a] < 0 || cfg.displacement[a] >= cfg.window[a]) {
            throw ValidationError("displacement must lie in [0, window)");
        }
        if (cfg.embed_kernel[a] <= 0 || cfg.embed_stride[a] <= 0) {
            throw ValidationError("embedding kernel and stride must be positive");
        }
    }
    if (cfg.channel_shift_ratio < 0.0 || cfg.channel_shift_ratio > 0.5) {
        throw ValidationError("channel shift ratio must lie in [0, 0.5]");
    }
    if (cfg.ffn_ratio <= 0) throw ValidationError("ffn expansion ratio must be positive");
}

// Extents of the feature volume [T,H,W] entering each stage, given the raw
// input extents.  Pure arithmetic; lets callers reason about geometry without
// instantiating a model.
inline std::vector<std::array<std::int64_t, 4>> stage_geometry(const ModelConfig& cfg,
                                                               std::int64_t t, std::int64_t h, std::int64_t w) {
    validate_model_config(cfg);
    std::array<std::int64_t, 3> e = {t, h, w};
    std::vector<std::array<std::int64_t, 4>> out;
    for (std::int64_t s = 0; s < cfg.stages(); ++s) {
        for (int a = 0; a < 3; ++a) {
            const std::int64_t k = cfg.embed_kernel[static_cast<std::size_t>(a)];
            const std::int64_t st = cfg.embed_stride[static_cast<std::size_t>(a)];
            e[static_cast<std::size_t>(a)] =
                conv_out_extent(e[static_cast<std::size_t>(a)], k, st, (k - 1) / 2);
        }
        out.push_back({e[0], e[1], e[2], cfg.stage_widths[static_cast<std::size_t>(s)]});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Encoder stage: a temporally shifted window-attention block followed by a
// spatially displaced one.
//
// Block one normalizes, mixes a slice of channels across adjacent frames,
// runs window self-attention, and adds the un-normalized input back.  Block
// two normalizes, rolls whole patches forward in time, attends within
// displaced windows, rolls the result back, and again adds the block-one
// output.  Each attention exports its key/value tokens for the decoder.

template <typename T>
class EncoderBlockPair {
public:
    EncoderBlockPair(const std::string& name, std::int64_t channels, std::int64_t heads,
                     std::array<std::int64_t, 3> window, std::array<std::int64_t, 3> displacement,
                     const ShiftPattern& pattern, double shift_ratio, std::int64_t ffn_ratio, bool relative_bias)
        : pattern_(pattern),
          shift_ratio_(shift_ratio),
          norm_a1_(channels, name + ".a.norm1"),
          attn_a_(channels, heads, window, {0, 0, 0}, relative_bias, name + ".a.attn"),
          norm_a2_(channels, name + ".a.norm2"),
          ffn_a_(channels, ffn_ratio, name + ".a.ffn"),
          norm_b1_(channels, name + ".b.norm1"),
          attn_b_(channels, heads, window, displacement, relative_bias, name + ".b.attn"),
          norm_b2_(channels, name + ".b.norm2"),
          ffn_b_(channels, ffn_ratio, name + ".b.ffn") {}

    Tensor<T> forward(const Tensor<T>& x, bool training) {
        training_ = training;
        // temporally shifted block
        Tensor<T> n1 = norm_a1_.forward(x, training);
        Tensor<T> cs = channel_shift(n1, shift_ratio_);
        Tensor<T> a = attn_a_.forward(cs, training);
        Tensor<T> xa(x.shape());
        for (std::int64_t i = 0; i < x.numel(); ++i) xa[i] = a[i] + x[i];
        Tensor<T> f = ffn_a_.forward(norm_a2_.forward(xa, training), training);
        Tensor<T> xb(x.shape());
        for (std::int64_t i = 0; i < x.numel(); ++i) xb[i] = f[i] + xa[i];

        // spatially displaced block
        Tensor<T> n3 = norm_b1_.forward(xb, training);
        Tensor<T> ps = patch_shift(n3, pattern_);
        Tensor<T> s = attn_b_.forward(ps, training);
        Tensor<T> sb = patch_shift_back(s, pattern_);
        Tensor<T> xc(x.shape());
        for (std::int64_t i = 0; i < x.numel(); ++i) xc[i] = sb[i] + xb[i];
        Tensor<T> f2 = ffn_b_.forward(norm_b2_.forward(xc, training), training);
        Tensor<T> y(x.shape());
        for (std::int64_t i = 0; i < x.numel(); ++i) y[i] = f2[i] + xc[i];
        return y;
    }

    // dk1/dv1/dk2/dv2 are gradients flowing back into the exported key/value
    // tokens; pass nullptr when the export is unused downstream.
    Tensor<T> backward(const Tensor<T>& dy,
                       const Tensor<T>* dk1, const Tensor<T>* dv1,
                       const Tensor<T>* dk2, const Tensor<T>* dv2) {
        if (!training_) throw ValidationError("encoder block backward requires a training-mode forward");
        // spatially displaced block
        Tensor<T> dn4 = ffn_b_.backward(dy);
        Tensor<T> dxc = norm_b2_.backward(dn4);
        for (std::int64_t i = 0; i < dxc.numel(); ++i) dxc[i] += dy[i];
        Tensor<T> ds = patch_shift(dxc, pattern_);
        Tensor<T> dps = attn_b_.backward(ds, dk2, dv2);
        Tensor<T> dn3 = patch_shift_back(dps, pattern_);
        Tensor<T> dxb = norm_b1_.backward(dn3);
        for (std::int64_t i = 0; i < dxb.numel(); ++i) dxb[i] += dxc[i];

        // temporally shifted block
        Tensor<T> dn2 = ffn_a_.backward(dxb);
        Tensor<T> dxa = norm_a2_.backward(dn2);
        for (std::int64_t i = 0; i < dxa.numel(); ++i) dxa[i] += dxb[i];
        Tensor<T> dcs = attn_a_.backward(dxa, dk1, dv1);
        Tensor<T> dn1 = channel_shift_backward(dcs, shift_ratio_);
        Tensor<T> dx = norm_a1_.backward(dn1);
        for (std::int64_t i = 0; i < dx.numel(); ++i) dx[i] += dxa[i];
        return dx;
    }

    const Tensor<T>& k1() const { return attn_a_.k_export(); }
    const Tensor<T>& v1() const { return attn_a_.v_export(); }
    const Tensor<T>& k2() const { return attn_b_.k_export(); }
    const Tensor<T>& v2() const { return attn_b_.v_export(); }
    const WindowLayout& layout1() const { return attn_a_.layout(); }
    const WindowLayout& layout2() const { return attn_b_.layout(); }

    void collect(std::vector<Parameter<T>*>& out) {
        norm_a1_.collect(out);
        attn_a_.collect(out);
        norm_a2_.collect(out);
        ffn_a_.collect(out);
        norm_b1_.collect(out);
        attn_b_.collect(out);
        norm_b2_.collect(out);
        ffn_b_.collect(out);
    }

    void init(Rng& rng, double stddev) {
        attn_a_.init(rng, stddev);
        ffn_a_.init(rng, stddev);
        attn_b_.init(rng, stddev);
        ffn_b_.init(rng, stddev);
    }

private:
    ShiftPattern pattern_;
    double shift_ratio_;
    bool training_ = false;
    LayerNorm<T> norm_a1_;
    WindowSelfAttention<T> attn_a_;
    LayerNorm<T> norm_a2_;
    Ffn<T> ffn_a_;
    LayerNorm<T> norm_b1_;
    WindowSelfAttention<T> attn_b_;
    LayerNorm<T> norm_b2_;
    Ffn<T> ffn_b_;
};

// ---------------------------------------------------------------------------
// Decoder block: self-attention and cross-attention over the same normalized
// input, blended by a learned scalar gate, then a feed-forward refinement.
// The gate is stored raw and clamped to [0,1] at use; gradient passes only
// while the raw value sits inside the clamp range.

template <typename T>
class DecoderBlock {
public:
    DecoderBlock(const std::string& name, std::int64_t channels, std::int64_t heads,
                 std::array<std::int64_t, 3> window, std::array<std::int64_t, 3> displacement,
                 std::int64_t ffn_ratio, bool relative_bias, double gamma_init)
        : norm_attn_(channels, name + ".norm_attn"),
          self_(channels, heads, window, displacement, relative_bias, name + ".self"),
          cross_(channels, heads, window, displacement, relative_bias, name + ".cross"),
          gate_({1}, name + ".gate"),
          norm_ffn_(channels, name + ".norm_ffn"),
          ffn_(channels, ffn_ratio, name + ".ffn") {
        gate_.value[0] = static_cast<T>(gamma_init);
    }

    Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& k_prev, const Tensor<T>& v_prev, bool training) {
        training_ = training;
        Tensor<T> n = norm_attn_.forward(x, training);
        Tensor<T> sa = self_.forward(n, training);
        Tensor<T> ca = cross_.forward(n, k_prev, v_prev, training);
        sa_out_ = Tensor<T>(x.shape());
        ca_out_ = Tensor<T>(x.shape());
        for (std::int64_t i = 0; i < x.numel(); ++i) {
            sa_out_[i] = sa[i] + x[i];
            ca_out_[i] = ca[i] + x[i];
        }
        const T g = gamma();
        Tensor<T> fused(x.shape());
        if (g == T(0)) {
            fused = sa_out_;
        } else if (g == T(1)) {
            fused = ca_out_;
        } else {
            for (std::int64_t i = 0; i < x.numel(); ++i) {
                fused[i] = g * ca_out_[i] + (T(1) - g) * sa_out_[i];
            }
        }
        Tensor<T> f = ffn_.forward(norm_ffn_.forward(fused, training), training);
        Tensor<T> y(x.shape());
        for (std::int64_t i = 0; i < x.numel(); ++i) y[i] = f[i] + fused[i];
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy, Tensor<T>& dk_prev, Tensor<T>& dv_prev) {
        if (!training_) throw ValidationError("decoder block backward requires a training-mode forward");
        Tensor<T> dn_ffn = ffn_.backward(dy);
        Tensor<T> dfused = norm_ffn_.backward(dn_ffn);
        for (std::int64_t i = 0; i < dfused.numel(); ++i) dfused[i] += dy[i];

        const T raw = gate_.value[0];
        const T g = gamma();
        if (raw >= T(0) && raw <= T(1)) {
            T acc = T(0);
            for (std::int64_t i = 0; i < dfused.numel(); ++i) acc += dfused[i] * (ca_out_[i] - sa_out_[i]);
            gate_.grad[0] += acc;
        }
        Tensor<T> dsa(dfused.shape());
        Tensor<T> dca(dfused.shape());
        for (std::int64_t i = 0; i < dfused.numel(); ++i) {
            dsa[i] = (T(1) - g) * dfused[i];
            dca[i] = g * dfused[i];
        }

        Tensor<T> dn = self_.backward(dsa, nullptr, nullptr);
        Tensor<T> dn_cross = cross_.backward(dca, dk_prev, dv_prev);
        for (std::int64_t i = 0; i < dn.numel(); ++i) dn[i] += dn_cross[i];
        Tensor<T> dx = norm_attn_.backward(dn);
        for (std::int64_t i = 0; i < dx.numel(); ++i) dx[i] += dsa[i] + dca[i];
        return dx;
    }

    T gamma() const {
        const T raw = gate_.value[0];
        if (raw < T(0)) return T(0);
        if (raw > T(1)) return T(1);
        return raw;
    }

    Parameter<T>& gate() { return gate_; }

    void collect(std::vector<Parameter<T>*>& out) {
        norm_attn_.collect(out);
        self_.collect(out);
        cross_.collect(out);
        out.push_back(&gate_);
        norm_ffn_.collect(out);
        ffn_.collect(out);
    }

    void init(Rng& rng, double stddev) {
        self_.init(rng, stddev);
        cross_.init(rng, stddev);
        ffn_.init(rng, stddev);
    }

private:
    bool training_ = false;
    LayerNorm<T> norm_attn_;
    WindowSelfAttention<T> self_;
    WindowCrossAttention<T> cross_;
    Parameter<T> gate_;
    LayerNorm<T> norm_ffn_;
    Ffn<T> ffn_;
    Tensor<T> sa_out_;
    Tensor<T> ca_out_;
};

// ---------------------------------------------------------------------------
// Full network: strided conv embedding, encoder stages with class-mask
// refinement between attention and downsampling, a decoder that walks back up
// the pyramid fusing exported keys/values and skip features, and an auxiliary
// head that turns the per-stage class priors into a second confidence map.

template <typename T>
struct LossParts {
    T total = T(0);
    T main = T(0);
    T aux = T(0);
};

template <typename T>
class Network {
public:
    explicit Network(const ModelConfig& cfg) : cfg_(cfg) {
        validate_model_config(cfg_);
        const std::size_t stages = cfg_.stage_widths.size();
        std::array<std::int64_t, 3> pad = {(cfg_.embed_kernel[0] - 1) / 2,
                                           (cfg_.embed_kernel[1] - 1) / 2,
                                           (cfg_.embed_kernel[2] - 1) / 2};
        embed_ = std::make_unique<Conv3dLayer<T>>(cfg_.in_channels, cfg_.stage_widths[0],
                                                  cfg_.embed_kernel, cfg_.embed_stride, pad, "embed");
        const ShiftPattern pattern = make_pattern(cfg_.shift_pattern);
        ClassMaskOptions mask_opt;
        mask_opt.ffn_ratio = cfg_.ffn_ratio;
        mask_opt.share_qk = cfg_.cmam_share_qk;
        mask_opt.scale_logits = cfg_.cmam_scale_logits;
        mask_opt.max_similarity_bytes = cfg_.cmam_max_similarity_bytes;
        mask_opt.beta_init = cfg_.beta_init;
        for (std::size_t s = 0; s < stages; ++s) {
            const std::string tag = "enc" + std::to_string(s + 1);
            const std::int64_t width = cfg_.stage_widths[s];
            encoder_.push_back(std::make_unique<EncoderBlockPair<T>>(
                tag, width, cfg_.stage_heads[s], cfg_.window, cfg_.displacement, pattern,
                cfg_.channel_shift_ratio, cfg_.ffn_ratio, cfg_.relative_bias));
            masks_.push_back(std::make_unique<ClassMaskAttention<T>>(width, cfg_.classes, mask_opt, tag + ".mask"));
            if (s + 1 < stages) {
                down_.push_back(std::make_unique<Conv3dLayer<T>>(
                    width, cfg_.stage_widths[s + 1], cfg_.embed_kernel, cfg_.embed_stride, pad,
                    "down" + std::to_string(s + 1)));
            }
        }
        // decoder walks stages-2 .. 0; a single-stage model decodes in place
        // at the bottleneck with stage-1 exports and no skip fusion
        const std::array<std::int64_t, 3> no_disp = {0, 0, 0};
        if (stages == 1) {
            dec_stages_.push_back(DecoderStage{});
            DecoderStage& d = dec_stages_.back();
            d.stage = 0;
            d.b1 = std::make_unique<DecoderBlock<T>>("dec1.b1", cfg_.stage_widths[0], cfg_.stage_heads[0],
                                                     cfg_.window, no_disp, cfg_.ffn_ratio,
                                                     cfg_.relative_bias, cfg_.gamma_init);
            d.b2 = std::make_unique<DecoderBlock<T>>("dec1.b2", cfg_.stage_widths[0], cfg_.stage_heads[0],
                                                     cfg_.window, cfg_.displacement, cfg_.ffn_ratio,
                                                     cfg_.relative_bias, cfg_.gamma_init);
        } else {
            for (std::size_t s = stages - 1; s-- > 0;) {
                dec_stages_.push_back(DecoderStage{});
                DecoderStage& d = dec_stages_.back();
                d.stage = static_cast<std::int64_t>(s);
                const std::string tag = "dec" + std::to_string(s + 1);
                const std::int64_t width = cfg_.stage_widths[s];
                d.up_proj = std::make_unique<Linear<T>>(cfg_.stage_widths[s + 1], width, tag + ".up");
                d.skip_reduce = std::make_unique<Linear<T>>(2 * width, width, tag + ".skip");
                d.b1 = std::make_unique<DecoderBlock<T>>(tag + ".b1", width, cfg_.stage_heads[s],
                                                         cfg_.window, no_disp, cfg_.ffn_ratio,
                                                         cfg_.relative_bias, cfg_.gamma_init);
                d.b2 = std::make_unique<DecoderBlock<T>>(tag + ".b2", width, cfg_.stage_heads[s],
                                                         cfg_.window, cfg_.displacement, cfg_.ffn_ratio,
                                                         cfg_.relative_bias, cfg_.gamma_init);
            }
        }
        // expanding head: every stage-1 cell emits a stride_h x stride_w block
        // of class logits, so neighbouring output cells carry distinct values
        head_ = std::make_unique<Linear<T>>(
            cfg_.stage_widths[0], cfg_.embed_stride[1] * cfg_.embed_stride[2] * cfg_.classes, "head");
        aux_head_ = std::make_unique<Linear<T>>(cfg_.classes, cfg_.classes, "aux_head");
    }

    void init(Rng& rng) {
        embed_->init(rng, cfg_.init_stddev);
        for (std::size_t s = 0; s < encoder_.size(); ++s) {
            encoder_[s]->init(rng, cfg_.init_stddev);
            masks_[s]->init(rng, cfg_.init_stddev);
            if (s < down_.size()) down_[s]->init(rng, cfg_.init_stddev);
        }
        for (DecoderStage& d : dec_stages_) {
            if (d.up_proj) d.up_proj->init(rng, cfg_.init_stddev);
            if (d.skip_reduce) d.skip_reduce->init(rng, cfg_.init_stddev);
            d.b1->init(rng, cfg_.init_stddev);
            d.b2->init(rng, cfg_.init_stddev);
        }
        head_->init(rng, cfg_.init_stddev);
        aux_head_->init(rng, cfg_.init_stddev);
    }

    // x: [in_channels, T, H, W].  Returns the confidence map [T', H, W, classes]
    // where T' is the embedded frame count and H, W match the raw input.
    struct Outputs {
        Tensor<T> conf;
        Tensor<T> prior;
    };

    Outputs forward(const Tensor<T>& x, bool training) {
        Tensor<T> bottleneck = encode(x, training);
        Outputs out;
        out.conf = decode_main(bottleneck, training);
        out.prior = decode_aux(training);
        return out;
    }

    Tensor<T> infer(const Tensor<T>& x) {
        Tensor<T> bottleneck = encode(x, false);
        return decode_main(bottleneck, false);
    }

    LossParts<T> loss(const Outputs& out, const Tensor<T>& gt, double alpha) const {
        LossParts<T> parts;
        parts.main = bce(out.conf, gt);
        parts.aux = bce(out.prior, gt);
        parts.total = parts.main + static_cast<T>(alpha) * parts.aux;
        return parts;
    }

    // Seeds both confidence heads with binary cross-entropy gradients and
    // walks the whole graph backwards, accumulating parameter gradients.
    void backward(const Outputs& out, const Tensor<T>& gt, double alpha) {
        Tensor<T> dconf_logits = bce_sigmoid_backward(out.conf, gt);
        std::vector<Tensor<T>> dpriors = backward_aux(out.prior, gt, alpha);
        Tensor<T> dbottleneck = backward_main(dconf_logits);
        backward_encoder(dbottleneck, dpriors);
    }

    LossParts<T> train_step(const Tensor<T>& x, const Tensor<T>& gt, double alpha, Adam<T>& opt,
                            std::int64_t step) {
        Outputs out = forward(x, true);
        LossParts<T> parts = loss(out, gt, alpha);
        if (!std::isfinite(static_cast<double>(parts.total))) {
            throw NumericError("non-finite loss at step " + std::to_string(step) +
                               ": total=" + std::to_string(static_cast<double>(parts.total)) +
                               " main=" + std::to_string(static_cast<double>(parts.main)) +
                               " aux=" + std::to_string(static_cast<double>(parts.aux)));
        }
        for (Parameter<T>* p : params()) p->zero_grad();
        backward(out, gt, alpha);
        opt.step();
        return parts;
    }

    std::vector<Parameter<T>*> params() {
        std::vector<Parameter<T>*> out;
        embed_->collect(out);
        for (std::size_t s = 0; s < encoder_.size(); ++s) {
            encoder_[s]->collect(out);
            masks_[s]->collect(out);
            if (s < down_.size()) down_[s]->collect(out);
        }
        for (DecoderStage& d : dec_stages_) {
            if (d.up_proj) d.up_proj->collect(out);
            if (d.skip_reduce) d.skip_reduce->collect(out);
            d.b1->collect(out);
            d.b2->collect(out);
        }
        head_->collect(out);
        aux_head_->collect(out);
        return out;
    }

    const ModelConfig& config() const { return cfg_; }
    std::int64_t aux_eval_count() const { return aux_eval_count_; }
    std::int64_t stages() const { return cfg_.stages(); }

    const std::vector<Tensor<T>>& k1_taps() const { return k1_; }
    const std::vector<Tensor<T>>& v1_taps() const { return v1_; }
    const std::vector<Tensor<T>>& k2_taps() const { return k2_; }
    const std::vector<Tensor<T>>& v2_taps() const { return v2_; }
    const std::vector<Tensor<T>>& priors() const { return priors_; }
    const std::vector<Tensor<T>>& skips() const { return skips_; }
    const Tensor<T>& aux_sum() const { return aux_sum_; }
    DecoderBlock<T>& decoder_block(std::size_t stage, int which) {
        return which == 0 ? *dec_stages_.at(stage).b1 : *dec_stages_.at(stage).b2;
    }
    std::size_t decoder_stage_count() const { return dec_stages_.size(); }

private:
    struct DecoderStage {
        std::int64_t stage = 0;
        std::unique_ptr<Linear<T>> up_proj;
        std::unique_ptr<Linear<T>> skip_reduce;
        std::unique_ptr<DecoderBlock<T>> b1;
        std::unique_ptr<DecoderBlock<T>> b2;
    };

    static Tensor<T> to_channels_last(const Tensor<T>& x) { return permute(x, {1, 2, 3, 0}); }
    static Tensor<T> to_channels_first(const Tensor<T>& x) { return permute(x, {3, 0, 1, 2}); }

    Tensor<T> encode(const Tensor<T>& x, bool training) {
        if (x.rank() != 4 || x.extent(0) != cfg_.in_channels) {
            throw DimensionError("expected input [" + std::to_string(cfg_.in_channels) +
                                 ",T,H,W], got " + shape_str(x.shape()));
        }
        const std::size_t stages = encoder_.size();
        k1_.assign(stages, Tensor<T>());
        v1_.assign(stages, Tensor<T>());
        k2_.assign(stages, Tensor<T>());
        v2_.assign(stages, Tensor<T>());
        priors_.assign(stages, Tensor<T>());
        skips_.assign(stages, Tensor<T>());

        Tensor<T> vol = to_channels_last(embed_->forward(x, training));
        Tensor<T> enhanced;
        for (std::size_t s = 0; s < stages; ++s) {
            Tensor<T> feat = encoder_[s]->forward(vol, training);
            k1_[s] = encoder_[s]->k1();
            v1_[s] = encoder_[s]->v1();
            k2_[s] = encoder_[s]->k2();
            v2_[s] = encoder_[s]->v2();
            ClassMaskOutput<T> mask = masks_[s]->forward(feat, training);
            priors_[s] = std::move(mask.prior);
            enhanced = std::move(mask.enhanced);
            skips_[s] = enhanced;
            if (s + 1 < stages) {
                vol = to_channels_last(down_[s]->forward(to_channels_first(enhanced), training));
            }
        }
        return enhanced;
    }

    Tensor<T> decode_main(const Tensor<T>& bottleneck, bool training) {
        dec_up_shapes_.clear();
        Tensor<T> x = bottleneck;
        for (DecoderStage& d : dec_stages_) {
            const std::size_t s = static_cast<std::size_t>(d.stage);
            if (d.up_proj) {
                Tensor<T> proj = d.up_proj->forward(x, training);
                dec_up_shapes_.push_back(proj.shape());
                Tensor<T> up = upsample_nearest(proj, {1, 2, 2, 1});
                Tensor<T> cat = concat_last(up, skips_[s]);
                x = d.skip_reduce->forward(cat, training);
            }
            x = d.b1->forward(x, k1_[s], v1_[s], training);
            x = d.b2->forward(x, k2_[s], v2_[s], training);
        }
        Tensor<T> packed = head_->forward(x, training);
        Tensor<T> logits = depth_to_space(packed, cfg_.embed_stride[1], cfg_.embed_stride[2]);
        return sigmoid(logits);
    }

    Tensor<T> decode_aux(bool training) {
        ++aux_eval_count_;
        const std::size_t stages = priors_.size();
        for (std::size_t s = 0; s < stages; ++s) {
            if (priors_[s].extent(3) != cfg_.classes) {
                throw DimensionError("stage prior class extent " + std::to_string(priors_[s].extent(3)) +
                                     " does not match " + std::to_string(cfg_.classes));
            }
        }
        Tensor<T> sum = priors_[0];
        std::int64_t factor = 1;
        for (std::size_t s = 1; s < stages; ++s) {
            factor *= 2;
            Tensor<T> up = upsample_nearest(priors_[s], {1, factor, factor, 1});
            require_same_shape(sum, up, "summed class priors");
            for (std::int64_t i = 0; i < sum.numel(); ++i) sum[i] += up[i];
        }
        aux_sum_ = sum;
        Tensor<T> up = upsample_nearest(sum, {1, cfg_.embed_stride[1], cfg_.embed_stride[2], 1});
        Tensor<T> logits = aux_head_->forward(up, training);
        return sigmoid(logits);
    }

    // Gradients of the auxiliary loss w.r.t. each stage prior; empty tensors
    // when alpha is zero so the class-mask backward skips the prior path.
    std::vector<Tensor<T>> backward_aux(const Tensor<T>& prior_hat, const Tensor<T>& gt, double alpha) {
        std::vector<Tensor<T>> dpriors(priors_.size());
        if (alpha == 0.0) return dpriors;
        Tensor<T> dlogits = bce_sigmoid_backward(prior_hat, gt, static_cast<T>(alpha));
        Tensor<T> dup = aux_head_->backward(dlogits);
        Tensor<T> dsum = upsample_nearest_backward(dup, aux_sum_.shape(),
                                                   {1, cfg_.embed_stride[1], cfg_.embed_stride[2], 1});
        dpriors[0] = dsum;
        std::int64_t factor = 1;
        for (std::size_t s = 1; s < priors_.size(); ++s) {
            factor *= 2;
            dpriors[s] = upsample_nearest_backward(dsum, priors_[s].shape(), {1, factor, factor, 1});
        }
        return dpriors;
    }

    // Walks the decoder backwards; returns the bottleneck gradient and fills
    // the per-stage export/skip gradients consumed by the encoder backward.
    Tensor<T> backward_main(const Tensor<T>& dconf_logits) {
        const std::size_t stages = encoder_.size();
        dk1_.assign(stages, Tensor<T>());
        dv1_.assign(stages, Tensor<T>());
        dk2_.assign(stages, Tensor<T>());
        dv2_.assign(stages, Tensor<T>());
        dskips_.assign(stages, Tensor<T>());

        Tensor<T> dpacked = depth_to_space_backward(dconf_logits, cfg_.embed_stride[1], cfg_.embed_stride[2]);
        Tensor<T> dx = head_->backward(dpacked);
        std::size_t up_idx = dec_up_shapes_.size();
        for (std::size_t i = dec_stages_.size(); i-- > 0;) {
            DecoderStage& d = dec_stages_[i];
            const std::size_t s = static_cast<std::size_t>(d.stage);
            dx = d.b2->backward(dx, dk2_[s], dv2_[s]);
            dx = d.b1->backward(dx, dk1_[s], dv1_[s]);
            if (d.up_proj) {
                Tensor<T> dcat = d.skip_reduce->backward(dx);
                auto [dup_part, dskip] = split_last(dcat, cfg_.stage_widths[s]);
                dskips_[s] = std::move(dskip);
                --up_idx;
                Tensor<T> dproj = upsample_nearest_backward(dup_part, dec_up_shapes_[up_idx], {1, 2, 2, 1});
                dx = d.up_proj->backward(dproj);
            }
        }
        return dx;
    }

    void backward_encoder(const Tensor<T>& dbottleneck, const std::vector<Tensor<T>>& dpriors) {
        const std::size_t stages = encoder_.size();
        Tensor<T> denh;
        for (std::size_t s = stages; s-- > 0;) {
            if (s + 1 == stages) {
                denh = dbottleneck;
            } else {
                denh = to_channels_last(down_[s]->backward(to_channels_first(denh)));
            }
            if (dskips_[s].numel() > 0) {
                require_same_shape(denh, dskips_[s], "stage skip gradient");
                for (std::int64_t i = 0; i < denh.numel(); ++i) denh[i] += dskips_[s][i];
            }
            Tensor<T> dfeat = masks_[s]->backward(denh, dpriors[s]);
            const Tensor<T>* dk1 = dk1_[s].numel() > 0 ? &dk1_[s] : nullptr;
            const Tensor<T>* dv1 = dv1_[s].numel() > 0 ? &dv1_[s] : nullptr;
            const Tensor<T>* dk2 = dk2_[s].numel() > 0 ? &dk2_[s] : nullptr;
            const Tensor<T>* dv2 = dv2_[s].numel() > 0 ? &dv2_[s] : nullptr;
            denh = encoder_[s]->backward(dfeat, dk1, dv1, dk2, dv2);
        }
        embed_->backward(to_channels_first(denh));
    }

    ModelConfig cfg_;
    std::unique_ptr<Conv3dLayer<T>> embed_;
    std::vector<std::unique_ptr<EncoderBlockPair<T>>> encoder_;
    std::vector<std::unique_ptr<ClassMaskAttention<T>>> masks_;
    std::vector<std::unique_ptr<Conv3dLayer<T>>> down_;
    std::vector<DecoderStage> dec_stages_;
    std::unique_ptr<Linear<T>> head_;
    std::unique_ptr<Linear<T>> aux_head_;

    std::vector<Tensor<T>> k1_, v1_, k2_, v2_, priors_, skips_;
    std::vector<Tensor<T>> dk1_, dv1_, dk2_, dv2_, dskips_;
    std::vector<std::vector<std::int64_t>> dec_up_shapes_;
    Tensor<T> aux_sum_;
    std::int64_t aux_eval_count_ = 0;
};

}  // namespace radnet
