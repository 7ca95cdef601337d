// End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
// the process exits nonzero if any criterion fails. Run with a list of
// criterion numbers to execute a subset, e.g. `acceptance 1 5 9`.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "radnet/adam.hpp"
#include "radnet/attention.hpp"
#include "radnet/class_mask.hpp"
#include "radnet/commands.hpp"
#include "radnet/config.hpp"
#include "radnet/container.hpp"
#include "radnet/detect.hpp"
#include "radnet/gradcheck.hpp"
#include "radnet/layers.hpp"
#include "radnet/network.hpp"
#include "radnet/opcount.hpp"
#include "radnet/scene.hpp"
#include "radnet/shift.hpp"
#include "radnet/trainer.hpp"

using namespace radnet;

namespace {

// ---------------------------------------------------------------- helpers

struct Failure {
    std::vector<std::string> details;
    bool ok = true;
    void expect(bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            if (details.size() < 12) details.push_back(what);
        }
    }
};

template <typename T>
bool bits_equal(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) return false;
    return std::memcmp(a.data(), b.data(), static_cast<std::size_t>(a.numel()) * sizeof(T)) == 0;
}

std::string file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

struct TempDir {
    std::string path;
    explicit TempDir(const char* tag) : path(std::string("acceptance_") + tag) {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string sub(const std::string& name) const { return path + "/" + name; }
};

template <typename T>
Tensor<T> random_tensor(Rng& rng, const std::vector<std::int64_t>& shape, double lo = -1.0,
                        double hi = 1.0) {
    Tensor<T> t(shape);
    fill_random_uniform(t, rng, lo, hi);
    return t;
}

// ------------------------------------------------- 1. shift correctness

bool criterion_shift(Failure& f) {
    Rng rng(101);
    for (int trial = 0; trial < 200; ++trial) {
        const std::int64_t T = 1 + rng.uniform_int(6);
        const std::int64_t H = 1 + rng.uniform_int(9);
        const std::int64_t W = 1 + rng.uniform_int(9);
        const std::int64_t C = 1 + rng.uniform_int(12);

        ShiftPattern pattern;
        const int kind = static_cast<int>(rng.uniform_int(4));
        if (kind < 3) {
            pattern = make_pattern(std::string(1, static_cast<char>('A' + kind)));
        } else {
            const int k = 1 + static_cast<int>(rng.uniform_int(3));
            std::vector<int> cell(static_cast<std::size_t>(k) * static_cast<std::size_t>(k));
            for (int& v : cell) v = static_cast<int>(rng.uniform_int(-4, 4));
            cell[static_cast<std::size_t>(rng.uniform_int(k * k))] = 0;
            pattern = make_custom_pattern(cell, k);
        }

        Tensor<float> x = random_tensor<float>(rng, {T, H, W, C});
        x[0] = -0.0f;
        if (x.numel() > 1) x[1] = std::numeric_limits<float>::denorm_min();

        const Tensor<float> shifted = patch_shift(x, pattern);
        const Tensor<float> back = patch_shift_back(shifted, pattern);
        if (!bits_equal(back, x)) {
            f.expect(false, "round trip not bitwise at trial " + std::to_string(trial) + " shape " +
                                shape_str(x.shape()) + " pattern " + pattern.name);
            return f.ok;
        }

        std::vector<std::uint32_t> mx(static_cast<std::size_t>(x.numel()));
        std::vector<std::uint32_t> ms(mx.size());
        for (std::int64_t i = 0; i < x.numel(); ++i) {
            mx[static_cast<std::size_t>(i)] = std::bit_cast<std::uint32_t>(x[i]);
            ms[static_cast<std::size_t>(i)] = std::bit_cast<std::uint32_t>(shifted[i]);
        }
        std::sort(mx.begin(), mx.end());
        std::sort(ms.begin(), ms.end());
        f.expect(mx == ms, "value multiset changed at trial " + std::to_string(trial));

        Tensor<CountingScalar> xc({T, H, W, C});
        for (std::int64_t i = 0; i < xc.numel(); ++i) xc[i] = CountingScalar(x[i]);
        OpCounter::reset();
        Tensor<CountingScalar> sc = patch_shift(xc, pattern);
        Tensor<CountingScalar> bc = patch_shift_back(sc, pattern);
        Tensor<CountingScalar> cc = channel_shift(xc, rng.uniform(0.0, 1.0));
        (void)bc;
        (void)cc;
        f.expect(OpCounter::total() == 0, "shift performed " + std::to_string(OpCounter::total()) +
                                              " arithmetic ops at trial " + std::to_string(trial));
        if (!f.ok) return false;
    }
    return f.ok;
}

// --------------------------------------------- 2. attention invariants

bool criterion_attention(Failure& f) {
    Rng rng(202);
    for (int trial = 0; trial < 50; ++trial) {
        const std::int64_t heads = std::int64_t(1) << rng.uniform_int(3);  // 1, 2, 4
        const std::int64_t hd = 2 * (1 + rng.uniform_int(3));              // 2, 4, 6
        const std::int64_t C = heads * hd;
        std::array<std::int64_t, 3> window{1 + rng.uniform_int(3), 1 + rng.uniform_int(3),
                                           1 + rng.uniform_int(3)};
        const std::int64_t T = window[0] * (1 + rng.uniform_int(2));
        const std::int64_t H = window[1] * (1 + rng.uniform_int(2));
        const std::int64_t W = window[2] * (1 + rng.uniform_int(2));
        const bool bias = trial % 2 == 0;
        std::array<std::int64_t, 3> disp{rng.uniform_int(window[0]), rng.uniform_int(window[1]),
                                         rng.uniform_int(window[2])};

        Tensor<double> x = random_tensor<double>(rng, {T, H, W, C});

        // (a) attention rows are stochastic, shifted or not
        WindowSelfAttention<double> attn(C, heads, window, disp, bias, "attn");
        attn.init(rng, 0.5);
        attn.forward(x, true);
        const Tensor<double>& weights = attn.attention_weights();
        const std::int64_t p = weights.extent(2);
        for (std::int64_t row = 0; row < weights.numel() / p; ++row) {
            double sum = 0.0;
            for (std::int64_t j = 0; j < p; ++j) sum += weights[row * p + j];
            if (std::abs(sum - 1.0) > 1e-6) {
                f.expect(false, "attention row sums to " + std::to_string(sum) + " at trial " +
                                    std::to_string(trial));
                return false;
            }
        }

        // (b) a plain-window output token only depends on its own window
        WindowSelfAttention<double> plain(C, heads, window, {0, 0, 0}, bias, "plain");
        plain.init(rng, 0.5);
        const Tensor<double> y0 = plain.forward(x, false);
        Tensor<double> x2 = x;
        for (std::int64_t t = 0; t < T; ++t) {
            for (std::int64_t h = 0; h < H; ++h) {
                for (std::int64_t w = 0; w < W; ++w) {
                    const bool inside = t < window[0] && h < window[1] && w < window[2];
                    if (inside) continue;
                    for (std::int64_t c = 0; c < C; ++c) {
                        x2[((t * H + h) * W + w) * C + c] += rng.uniform(0.5, 1.5);
                    }
                }
            }
        }
        const Tensor<double> y2 = plain.forward(x2, false);
        for (std::int64_t t = 0; t < window[0]; ++t) {
            for (std::int64_t h = 0; h < window[1]; ++h) {
                for (std::int64_t w = 0; w < window[2]; ++w) {
                    for (std::int64_t c = 0; c < C; ++c) {
                        const std::int64_t at = ((t * H + h) * W + w) * C + c;
                        if (std::bit_cast<std::uint64_t>(y0[at]) != std::bit_cast<std::uint64_t>(y2[at])) {
                            f.expect(false, "outside perturbation leaked into a window at trial " +
                                                std::to_string(trial));
                            return false;
                        }
                    }
                }
            }
        }

        // (c) the shifted variant configured with zero displacement matches
        // the plain one bitwise, and its layout masks nothing
        WindowSelfAttention<double> zero_shift(C, heads, window, {0, 0, 0}, bias, "zs");
        zero_shift.wq_.weight.value = plain.wq_.weight.value;
        zero_shift.wq_.bias.value = plain.wq_.bias.value;
        zero_shift.wk_.weight.value = plain.wk_.weight.value;
        zero_shift.wk_.bias.value = plain.wk_.bias.value;
        zero_shift.wv_.weight.value = plain.wv_.weight.value;
        zero_shift.wv_.bias.value = plain.wv_.bias.value;
        zero_shift.wo_.weight.value = plain.wo_.weight.value;
        zero_shift.wo_.bias.value = plain.wo_.bias.value;
        if (bias) zero_shift.bias_table_.value = plain.bias_table_.value;
        const Tensor<double> yz = zero_shift.forward(x, false);
        f.expect(bits_equal(yz, y0), "zero displacement output differs from plain at trial " +
                                         std::to_string(trial));
        const WindowLayout& L = zero_shift.layout();
        bool degenerate = true;
        for (std::int64_t w = 0; w < L.n_windows && degenerate; ++w) {
            const std::int32_t first = L.region[static_cast<std::size_t>(w * L.window_len)];
            for (std::int64_t j = 0; j < L.window_len; ++j) {
                if (!L.valid[static_cast<std::size_t>(w * L.window_len + j)] ||
                    L.region[static_cast<std::size_t>(w * L.window_len + j)] != first) {
                    degenerate = false;
                    break;
                }
            }
        }
        f.expect(degenerate, "zero-displacement layout still masks tokens at trial " +
                                 std::to_string(trial));
        if (!f.ok) return false;
    }
    return f.ok;
}

// ------------------------------------------------------------- 3. cmam

bool criterion_class_mask(Failure& f) {
    Rng rng(303);

    // beta = 0: the enhanced stream must ignore every embedding weight
    {
        ClassMaskAttention<double> m(8, 3, {}, "cm");
        m.init(rng, 0.5);
        Tensor<double> x = random_tensor<double>(rng, {2, 4, 4, 8});
        const auto out1 = m.forward(x, false);
        Rng other(999);
        m.embed_q_.init(other, 0.8);
        m.embed_k_.init(other, 0.8);
        m.embed_v_.init(other, 0.8);
        fill_random_uniform(m.embed_q_.bias.value, other, -0.5, 0.5);
        const auto out2 = m.forward(x, false);
        f.expect(bits_equal(out1.enhanced, out2.enhanced),
                 "beta=0 enhanced output changed under embedding reinit");
        f.expect(!bits_equal(out1.prior, out2.prior), "prior ignored the embedding reinit");
    }

    // similarity rows are stochastic
    {
        ClassMaskAttention<double> m(8, 3, {}, "cm");
        m.init(rng, 0.5);
        Tensor<double> x = random_tensor<double>(rng, {2, 5, 3, 8});
        m.forward(x, true);
        const Tensor<double>& s = m.similarity();
        const std::int64_t n = s.extent(0);
        for (std::int64_t i = 0; i < n; ++i) {
            double sum = 0.0;
            for (std::int64_t j = 0; j < n; ++j) sum += s[i * n + j];
            f.expect(std::abs(sum - 1.0) <= 1e-6,
                     "similarity row " + std::to_string(i) + " sums to " + std::to_string(sum));
        }
    }

    // 2x2 grid, from-scratch oracle for every stage of the module
    {
        const std::int64_t cells = 4, C = 2, classes = 2;
        ClassMaskOptions mo;
        mo.beta_init = 0.7;
        mo.ffn_ratio = 2;
        ClassMaskAttention<double> m(C, classes, mo, "cm");
        m.init(rng, 0.6);
        fill_random_uniform(m.embed_q_.bias.value, rng, -0.3, 0.3);
        fill_random_uniform(m.embed_k_.bias.value, rng, -0.3, 0.3);
        fill_random_uniform(m.embed_v_.bias.value, rng, -0.3, 0.3);
        fill_random_uniform(m.norm_.gain.value, rng, 0.5, 1.5);
        fill_random_uniform(m.norm_.bias.value, rng, -0.3, 0.3);
        Tensor<double> x = random_tensor<double>(rng, {1, 2, 2, C});
        const auto out = m.forward(x, true);

        auto lin = [&](const Linear<double>& l, const double* in, double* res, std::int64_t n_in,
                       std::int64_t n_out) {
            for (std::int64_t j = 0; j < n_out; ++j) {
                res[j] = l.bias.value[j];
                for (std::int64_t k = 0; k < n_in; ++k) res[j] += in[k] * l.weight.value[k * n_out + j];
            }
        };
        std::vector<double> q(cells * classes), k(cells * classes), v(cells * C);
        for (std::int64_t i = 0; i < cells; ++i) {
            lin(m.embed_q_, x.data() + i * C, q.data() + i * classes, C, classes);
            lin(m.embed_k_, x.data() + i * C, k.data() + i * classes, C, classes);
            lin(m.embed_v_, x.data() + i * C, v.data() + i * C, C, C);
        }
        std::vector<double> s(cells * cells), mix(cells * C), xres(cells * C);
        for (std::int64_t i = 0; i < cells; ++i) {
            double mx = -1e300;
            std::vector<double> logits(cells);
            for (std::int64_t j = 0; j < cells; ++j) {
                double acc = 0.0;
                for (std::int64_t d = 0; d < classes; ++d) acc += q[i * classes + d] * k[j * classes + d];
                logits[static_cast<std::size_t>(j)] = acc;
                mx = std::max(mx, acc);
            }
            double denom = 0.0;
            for (std::int64_t j = 0; j < cells; ++j) denom += std::exp(logits[static_cast<std::size_t>(j)] - mx);
            for (std::int64_t j = 0; j < cells; ++j) {
                s[i * cells + j] = std::exp(logits[static_cast<std::size_t>(j)] - mx) / denom;
            }
            for (std::int64_t d = 0; d < C; ++d) {
                double acc = 0.0;
                for (std::int64_t j = 0; j < cells; ++j) acc += s[i * cells + j] * v[j * C + d];
                mix[i * C + d] = acc;
                xres[i * C + d] = 0.7 * acc + x[i * C + d];
            }
        }
        std::vector<double> enhanced(cells * C);
        for (std::int64_t i = 0; i < cells; ++i) {
            // layer norm over channels
            double mean = 0.0;
            for (std::int64_t d = 0; d < C; ++d) mean += xres[i * C + d];
            mean /= static_cast<double>(C);
            double var = 0.0;
            for (std::int64_t d = 0; d < C; ++d) {
                const double dd = xres[i * C + d] - mean;
                var += dd * dd;
            }
            var /= static_cast<double>(C);
            const double inv = 1.0 / std::sqrt(var + 1e-5);
            std::vector<double> normed(C);
            for (std::int64_t d = 0; d < C; ++d) {
                normed[static_cast<std::size_t>(d)] =
                    m.norm_.gain.value[d] * ((xres[i * C + d] - mean) * inv) + m.norm_.bias.value[d];
            }
            // ffn: expand, exact gelu, project
            const std::int64_t hidden = C * mo.ffn_ratio;
            std::vector<double> h(hidden), a(hidden), refined(C);
            lin(m.ffn_.expand(), normed.data(), h.data(), C, hidden);
            for (std::int64_t d = 0; d < hidden; ++d) {
                const double val = h[static_cast<std::size_t>(d)];
                a[static_cast<std::size_t>(d)] = 0.5 * val * (1.0 + std::erf(val * 0.70710678118654752440));
            }
            lin(m.ffn_.project(), a.data(), refined.data(), hidden, C);
            for (std::int64_t d = 0; d < C; ++d) enhanced[i * C + d] = refined[d] + xres[i * C + d];
        }

        auto close = [&](double got, double want) { return std::abs(got - want) <= 1e-12 * std::max({1.0, std::abs(got), std::abs(want)}); };
        const Tensor<double>& sim = m.similarity();
        for (std::int64_t i = 0; i < cells * cells; ++i) {
            f.expect(close(sim[i], s[static_cast<std::size_t>(i)]),
                     "similarity[" + std::to_string(i) + "] off oracle");
        }
        for (std::int64_t i = 0; i < cells * C; ++i) {
            f.expect(close(out.enhanced[i], enhanced[static_cast<std::size_t>(i)]),
                     "enhanced[" + std::to_string(i) + "] off oracle");
        }
        for (std::int64_t i = 0; i < cells; ++i) {
            for (std::int64_t d = 0; d < classes; ++d) {
                f.expect(close(out.prior[i * classes + d], q[i * classes + d]),
                         "prior[" + std::to_string(i * classes + d) + "] off oracle");
            }
        }
    }
    return f.ok;
}

// -------------------------------------------------------- 4. gradients

struct BlockCheck {
    std::string name;
    GradCheckReport report;
};

bool criterion_gradients(Failure& f, std::vector<std::string>& lines) {
    std::vector<BlockCheck> checks;
    Rng rng(404);

    {
        Linear<double> lin(5, 7, "linear");
        lin.init(rng, 0.5);
        fill_random_uniform(lin.bias.value, rng, -0.2, 0.2);
        Tensor<double> x = random_tensor<double>(rng, {3, 5});
        Tensor<double> target = random_tensor<double>(rng, {3, 7}, 0.0, 1.0);
        auto loss = [&] { return bce(sigmoid(lin.forward(x, false)), target); };
        Tensor<double> p = sigmoid(lin.forward(x, true));
        lin.backward(sigmoid_backward(p, bce_backward(p, target)));
        std::vector<Parameter<double>*> params;
        lin.collect(params);
        checks.push_back({"linear", gradcheck(params, loss)});
    }
    {
        LayerNorm<double> norm(6, "norm");
        Rng r2(405);
        fill_random_uniform(norm.gain.value, r2, 0.5, 1.5);
        fill_random_uniform(norm.bias.value, r2, -0.3, 0.3);
        Tensor<double> x = random_tensor<double>(rng, {4, 6});
        Tensor<double> target = random_tensor<double>(rng, {4, 6}, 0.0, 1.0);
        auto loss = [&] { return bce(sigmoid(norm.forward(x, false)), target); };
        Tensor<double> p = sigmoid(norm.forward(x, true));
        norm.backward(sigmoid_backward(p, bce_backward(p, target)));
        std::vector<Parameter<double>*> params;
        norm.collect(params);
        checks.push_back({"layer_norm", gradcheck(params, loss)});
    }
    {
        Conv3dLayer<double> conv(2, 3, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}, "conv");
        conv.init(rng, 0.5);
        fill_random_uniform(conv.bias.value, rng, -0.2, 0.2);
        Tensor<double> x = random_tensor<double>(rng, {2, 3, 4, 4});
        Tensor<double> target = random_tensor<double>(rng, {3, 3, 4, 4}, 0.0, 1.0);
        auto loss = [&] { return bce(sigmoid(conv.forward(x, false)), target); };
        Tensor<double> p = sigmoid(conv.forward(x, true));
        conv.backward(sigmoid_backward(p, bce_backward(p, target)));
        std::vector<Parameter<double>*> params;
        conv.collect(params);
        checks.push_back({"conv3d", gradcheck(params, loss)});
    }
    const auto self_attention_check = [&](const char* tag, std::array<std::int64_t, 3> disp) {
        WindowSelfAttention<double> attn(8, 2, {2, 2, 2}, disp, true, tag);
        attn.init(rng, 0.5);
        Tensor<double> x = random_tensor<double>(rng, {4, 4, 4, 8});
        Tensor<double> target = random_tensor<double>(rng, {4, 4, 4, 8}, 0.0, 1.0);
        auto loss = [&] { return bce(sigmoid(attn.forward(x, false)), target); };
        Tensor<double> p = sigmoid(attn.forward(x, true));
        attn.backward(sigmoid_backward(p, bce_backward(p, target)));
        std::vector<Parameter<double>*> params;
        attn.collect(params);
        checks.push_back({tag, gradcheck(params, loss)});
    };
    self_attention_check("wmsa", {0, 0, 0});
    self_attention_check("swmsa", {1, 1, 1});
    {
        WindowCrossAttention<double> cross(8, 2, {2, 2, 2}, {1, 1, 1}, true, "wmca");
        cross.init(rng, 0.5);
        Tensor<double> x = random_tensor<double>(rng, {4, 4, 4, 8});
        const WindowLayout L = make_window_layout({4, 4, 4}, {2, 2, 2}, {1, 1, 1});
        Tensor<double> kt = random_tensor<double>(rng, {L.n_windows, L.window_len, 8});
        Tensor<double> vt = random_tensor<double>(rng, {L.n_windows, L.window_len, 8});
        Tensor<double> target = random_tensor<double>(rng, {4, 4, 4, 8}, 0.0, 1.0);
        auto loss = [&] { return bce(sigmoid(cross.forward(x, kt, vt, false)), target); };
        Tensor<double> p = sigmoid(cross.forward(x, kt, vt, true));
        Tensor<double> dk, dv;
        cross.backward(sigmoid_backward(p, bce_backward(p, target)), dk, dv);
        std::vector<Parameter<double>*> params;
        cross.collect(params);
        checks.push_back({"wmca", gradcheck(params, loss)});
    }
    {
        ClassMaskAttention<double> cm(8, 3, {}, "cmam");
        cm.init(rng, 0.5);
        cm.beta().value[0] = 0.4;
        Tensor<double> x = random_tensor<double>(rng, {2, 4, 4, 8});
        Tensor<double> t_enh = random_tensor<double>(rng, {2, 4, 4, 8}, 0.0, 1.0);
        Tensor<double> t_pri = random_tensor<double>(rng, {2, 4, 4, 3}, 0.0, 1.0);
        auto loss = [&] {
            auto o = cm.forward(x, false);
            return bce(sigmoid(o.enhanced), t_enh) + bce(sigmoid(o.prior), t_pri);
        };
        auto o = cm.forward(x, true);
        Tensor<double> pe = sigmoid(o.enhanced);
        Tensor<double> pp = sigmoid(o.prior);
        cm.backward(sigmoid_backward(pe, bce_backward(pe, t_enh)),
                    sigmoid_backward(pp, bce_backward(pp, t_pri)));
        std::vector<Parameter<double>*> params;
        cm.collect(params);
        checks.push_back({"cmam", gradcheck(params, loss)});
    }
    {
        ModelConfig mc;
        mc.stage_widths = {8};
        mc.stage_heads = {2};
        Network<double> net(mc);
        Rng nrng(406);
        net.init(nrng);
        Tensor<double> x = random_tensor<double>(nrng, {2, 8, 16, 16});
        Tensor<double> gt = random_tensor<double>(nrng, {8, 16, 16, 3}, 0.0, 1.0);
        const std::vector<Parameter<double>*> params = net.params();
        auto loss = [&] { return static_cast<double>(net.loss(net.forward(x, true), gt, 0.4).total); };
        auto out = net.forward(x, true);
        for (Parameter<double>* p : params) p->zero_grad();
        net.backward(out, gt, 0.4);
        GradCheckOptions opt;
        opt.max_probes_per_block = 4;
        checks.push_back({"network_2x8x16x16", gradcheck(params, loss, opt)});
    }

    for (const BlockCheck& c : checks) {
        char line[160];
        std::snprintf(line, sizeof(line), "    %-18s max_rel %.3e  worst %s", c.name.c_str(),
                      c.report.max_rel_err,
                      c.report.worst_block.empty() ? "-" : c.report.worst_block.c_str());
        lines.push_back(line);
        f.expect(c.report.pass(1e-4), c.name + " exceeded 1e-4: " + std::to_string(c.report.max_rel_err));
    }
    return f.ok;
}

// ------------------------------------------------------ 5. loss algebra

bool criterion_loss(Failure& f) {
    ModelConfig mc;
    mc.stage_widths = {4};
    mc.stage_heads = {1};
    Network<double> net(mc);
    Rng rng(505);

    for (int trial = 0; trial < 100; ++trial) {
        const std::int64_t n = 1 + rng.uniform_int(64);
        typename Network<double>::Outputs out;
        out.conf = random_tensor<double>(rng, {n}, 1e-4, 1.0 - 1e-4);
        out.prior = random_tensor<double>(rng, {n}, 1e-4, 1.0 - 1e-4);
        Tensor<double> gt = random_tensor<double>(rng, {n}, 0.0, 1.0);
        const double alpha = trial % 3 == 0 ? 0.0 : (trial % 3 == 1 ? 0.4 : rng.uniform(0.0, 2.0));

        const LossParts<double> parts = net.loss(out, gt, alpha);
        const double expected = parts.main + alpha * parts.aux;
        const double lo = std::nextafter(expected, -1e300);
        const double hi = std::nextafter(expected, 1e300);
        f.expect(parts.total >= lo && parts.total <= hi,
                 "total off by more than 1 ulp at trial " + std::to_string(trial));
        f.expect(parts.main == bce(out.conf, gt), "main is not the plain conf term");
        f.expect(parts.aux == bce(out.prior, gt), "aux is not the plain prior term");
        if (alpha == 0.0) {
            f.expect(parts.total == parts.main, "alpha=0 did not collapse to the main term");
        }
    }

    // single-cell case: both maps at 0.5 give ln 2 each, so total is 1.4 ln 2
    typename Network<double>::Outputs half;
    half.conf = Tensor<double>({1}, {0.5});
    half.prior = Tensor<double>({1}, {0.5});
    Tensor<double> gt({1}, {1.0});
    const LossParts<double> parts = net.loss(half, gt, 0.4);
    f.expect(std::abs(parts.total - 1.4 * std::log(2.0)) <= 1e-6,
             "scalar case total " + std::to_string(parts.total) + " != 1.4 ln 2");
    return f.ok;
}

// ---------------------------------------------------- 6. ols / nms / ap

std::int64_t oracle_tp(std::vector<Detection> dets, const std::vector<Annotation>& gts,
                       const OlsParams& p, double tau) {
    std::sort(dets.begin(), dets.end(), detection_order);
    std::vector<char> taken(gts.size(), 0);
    std::vector<double> cur, best_vec;
    std::int64_t best_tp = -1;
    std::function<void(std::size_t, std::int64_t)> rec = [&](std::size_t di, std::int64_t tp) {
        if (di == dets.size()) {
            if (best_tp < 0 ||
                std::lexicographical_compare(best_vec.begin(), best_vec.end(), cur.begin(), cur.end())) {
                best_vec = cur;
                best_tp = tp;
            }
            return;
        }
        const Detection& det = dets[di];
        for (std::size_t gi = 0; gi < gts.size(); ++gi) {
            if (taken[gi]) continue;
            const Annotation& g = gts[gi];
            if (g.frame != det.frame || g.class_id != det.class_id) continue;
            const double o = ols(p.distance_m(det.row, det.col, g.row, g.col), p.range_of_row(g.row),
                                 p.k_for(g.class_id));
            if (o < tau) continue;
            taken[gi] = 1;
            cur.push_back(o);
            rec(di + 1, tp + 1);
            cur.pop_back();
            taken[gi] = 0;
        }
        cur.push_back(-1.0);
        rec(di + 1, tp);
        cur.pop_back();
    };
    rec(0, 0);
    return best_tp;
}

bool criterion_detect(Failure& f) {
    OlsParams p;

    f.expect(ols(0.0, 7.0, 0.05) == 1.0, "ols(0) != 1");
    f.expect(std::abs(ols(7.0 * 0.05, 7.0, 0.05) - std::exp(-0.5)) <= 1e-9, "ols(s*k) off exp(-1/2)");
    f.expect(std::abs(ols(2.3 * 0.02, 2.3, 0.02) - std::exp(-0.5)) <= 1e-9, "ols(s*k) off exp(-1/2)");

    f.expect(ols_thresholds().size() == 9, "threshold sweep is not 9 long");
    Config cfg;
    const std::vector<double> sweep = cfg.eval_thresholds();
    f.expect(sweep.size() == 9, "config sweep is not 9 long");
    for (std::size_t i = 0; i < sweep.size(); ++i) {
        f.expect(std::abs(sweep[i] - (0.5 + 0.05 * static_cast<double>(i))) <= 1e-12,
                 "sweep value " + std::to_string(i) + " off");
    }

    Rng rng(606);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<Detection> peaks;
        const int n = 2 + static_cast<int>(rng.uniform_int(24));
        for (int i = 0; i < n; ++i) {
            peaks.push_back({rng.uniform_int(2), rng.uniform_int(128), rng.uniform_int(128),
                             rng.uniform_int(3), rng.uniform(0.05, 1.0)});
        }
        const double tau = rng.uniform(0.2, 0.9);
        OlsParams q = p;
        q.nms_same_class_only = trial % 2 == 0;
        const std::vector<Detection> kept = ols_nms(peaks, q, tau);
        for (std::size_t i = 0; i < kept.size(); ++i) {
            const double s = q.range_of_row(kept[i].row);
            const double k = q.k_for(kept[i].class_id);
            for (std::size_t j = i + 1; j < kept.size(); ++j) {
                if (kept[j].frame != kept[i].frame) continue;
                if (q.nms_same_class_only && kept[j].class_id != kept[i].class_id) continue;
                const double o =
                    ols(q.distance_m(kept[i].row, kept[i].col, kept[j].row, kept[j].col), s, k);
                if (o > tau) {
                    f.expect(false, "kept pair with similarity " + std::to_string(o) + " over " +
                                        std::to_string(tau) + " at trial " + std::to_string(trial));
                    return false;
                }
            }
        }
    }

    int tested = 0;
    while (tested < 150) {
        std::vector<Annotation> gts;
        const int ng = 1 + static_cast<int>(rng.uniform_int(6));
        for (int i = 0; i < ng; ++i) {
            gts.push_back({rng.uniform_int(2), 20 + rng.uniform_int(100), rng.uniform_int(128),
                           rng.uniform_int(3)});
        }
        std::vector<Detection> dets;
        const int nd = 1 + static_cast<int>(rng.uniform_int(6));
        for (int i = 0; i < nd; ++i) {
            if (rng.uniform() < 0.6) {
                const Annotation& g = gts[static_cast<std::size_t>(rng.uniform_int(ng))];
                const std::int64_t row = std::clamp<std::int64_t>(g.row + rng.uniform_int(-4, 4), 0, 127);
                const std::int64_t col = std::clamp<std::int64_t>(g.col + rng.uniform_int(-4, 4), 0, 127);
                dets.push_back({g.frame, row, col, g.class_id, rng.uniform(0.05, 1.0)});
            } else {
                dets.push_back({rng.uniform_int(2), rng.uniform_int(128), rng.uniform_int(128),
                                rng.uniform_int(3), rng.uniform(0.05, 1.0)});
            }
        }

        std::set<double> seen_ols, seen_scores;
        bool tie = false;
        for (const auto& det : dets) {
            if (!seen_scores.insert(det.score).second) tie = true;
            for (const auto& g : gts) {
                if (g.frame != det.frame || g.class_id != det.class_id) continue;
                const double o = ols(p.distance_m(det.row, det.col, g.row, g.col), p.range_of_row(g.row),
                                     p.k_for(g.class_id));
                if (!seen_ols.insert(o).second) tie = true;
                for (double tau : ols_thresholds()) {
                    if (o == tau) tie = true;
                }
            }
        }
        if (tie) continue;
        ++tested;

        const EvalResult res = match_and_score(dets, gts, p);
        double psum = 0.0, rsum = 0.0;
        for (const ThresholdPoint& pt : res.points) {
            const std::int64_t tp = oracle_tp(dets, gts, p, pt.threshold);
            f.expect(pt.tp == tp, "tp off oracle at threshold " + std::to_string(pt.threshold));
            f.expect(pt.fp == static_cast<std::int64_t>(dets.size()) - tp, "fp off oracle");
            f.expect(pt.fn == static_cast<std::int64_t>(gts.size()) - tp, "fn off oracle");
            psum += pt.precision;
            rsum += pt.recall;
        }
        const double n_pts = static_cast<double>(res.points.size());
        f.expect(std::abs(res.ap - psum / n_pts) <= 1e-12, "ap is not the precision average");
        f.expect(std::abs(res.ar - rsum / n_pts) <= 1e-12, "ar is not the recall average");
        if (!f.ok) return false;
    }
    return f.ok;
}

// ------------------------------------------------- 7/8. toy training

constexpr double kToyLr = 1e-4;
constexpr double kToyKScale = 3.0;
constexpr std::int64_t kToyMaxSteps = 2000;
constexpr std::int64_t kToyEvalEvery = 100;
constexpr std::int64_t kAblationSteps = 600;
constexpr double kToyTargetAp = 0.90;

Config toy_config(const std::string& pattern, std::uint64_t seed) {
    Config cfg;
    cfg.model.stage_widths = {16, 32, 64};
    cfg.model.stage_heads = {2, 4, 8};
    cfg.model.shift_pattern = pattern;
    cfg.data.rows = 32;
    cfg.data.cols = 32;
    cfg.data.frames = 8;
    cfg.data.scenes = 8;
    cfg.data.split = 1.0;
    cfg.data.difficulty = 1;
    cfg.data.seed = seed;
    cfg.train.seed = seed;
    cfg.train.lr = kToyLr;
    for (double& k : cfg.detect.k_cls) k *= kToyKScale;
    cfg.validate();
    return cfg;
}

struct ToyData {
    DatasetManifest manifest;
    std::vector<SceneFiles> scenes;
};

ToyData load_toy_data(const TempDir& dir, std::uint64_t seed) {
    const Config cfg = toy_config("C", seed);
    const std::string data_dir = dir.sub("data_" + std::to_string(seed));
    DatasetOptions opt;
    opt.n_scenes = cfg.data.scenes;
    opt.seed = seed;
    opt.split = 1.0;
    opt.difficulty = cfg.data.difficulty;
    opt.frames = cfg.data.frames;
    opt.params = cfg.ols_params();
    opt.force = true;
    make_dataset(data_dir, opt);
    ToyData data;
    data.manifest = load_manifest(data_dir);
    for (const std::string& name : data.manifest.train) data.scenes.push_back(load_scene(data_dir, name));
    return data;
}

double toy_ap(Network<float>& net, const ToyData& data, const Config& cfg) {
    const OlsParams p = cfg.ols_params();
    std::vector<Detection> dets;
    std::vector<Annotation> anns;
    for (std::size_t i = 0; i < data.scenes.size(); ++i) {
        const Tensor<float> conf = net.infer(data.scenes[i].rf);
        const std::vector<Detection> kept =
            ols_nms(find_peaks(conf, cfg.detect.min_score), p, cfg.detect.nms_threshold);
        const std::int64_t off = static_cast<std::int64_t>(i) * data.manifest.frames;
        for (Detection d : kept) {
            d.frame += off;
            dets.push_back(d);
        }
        for (Annotation a : data.scenes[i].annotations) {
            a.frame += off;
            anns.push_back(a);
        }
    }
    return match_and_score(dets, anns, p, cfg.eval_thresholds()).ap;
}

struct ToyOutcome {
    double ap = 0.0;           // best observed train-set ap
    std::int64_t at_step = 0;  // step where it was observed
};

ToyOutcome toy_train(const ToyData& data, const Config& cfg, double alpha, std::int64_t max_steps,
                     double stop_at_ap) {
    Network<float> net(cfg.model);
    Rng rng(cfg.train.seed);
    net.init(rng);
    Adam<float> adam(net.params(), {cfg.train.lr, cfg.train.beta1, cfg.train.beta2, cfg.train.eps});
    const std::int64_t n = static_cast<std::int64_t>(data.scenes.size());
    const std::vector<std::int64_t> order = scene_visit_order(n, cfg.train.seed);

    ToyOutcome best;
    for (std::int64_t step = 1; step <= max_steps; ++step) {
        const std::int64_t i = order[static_cast<std::size_t>((step - 1) % n)];
        net.train_step(data.scenes[static_cast<std::size_t>(i)].rf,
                       data.scenes[static_cast<std::size_t>(i)].gt, alpha, adam, step);
        if (step % kToyEvalEvery == 0 || step == max_steps) {
            const double ap = toy_ap(net, data, cfg);
            if (ap > best.ap) best = {ap, step};
            if (stop_at_ap > 0.0 && ap >= stop_at_ap) return {ap, step};
        }
    }
    return best;
}

bool criterion_overfit(Failure& f, std::vector<std::string>& lines) {
    TempDir dir("overfit");
    const Config cfg = toy_config("C", 1);
    const ToyData data = load_toy_data(dir, 1);

    const ToyOutcome with_aux = toy_train(data, cfg, 0.4, kToyMaxSteps, kToyTargetAp);
    lines.push_back("    alpha 0.4: ap " + std::to_string(with_aux.ap) + " at step " +
                    std::to_string(with_aux.at_step));
    f.expect(with_aux.ap >= kToyTargetAp, "alpha=0.4 run peaked at ap " + std::to_string(with_aux.ap));

    const ToyOutcome no_aux = toy_train(data, cfg, 0.0, kToyMaxSteps, kToyTargetAp);
    lines.push_back("    alpha 0.0: ap " + std::to_string(no_aux.ap) + " at step " +
                    std::to_string(no_aux.at_step));
    f.expect(no_aux.ap >= kToyTargetAp, "alpha=0 run peaked at ap " + std::to_string(no_aux.ap));
    return f.ok;
}

bool criterion_ablation(Failure& f, std::vector<std::string>& lines) {
    TempDir dir("ablation");
    double sum_c = 0.0, sum_a = 0.0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const ToyData data = load_toy_data(dir, seed);
        const ToyOutcome run_c = toy_train(data, toy_config("C", seed), 0.4, kAblationSteps, -1.0);
        const ToyOutcome run_a = toy_train(data, toy_config("A", seed), 0.4, kAblationSteps, -1.0);
        sum_c += run_c.ap;
        sum_a += run_a.ap;
        lines.push_back("    seed " + std::to_string(seed) + ": pattern C ap " +
                        std::to_string(run_c.ap) + ", pattern A ap " + std::to_string(run_a.ap));
    }
    const double mean_c = sum_c / 3.0, mean_a = sum_a / 3.0;
    lines.push_back("    mean: pattern C " + std::to_string(mean_c) + ", pattern A " +
                    std::to_string(mean_a));
    f.expect(mean_c >= mean_a - 0.02, "pattern C mean ap " + std::to_string(mean_c) +
                                          " fell more than 0.02 under pattern A " +
                                          std::to_string(mean_a));
    return f.ok;
}

// --------------------------------------- 9. determinism & persistence

int run_cli_line(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.push_back("radnet");
    for (const std::string& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    return cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

bool criterion_determinism(Failure& f) {
    TempDir dir("determinism");
    const std::string cfg_path = dir.sub("config.txt");
    {
        std::ofstream cf(cfg_path, std::ios::trunc);
        cf << "[model]\nwidths: 16 32\nheads: 2 4\n\n[data]\nscenes: 4\nrows: 32\ncols: 32\nframes: 4\n\n"
              "[train]\nsteps: 10\ncheckpoint_every: 5\n";
    }

    // container round trip keeps every bit, specials included
    {
        Rng rng(909);
        Tensor<float> t = random_tensor<float>(rng, {3, 5, 2});
        t[0] = std::numeric_limits<float>::quiet_NaN();
        t[1] = std::numeric_limits<float>::infinity();
        t[2] = -std::numeric_limits<float>::infinity();
        t[3] = -0.0f;
        t[4] = std::numeric_limits<float>::denorm_min();
        const std::string path = dir.sub("vol.mrnv");
        save_volumes(path, {{"t", t}});
        const Tensor<float> back = load_volume(path, "t");
        f.expect(bits_equal(back, t), "container round trip changed bits");
    }

    // checkpoint round trip restores parameters, moments and step bitwise
    {
        ModelConfig mc;
        mc.stage_widths = {8};
        mc.stage_heads = {2};
        Network<float> net(mc);
        Rng rng(910);
        net.init(rng);
        Adam<float> adam(net.params(), {1e-3, 0.9, 0.999, 1e-8});
        Tensor<float> x = random_tensor<float>(rng, {2, 8, 8, 8});
        Tensor<float> gt = random_tensor<float>(rng, {8, 8, 8, 3}, 0.0, 1.0);
        for (int s = 1; s <= 3; ++s) net.train_step(x, gt, 0.4, adam, s);
        const std::string ck = dir.sub("net.mrnv");
        save_checkpoint(ck, net, adam, 3, "feedcafefeedcafe");

        Network<float> net2(mc);
        Adam<float> adam2(net2.params(), {1e-3, 0.9, 0.999, 1e-8});
        const CheckpointMeta meta = load_checkpoint(ck, net2, adam2);
        f.expect(meta.step == 3, "checkpoint step not restored");
        f.expect(adam2.step_count() == 3, "optimizer step count not restored");
        const auto p1 = net.params(), p2 = net2.params();
        for (std::size_t i = 0; i < p1.size(); ++i) {
            f.expect(bits_equal(p1[i]->value, p2[i]->value), "parameter " + p1[i]->name + " changed bits");
        }
        net.train_step(x, gt, 0.4, adam, 4);
        net2.train_step(x, gt, 0.4, adam2, 4);
        for (std::size_t i = 0; i < p1.size(); ++i) {
            f.expect(bits_equal(p1[i]->value, p2[i]->value),
                     "post-restore step diverged at " + p1[i]->name);
        }
    }

    // the same seeded pipeline writes the same bytes twice
    const auto synth_train_infer = [&](const std::string& tag) {
        const std::string data = dir.sub("data_" + tag);
        const std::string run = dir.sub("run_" + tag);
        const std::string inf = dir.sub("inf_" + tag);
        f.expect(run_cli_line({"--config", cfg_path, "--out", data, "synth"}) == 0, "synth failed");
        f.expect(run_cli_line({"--config", cfg_path, "--out", run, "train", "--data", data}) == 0,
                 "train failed");
        f.expect(run_cli_line({"--config", cfg_path, "--out", inf, "infer", "--checkpoint",
                               run + "/checkpoint_000010.mrnv", "--input", data + "/scene_000.mrnv"}) == 0,
                 "infer failed");
    };
    synth_train_infer("a");
    synth_train_infer("b");
    for (const char* rel :
         {"data_@/manifest.txt", "data_@/scene_000.mrnv", "data_@/scene_003.mrnv",
          "run_@/checkpoint_000010.mrnv", "run_@/train_log.txt", "inf_@/conf.mrnv",
          "inf_@/detections.txt"}) {
        std::string pa(rel), pb(rel);
        pa.replace(pa.find('@'), 1, "a");
        pb.replace(pb.find('@'), 1, "b");
        f.expect(file_bytes(dir.sub(pa)) == file_bytes(dir.sub(pb)), std::string(rel) + " differs between runs");
    }

    // resuming mid-run lands on the exact bytes of the uninterrupted run
    {
        const std::string half = dir.sub("run_half");
        const std::string resumed = dir.sub("run_resumed");
        f.expect(run_cli_line({"--config", cfg_path, "--out", half, "train", "--data",
                               dir.sub("data_a"), "--steps", "5"}) == 0,
                 "half train failed");
        f.expect(run_cli_line({"--config", cfg_path, "--out", resumed, "train", "--data",
                               dir.sub("data_a"), "--resume", half + "/checkpoint_000005.mrnv"}) == 0,
                 "resumed train failed");
        f.expect(file_bytes(resumed + "/checkpoint_000010.mrnv") ==
                     file_bytes(dir.sub("run_a") + "/checkpoint_000010.mrnv"),
                 "resumed checkpoint differs from the uninterrupted one");
    }
    return f.ok;
}

// -------------------------------------------------------------- runner

struct Criterion {
    int number;
    std::string name;
    std::function<bool(Failure&, std::vector<std::string>&)> run;
};

}  // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

    const std::vector<Criterion> criteria = {
        {1, "shift round trip, multiset, zero arithmetic",
         [](Failure& f, std::vector<std::string>&) { return criterion_shift(f); }},
        {2, "attention row-stochastic, local, zero-shift degenerate",
         [](Failure& f, std::vector<std::string>&) { return criterion_attention(f); }},
        {3, "class-mask bypass, stochastic similarity, 2x2 oracle",
         [](Failure& f, std::vector<std::string>&) { return criterion_class_mask(f); }},
        {4, "finite-difference gradients for every block",
         [](Failure& f, std::vector<std::string>& lines) { return criterion_gradients(f, lines); }},
        {5, "loss composition to 1 ulp and the 1.4 ln 2 scalar case",
         [](Failure& f, std::vector<std::string>&) { return criterion_loss(f); }},
        {6, "ols endpoints, nms pairwise bound, exhaustive ap oracle",
         [](Failure& f, std::vector<std::string>&) { return criterion_detect(f); }},
        {7, "toy overfit to ap >= 0.90 with and without the aux loss",
         [](Failure& f, std::vector<std::string>& lines) { return criterion_overfit(f, lines); }},
        {8, "pattern C keeps pace with pattern A over 3 seeds",
         [](Failure& f, std::vector<std::string>& lines) { return criterion_ablation(f, lines); }},
        {9, "bitwise determinism and persistence end to end",
         [](Failure& f, std::vector<std::string>&) { return criterion_determinism(f); }},
    };

    int failures = 0, ran = 0;
    for (const Criterion& c : criteria) {
        if (!only.empty() && only.count(c.number) == 0) continue;
        ++ran;
        Failure f;
        std::vector<std::string> lines;
        const auto t0 = std::chrono::steady_clock::now();
        bool ok = false;
        std::string abort;
        try {
            ok = c.run(f, lines);
        } catch (const std::exception& e) {
            abort = e.what();
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("[%d/9] %-55s %s (%.1fs)\n", c.number, c.name.c_str(), ok ? "PASS" : "FAIL", secs);
        for (const std::string& line : lines) std::printf("%s\n", line.c_str());
        if (!ok) {
            ++failures;
            if (!abort.empty()) std::printf("    aborted: %s\n", abort.c_str());
            for (const std::string& d : f.details) std::printf("    %s\n", d.c_str());
        }
        std::fflush(stdout);
    }
    if (ran == 0) {
        std::printf("no criteria selected\n");
        return 2;
    }
    std::printf("%s: %d/%d criteria passed\n", failures == 0 ? "ACCEPTED" : "REJECTED", ran - failures,
                ran);
    return failures == 0 ? 0 : 1;
}
