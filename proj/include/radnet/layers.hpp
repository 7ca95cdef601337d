#pragma once

#include <string>
#include <vector>

#include "radnet/ops.hpp"
#include "radnet/tensor.hpp"

// Trainable building blocks. Each layer owns its parameters, caches whatever
// forward() state its backward() needs, and accumulates parameter gradients
// (callers zero them between steps). backward() returns the input gradient.

namespace radnet {

// Dense map on the last axis: y = x W + b, W stored [in, out].
template <typename T>
class Linear {
  public:
    Linear() = default;
    Linear(std::int64_t in, std::int64_t out, const std::string& name, bool with_bias = true)
        : weight{Tensor<T>({in, out}), Tensor<T>({in, out}), name + ".weight"}, has_bias_(with_bias) {
        if (with_bias) bias = Parameter<T>{Tensor<T>({out}), Tensor<T>({out}), name + ".bias"};
    }

    void init(Rng& rng, double stddev = 0.02) {
        init_trunc_normal(weight, rng, stddev);
        // bias starts at zero
    }

    Tensor<T> forward(const Tensor<T>& x, bool training = true) {
        const std::int64_t in = weight.value.extent(0);
        if (x.extent(x.rank() - 1) != in) {
            throw DimensionError("linear " + weight.name + " expects last extent " + std::to_string(in) +
                                 ", got " + shape_str(x.shape()));
        }
        if (training) x_ = x;
        const std::int64_t out = weight.value.extent(1);
        const std::int64_t rows = x.numel() / in;
        std::vector<std::int64_t> out_shape(x.shape());
        out_shape.back() = out;
        Tensor<T> y(out_shape, x.axes().c_str());
        for (std::int64_t r = 0; r < rows; ++r) {
            const T* px = x.data() + r * in;
            T* py = y.data() + r * out;
            if (has_bias_) {
                for (std::int64_t j = 0; j < out; ++j) py[j] = bias.value[j];
            }
            for (std::int64_t k = 0; k < in; ++k) {
                const T xv = px[k];
                const T* wrow = weight.value.data() + k * out;
                for (std::int64_t j = 0; j < out; ++j) py[j] += xv * wrow[j];
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        const std::int64_t in = weight.value.extent(0);
        const std::int64_t out = weight.value.extent(1);
        const std::int64_t rows = x_.numel() / in;
        Tensor<T> dx(x_.shape());
        for (std::int64_t r = 0; r < rows; ++r) {
            const T* pdy = dy.data() + r * out;
            const T* px = x_.data() + r * in;
            T* pdx = dx.data() + r * in;
            for (std::int64_t k = 0; k < in; ++k) {
                const T* wrow = weight.value.data() + k * out;
                T* gwrow = weight.grad.data() + k * out;
                T acc(0);
                const T xv = px[k];
                for (std::int64_t j = 0; j < out; ++j) {
                    acc += pdy[j] * wrow[j];
                    gwrow[j] += xv * pdy[j];
                }
                pdx[k] = acc;
            }
            if (has_bias_) {
                for (std::int64_t j = 0; j < out; ++j) bias.grad[j] += pdy[j];
            }
        }
        return dx;
    }

    void collect(std::vector<Parameter<T>*>& out) {
        out.push_back(&weight);
        if (has_bias_) out.push_back(&bias);
    }

    Parameter<T> weight;
    Parameter<T> bias;

  private:
    bool has_bias_ = false;
    Tensor<T> x_;
};

// Normalizes the last axis with learned gain/bias; population variance.
template <typename T>
class LayerNorm {
  public:
    LayerNorm() = default;
    LayerNorm(std::int64_t channels, const std::string& name, T eps = T(1e-5))
        : gain{Tensor<T>({channels}), Tensor<T>({channels}), name + ".gain"},
          bias{Tensor<T>({channels}), Tensor<T>({channels}), name + ".bias"},
          eps_(eps) {
        gain.value.fill(T(1));
    }

    Tensor<T> forward(const Tensor<T>& x, bool training = true) {
        return layer_norm(x, gain.value, bias.value, eps_, training ? &cache_ : nullptr);
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        return layer_norm_backward(dy, gain.value, cache_, gain.grad, bias.grad);
    }

    void collect(std::vector<Parameter<T>*>& out) {
        out.push_back(&gain);
        out.push_back(&bias);
    }

    Parameter<T> gain;
    Parameter<T> bias;

  private:
    T eps_ = T(1e-5);
    LayerNormCache<T> cache_;
};

// Two dense maps with a GELU between; hidden = channels * ratio.
template <typename T>
class Ffn {
  public:
    Ffn() = default;
    Ffn(std::int64_t channels, std::int64_t ratio, const std::string& name)
        : expand_(channels, channels * ratio, name + ".expand"),
          project_(channels * ratio, channels, name + ".project") {}

    void init(Rng& rng, double stddev = 0.02) {
        expand_.init(rng, stddev);
        project_.init(rng, stddev);
    }

    Tensor<T> forward(const Tensor<T>& x, bool training = true) {
        Tensor<T> h = expand_.forward(x, training);
        if (training) pre_act_ = h;
        Tensor<T> a = gelu(h);
        return project_.forward(a, training);
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        Tensor<T> da = project_.backward(dy);
        Tensor<T> dh = gelu_backward(pre_act_, da);
        return expand_.backward(dh);
    }

    void collect(std::vector<Parameter<T>*>& out) {
        expand_.collect(out);
        project_.collect(out);
    }

  private:
    Linear<T> expand_;
    Linear<T> project_;
    Tensor<T> pre_act_;
};

// Channels-first 3D convolution layer; x [Cin,T,H,W] -> [Cout,T',H',W'].
template <typename T>
class Conv3dLayer {
  public:
    Conv3dLayer() = default;
    Conv3dLayer(std::int64_t cin, std::int64_t cout, std::array<std::int64_t, 3> kernel,
                std::array<std::int64_t, 3> stride, std::array<std::int64_t, 3> pad, const std::string& name)
        : weight{Tensor<T>({cout, cin, kernel[0], kernel[1], kernel[2]}),
                 Tensor<T>({cout, cin, kernel[0], kernel[1], kernel[2]}), name + ".weight"},
          bias{Tensor<T>({cout}), Tensor<T>({cout}), name + ".bias"},
          stride_(stride),
          pad_(pad) {}

    void init(Rng& rng, double stddev = 0.02) { init_trunc_normal(weight, rng, stddev); }

    Tensor<T> forward(const Tensor<T>& x, bool training = true) {
        if (training) x_ = x;
        return conv3d(x, weight.value, &bias.value, stride_, pad_);
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        Tensor<T> dx;
        conv3d_backward(x_, weight.value, dy, stride_, pad_, dx, weight.grad, &bias.grad);
        return dx;
    }

    void collect(std::vector<Parameter<T>*>& out) {
        out.push_back(&weight);
        out.push_back(&bias);
    }

    Parameter<T> weight;
    Parameter<T> bias;

  private:
    std::array<std::int64_t, 3> stride_{1, 1, 1};
    std::array<std::int64_t, 3> pad_{0, 0, 0};
    Tensor<T> x_;
};

}  // namespace radnet
