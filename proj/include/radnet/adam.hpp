#pragma once

#include <cmath>
#include <vector>

#include "radnet/tensor.hpp"

namespace radnet {

// Adam with bias correction. Moment buffers are indexed parallel to the
// parameter list handed to the constructor, so the list must be rebuilt in
// the same order when restoring from a checkpoint.
template <typename T>
class Adam {
  public:
    struct Options {
        double lr = 1e-4;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
    };

    Adam() = default;
    Adam(const std::vector<Parameter<T>*>& params, Options opt) : params_(params), opt_(opt) {
        m_.reserve(params.size());
        v_.reserve(params.size());
        for (auto* p : params) {
            m_.emplace_back(p->value.shape());
            v_.emplace_back(p->value.shape());
        }
    }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            Parameter<T>& p = *params_[i];
            Tensor<T>& m = m_[i];
            Tensor<T>& v = v_[i];
            const std::int64_t n = p.value.numel();
            for (std::int64_t j = 0; j < n; ++j) {
                const T g = p.grad[j];
                m[j] = T(opt_.beta1) * m[j] + T(1.0 - opt_.beta1) * g;
                v[j] = T(opt_.beta2) * v[j] + T(1.0 - opt_.beta2) * g * g;
                const T mhat = m[j] / T(bc1);
                const T vhat = v[j] / T(bc2);
                p.value[j] -= T(opt_.lr) * mhat / (std::sqrt(vhat) + T(opt_.eps));
            }
        }
    }

    std::int64_t step_count() const { return t_; }
    void set_step_count(std::int64_t t) { t_ = t; }
    std::vector<Tensor<T>>& first_moments() { return m_; }
    std::vector<Tensor<T>>& second_moments() { return v_; }
    const std::vector<Parameter<T>*>& params() const { return params_; }
    const Options& options() const { return opt_; }

  private:
    std::vector<Parameter<T>*> params_;
    Options opt_;
    std::vector<Tensor<T>> m_;
    std::vector<Tensor<T>> v_;
    std::int64_t t_ = 0;
};

}  // namespace radnet
