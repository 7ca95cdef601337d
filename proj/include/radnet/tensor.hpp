#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "radnet/error.hpp"

namespace radnet {

inline std::string shape_str(const std::vector<std::int64_t>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

// Dense row-major tensor. The scalar type is a template parameter: float for
// training, double for gradient checks, and the instrumented counting scalar
// for arithmetic-op audits.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::int64_t> shape, const char* axes = "")
        : shape_(std::move(shape)), axes_(axes) {
        std::int64_t n = 1;
        for (auto e : shape_) {
            if (e <= 0) throw DimensionError("tensor extent must be positive, got shape " + shape_str(shape_));
            n *= e;
        }
        data_.assign(static_cast<std::size_t>(n), T(0));
    }

    Tensor(std::vector<std::int64_t> shape, std::vector<T> data, const char* axes = "")
        : shape_(std::move(shape)), data_(std::move(data)), axes_(axes) {
        if (static_cast<std::int64_t>(data_.size()) != numel_of(shape_)) {
            throw DimensionError("data length " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_str(shape_));
        }
    }

    static std::int64_t numel_of(const std::vector<std::int64_t>& shape) {
        std::int64_t n = 1;
        for (auto e : shape) n *= e;
        return n;
    }

    const std::vector<std::int64_t>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    std::int64_t extent(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    const std::string& axes() const { return axes_; }
    void set_axes(std::string a) { axes_ = std::move(a); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    template <typename... Ix>
    std::int64_t offset(Ix... idx) const {
        const std::int64_t ix[] = {static_cast<std::int64_t>(idx)...};
        const std::size_t n = sizeof...(Ix);
        if (n != shape_.size()) {
            throw DimensionError("index rank " + std::to_string(n) + " vs tensor shape " + shape_str(shape_));
        }
        std::int64_t off = 0;
        for (std::size_t k = 0; k < n; ++k) off = off * shape_[k] + ix[k];
        return off;
    }

    template <typename... Ix>
    T& at(Ix... idx) { return data_[static_cast<std::size_t>(offset(idx...))]; }
    template <typename... Ix>
    const T& at(Ix... idx) const { return data_[static_cast<std::size_t>(offset(idx...))]; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
    void zero() { fill(T(0)); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_, axes_.c_str());
        for (std::int64_t i = 0; i < numel(); ++i) out[i] = static_cast<U>(data_[static_cast<std::size_t>(i)]);
        return out;
    }

private:
    std::vector<std::int64_t> shape_;
    std::vector<T> data_;
    std::string axes_;
};

// Same data, new extents (copies; tensors are always dense row-major).
template <typename T>
Tensor<T> reshape(const Tensor<T>& t, std::vector<std::int64_t> shape) {
    return Tensor<T>(std::move(shape), t.vec());
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(what) + ": shape " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    }
}

// Learnable tensor plus its accumulated gradient.
template <typename T>
struct Parameter {
    Tensor<T> value;
    Tensor<T> grad;
    std::string name;

    Parameter() = default;
    Parameter(std::vector<std::int64_t> shape, std::string n)
        : value(shape), grad(std::move(shape)), name(std::move(n)) {}
    Parameter(Tensor<T> v, Tensor<T> g, std::string n)
        : value(std::move(v)), grad(std::move(g)), name(std::move(n)) {}

    void zero_grad() { grad.zero(); }
    std::int64_t numel() const { return value.numel(); }
};

// Deterministic random source. mt19937_64 has a fully specified sequence and
// the normal variate uses an explicit Box-Muller transform, so results do not
// depend on the standard library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi_inclusive) {
        return lo + static_cast<std::int64_t>(gen_() % static_cast<std::uint64_t>(hi_inclusive - lo + 1));
    }

    // uniform in [0, n)
    std::int64_t uniform_int(std::int64_t n) { return uniform_int(0, n - 1); }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // Normal with given std, redrawn until within +-clip_stds standard deviations.
    double trunc_normal(double stddev, double clip_stds = 2.0) {
        double z = normal();
        while (std::abs(z) > clip_stds) z = normal();
        return z * stddev;
    }

private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

template <typename T>
void init_trunc_normal(Parameter<T>& p, Rng& rng, double stddev = 0.02) {
    for (std::int64_t i = 0; i < p.value.numel(); ++i) p.value[i] = static_cast<T>(rng.trunc_normal(stddev));
}

template <typename T>
void fill_random_uniform(Tensor<T>& t, Rng& rng, double lo = -1.0, double hi = 1.0) {
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
}

}  // namespace radnet
