#pragma once

#include <cstdint>

// Instrumented scalar for auditing that data-movement code performs no
// arithmetic. Copies and comparisons are free; +,-,*,/ bump thread-local
// counters.

namespace radnet {

struct OpCounter {
    static inline thread_local std::uint64_t adds = 0;
    static inline thread_local std::uint64_t muls = 0;

    static void reset() {
        adds = 0;
        muls = 0;
    }
    static std::uint64_t total() { return adds + muls; }
};

class CountingScalar {
  public:
    CountingScalar() = default;
    CountingScalar(double v) : v_(v) {}  // NOLINT: implicit by design, mirrors double
    CountingScalar(int v) : v_(static_cast<double>(v)) {}

    double value() const { return v_; }

    CountingScalar operator-() const {
        ++OpCounter::adds;
        return CountingScalar(-v_);
    }

    friend CountingScalar operator+(CountingScalar a, CountingScalar b) {
        ++OpCounter::adds;
        return CountingScalar(a.v_ + b.v_);
    }
    friend CountingScalar operator-(CountingScalar a, CountingScalar b) {
        ++OpCounter::adds;
        return CountingScalar(a.v_ - b.v_);
    }
    friend CountingScalar operator*(CountingScalar a, CountingScalar b) {
        ++OpCounter::muls;
        return CountingScalar(a.v_ * b.v_);
    }
    friend CountingScalar operator/(CountingScalar a, CountingScalar b) {
        ++OpCounter::muls;
        return CountingScalar(a.v_ / b.v_);
    }

    CountingScalar& operator+=(CountingScalar o) {
        ++OpCounter::adds;
        v_ += o.v_;
        return *this;
    }
    CountingScalar& operator-=(CountingScalar o) {
        ++OpCounter::adds;
        v_ -= o.v_;
        return *this;
    }
    CountingScalar& operator*=(CountingScalar o) {
        ++OpCounter::muls;
        v_ *= o.v_;
        return *this;
    }

    friend bool operator==(CountingScalar a, CountingScalar b) { return a.v_ == b.v_; }
    friend bool operator!=(CountingScalar a, CountingScalar b) { return a.v_ != b.v_; }
    friend bool operator<(CountingScalar a, CountingScalar b) { return a.v_ < b.v_; }
    friend bool operator>(CountingScalar a, CountingScalar b) { return a.v_ > b.v_; }

  private:
    double v_ = 0.0;
};

}  // namespace radnet
