#include <doctest.h>

#include <algorithm>
#include <set>

#include "radnet/opcount.hpp"
#include "radnet/ops.hpp"
#include "radnet/shift.hpp"

using namespace radnet;

namespace {

Tensor<float> random_volume(Rng& rng, std::vector<std::int64_t> shape) {
    Tensor<float> x(std::move(shape));
    fill_random_uniform(x, rng, -2.0, 2.0);
    return x;
}

std::multiset<float> value_multiset(const Tensor<float>& x) {
    std::multiset<float> s;
    for (std::int64_t i = 0; i < x.numel(); ++i) s.insert(x[i]);
    return s;
}

}  // namespace

TEST_CASE("canonical patterns have the advertised temporal fields") {
    auto a = make_pattern("A");
    auto b = make_pattern("B");
    auto c = make_pattern("C");

    CHECK(a.k == 2);
    for (int v : a.cell) CHECK((v >= -1 && v <= 1));

    std::set<int> bo(b.cell.begin(), b.cell.end());
    CHECK(bo.size() == 4);  // spans 4 distinct frames

    REQUIRE(c.cell.size() == 9);
    std::set<int> co(c.cell.begin(), c.cell.end());
    CHECK(co == std::set<int>{-4, -3, -2, -1, 0, 1, 2, 3, 4});

    CHECK(std::count(a.cell.begin(), a.cell.end(), 0) >= 1);
    CHECK(std::count(b.cell.begin(), b.cell.end(), 0) >= 1);
    CHECK(std::count(c.cell.begin(), c.cell.end(), 0) >= 1);

    CHECK_THROWS_AS(make_pattern("D"), ValidationError);
}

TEST_CASE("custom patterns must keep a zero offset and fill the cell") {
    CHECK_THROWS_AS(make_custom_pattern({1, 2, 3, 4}, 2), ValidationError);
    CHECK_THROWS_AS(make_custom_pattern({0, 1, 2}, 2), ValidationError);
    auto p = make_custom_pattern({0, 1, -1, 0}, 2);
    CHECK(p.k == 2);
}

TEST_CASE("all-zero pattern is the identity") {
    Rng rng(1);
    auto x = random_volume(rng, {3, 4, 4, 2});
    auto p = make_custom_pattern({0, 0, 0, 0}, 2);
    auto y = patch_shift(x, p);
    for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("T=1 volumes are fixed points of every pattern") {
    Rng rng(2);
    auto x = random_volume(rng, {1, 5, 5, 3});
    for (const char* name : {"A", "B", "C"}) {
        auto y = patch_shift(x, make_pattern(name));
        for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(y[i] == x[i]);
    }
}

TEST_CASE("tiny three-frame mosaic maps exactly as the index rule says") {
    // T=3, H=W=2, k=2, cell=[[-1,0],[0,+1]]
    Tensor<float> x({3, 2, 2, 1});
    for (std::int64_t i = 0; i < x.numel(); ++i) x[i] = static_cast<float>(i);
    auto p = make_custom_pattern({-1, 0, 0, +1}, 2);
    auto y = patch_shift(x, p);
    CHECK(y.at(1, 0, 0, 0) == x.at(0, 0, 0, 0));
    CHECK(y.at(1, 1, 1, 0) == x.at(2, 1, 1, 0));
    CHECK(y.at(1, 0, 1, 0) == x.at(1, 0, 1, 0));

    auto back = patch_shift_back(y, p);
    for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(back[i] == x[i]);
}

TEST_CASE("patch shift preserves the multiset of values and inverts bitwise") {
    Rng rng(33);
    const std::vector<std::vector<std::int64_t>> shapes = {
        {2, 3, 5, 2}, {4, 8, 8, 3}, {5, 7, 9, 1}, {9, 6, 6, 4}, {3, 2, 2, 8},
    };
    for (const auto& shape : shapes) {
        for (const char* name : {"A", "B", "C"}) {
            auto x = random_volume(rng, shape);
            auto p = make_pattern(name);
            auto y = patch_shift(x, p);
            CHECK(value_multiset(y) == value_multiset(x));
            auto back = patch_shift_back(y, p);
            bool identical = true;
            for (std::int64_t i = 0; i < x.numel(); ++i) {
                if (back[i] != x[i]) identical = false;
            }
            CHECK(identical);
        }
    }
}

TEST_CASE("patch shift moves whole patches: channels stay together") {
    Rng rng(8);
    auto x = random_volume(rng, {4, 6, 6, 5});
    auto p = make_pattern("A");
    auto y = patch_shift(x, p);
    for (std::int64_t t = 0; t < 4; ++t) {
        for (std::int64_t h = 0; h < 6; ++h) {
            for (std::int64_t w = 0; w < 6; ++w) {
                const std::int64_t src_t = (((t + p.offset_at(h, w)) % 4) + 4) % 4;
                for (std::int64_t c = 0; c < 5; ++c) {
                    CHECK(y.at(t, h, w, c) == x.at(src_t, h, w, c));
                }
            }
        }
    }
}

TEST_CASE("channel shift ratio 0 is the identity") {
    Rng rng(3);
    auto x = random_volume(rng, {3, 2, 2, 8});
    auto y = channel_shift(x, 0.0);
    for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("channel shift C=8 ratio 0.25 matches the index map") {
    Tensor<float> x({2, 1, 1, 8});
    for (std::int64_t i = 0; i < x.numel(); ++i) x[i] = static_cast<float>(i + 1);
    auto y = channel_shift(x, 0.25);
    // channel 0 moves forward in time
    CHECK(y.at(1, 0, 0, 0) == x.at(0, 0, 0, 0));
    CHECK(y.at(0, 0, 0, 0) == 0.0f);
    // channel 1 moves backward in time
    CHECK(y.at(0, 0, 0, 1) == x.at(1, 0, 0, 1));
    CHECK(y.at(1, 0, 0, 1) == 0.0f);
    // channels >= C/4 untouched
    for (std::int64_t t = 0; t < 2; ++t) {
        for (std::int64_t c = 2; c < 8; ++c) CHECK(y.at(t, 0, 0, c) == x.at(t, 0, 0, c));
    }
}

TEST_CASE("channel shift only removes mass from nonnegative volumes") {
    Rng rng(4);
    Tensor<float> x({4, 3, 3, 16});
    fill_random_uniform(x, rng, 0.0, 1.0);
    auto y = channel_shift(x, 0.25);
    double sx = 0, sy = 0;
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        sx += x[i];
        sy += y[i];
    }
    CHECK(sy <= sx);
}

TEST_CASE("channel shift degrades to identity when C is too small") {
    Rng rng(5);
    auto x = random_volume(rng, {3, 2, 2, 3});
    auto y = channel_shift(x, 0.25);  // floor(3*0.25)=0 shifted channels
    for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("channel shift backward is the exact adjoint") {
    Rng rng(6);
    Tensor<double> x({3, 2, 2, 8});
    fill_random_uniform(x, rng, -1.0, 1.0);
    Tensor<double> dy({3, 2, 2, 8});
    fill_random_uniform(dy, rng, -1.0, 1.0);
    auto dx = channel_shift_backward(dy, 0.25);
    // <channel_shift(x), dy> == <x, dx> for linear maps
    auto y = channel_shift(x, 0.25);
    double lhs = 0, rhs = 0;
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        lhs += y[i] * dy[i];
        rhs += x[i] * dx[i];
    }
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("shifts perform zero arithmetic; matmul does not") {
    Tensor<CountingScalar> x({4, 6, 6, 8});
    Rng rng(9);
    for (std::int64_t i = 0; i < x.numel(); ++i) x[i] = CountingScalar(rng.uniform());

    OpCounter::reset();
    auto a = patch_shift(x, make_pattern("C"));
    auto b = patch_shift_back(a, make_pattern("C"));
    auto c = channel_shift(x, 0.25);
    CHECK(OpCounter::total() == 0);

    // sanity: the instrumentation itself fires on real arithmetic
    Tensor<CountingScalar> m({2, 2}, {1.0, 2.0, 3.0, 4.0});
    Tensor<CountingScalar> n({2, 2}, {1.0, 0.0, 0.0, 1.0});
    OpCounter::reset();
    auto mn = matmul(m, n);
    CHECK(OpCounter::total() > 0);
    CHECK(mn.at(1, 0).value() == 3.0);
}
