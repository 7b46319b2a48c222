#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "crwkv/gradcheck.hpp"
#include "crwkv/wkv.hpp"

using namespace crwkv;

namespace {

template <typename T>
Tensor<T> reverse_time(const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    const std::int64_t b = x.size(0), len = x.size(1), c = x.size(2);
    for (std::int64_t bi = 0; bi < b; ++bi)
        for (std::int64_t t = 0; t < len; ++t)
            for (std::int64_t ci = 0; ci < c; ++ci)
                out.at3(bi, t, ci) = x.at3(bi, len - 1 - t, ci);
    return out;
}

}  // namespace

TEST_CASE("position_bias: printed-formula anchor values") {
    CHECK(position_bias(1, 2, 4) == doctest::Approx(0.0));
    CHECK(position_bias(1, 4, 4) == doctest::Approx(-0.5));
}

TEST_CASE("position_bias: symmetric in its arguments") {
    Rng rng(41);
    for (int n = 0; n < 100; ++n) {
        std::int64_t len = 2 + rng.uniform_int(100);
        std::int64_t t = 1 + rng.uniform_int(len);
        std::int64_t i = 1 + rng.uniform_int(len);
        if (t == i) i = (i % len) + 1;
        CHECK(position_bias(t, i, len) == doctest::Approx(position_bias(i, t, len)));
    }
}

TEST_CASE("position_bias: diagonal is a contract violation") {
    CHECK_THROWS_AS(position_bias(3, 3, 8), ParamError);
}

TEST_CASE("biwkv_reference: T=1 returns v exactly") {
    Tensor<double> k({1, 1, 2}, {0.3, -1.0});
    Tensor<double> v({1, 1, 2}, {4.0, -2.5});
    Tensor<double> w({2}, {0.5, -0.5});
    Tensor<double> u({2}, {0.1, 0.9});
    auto y = biwkv_reference(k, v, w, u);
    CHECK(y[0] == doctest::Approx(4.0));
    CHECK(y[1] == doctest::Approx(-2.5));
}

TEST_CASE("biwkv_reference: constant v gives the constant back at every t") {
    Rng rng(42);
    auto k = Tensor<double>::randn({2, 9, 3}, rng);
    auto v = Tensor<double>::full({2, 9, 3}, 1.25);
    auto w = Tensor<double>::randn({3}, rng);
    auto u = Tensor<double>::randn({3}, rng);
    auto y = biwkv_reference(k, v, w, u);
    for (std::int64_t i = 0; i < y.numel(); ++i) CHECK(y[i] == doctest::Approx(1.25).epsilon(1e-12));
}

TEST_CASE("biwkv_reference: frozen direct-summation values, T=3") {
    // direct 64-bit evaluation of the summation formula,
    // k=(0.1,-0.2,0.3), v=(1,2,3), w=0.5, u=0.2, T=3
    Tensor<double> k({1, 3, 1}, {0.1, -0.2, 0.3});
    Tensor<double> v({1, 3, 1}, {1.0, 2.0, 3.0});
    Tensor<double> w({1}, {0.5});
    Tensor<double> u({1}, {0.2});
    auto y = biwkv_reference(k, v, w, u);
    CHECK(y[0] == doctest::Approx(1.9374164288476612).epsilon(1e-14));
    CHECK(y[1] == doctest::Approx(2.0708207769338958).epsilon(1e-14));
    CHECK(y[2] == doctest::Approx(2.2095865051039731).epsilon(1e-14));
}

TEST_CASE("biwkv_scan: matches the reference on 200 random instances") {
    Rng rng(43);
    double worst64 = 0;
    float worst32 = 0;
    for (int n = 0; n < 200; ++n) {
        std::int64_t len = 1 + rng.uniform_int(64);
        std::int64_t c = 1 + rng.uniform_int(8);
        auto k = Tensor<double>::randn({1, len, c}, rng);
        auto v = Tensor<double>::randn({1, len, c}, rng);
        auto w = Tensor<double>::randn({c}, rng);
        auto u = Tensor<double>::randn({c}, rng);
        worst64 = std::max(worst64,
                           max_rel_err(biwkv_scan(k, v, w, u), biwkv_reference(k, v, w, u)));
        auto kf = k.cast<float>();
        auto vf = v.cast<float>();
        auto wf = w.cast<float>();
        auto uf = u.cast<float>();
        worst32 = std::max(worst32, static_cast<float>(max_rel_err(
                                        biwkv_scan(kf, vf, wf, uf),
                                        biwkv_reference(kf, vf, wf, uf))));
    }
    CHECK(worst64 <= 1e-10);
    CHECK(worst32 <= 1e-5f);
}

TEST_CASE("biwkv_scan: reversal equivariance is exact") {
    Rng rng(44);
    for (int n = 0; n < 20; ++n) {
        std::int64_t len = 1 + rng.uniform_int(40);
        std::int64_t c = 1 + rng.uniform_int(4);
        auto k = Tensor<double>::randn({2, len, c}, rng);
        auto v = Tensor<double>::randn({2, len, c}, rng);
        auto w = Tensor<double>::randn({c}, rng);
        auto u = Tensor<double>::randn({c}, rng);
        auto lhs = biwkv_scan(reverse_time(k), reverse_time(v), w, u);
        auto rhs = reverse_time(biwkv_scan(k, v, w, u));
        CHECK(max_rel_err(lhs, rhs) <= 1e-15);
    }
}

TEST_CASE("biwkv_scan: large constant keys stay finite and match the reference") {
    Rng rng(45);
    auto k = Tensor<double>::full({1, 32, 2}, 25.0);
    auto v = Tensor<double>::randn({1, 32, 2}, rng);
    Tensor<double> w({2}, {0.8, -0.6});
    Tensor<double> u({2}, {0.5, 0.5});
    auto y = biwkv_scan(k, v, w, u);
    CHECK(y.all_finite());
    CHECK(max_rel_err(y, biwkv_reference(k, v, w, u)) <= 1e-10);
    // same at float, where naive accumulation would overflow quickly
    auto yf = biwkv_scan(k.cast<float>(), v.cast<float>(), w.cast<float>(), u.cast<float>());
    CHECK(yf.all_finite());
}

TEST_CASE("biwkv: convexity — outputs bounded by per-channel value range") {
    Rng rng(46);
    for (int n = 0; n < 30; ++n) {
        std::int64_t len = 1 + rng.uniform_int(32);
        std::int64_t c = 1 + rng.uniform_int(4);
        auto k = Tensor<double>::randn({1, len, c}, rng, 3.0);
        auto v = Tensor<double>::randn({1, len, c}, rng);
        auto w = Tensor<double>::randn({c}, rng, 2.0);
        auto u = Tensor<double>::randn({c}, rng);
        auto y = biwkv_scan(k, v, w, u);
        for (std::int64_t ci = 0; ci < c; ++ci) {
            double lo = 1e300, hi = -1e300;
            for (std::int64_t t = 0; t < len; ++t) {
                lo = std::min(lo, v.at3(0, t, ci));
                hi = std::max(hi, v.at3(0, t, ci));
            }
            for (std::int64_t t = 0; t < len; ++t) {
                CHECK(y.at3(0, t, ci) >= lo - 1e-9);
                CHECK(y.at3(0, t, ci) <= hi + 1e-9);
            }
        }
    }
}

TEST_CASE("biwkv: with w=u=0 the output is the permutation-invariant softmax average") {
    Rng rng(47);
    const std::int64_t len = 12;
    auto k = Tensor<double>::randn({1, len, 1}, rng);
    auto v = Tensor<double>::randn({1, len, 1}, rng);
    auto w = Tensor<double>({1});
    auto u = Tensor<double>({1});
    auto y = biwkv_scan(k, v, w, u);
    double num = 0, den = 0;
    for (std::int64_t t = 0; t < len; ++t) {
        num += std::exp(k.at3(0, t, 0)) * v.at3(0, t, 0);
        den += std::exp(k.at3(0, t, 0));
    }
    for (std::int64_t t = 0; t < len; ++t)
        CHECK(y.at3(0, t, 0) == doctest::Approx(num / den).epsilon(1e-10));

    // permuting two non-adjacent tokens leaves the degenerate case unchanged
    auto k2 = k, v2 = v;
    std::swap(k2.at3(0, 2, 0), k2.at3(0, 9, 0));
    std::swap(v2.at3(0, 2, 0), v2.at3(0, 9, 0));
    auto y2 = biwkv_scan(k2, v2, w, u);
    CHECK(std::abs(y2.at3(0, 0, 0) - y.at3(0, 0, 0)) < 1e-12);

    // with w != 0 the positional weighting makes the same swap visible
    Tensor<double> w_active({1}, {1.5});
    auto ya = biwkv_scan(k, v, w_active, u);
    auto yb = biwkv_scan(k2, v2, w_active, u);
    CHECK(std::abs(ya.at3(0, 0, 0) - yb.at3(0, 0, 0)) > 1e-6);
}

TEST_CASE("biwkv_backward: T=1 passes upstream straight through to grad_v") {
    Tensor<double> k({1, 1, 2}, {0.4, -0.2});
    Tensor<double> v({1, 1, 2}, {1.0, 2.0});
    Tensor<double> w({2}, {0.3, 0.3});
    Tensor<double> u({2}, {0.1, 0.1});
    Tensor<double> g({1, 1, 2}, {0.7, -1.3});
    auto grads = biwkv_backward(k, v, w, u, g);
    CHECK(grads.gv[0] == doctest::Approx(0.7));
    CHECK(grads.gv[1] == doctest::Approx(-1.3));
    CHECK(std::abs(grads.gk[0]) < 1e-12);
    CHECK(std::abs(grads.gw[0]) < 1e-12);
}

TEST_CASE("biwkv_backward: all four gradients match finite differences (T=5, C=2)") {
    Rng rng(48);
    auto k = Tensor<double>::randn({1, 5, 2}, rng);
    auto v = Tensor<double>::randn({1, 5, 2}, rng);
    auto w = Tensor<double>::randn({2}, rng);
    auto u = Tensor<double>::randn({2}, rng);
    auto r = Tensor<double>::randn({1, 5, 2}, rng);
    auto grads = biwkv_backward(k, v, w, u, r);
    std::vector<double*> slots;
    std::vector<double> analytic;
    collect_slots(k, slots);
    collect_grads(grads.gk, analytic);
    collect_slots(v, slots);
    collect_grads(grads.gv, analytic);
    collect_slots(w, slots);
    collect_grads(grads.gw, analytic);
    collect_slots(u, slots);
    collect_grads(grads.gu, analytic);
    auto eval = [&] {
        auto y = biwkv_scan(k, v, w, u);
        double s = 0;
        for (std::int64_t i = 0; i < y.numel(); ++i) s += y[i] * r[i];
        return s;
    };
    CHECK(gradcheck_max_err(slots, analytic, eval) <= 1e-4);
}

TEST_CASE("biwkv_backward: scan form equals the quadratic reference form") {
    Rng rng(49);
    for (int n = 0; n < 25; ++n) {
        std::int64_t len = 1 + rng.uniform_int(24);
        std::int64_t c = 1 + rng.uniform_int(4);
        auto k = Tensor<double>::randn({2, len, c}, rng);
        auto v = Tensor<double>::randn({2, len, c}, rng);
        auto w = Tensor<double>::randn({c}, rng);
        auto u = Tensor<double>::randn({c}, rng);
        auto g = Tensor<double>::randn({2, len, c}, rng);
        auto fast = biwkv_backward(k, v, w, u, g);
        auto ref = biwkv_backward_reference(k, v, w, u, g);
        CHECK(max_rel_err(fast.gk, ref.gk) < 1e-9);
        CHECK(max_rel_err(fast.gv, ref.gv) < 1e-9);
        CHECK(max_rel_err(fast.gw, ref.gw) < 1e-9);
        CHECK(max_rel_err(fast.gu, ref.gu) < 1e-9);
    }
}

TEST_CASE("biwkv_backward: constant v makes grad_v sum to the upstream sum") {
    Rng rng(50);
    const std::int64_t len = 7;
    auto k = Tensor<double>::randn({1, len, 1}, rng);
    auto v = Tensor<double>::full({1, len, 1}, 0.75);
    Tensor<double> w({1}, {0.4});
    Tensor<double> u({1}, {0.2});
    auto g = Tensor<double>::randn({1, len, 1}, rng);
    auto grads = biwkv_backward(k, v, w, u, g);
    double sum_g = 0, sum_gv = 0;
    for (std::int64_t t = 0; t < len; ++t) {
        sum_g += g.at3(0, t, 0);
        sum_gv += grads.gv.at3(0, t, 0);
    }
    CHECK(sum_gv == doctest::Approx(sum_g).epsilon(1e-10));
}
