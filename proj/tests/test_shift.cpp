#include <doctest.h>

#include "crwkv/gradcheck.hpp"
#include "crwkv/shift.hpp"

using namespace crwkv;

namespace {

// independent shift oracle: per-span displaced copy, zero fill, omega blend
template <typename T>
Tensor<T> shift_oracle(const Tensor<T>& x, const std::vector<ChannelSpan>& spans, T omega) {
    Tensor<T> out(x.shape());
    const std::int64_t b = x.size(0), h = x.size(2), w = x.size(3);
    for (std::int64_t bi = 0; bi < b; ++bi)
        for (const auto& s : spans)
            for (std::int64_t c = s.start; c < s.start + s.count; ++c)
                for (std::int64_t y = 0; y < h; ++y)
                    for (std::int64_t xx = 0; xx < w; ++xx) {
                        std::int64_t sy = y - s.offset.dy, sx = xx - s.offset.dx;
                        T o = (sy >= 0 && sy < h && sx >= 0 && sx < w) ? x.at4(bi, c, sy, sx)
                                                                       : T{0};
                        out.at4(bi, c, y, xx) = omega * o + (T{1} - omega) * x.at4(bi, c, y, xx);
                    }
    return out;
}

}  // namespace

TEST_CASE("offset dictionaries: sizes and composition") {
    CHECK(OffsetDictionary::cts().size() == 12);
    CHECK(OffsetDictionary::cts_plus().size() == 16);
    CHECK(OffsetDictionary::uni().size() == 1);
    CHECK(OffsetDictionary::bi().size() == 2);
    CHECK(OffsetDictionary::quad().size() == 4);
    int d1 = 0, d2 = 0;
    auto cts = OffsetDictionary::cts();
    for (auto& o : cts.offsets) (o.manhattan() == 1 ? d1 : d2)++;
    CHECK(d1 == 4);
    CHECK(d2 == 8);
    CHECK(cts.weight_sum() == doctest::Approx(8.0));
    CHECK_THROWS_AS(OffsetDictionary({{0, 0}}), ParamError);
    CHECK_THROWS_AS(OffsetDictionary({{0, 1}, {0, 1}}), ParamError);
}

TEST_CASE("partition_channels: the worked C=48 example from the algorithm") {
    auto spans = partition_channels(OffsetDictionary::cts(), 48);
    REQUIRE(spans.size() == 12);
    std::int64_t total = 0;
    for (std::size_t i = 0; i < spans.size(); ++i) {
        CHECK(spans[i].count == (spans[i].offset.manhattan() == 1 ? 6 : 3));
        CHECK(spans[i].start == total);
        total += spans[i].count;
    }
    CHECK(total == 48);
}

TEST_CASE("partition_channels: single offset takes every channel") {
    auto spans = partition_channels(OffsetDictionary::uni(), 10);
    REQUIRE(spans.size() == 1);
    CHECK(spans[0].start == 0);
    CHECK(spans[0].count == 10);
}

TEST_CASE("partition_channels: spans cover [0, C) exactly for C in 1..256") {
    for (auto dict : {OffsetDictionary::cts(), OffsetDictionary::cts_plus(),
                      OffsetDictionary::quad()}) {
        for (std::int64_t c = 1; c <= 256; ++c) {
            auto spans = partition_channels(dict, c);
            std::int64_t cursor = 0;
            for (const auto& s : spans) {
                CHECK(s.start == cursor);
                CHECK(s.count >= 0);
                cursor += s.count;
            }
            CHECK(cursor == c);
        }
    }
}

TEST_CASE("partition_channels: C=0 rejected") {
    CHECK_THROWS_AS(partition_channels(OffsetDictionary::cts(), 0), ParamError);
}

TEST_CASE("cts: omega = 0 is the identity map exactly") {
    Rng rng(61);
    auto x = Tensor<double>::randn({1, 24, 6, 6}, rng);
    auto y = cts_shift(x, OffsetDictionary::cts(), 0.0);
    for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("cts: omega = 1 with a single (0,1) offset shifts right, zero left column") {
    Rng rng(62);
    auto x = Tensor<double>::randn({1, 3, 4, 5}, rng);
    auto y = cts_shift(x, OffsetDictionary::uni(), 1.0);
    for (int c = 0; c < 3; ++c)
        for (int yy = 0; yy < 4; ++yy) {
            CHECK(y.at4(0, c, yy, 0) == 0.0);
            for (int xx = 1; xx < 5; ++xx)
                CHECK(y.at4(0, c, yy, xx) == doctest::Approx(x.at4(0, c, yy, xx - 1)));
        }
}

TEST_CASE("cts: constant 9x9 map keeps interior constant, matches hand-rolled loop") {
    auto x = Tensor<double>::full({1, 16, 9, 9}, 0.6);
    const double omega = 0.7;
    auto dict = OffsetDictionary::cts();
    auto y = cts_shift(x, dict, omega);
    for (int c = 0; c < 16; ++c)
        for (int yy = 2; yy < 7; ++yy)
            for (int xx = 2; xx < 7; ++xx)
                CHECK(y.at4(0, c, yy, xx) == doctest::Approx(0.6).epsilon(1e-12));
    auto ref = shift_oracle(x, partition_channels(dict, 16), omega);
    CHECK(max_rel_err(y, ref) == doctest::Approx(0.0));
}

TEST_CASE("cts: blend linearity holds exactly") {
    Rng rng(63);
    auto x = Tensor<double>::randn({2, 12, 5, 5}, rng);
    auto dict = OffsetDictionary::cts();
    const double omega = 0.37;
    auto lhs = cts_shift(x, dict, omega);
    auto full = cts_shift(x, dict, 1.0);
    for (std::int64_t i = 0; i < x.numel(); ++i)
        CHECK(lhs[i] == omega * full[i] + (1.0 - omega) * x[i]);
}

TEST_CASE("cts: locality — a changed pixel reaches only itself and its shifted images") {
    auto dict = OffsetDictionary::cts();
    auto base = Tensor<double>::zeros({1, 12, 7, 7});
    auto y0 = cts_shift(base, dict, 0.5);
    auto bumped = base;
    const int py = 3, px = 3;
    for (int c = 0; c < 12; ++c) bumped.at4(0, c, py, px) = 1.0;
    auto y1 = cts_shift(bumped, dict, 0.5);
    auto spans = partition_channels(dict, 12);
    for (const auto& s : spans)
        for (std::int64_t c = s.start; c < s.start + s.count; ++c)
            for (int yy = 0; yy < 7; ++yy)
                for (int xx = 0; xx < 7; ++xx) {
                    double delta = std::abs(y1.at4(0, c, yy, xx) - y0.at4(0, c, yy, xx));
                    bool self = (yy == py && xx == px);
                    bool image = (yy == py + s.offset.dy && xx == px + s.offset.dx);
                    if (self || image)
                        CHECK(delta > 0.0);
                    else
                        CHECK(delta == 0.0);
                }
}

TEST_CASE("cts: shape preserved, and tiny maps fall back to zero-filled spans") {
    Rng rng(64);
    auto x = Tensor<double>::randn({1, 12, 1, 1}, rng);
    auto y = cts_shift(x, OffsetDictionary::cts(), 0.5);  // every offset leaves the map
    CHECK(y.same_shape(x));
    for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(y[i] == doctest::Approx(0.5 * x[i]));
}

TEST_CASE("baseline_shift: quad on C=8 gives four spans of two channels") {
    auto spans = partition_channels(OffsetDictionary::quad(), 8);
    REQUIRE(spans.size() == 4);
    for (const auto& s : spans) CHECK(s.count == 2);
}

TEST_CASE("baseline_shift: bi at omega=1 displaces a hot pixel right and left per half") {
    auto x = Tensor<double>::zeros({1, 4, 5, 5});
    for (int c = 0; c < 4; ++c) x.at4(0, c, 2, 2) = 1.0;
    auto y = baseline_shift(x, ShiftVariant::bi, 1.0);
    // first half: offset (0,1) puts the pixel at x=3; second half at x=1
    CHECK(y.at4(0, 0, 2, 3) == doctest::Approx(1.0));
    CHECK(y.at4(0, 1, 2, 3) == doctest::Approx(1.0));
    CHECK(y.at4(0, 2, 2, 1) == doctest::Approx(1.0));
    CHECK(y.at4(0, 3, 2, 1) == doctest::Approx(1.0));
    CHECK(y.at4(0, 0, 2, 2) == doctest::Approx(0.0));
}

TEST_CASE("baseline_shift: uni equals the independent oracle with one full-width span") {
    Rng rng(65);
    auto x = Tensor<double>::randn({2, 5, 6, 6}, rng);
    auto got = baseline_shift(x, ShiftVariant::uni, 0.8);
    std::vector<ChannelSpan> spans{{{0, 1}, 0, 5}};
    CHECK(max_rel_err(got, shift_oracle(x, spans, 0.8)) == doctest::Approx(0.0));
}

TEST_CASE("baseline_shift: every variant preserves shape") {
    Rng rng(66);
    auto x = Tensor<double>::randn({1, 16, 8, 8}, rng);
    for (auto v : {ShiftVariant::uni, ShiftVariant::bi, ShiftVariant::quad, ShiftVariant::cts,
                   ShiftVariant::cts_plus})
        CHECK(baseline_shift(x, v, 0.5).same_shape(x));
}

TEST_CASE("cts gradients: finite differences over input and omega") {
    Rng rng(67);
    auto x = Tensor<double>::randn({1, 12, 5, 5}, rng);
    auto dict = OffsetDictionary::cts();
    double omega = 0.42;
    auto r = Tensor<double>::randn(x.shape(), rng);
    auto grads = cts_shift_backward(x, dict, omega, r);
    std::vector<double*> slots;
    std::vector<double> analytic;
    collect_slots(x, slots);
    collect_grads(grads.gx, analytic);
    slots.push_back(&omega);
    analytic.push_back(grads.gomega);
    auto eval = [&] {
        auto y = cts_shift(x, dict, omega);
        double s = 0;
        for (std::int64_t i = 0; i < y.numel(); ++i) s += y[i] * r[i];
        return s;
    };
    CHECK(gradcheck_max_err(slots, analytic, eval) <= 1e-4);
}
