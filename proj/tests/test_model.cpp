#include <doctest.h>

#include <cstdio>

#include "crwkv/checkpoint.hpp"
#include "crwkv/gradcheck.hpp"
#include "crwkv/model.hpp"

using namespace crwkv;

namespace {

ModelConfig toy_config() {
    ModelConfig cfg;
    cfg.base_channels = 8;
    cfg.depths = {1, 1, 1, 1};
    cfg.splits = {{{0, 1}, {0, 1}, {0, 1}, {1, 0}}};
    cfg.expansion = 4;
    return cfg;
}

// hand tally of parameter-array sizes for one block column
std::int64_t linear_params(std::int64_t cin, std::int64_t cout) { return cin * cout + cout; }
std::int64_t conv_params(std::int64_t cin, std::int64_t cout, std::int64_t k) {
    return cout * cin * k * k + cout;
}
std::int64_t crm_params(std::int64_t c) {
    return 1 + 3 * linear_params(c, c) + 2 * c + 2 * c;  // omega, r/k/v, wkv w+u, norm
}
std::int64_t cmix_params(std::int64_t c, std::int64_t gamma) {
    return 2 + linear_params(c, c) + linear_params(c, gamma * c) + linear_params(gamma * c, c) +
           2 * c;
}
std::int64_t fmix_params(std::int64_t c) { return linear_params(2 * c, 2 * c) + 2 * c; }
std::int64_t crb_params(std::int64_t c, std::int64_t gamma, bool fmix) {
    return (fmix ? fmix_params(c) : crm_params(c)) + cmix_params(c, gamma) + 2 * (2 * c) + 2;
}

}  // namespace

TEST_CASE("model: default config parameter count sits near the published size") {
    CrwkvModel<float> model(ModelConfig{}, 1);
    std::vector<std::pair<std::string, std::int64_t>> breakdown;
    const std::int64_t count = model.count_parameters(&breakdown);
    MESSAGE("default parameter count: ", count);
    CHECK(count >= 15'100'000);
    CHECK(count <= 25'200'000);
    std::int64_t from_breakdown = 0;
    for (const auto& [name, n] : breakdown) from_breakdown += n;
    CHECK(from_breakdown == count);
    CHECK(breakdown.size() > 100);
}

TEST_CASE("model: invalid fmix split is rejected naming the stage") {
    ModelConfig cfg = toy_config();
    cfg.splits[1] = {2, 1};  // 2 + 1 != depth 1
    CHECK_THROWS_WITH_AS(CrwkvModel<float>(cfg, 1), doctest::Contains("stage 2"), ConfigError);
}

TEST_CASE("model: toy config builds and forwards a 16x16 image") {
    CrwkvModel<float> model(toy_config(), 3);
    Rng rng(90);
    auto x = Tensor<float>::randn({1, 3, 16, 16}, rng, 0.25);
    auto y = model.forward(x);
    CHECK(y.same_shape(x));
    CHECK(y.all_finite());
}

TEST_CASE("model: toy parameter count matches the hand tally") {
    CrwkvModel<float> model(toy_config(), 3);
    const std::int64_t c0 = 8, g = 4;
    std::int64_t expect = conv_params(3, c0, 3);  // input projection
    for (int k = 0; k < 3; ++k) {
        const std::int64_t c = c0 << k;
        expect += crb_params(c, g, false);     // encoder stage, crm kind
        expect += conv_params(c, 2 * c, 2);    // downsample
        expect += conv_params(2 * c, 4 * c, 1);  // upsample 1x1 (doubles channels)
        expect += conv_params(2 * c, c, 1);    // skip fuse
        expect += crb_params(c, g, false);     // decoder stage
    }
    expect += crb_params(c0 * 8, g, true);  // latent, fmix kind
    expect += conv_params(c0, 3, 3);        // output projection
    CHECK(model.count_parameters() == expect);
}

TEST_CASE("model: count is invariant across seeds") {
    CrwkvModel<float> a(toy_config(), 1), b(toy_config(), 999);
    CHECK(a.count_parameters() == b.count_parameters());
}

TEST_CASE("model: shape contract across divisible-by-8 sizes, including non-square") {
    CrwkvModel<float> model(toy_config(), 5);
    model.set_train(false);
    Rng rng(91);
    for (auto hw : {std::pair<int, int>{8, 8}, {16, 24}, {24, 16}, {40, 8}}) {
        auto x = Tensor<float>::randn({1, 3, hw.first, hw.second}, rng, 0.2);
        auto y = model.forward(x);
        CHECK(y.same_shape(x));
        CHECK(y.all_finite());
    }
}

TEST_CASE("model: non-divisible size raises a shape error") {
    CrwkvModel<float> model(toy_config(), 5);
    auto x = Tensor<float>::ones({1, 3, 12, 16});
    CHECK_THROWS_AS(model.forward(x), ShapeError);
}

TEST_CASE("model: all-zero parameters with global residual is the identity") {
    CrwkvModel<float> model(toy_config(), 6);
    for (auto* p : model.parameters()) p->value.fill(0.0f);
    Rng rng(92);
    auto x = Tensor<float>::randn({1, 3, 16, 16}, rng, 0.3);
    auto y = model.forward(x);
    for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("model: deterministic forward for a fixed seed, bit for bit") {
    Rng rng(93);
    auto x = Tensor<float>::randn({1, 3, 16, 16}, rng, 0.3);
    CrwkvModel<float> a(toy_config(), 42), b(toy_config(), 42);
    auto ya = a.forward(x);
    auto yb = b.forward(x);
    auto ya2 = a.forward(x);
    for (std::int64_t i = 0; i < ya.numel(); ++i) {
        CHECK(ya[i] == yb[i]);
        CHECK(ya[i] == ya2[i]);
    }
}

TEST_CASE("resampling: shape round trip (1,4,8,8) -> (1,8,4,4) -> back") {
    Rng rng(94);
    Downsample<double> down("d", 4, rng);
    Upsample<double> up("u", 8, rng);
    auto x = Tensor<double>::randn({1, 4, 8, 8}, rng);
    auto d = down.forward(x);
    CHECK(d.shape() == std::vector<std::int64_t>{1, 8, 4, 4});
    auto u = up.forward(d);
    CHECK(u.shape() == std::vector<std::int64_t>{1, 4, 8, 8});
    CHECK_THROWS_AS(down.forward(Tensor<double>::ones({1, 4, 7, 8})), ShapeError);
}

TEST_CASE("resampling: averaging-initialized downsample keeps constants constant") {
    Rng rng(95);
    Downsample<double> down("d", 3, rng);
    down.conv.weight.value.fill(0.0);
    down.conv.bias.value.fill(0.0);
    // each output channel averages the 2x2 patch of one input channel
    for (int o = 0; o < 6; ++o)
        for (int ky = 0; ky < 2; ++ky)
            for (int kx = 0; kx < 2; ++kx) down.conv.weight.value.at4(o, o % 3, ky, kx) = 0.25;
    auto y = down.forward(Tensor<double>::full({1, 3, 6, 6}, 1.6));
    for (std::int64_t i = 0; i < y.numel(); ++i) CHECK(y[i] == doctest::Approx(1.6));
}

TEST_CASE("resampling: gradient check through a down/up pair") {
    Rng rng(96);
    Downsample<double> down("d", 2, rng);
    Upsample<double> up("u", 4, rng);
    auto x = Tensor<double>::randn({1, 2, 4, 4}, rng);
    auto probe = up.forward(down.forward(x));
    auto r = Tensor<double>::randn(probe.shape(), rng);
    std::vector<Parameter<double>*> params;
    down.collect_params(params);
    up.collect_params(params);
    for (auto* p : params) p->zero_grad();
    up.forward(down.forward(x));
    auto gx = down.backward(up.backward(r));
    std::vector<double*> slots;
    std::vector<double> analytic;
    collect_slots(x, slots);
    collect_grads(gx, analytic);
    for (auto* p : params) {
        collect_slots(p->value, slots);
        collect_grads(p->grad, analytic);
    }
    auto eval = [&] {
        auto y = up.forward(down.forward(x));
        double s = 0;
        for (std::int64_t i = 0; i < y.numel(); ++i) s += y[i] * r[i];
        return s;
    };
    CHECK(gradcheck_max_err(slots, analytic, eval) <= 1e-4);
}

TEST_CASE("pixel_shuffle2: scatter/gather are mutual inverses") {
    Rng rng(97);
    auto x = Tensor<double>::randn({2, 8, 3, 5}, rng);
    auto y = pixel_shuffle2(x);
    CHECK(y.shape() == std::vector<std::int64_t>{2, 2, 6, 10});
    auto back = pixel_shuffle2_backward(y);
    CHECK(max_rel_err(back, x) == doctest::Approx(0.0));
}

TEST_CASE("skip_fuse: identity-on-first-half weights pass the decoder feature through") {
    Rng rng(98);
    SkipFuse<double> fuse("f", 3, rng);
    fuse.conv.weight.value.fill(0.0);
    fuse.conv.bias.value.fill(0.0);
    for (int o = 0; o < 3; ++o) fuse.conv.weight.value.at4(o, o, 0, 0) = 1.0;
    auto x = Tensor<double>::randn({1, 3, 4, 4}, rng);
    auto out = fuse.forward(x, Tensor<double>::zeros({1, 3, 4, 4}));
    CHECK(out.size(1) == 3);
    CHECK(max_rel_err(out, x) == doctest::Approx(0.0));
}

TEST_CASE("skip_fuse: gradient check") {
    Rng rng(99);
    SkipFuse<double> fuse("f", 2, rng);
    auto a = Tensor<double>::randn({1, 2, 3, 3}, rng);
    auto b = Tensor<double>::randn({1, 2, 3, 3}, rng);
    auto probe = fuse.forward(a, b);
    auto r = Tensor<double>::randn(probe.shape(), rng);
    std::vector<Parameter<double>*> params;
    fuse.collect_params(params);
    for (auto* p : params) p->zero_grad();
    fuse.forward(a, b);
    auto [ga, gb] = fuse.backward(r);
    std::vector<double*> slots;
    std::vector<double> analytic;
    collect_slots(a, slots);
    collect_grads(ga, analytic);
    collect_slots(b, slots);
    collect_grads(gb, analytic);
    for (auto* p : params) {
        collect_slots(p->value, slots);
        collect_grads(p->grad, analytic);
    }
    auto eval = [&] {
        auto y = fuse.forward(a, b);
        double s = 0;
        for (std::int64_t i = 0; i < y.numel(); ++i) s += y[i] * r[i];
        return s;
    };
    CHECK(gradcheck_max_err(slots, analytic, eval) <= 1e-4);
}

TEST_CASE("model: end-to-end sampled finite differences on the toy config (64-bit)") {
    ModelConfig cfg = toy_config();
    CrwkvModel<double> model(cfg, 11);
    Rng rng(100);
    auto x = Tensor<double>::randn({1, 3, 16, 16}, rng, 0.3);
    auto probe = model.forward(x);
    auto r = Tensor<double>::randn(probe.shape(), rng);
    model.zero_grads();
    model.forward(x);
    auto gx = model.backward(r);

    // sample a spread of coordinates: some input slots plus a few per array
    std::vector<double*> slots;
    std::vector<double> analytic;
    for (int n = 0; n < 10; ++n) {
        std::int64_t i = rng.uniform_int(x.numel());
        slots.push_back(&x[i]);
        analytic.push_back(gx[i]);
    }
    for (auto* p : model.parameters()) {
        const int samples = p->value.numel() < 3 ? static_cast<int>(p->value.numel()) : 3;
        for (int n = 0; n < samples; ++n) {
            std::int64_t i = rng.uniform_int(p->value.numel());
            slots.push_back(&p->value[i]);
            analytic.push_back(p->grad[i]);
        }
    }
    auto eval = [&] {
        auto y = model.forward(x);
        double s = 0;
        for (std::int64_t i = 0; i < y.numel(); ++i) s += y[i] * r[i];
        return s;
    };
    CHECK(gradcheck_max_err(slots, analytic, eval) <= 1e-3);
}

TEST_CASE("checkpoint: save -> load -> forward is bit-identical") {
    const std::string path = "roundtrip.ckpt";
    Rng rng(101);
    auto x = Tensor<float>::randn({1, 3, 16, 16}, rng, 0.3);
    CrwkvModel<float> model(toy_config(), 77);
    model.set_train(false);
    auto before = model.forward(x);
    Checkpoint ckpt;
    snapshot_model(model, ckpt);
    ckpt.meta["seed"] = 77;
    save_checkpoint(path, ckpt);

    auto loaded = load_checkpoint(path);
    CHECK(loaded.meta["seed"].get<int>() == 77);
    auto restored = model_from_checkpoint<float>(loaded);
    restored.set_train(false);
    auto after = restored.forward(x);
    for (std::int64_t i = 0; i < before.numel(); ++i) CHECK(before[i] == after[i]);
    std::remove(path.c_str());
}

TEST_CASE("checkpoint: config-hash mismatch is rejected") {
    CrwkvModel<float> model(toy_config(), 1);
    Checkpoint ckpt;
    snapshot_model(model, ckpt);
    ModelConfig other = toy_config();
    other.base_channels = 16;
    CrwkvModel<float> target(other, 1);
    CHECK_THROWS_AS(restore_model(target, ckpt), ConfigError);
}
