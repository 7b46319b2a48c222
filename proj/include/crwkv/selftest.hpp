#pragma once

#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "crwkv/blocks.hpp"
#include "crwkv/data.hpp"
#include "crwkv/gradcheck.hpp"
#include "crwkv/training.hpp"

namespace crwkv {

struct SelftestResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

namespace selftest_detail {

inline std::string fmt_err(const char* label, double err) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%s=%.3e", label, err);
    return buf;
}

inline double project(const Tensor<double>& out, const Tensor<double>& r) {
    double s = 0;
    for (std::int64_t i = 0; i < out.numel(); ++i) s += out[i] * r[i];
    return s;
}

}  // namespace selftest_detail

// Fast invariant suite shared by `crwkv selftest` and the acceptance harness.
// `inject_fault` corrupts a named implementation path inside the suite (a
// negative control proving the checks can fail); empty means no fault.
inline std::vector<SelftestResult> run_selftest(const std::string& filter = "",
                                                const std::string& inject_fault = "") {
    using selftest_detail::fmt_err;
    using selftest_detail::project;
    std::vector<SelftestResult> results;

    auto add = [&](const std::string& name, const std::function<SelftestResult()>& fn) {
        if (!filter.empty() && name.find(filter) == std::string::npos) return;
        SelftestResult r;
        try {
            r = fn();
        } catch (const std::exception& e) {
            r.pass = false;
            r.detail = std::string("exception: ") + e.what();
        }
        r.name = name;
        results.push_back(std::move(r));
    };

    add("wkv_scan_vs_reference", [&]() -> SelftestResult {
        Rng rng(201);
        double worst = 0;
        for (int n = 0; n < 40; ++n) {
            std::int64_t len = 1 + rng.uniform_int(48);
            std::int64_t c = 1 + rng.uniform_int(6);
            auto k = Tensor<double>::randn({1, len, c}, rng);
            auto v = Tensor<double>::randn({1, len, c}, rng);
            auto w = Tensor<double>::randn({c}, rng);
            auto u = Tensor<double>::randn({c}, rng);
            auto scan = biwkv_scan(k, v, w, u);
            if (inject_fault == "wkv_scan")
                for (std::int64_t i = 0; i < scan.numel(); ++i) scan[i] += 1e-3;
            worst = std::max(worst, max_rel_err(scan, biwkv_reference(k, v, w, u)));
        }
        return {"", worst <= 1e-10, fmt_err("max_rel_err", worst)};
    });

    add("wkv_reversal_equivariance", [&]() -> SelftestResult {
        Rng rng(202);
        double worst = 0;
        for (int n = 0; n < 20; ++n) {
            std::int64_t len = 1 + rng.uniform_int(48);
            auto k = Tensor<double>::randn({1, len, 2}, rng);
            auto v = Tensor<double>::randn({1, len, 2}, rng);
            auto w = Tensor<double>::randn({2}, rng);
            auto u = Tensor<double>::randn({2}, rng);
            auto rev = [&](const Tensor<double>& t) {
                Tensor<double> o(t.shape());
                for (std::int64_t tt = 0; tt < len; ++tt)
                    for (std::int64_t c = 0; c < 2; ++c)
                        o.at3(0, tt, c) = t.at3(0, len - 1 - tt, c);
                return o;
            };
            worst = std::max(worst, max_rel_err(biwkv_scan(rev(k), rev(v), w, u),
                                                rev(biwkv_scan(k, v, w, u))));
        }
        return {"", worst <= 1e-6, fmt_err("max_rel_err", worst)};
    });

    add("wkv_overflow_safety", [&]() -> SelftestResult {
        Rng rng(203);
        auto k = Tensor<double>::full({1, 64, 2}, 25.0);
        auto v = Tensor<double>::randn({1, 64, 2}, rng);
        Tensor<double> w({2}, {0.7, -0.7});
        Tensor<double> u({2}, {0.5, 0.5});
        auto y = biwkv_scan(k, v, w, u);
        const double err = max_rel_err(y, biwkv_reference(k, v, w, u));
        return {"", y.all_finite() && err <= 1e-10, fmt_err("max_rel_err", err)};
    });

    add("gradcheck_linear", [&]() -> SelftestResult {
        Rng rng(204);
        auto x = Tensor<double>::randn({1, 3, 3, 3}, rng);
        auto w = Tensor<double>::randn({3, 4}, rng);
        auto b = Tensor<double>::randn({4}, rng);
        auto r = Tensor<double>::randn({1, 4, 3, 3}, rng);
        auto grads = ops::linear_backward(x, w, r);
        std::vector<double*> slots;
        std::vector<double> analytic;
        collect_slots(x, slots);
        collect_grads(grads.gx, analytic);
        collect_slots(w, slots);
        collect_grads(grads.gw, analytic);
        const double err = gradcheck_max_err(
            slots, analytic, [&] { return project(ops::linear(x, w, b), r); });
        return {"", err <= 1e-4, fmt_err("max_rel_err", err)};
    });

    add("gradcheck_conv2d", [&]() -> SelftestResult {
        Rng rng(205);
        auto x = Tensor<double>::randn({1, 2, 5, 5}, rng);
        auto k = Tensor<double>::randn({2, 2, 3, 3}, rng);
        auto b = Tensor<double>::randn({2}, rng);
        auto probe = ops::conv2d(x, k, b, 1, 1);
        auto r = Tensor<double>::randn(probe.shape(), rng);
        auto grads = ops::conv2d_backward(x, k, r, 1, 1);
        std::vector<double*> slots;
        std::vector<double> analytic;
        collect_slots(x, slots);
        collect_grads(grads.gx, analytic);
        collect_slots(k, slots);
        collect_grads(grads.gk, analytic);
        const double err = gradcheck_max_err(
            slots, analytic, [&] { return project(ops::conv2d(x, k, b, 1, 1), r); });
        return {"", err <= 1e-4, fmt_err("max_rel_err", err)};
    });

    add("gradcheck_layer_norm", [&]() -> SelftestResult {
        Rng rng(206);
        auto x = Tensor<double>::randn({1, 6, 2, 2}, rng);
        auto gm = Tensor<double>::randn({6}, rng);
        auto bt = Tensor<double>::randn({6}, rng);
        auto r = Tensor<double>::randn(x.shape(), rng);
        auto grads = ops::layer_norm_backward(x, gm, 1e-5, r);
        std::vector<double*> slots;
        std::vector<double> analytic;
        collect_slots(x, slots);
        collect_grads(grads.gx, analytic);
        const double err = gradcheck_max_err(
            slots, analytic, [&] { return project(ops::layer_norm(x, gm, bt, 1e-5), r); });
        return {"", err <= 1e-4, fmt_err("max_rel_err", err)};
    });

    add("gradcheck_wkv", [&]() -> SelftestResult {
        Rng rng(207);
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
        const double err = gradcheck_max_err(slots, analytic, [&] {
            return project(biwkv_scan(k, v, w, u), r);
        });
        return {"", err <= 1e-4, fmt_err("max_rel_err", err)};
    });

    add("gradcheck_cts", [&]() -> SelftestResult {
        Rng rng(208);
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
        const double err = gradcheck_max_err(
            slots, analytic, [&] { return project(cts_shift(x, dict, omega), r); });
        return {"", err <= 1e-4, fmt_err("max_rel_err", err)};
    });

    add("gradcheck_blocks", [&]() -> SelftestResult {
        Rng rng(209);
        double worst = 0;
        for (auto kind : {CrbKind::fmix_type, CrbKind::crm_type}) {
            CrbBlock<double> blk("crb", kind, 3, 2, OffsetDictionary::cts(), rng);
            auto x = Tensor<double>::randn({1, 3, 4, 4}, rng);
            auto probe = blk.forward(x);
            auto r = Tensor<double>::randn(probe.shape(), rng);
            std::vector<Parameter<double>*> params;
            blk.collect_params(params);
            for (auto* p : params) p->zero_grad();
            blk.forward(x);
            auto gx = blk.backward(r);
            std::vector<double*> slots;
            std::vector<double> analytic;
            collect_slots(x, slots);
            collect_grads(gx, analytic);
            for (auto* p : params) {
                collect_slots(p->value, slots);
                collect_grads(p->grad, analytic);
            }
            worst = std::max(worst, gradcheck_max_err(slots, analytic, [&] {
                                 return project(blk.forward(x), r);
                             }));
        }
        return {"", worst <= 1e-4, fmt_err("max_rel_err", worst)};
    });

    add("fft_round_trip", [&]() -> SelftestResult {
        Rng rng(210);
        double worst = 0;
        for (auto hw : {std::pair<int, int>{8, 8}, {6, 10}, {5, 7}}) {
            auto x = Tensor<double>::randn({1, 2, hw.first, hw.second}, rng);
            worst = std::max(worst, max_rel_err(ifft2d(fft2d(x)), x));
        }
        return {"", worst <= 1e-6, fmt_err("max_rel_err", worst)};
    });

    add("fft_vs_naive_dft", [&]() -> SelftestResult {
        Rng rng(211);
        auto x = Tensor<double>::randn({1, 1, 4, 4}, rng);
        auto z = fft2d(x);
        const double pi = 3.14159265358979323846;
        double worst = 0;
        for (int p = 0; p < 4; ++p)
            for (int q = 0; q < 4; ++q) {
                double re = 0, im = 0;
                for (int m = 0; m < 4; ++m)
                    for (int n = 0; n < 4; ++n) {
                        double ang = -2.0 * pi * (p * m + q * n) / 4.0;
                        re += x.at4(0, 0, m, n) * std::cos(ang);
                        im += x.at4(0, 0, m, n) * std::sin(ang);
                    }
                worst = std::max({worst, rel_err(z.re.at4(0, 0, p, q), re),
                                  rel_err(z.im.at4(0, 0, p, q), im)});
            }
        return {"", worst <= 1e-6, fmt_err("max_rel_err", worst)};
    });

    add("fft_parseval", [&]() -> SelftestResult {
        Rng rng(212);
        auto x = Tensor<double>::randn({1, 2, 12, 6}, rng);
        auto z = fft2d(x);
        double spatial = 0, freq = 0;
        for (std::int64_t i = 0; i < x.numel(); ++i) spatial += x[i] * x[i];
        for (std::int64_t i = 0; i < x.numel(); ++i)
            freq += z.re[i] * z.re[i] + z.im[i] * z.im[i];
        const double err = std::abs(freq - 72.0 * spatial) / (72.0 * spatial);
        return {"", err <= 1e-5, fmt_err("rel_err", err)};
    });

    add("cts_partition", [&]() -> SelftestResult {
        auto spans = partition_channels(OffsetDictionary::cts(), 48);
        bool pass = spans.size() == 12;
        for (std::size_t i = 0; pass && i < spans.size(); ++i)
            pass = spans[i].count == (spans[i].offset.manhattan() == 1 ? 6 : 3);
        std::int64_t bad = -1;
        for (std::int64_t c = 1; c <= 256 && pass; ++c) {
            std::int64_t cursor = 0;
            for (const auto& s : partition_channels(OffsetDictionary::cts(), c)) {
                if (s.start != cursor || s.count < 0) pass = false;
                cursor += s.count;
            }
            if (cursor != c) {
                pass = false;
                bad = c;
            }
        }
        return {"", pass, pass ? "spans 6x4+3x8, cover 1..256" :
                                 "failed at C=" + std::to_string(bad)};
    });

    add("metric_oracles", [&]() -> SelftestResult {
        Image a(16, 16), b(16, 16);
        for (std::size_t i = 0; i < a.px.size(); ++i) {
            a.px[i] = 0.5f;
            b.px[i] = 0.5f + 1.0f / 255.0f;
        }
        const double p = psnr(a, b);
        const bool psnr_ok = std::abs(p - 48.130803608679) < 0.01;
        Rng rng(213);
        Image c(24, 24);
        for (auto& v : c.px) v = static_cast<float>(rng.uniform());
        const bool ssim_ok = ssim(c, c) == 1.0;
        char buf[96];
        std::snprintf(buf, sizeof(buf), "psnr=%.6f ssim_self=%s", p, ssim_ok ? "1.0" : "!=1");
        return {"", psnr_ok && ssim_ok, buf};
    });

    add("loss_gradients", [&]() -> SelftestResult {
        Rng rng(214);
        auto t = Tensor<double>::randn({1, 2, 3, 3}, rng, 0.2);
        auto y = t;
        for (std::int64_t i = 0; i < y.numel(); ++i)
            y[i] += (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.15, 0.5);
        double worst = 0;
        for (auto kind : {LossKind::l1, LossKind::charbonnier, LossKind::mse, LossKind::psnr}) {
            auto res = compute_loss(kind, y, t);
            std::vector<double*> slots;
            std::vector<double> analytic;
            collect_slots(y, slots);
            collect_grads(res.grad, analytic);
            worst = std::max(worst, gradcheck_max_err(slots, analytic, [&] {
                                 return compute_loss(kind, y, t).value;
                             }));
        }
        return {"", worst <= 1e-5, fmt_err("max_rel_err", worst)};
    });

    add("adamw_convergence", [&]() -> SelftestResult {
        Parameter<double> theta("theta", Tensor<double>::full({1}, 1.0));
        std::vector<Parameter<double>*> params{&theta};
        AdamW<double> opt(params);
        for (int i = 0; i < 500; ++i) {
            theta.grad[0] = 2.0 * theta.value[0];
            opt.step(0.1, 0.0);
        }
        const double v = std::abs(theta.value[0]);
        return {"", v < 1e-2, fmt_err("abs_theta", v)};
    });

    add("lr_schedule_endpoints", [&]() -> SelftestResult {
        const bool pass = lr_schedule(0) == 3e-4 && lr_schedule(288000) == 1e-6 &&
                          std::abs(lr_schedule(240000) - 1.505e-4) < 1e-7;
        return {"", pass, "lr(0)=3e-4 lr(288000)=1e-6"};
    });

    return results;
}

inline std::string selftest_csv(const std::vector<SelftestResult>& results) {
    std::string out = "check,status,detail\n";
    for (const auto& r : results) {
        std::string detail = r.detail;
        for (auto& ch : detail)
            if (ch == ',') ch = ';';
        out += r.name + "," + (r.pass ? "pass" : "fail") + "," + detail + "\n";
    }
    return out;
}

}  // namespace crwkv
