#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "crwkv/checkpoint.hpp"
#include "crwkv/data.hpp"
#include "crwkv/model.hpp"

namespace crwkv {

// ---- losses ---------------------------------------------------------------- //

enum class LossKind { l1, charbonnier, mse, psnr };

inline LossKind loss_kind_from_string(const std::string& s) {
    if (s == "l1") return LossKind::l1;
    if (s == "charbonnier") return LossKind::charbonnier;
    if (s == "mse") return LossKind::mse;
    if (s == "psnr") return LossKind::psnr;
    throw ConfigError("unknown loss '" + s + "' (l1|charbonnier|mse|psnr)");
}

template <typename T>
struct LossResult {
    double value = 0.0;
    Tensor<T> grad;  // d value / d y
};

// All reductions are means over every element. The PSNR loss is
// 10*log10(mse + 1e-12); the epsilon keeps it differentiable at y == target.
template <typename T>
LossResult<T> compute_loss(LossKind kind, const Tensor<T>& y, const Tensor<T>& target,
                           double charb_eps = 1e-3) {
    if (!y.same_shape(target))
        throw ShapeError("loss: prediction " + y.shape_str() + " vs target " + target.shape_str());
    const double n = static_cast<double>(y.numel());
    LossResult<T> out;
    out.grad = Tensor<T>(y.shape());
    switch (kind) {
        case LossKind::l1: {
            double acc = 0;
            for (std::int64_t i = 0; i < y.numel(); ++i) {
                const double d = static_cast<double>(y[i]) - target[i];
                acc += std::abs(d);
                out.grad[i] = static_cast<T>((d > 0 ? 1.0 : d < 0 ? -1.0 : 0.0) / n);
            }
            out.value = acc / n;
            break;
        }
        case LossKind::charbonnier: {
            double acc = 0;
            for (std::int64_t i = 0; i < y.numel(); ++i) {
                const double d = static_cast<double>(y[i]) - target[i];
                const double r = std::sqrt(d * d + charb_eps * charb_eps);
                acc += r;
                out.grad[i] = static_cast<T>(d / (r * n));
            }
            out.value = acc / n;
            break;
        }
        case LossKind::mse: {
            double acc = 0;
            for (std::int64_t i = 0; i < y.numel(); ++i) {
                const double d = static_cast<double>(y[i]) - target[i];
                acc += d * d;
                out.grad[i] = static_cast<T>(2.0 * d / n);
            }
            out.value = acc / n;
            break;
        }
        case LossKind::psnr: {
            double mse = 0;
            for (std::int64_t i = 0; i < y.numel(); ++i) {
                const double d = static_cast<double>(y[i]) - target[i];
                mse += d * d;
            }
            mse /= n;
            const double floor = 1e-12;
            out.value = 10.0 * std::log10(mse + floor);
            const double scale = 10.0 / ((mse + floor) * std::log(10.0)) * 2.0 / n;
            for (std::int64_t i = 0; i < y.numel(); ++i)
                out.grad[i] = static_cast<T>(scale * (static_cast<double>(y[i]) - target[i]));
            break;
        }
    }
    return out;
}

// ---- AdamW ------------------------------------------------------------------ //

template <typename T>
class AdamW {
public:
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    explicit AdamW(const std::vector<Parameter<T>*>& params) : params_(params) {
        m_.reserve(params.size());
        v_.reserve(params.size());
        for (auto* p : params) {
            m_.emplace_back(p->value.shape());
            v_.emplace_back(p->value.shape());
        }
    }

    std::int64_t iteration() const { return t_; }
    void set_iteration(std::int64_t t) { t_ = t; }

    // decoupled weight decay, bias-corrected moments
    void step(double lr, double weight_decay) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
        for (std::size_t pi = 0; pi < params_.size(); ++pi) {
            Parameter<T>& p = *params_[pi];
            Tensor<T>& m = m_[pi];
            Tensor<T>& v = v_[pi];
            const double wd = p.decay ? weight_decay : 0.0;
            for (std::int64_t i = 0; i < p.value.numel(); ++i) {
                const double g = static_cast<double>(p.grad[i]);
                if (!std::isfinite(g))
                    throw ParamError("adamw: non-finite gradient in '" + p.name + "' at index " +
                                     std::to_string(i));
                const double mm = beta1 * m[i] + (1.0 - beta1) * g;
                const double vv = beta2 * v[i] + (1.0 - beta2) * g * g;
                m[i] = static_cast<T>(mm);
                v[i] = static_cast<T>(vv);
                const double update = (mm / bc1) / (std::sqrt(vv / bc2) + eps) + wd * p.value[i];
                p.value[i] = static_cast<T>(p.value[i] - lr * update);
            }
        }
    }

    // optimizer state as named tensors (checkpoint blobs)
    void snapshot(Checkpoint& ckpt) const {
        for (std::size_t pi = 0; pi < params_.size(); ++pi) {
            ckpt.tensors.emplace_back("opt.m." + params_[pi]->name, m_[pi].template cast<float>());
            ckpt.tensors.emplace_back("opt.v." + params_[pi]->name, v_[pi].template cast<float>());
        }
        ckpt.meta["opt_iteration"] = t_;
    }

    void restore(const Checkpoint& ckpt) {
        for (std::size_t pi = 0; pi < params_.size(); ++pi) {
            const Tensor<float>* m = ckpt.find("opt.m." + params_[pi]->name);
            const Tensor<float>* v = ckpt.find("opt.v." + params_[pi]->name);
            if (!m || !v)
                throw IoError("checkpoint lacks optimizer state for '" + params_[pi]->name + "'");
            m_[pi] = m->template cast<T>();
            v_[pi] = v->template cast<T>();
        }
        t_ = ckpt.meta.at("opt_iteration").get<std::int64_t>();
    }

private:
    std::vector<Parameter<T>*> params_;
    std::vector<Tensor<T>> m_, v_;
    std::int64_t t_ = 0;
};

// ---- learning-rate schedule -------------------------------------------------- //

// constant base until decay_start, then cosine decay to the floor at `total`;
// past `total` clamps to the floor
inline double lr_schedule(std::int64_t t, std::int64_t total = 288000, double base = 3e-4,
                          double floor = 1e-6, std::int64_t decay_start = 192000) {
    if (t < decay_start) return base;
    if (t >= total) return floor;
    const double progress =
        static_cast<double>(t - decay_start) / static_cast<double>(total - decay_start);
    const double pi = 3.14159265358979323846264338327950288;
    return floor + (base - floor) * 0.5 * (1.0 + std::cos(pi * progress));
}

// ---- training loop ------------------------------------------------------------ //

struct TrainConfig {
    std::int64_t iterations = 2000;
    std::int64_t batch = 4;
    std::int64_t patch = 128;
    double base_lr = 3e-4;
    double floor_lr = 1e-6;
    std::int64_t lr_total = 288000;
    std::int64_t lr_decay_start = 192000;
    double weight_decay = 1e-4;
    double clip_norm = 1.0;  // <= 0 disables clipping
    LossKind loss = LossKind::l1;
    double charb_eps = 1e-3;
    std::int64_t log_every = 50;
    std::int64_t checkpoint_every = 0;  // 0 = only at the end
    std::uint64_t seed = 7;
    std::string out_dir;
    bool augment = true;
};

struct PairedImages {
    std::vector<Image> clean;
    std::vector<Image> noisy;
};

struct TrainLogRow {
    std::int64_t iter;
    double lr, loss, psnr;
};

struct TrainReport {
    std::vector<TrainLogRow> log;
    std::int64_t final_iteration = 0;
};

inline std::string csv_header() { return "iter,lr,loss,psnr"; }

inline std::string csv_row(const TrainLogRow& r) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%lld,%.9g,%.9g,%.9g", static_cast<long long>(r.iter), r.lr,
                  r.loss, r.psnr);
    return buf;
}

// One seeded, strictly serial training loop: sample patch pairs, augment
// jointly, forward, loss, backward, clip, AdamW with the scheduled rate.
// `on_checkpoint` receives (iteration, rng) so the caller owns file naming.
template <typename T>
TrainReport train(CrwkvModel<T>& model, AdamW<T>& opt, const PairedImages& data,
                  const TrainConfig& cfg, Rng& rng,
                  const std::function<void(std::int64_t, Rng&)>& on_checkpoint = {}) {
    if (data.clean.empty() || data.clean.size() != data.noisy.size())
        throw ConfigError("train: dataset must hold matching clean/noisy images");
    model.set_train(true);
    auto params = model.parameters();
    TrainReport report;
    report.final_iteration = opt.iteration();

    for (std::int64_t it = opt.iteration(); it < cfg.iterations; ++it) {
        // assemble one batch of aligned patch pairs
        Tensor<T> noisy({cfg.batch, 3, cfg.patch, cfg.patch});
        Tensor<T> clean({cfg.batch, 3, cfg.patch, cfg.patch});
        for (std::int64_t bi = 0; bi < cfg.batch; ++bi) {
            const std::size_t idx = static_cast<std::size_t>(rng.uniform_int(
                static_cast<std::int64_t>(data.clean.size())));
            const Image& ic = data.clean[idx];
            const Image& in = data.noisy[idx];
            if (ic.h < cfg.patch || ic.w < cfg.patch)
                throw ConfigError("train: image smaller than patch size " +
                                  std::to_string(cfg.patch));
            const std::int64_t y0 = rng.uniform_int(ic.h - cfg.patch + 1);
            const std::int64_t x0 = rng.uniform_int(ic.w - cfg.patch + 1);
            const int aug = cfg.augment ? static_cast<int>(rng.uniform_int(8)) : 0;
            Image pc(cfg.patch, cfg.patch), pn(cfg.patch, cfg.patch);
            for (std::int64_t y = 0; y < cfg.patch; ++y)
                for (std::int64_t x = 0; x < cfg.patch; ++x)
                    for (int c = 0; c < 3; ++c) {
                        pc.at(y, x, c) = ic.at(y0 + y, x0 + x, c);
                        pn.at(y, x, c) = in.at(y0 + y, x0 + x, c);
                    }
            pc = dihedral(pc, aug);
            pn = dihedral(pn, aug);
            for (std::int64_t y = 0; y < cfg.patch; ++y)
                for (std::int64_t x = 0; x < cfg.patch; ++x)
                    for (int c = 0; c < 3; ++c) {
                        clean.at4(bi, c, y, x) = static_cast<T>(pc.at(y, x, c));
                        noisy.at4(bi, c, y, x) = static_cast<T>(pn.at(y, x, c));
                    }
        }

        model.zero_grads();
        auto pred = model.forward(noisy);
        auto loss = compute_loss(cfg.loss, pred, clean, cfg.charb_eps);
        model.backward(loss.grad);

        if (cfg.clip_norm > 0) {
            double sq = 0;
            for (auto* p : params)
                for (std::int64_t i = 0; i < p->grad.numel(); ++i)
                    sq += static_cast<double>(p->grad[i]) * p->grad[i];
            const double norm = std::sqrt(sq);
            if (norm > cfg.clip_norm) {
                const T scale = static_cast<T>(cfg.clip_norm / norm);
                for (auto* p : params) p->grad *= scale;
            }
        }

        const double lr =
            lr_schedule(it, cfg.lr_total, cfg.base_lr, cfg.floor_lr, cfg.lr_decay_start);
        opt.step(lr, cfg.weight_decay);

        if (cfg.log_every > 0 && (it % cfg.log_every == 0 || it + 1 == cfg.iterations)) {
            double mse = 0;
            for (std::int64_t i = 0; i < pred.numel(); ++i) {
                double v = std::min(1.0, std::max(0.0, static_cast<double>(pred[i])));
                double d = v - static_cast<double>(clean[i]);
                mse += d * d;
            }
            mse /= static_cast<double>(pred.numel());
            const double batch_psnr = mse < 1e-10 ? 100.0 : 10.0 * std::log10(1.0 / mse);
            report.log.push_back({it, lr, loss.value, batch_psnr});
        }
        if (on_checkpoint && cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0 &&
            it + 1 < cfg.iterations)
            on_checkpoint(it + 1, rng);
        report.final_iteration = it + 1;
    }
    if (on_checkpoint) on_checkpoint(report.final_iteration, rng);
    return report;
}

}  // namespace crwkv
