#pragma once

#include <array>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "crwkv/blocks.hpp"
#include "crwkv/config.hpp"

namespace crwkv {

struct StageSplit {
    std::int64_t fmix = 0;  // a_k, placed first within the stage
    std::int64_t crm = 0;   // b_k
};

struct ModelConfig {
    std::int64_t base_channels = 48;
    std::array<std::int64_t, 4> depths{3, 4, 4, 6};
    std::array<StageSplit, 4> splits{{{0, 3}, {0, 4}, {0, 4}, {6, 0}}};
    ShiftVariant shift = ShiftVariant::cts;
    std::int64_t expansion = 4;
    std::int64_t in_channels = 3;
    bool global_residual = true;

    void validate() const {
        if (base_channels < 1) throw ConfigError("base_channels must be >= 1");
        if (expansion < 1) throw ConfigError("expansion must be >= 1");
        if (in_channels < 1) throw ConfigError("in_channels must be >= 1");
        for (int k = 0; k < 4; ++k) {
            if (depths[static_cast<std::size_t>(k)] < 1)
                throw ConfigError("stage " + std::to_string(k + 1) + ": depth must be >= 1");
            const auto& s = splits[static_cast<std::size_t>(k)];
            if (s.fmix < 0 || s.crm < 0 || s.fmix + s.crm != depths[static_cast<std::size_t>(k)])
                throw ConfigError("stage " + std::to_string(k + 1) + ": fmix_split " +
                                  std::to_string(s.fmix) + "/" + std::to_string(s.crm) +
                                  " must be non-negative and sum to depth " +
                                  std::to_string(depths[static_cast<std::size_t>(k)]));
        }
    }

    static ModelConfig from_config(const KvConfig& cfg) {
        ModelConfig m;
        m.base_channels = cfg.get_int("base_channels", m.base_channels);
        auto depths = cfg.get_int_list("depths", {m.depths[0], m.depths[1], m.depths[2], m.depths[3]});
        if (depths.size() != 4) throw ConfigError("depths: expected 4 comma-separated values");
        for (int k = 0; k < 4; ++k) m.depths[static_cast<std::size_t>(k)] = depths[static_cast<std::size_t>(k)];
        // default split: CRM everywhere except an all-FMix latent stage
        m.splits = {{{0, m.depths[0]}, {0, m.depths[1]}, {0, m.depths[2]}, {m.depths[3], 0}}};
        if (cfg.has("fmix_split")) {
            std::istringstream in(cfg.require_str("fmix_split"));
            std::string tok;
            int k = 0;
            while (std::getline(in, tok, ',')) {
                if (k >= 4) throw ConfigError("fmix_split: expected 4 a/b pairs");
                auto slash = tok.find('/');
                if (slash == std::string::npos)
                    throw ConfigError("fmix_split: expected a/b pairs, got '" + tok + "'");
                m.splits[static_cast<std::size_t>(k)].fmix = std::stoll(tok.substr(0, slash));
                m.splits[static_cast<std::size_t>(k)].crm = std::stoll(tok.substr(slash + 1));
                ++k;
            }
            if (k != 4) throw ConfigError("fmix_split: expected 4 a/b pairs");
        }
        m.shift = shift_variant_from_string(cfg.get_str("shift", "cts"));
        m.expansion = cfg.get_int("expansion", m.expansion);
        m.in_channels = cfg.get_int("in_channels", m.in_channels);
        m.global_residual = cfg.get_bool("global_residual", m.global_residual);
        m.validate();
        return m;
    }

    void to_config(KvConfig& cfg) const {
        cfg.set("base_channels", std::to_string(base_channels));
        std::ostringstream d, s;
        for (int k = 0; k < 4; ++k) {
            d << (k ? "," : "") << depths[static_cast<std::size_t>(k)];
            s << (k ? "," : "") << splits[static_cast<std::size_t>(k)].fmix << "/"
              << splits[static_cast<std::size_t>(k)].crm;
        }
        cfg.set("depths", d.str());
        cfg.set("fmix_split", s.str());
        cfg.set("shift", shift_variant_name(shift));
        cfg.set("expansion", std::to_string(expansion));
        cfg.set("in_channels", std::to_string(in_channels));
        cfg.set("global_residual", global_residual ? "true" : "false");
    }

    std::string canonical() const {
        KvConfig cfg;
        to_config(cfg);
        return cfg.canonical();
    }

    std::uint64_t hash() const { return config_hash(canonical()); }
};

// ---- resampling ----------------------------------------------------------- //

// (B, 4C, H, W) -> (B, C, 2H, 2W); out[b][c][2y+dy][2x+dx] = in[b][4c+2dy+dx][y][x]
template <typename T>
Tensor<T> pixel_shuffle2(const Tensor<T>& x) {
    const std::int64_t b = x.size(0), c4 = x.size(1), h = x.size(2), w = x.size(3);
    if (c4 % 4 != 0) throw ShapeError("pixel_shuffle2: channels must be divisible by 4");
    const std::int64_t c = c4 / 4;
    Tensor<T> out({b, c, 2 * h, 2 * w});
    for (std::int64_t bi = 0; bi < b; ++bi)
        for (std::int64_t ci = 0; ci < c; ++ci)
            for (std::int64_t y = 0; y < h; ++y)
                for (std::int64_t x2 = 0; x2 < w; ++x2)
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx)
                            out.at4(bi, ci, 2 * y + dy, 2 * x2 + dx) =
                                x.at4(bi, ci * 4 + dy * 2 + dx, y, x2);
    return out;
}

template <typename T>
Tensor<T> pixel_shuffle2_backward(const Tensor<T>& g) {
    const std::int64_t b = g.size(0), c = g.size(1), h2 = g.size(2), w2 = g.size(3);
    Tensor<T> out({b, c * 4, h2 / 2, w2 / 2});
    for (std::int64_t bi = 0; bi < b; ++bi)
        for (std::int64_t ci = 0; ci < c; ++ci)
            for (std::int64_t y = 0; y < h2 / 2; ++y)
                for (std::int64_t x2 = 0; x2 < w2 / 2; ++x2)
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx)
                            out.at4(bi, ci * 4 + dy * 2 + dx, y, x2) =
                                g.at4(bi, ci, 2 * y + dy, 2 * x2 + dx);
    return out;
}

// 2x2 stride-2 convolution doubling channels
template <typename T>
class Downsample {
public:
    Downsample(const std::string& name, std::int64_t c, Rng& rng)
        : conv(name + ".conv", c, 2 * c, 2, 2, 0, rng) {}

    Tensor<T> forward(const Tensor<T>& x) {
        if (x.size(2) % 2 != 0 || x.size(3) % 2 != 0)
            throw ShapeError("downsample needs even spatial dims, got " + x.shape_str());
        return conv.forward(x);
    }
    Tensor<T> backward(const Tensor<T>& g) { return conv.backward(g); }
    void collect_params(std::vector<Parameter<T>*>& out) { conv.collect_params(out); }
    void set_train(bool m) { conv.set_train(m); }

    Conv2dLayer<T> conv;
};

// channel-doubling 1x1 convolution followed by pixel shuffle: halves channels,
// doubles the spatial size
template <typename T>
class Upsample {
public:
    Upsample(const std::string& name, std::int64_t c, Rng& rng)
        : conv(name + ".conv", c, 2 * c, 1, 1, 0, rng) {}

    Tensor<T> forward(const Tensor<T>& x) { return pixel_shuffle2(conv.forward(x)); }
    Tensor<T> backward(const Tensor<T>& g) { return conv.backward(pixel_shuffle2_backward(g)); }
    void collect_params(std::vector<Parameter<T>*>& out) { conv.collect_params(out); }
    void set_train(bool m) { conv.set_train(m); }

    Conv2dLayer<T> conv;
};

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.size(0) != b.size(0) || a.size(2) != b.size(2) || a.size(3) != b.size(3))
        throw ShapeError("concat_channels: " + a.shape_str() + " vs " + b.shape_str());
    const std::int64_t bs = a.size(0), ca = a.size(1), cb = b.size(1);
    const std::int64_t hw = a.size(2) * a.size(3);
    Tensor<T> out({bs, ca + cb, a.size(2), a.size(3)});
    for (std::int64_t bi = 0; bi < bs; ++bi) {
        std::copy(a.data() + bi * ca * hw, a.data() + (bi + 1) * ca * hw,
                  out.data() + bi * (ca + cb) * hw);
        std::copy(b.data() + bi * cb * hw, b.data() + (bi + 1) * cb * hw,
                  out.data() + bi * (ca + cb) * hw + ca * hw);
    }
    return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& x, std::int64_t ca) {
    const std::int64_t bs = x.size(0), c = x.size(1), cb = c - ca;
    const std::int64_t hw = x.size(2) * x.size(3);
    Tensor<T> a({bs, ca, x.size(2), x.size(3)}), b({bs, cb, x.size(2), x.size(3)});
    for (std::int64_t bi = 0; bi < bs; ++bi) {
        std::copy(x.data() + bi * c * hw, x.data() + bi * c * hw + ca * hw,
                  a.data() + bi * ca * hw);
        std::copy(x.data() + bi * c * hw + ca * hw, x.data() + (bi + 1) * c * hw,
                  b.data() + bi * cb * hw);
    }
    return {std::move(a), std::move(b)};
}

// concatenate the long-skip encoder feature, then project back to decoder width
template <typename T>
class SkipFuse {
public:
    SkipFuse(const std::string& name, std::int64_t c, Rng& rng)
        : conv(name + ".conv", 2 * c, c, 1, 1, 0, rng), width_(c) {}

    Tensor<T> forward(const Tensor<T>& decoder_feat, const Tensor<T>& encoder_feat) {
        if (!decoder_feat.same_shape(encoder_feat))
            throw ShapeError("skip_fuse: " + decoder_feat.shape_str() + " vs " +
                             encoder_feat.shape_str());
        return conv.forward(concat_channels(decoder_feat, encoder_feat));
    }
    // returns (grad wrt decoder feature, grad wrt encoder feature)
    std::pair<Tensor<T>, Tensor<T>> backward(const Tensor<T>& g) {
        return split_channels(conv.backward(g), width_);
    }
    void collect_params(std::vector<Parameter<T>*>& out) { conv.collect_params(out); }
    void set_train(bool m) { conv.set_train(m); }

    Conv2dLayer<T> conv;

private:
    std::int64_t width_;
};

// ---- the full U-shaped model ---------------------------------------------- //

template <typename T>
class CrwkvModel {
public:
    CrwkvModel(const ModelConfig& config, std::uint64_t seed) : cfg_(config) {
        cfg_.validate();
        Rng rng(seed);
        const auto dict = OffsetDictionary::for_variant(cfg_.shift);
        const std::int64_t c0 = cfg_.base_channels;

        conv_in = std::make_unique<Conv2dLayer<T>>("conv_in", cfg_.in_channels, c0, 3, 1, 1, rng);
        for (int k = 0; k < 3; ++k) {
            const std::int64_t c = c0 << k;
            enc[static_cast<std::size_t>(k)] =
                make_stage("enc" + std::to_string(k + 1), k, c, dict, rng);
            down[static_cast<std::size_t>(k)] =
                std::make_unique<Downsample<T>>("down" + std::to_string(k + 1), c, rng);
        }
        latent = make_stage("latent", 3, c0 << 3, dict, rng);
        for (int k = 2; k >= 0; --k) {
            const std::int64_t c = c0 << k;
            up[static_cast<std::size_t>(k)] =
                std::make_unique<Upsample<T>>("up" + std::to_string(k + 1), 2 * c, rng);
            fuse[static_cast<std::size_t>(k)] =
                std::make_unique<SkipFuse<T>>("fuse" + std::to_string(k + 1), c, rng);
            dec[static_cast<std::size_t>(k)] =
                make_stage("dec" + std::to_string(k + 1), k, c, dict, rng);
        }
        conv_out = std::make_unique<Conv2dLayer<T>>("conv_out", c0, cfg_.in_channels, 3, 1, 1, rng);
    }

    const ModelConfig& config() const { return cfg_; }

    // stage outputs by tag, captured during forward when requested (spectrum hooks)
    struct TapPoint {
        std::string tag;
        Tensor<T> feat;
    };

    Tensor<T> forward(const Tensor<T>& x, std::vector<TapPoint>* taps = nullptr) {
        if (x.ndim() != 4 || x.size(1) != cfg_.in_channels)
            throw ShapeError("model forward expects (B," + std::to_string(cfg_.in_channels) +
                             ",H,W), got " + x.shape_str());
        if (x.size(2) % 8 != 0 || x.size(3) % 8 != 0)
            throw ShapeError("model forward needs H and W divisible by 8, got " + x.shape_str());

        auto tap = [&](const char* tag, const Tensor<T>& f) {
            if (taps) taps->push_back({tag, f});
        };

        auto f = conv_in->forward(x);
        tap("input_proj", f);
        std::array<Tensor<T>, 3> enc_out;
        for (int k = 0; k < 3; ++k) {
            for (auto& blk : enc[static_cast<std::size_t>(k)]) f = blk->forward(f);
            enc_out[static_cast<std::size_t>(k)] = f;
            tap(("enc" + std::to_string(k + 1)).c_str(), f);
            f = down[static_cast<std::size_t>(k)]->forward(f);
        }
        for (auto& blk : latent) f = blk->forward(f);
        tap("latent", f);
        for (int k = 2; k >= 0; --k) {
            f = up[static_cast<std::size_t>(k)]->forward(f);
            f = fuse[static_cast<std::size_t>(k)]->forward(f, enc_out[static_cast<std::size_t>(k)]);
            for (auto& blk : dec[static_cast<std::size_t>(k)]) f = blk->forward(f);
            tap(("dec" + std::to_string(k + 1)).c_str(), f);
        }
        auto out = conv_out->forward(f);
        if (cfg_.global_residual) out += x;
        return out;
    }

    // upstream is d(loss)/d(output); returns d(loss)/d(input)
    Tensor<T> backward(const Tensor<T>& g) {
        std::array<Tensor<T>, 3> skip_grads;
        auto gf = conv_out->backward(g);
        for (int k = 0; k < 3; ++k) {
            for (auto it = dec[static_cast<std::size_t>(k)].rbegin();
                 it != dec[static_cast<std::size_t>(k)].rend(); ++it)
                gf = (*it)->backward(gf);
            auto [gdec, genc] = fuse[static_cast<std::size_t>(k)]->backward(gf);
            skip_grads[static_cast<std::size_t>(k)] = std::move(genc);
            gf = up[static_cast<std::size_t>(k)]->backward(gdec);
        }
        for (auto it = latent.rbegin(); it != latent.rend(); ++it) gf = (*it)->backward(gf);
        for (int k = 2; k >= 0; --k) {
            gf = down[static_cast<std::size_t>(k)]->backward(gf);
            gf += skip_grads[static_cast<std::size_t>(k)];
            for (auto it = enc[static_cast<std::size_t>(k)].rbegin();
                 it != enc[static_cast<std::size_t>(k)].rend(); ++it)
                gf = (*it)->backward(gf);
        }
        auto gx = conv_in->backward(gf);
        if (cfg_.global_residual) gx += g;
        return gx;
    }

    void collect_params(std::vector<Parameter<T>*>& out) {
        conv_in->collect_params(out);
        for (int k = 0; k < 3; ++k) {
            for (auto& blk : enc[static_cast<std::size_t>(k)]) blk->collect_params(out);
            down[static_cast<std::size_t>(k)]->collect_params(out);
        }
        for (auto& blk : latent) blk->collect_params(out);
        for (int k = 2; k >= 0; --k) {
            up[static_cast<std::size_t>(k)]->collect_params(out);
            fuse[static_cast<std::size_t>(k)]->collect_params(out);
            for (auto& blk : dec[static_cast<std::size_t>(k)]) blk->collect_params(out);
        }
        conv_out->collect_params(out);
    }

    std::vector<Parameter<T>*> parameters() {
        std::vector<Parameter<T>*> out;
        collect_params(out);
        return out;
    }

    void set_train(bool m) {
        train_ = m;
        conv_in->set_train(m);
        for (int k = 0; k < 3; ++k) {
            for (auto& blk : enc[static_cast<std::size_t>(k)]) blk->set_train(m);
            down[static_cast<std::size_t>(k)]->set_train(m);
            up[static_cast<std::size_t>(k)]->set_train(m);
            fuse[static_cast<std::size_t>(k)]->set_train(m);
            for (auto& blk : dec[static_cast<std::size_t>(k)]) blk->set_train(m);
        }
        for (auto& blk : latent) blk->set_train(m);
        conv_out->set_train(m);
    }

    void zero_grads() {
        for (auto* p : parameters()) p->zero_grad();
    }

    std::int64_t count_parameters(std::vector<std::pair<std::string, std::int64_t>>* breakdown = nullptr) {
        std::int64_t total = 0;
        for (auto* p : parameters()) {
            total += p->value.numel();
            if (breakdown) breakdown->emplace_back(p->name, p->value.numel());
        }
        return total;
    }

    std::unique_ptr<Conv2dLayer<T>> conv_in, conv_out;
    std::array<std::vector<std::unique_ptr<CrbBlock<T>>>, 3> enc, dec;
    std::array<std::unique_ptr<Downsample<T>>, 3> down;
    std::array<std::unique_ptr<Upsample<T>>, 3> up;
    std::array<std::unique_ptr<SkipFuse<T>>, 3> fuse;
    std::vector<std::unique_ptr<CrbBlock<T>>> latent;

private:
    std::vector<std::unique_ptr<CrbBlock<T>>> make_stage(const std::string& name, int k,
                                                         std::int64_t c,
                                                         const OffsetDictionary& dict, Rng& rng) {
        const auto& split = cfg_.splits[static_cast<std::size_t>(k)];
        std::vector<std::unique_ptr<CrbBlock<T>>> stage;
        for (std::int64_t i = 0; i < split.fmix + split.crm; ++i) {
            const CrbKind kind = i < split.fmix ? CrbKind::fmix_type : CrbKind::crm_type;
            stage.push_back(std::make_unique<CrbBlock<T>>(name + ".b" + std::to_string(i), kind, c,
                                                          cfg_.expansion, dict, rng));
        }
        return stage;
    }

    ModelConfig cfg_;
    bool train_ = true;
};

}  // namespace crwkv
