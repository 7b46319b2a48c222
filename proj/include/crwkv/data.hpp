#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "crwkv/fft.hpp"
#include "crwkv/png.hpp"
#include "crwkv/tensor.hpp"

namespace crwkv {

// ---- image <-> tensor ----------------------------------------------------- //

template <typename T>
Tensor<T> image_to_tensor(const Image& img) {
    Tensor<T> out({1, 3, img.h, img.w});
    for (std::int64_t y = 0; y < img.h; ++y)
        for (std::int64_t x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c) out.at4(0, c, y, x) = static_cast<T>(img.at(y, x, c));
    return out;
}

template <typename T>
Image tensor_to_image(const Tensor<T>& t, std::int64_t batch = 0) {
    Image img(t.size(2), t.size(3));
    for (std::int64_t y = 0; y < img.h; ++y)
        for (std::int64_t x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c) {
                float v = static_cast<float>(t.at4(batch, c, y, x));
                img.at(y, x, c) = std::min(1.0f, std::max(0.0f, v));
            }
    return img;
}

// ---- synthetic noise ------------------------------------------------------ //

struct NoiseSpec {
    enum class Kind { awgn, poisson, mixed };
    Kind kind = Kind::awgn;
    double sigma = 10.0;  // AWGN std on the 0..255 scale
    double peak = 255.0;  // Poisson photon-count scale

    static NoiseSpec from_string(const std::string& kind, double sigma, double peak) {
        NoiseSpec s;
        if (kind == "awgn")
            s.kind = Kind::awgn;
        else if (kind == "poisson")
            s.kind = Kind::poisson;
        else if (kind == "mixed")
            s.kind = Kind::mixed;
        else
            throw ConfigError("unknown noise kind '" + kind + "' (awgn|poisson|mixed)");
        if (sigma < 0) throw ConfigError("noise sigma must be >= 0");
        if (peak <= 0) throw ConfigError("noise peak must be > 0");
        s.sigma = sigma;
        s.peak = peak;
        return s;
    }
};

namespace detail_noise {

// Knuth's product method; lambda stays <= peak (a few hundred) here
inline std::int64_t sample_poisson(Rng& rng, double lambda) {
    if (lambda <= 0.0) return 0;
    const double limit = std::exp(-lambda);
    double prod = 1.0;
    std::int64_t n = -1;
    do {
        prod *= rng.uniform();
        ++n;
    } while (prod > limit);
    return n;
}

}  // namespace detail_noise

// Mixed order: Poisson first (signal dependent, sensor stage), then AWGN.
inline Image add_noise(const Image& clean, const NoiseSpec& spec, std::uint64_t seed) {
    Rng rng(seed);
    Image out = clean;
    const float inv255 = static_cast<float>(spec.sigma / 255.0);
    for (auto& v : out.px) {
        float y = v;
        if (spec.kind != NoiseSpec::Kind::awgn)
            y = static_cast<float>(
                detail_noise::sample_poisson(rng, static_cast<double>(y) * spec.peak) / spec.peak);
        if (spec.kind != NoiseSpec::Kind::poisson && spec.sigma > 0)
            y += inv255 * static_cast<float>(rng.normal());
        v = std::min(1.0f, std::max(0.0f, y));
    }
    return out;
}

// ---- patches and dihedral augmentation ------------------------------------ //

// non-overlapping grid crops, row-major, up to `count` (0 = no limit)
inline std::vector<Image> extract_patches(const Image& img, std::int64_t size,
                                          std::int64_t count = 0) {
    std::vector<Image> out;
    if (img.h < size || img.w < size) return out;  // caller warns
    for (std::int64_t y0 = 0; y0 + size <= img.h; y0 += size)
        for (std::int64_t x0 = 0; x0 + size <= img.w; x0 += size) {
            if (count > 0 && static_cast<std::int64_t>(out.size()) >= count) return out;
            Image p(size, size);
            for (std::int64_t y = 0; y < size; ++y)
                for (std::int64_t x = 0; x < size; ++x)
                    for (int c = 0; c < 3; ++c) p.at(y, x, c) = img.at(y0 + y, x0 + x, c);
            out.push_back(std::move(p));
        }
    return out;
}

// the 8 dihedral transforms: index = rot (0..3) + 4*flip(horizontal first)
inline Image dihedral(const Image& img, int which) {
    which &= 7;
    Image cur = img;
    if (which >= 4) {
        Image f(cur.h, cur.w);
        for (std::int64_t y = 0; y < cur.h; ++y)
            for (std::int64_t x = 0; x < cur.w; ++x)
                for (int c = 0; c < 3; ++c) f.at(y, x, c) = cur.at(y, cur.w - 1 - x, c);
        cur = std::move(f);
    }
    for (int r = 0; r < (which & 3); ++r) {
        Image rot(cur.w, cur.h);  // 90 degrees clockwise
        for (std::int64_t y = 0; y < cur.h; ++y)
            for (std::int64_t x = 0; x < cur.w; ++x)
                for (int c = 0; c < 3; ++c) rot.at(x, cur.h - 1 - y, c) = cur.at(y, x, c);
        cur = std::move(rot);
    }
    return cur;
}

// transform index whose application undoes dihedral(_, which); the four
// flip-containing elements are reflections and invert themselves
inline int dihedral_inverse(int which) {
    which &= 7;
    if (which < 4) return (4 - which) & 3;
    return which;
}

inline Image augment(const Image& patch, std::uint64_t seed) {
    Rng rng(seed);
    return dihedral(patch, static_cast<int>(rng.uniform_int(8)));
}

// ---- quality metrics ------------------------------------------------------ //

// PSNR on [0,1] data, capped at 100 dB for an essentially exact match
inline double psnr(const Image& a, const Image& b) {
    if (a.h != b.h || a.w != b.w) throw ShapeError("psnr: image sizes differ");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.px.size(); ++i) {
        const double d = static_cast<double>(a.px[i]) - b.px[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.px.size());
    if (mse < 1e-10) return 100.0;
    return 10.0 * std::log10(1.0 / mse);
}

namespace detail_ssim {

// separable 11x11 Gaussian window, sigma = 1.5 (standard SSIM settings)
inline const std::vector<double>& window() {
    static const std::vector<double> w = [] {
        std::vector<double> v(11);
        double sum = 0;
        for (int i = 0; i < 11; ++i) {
            v[static_cast<std::size_t>(i)] = std::exp(-(i - 5) * (i - 5) / (2.0 * 1.5 * 1.5));
            sum += v[static_cast<std::size_t>(i)];
        }
        for (auto& x : v) x /= sum;
        return v;
    }();
    return w;
}

inline void gaussian_filter_valid(const std::vector<double>& in, std::int64_t h, std::int64_t w,
                                  std::vector<double>& out) {
    const auto& win = window();
    std::vector<double> tmp(static_cast<std::size_t>(h * w), 0.0);
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 5; x < w - 5; ++x) {
            double acc = 0;
            for (int k = -5; k <= 5; ++k)
                acc += win[static_cast<std::size_t>(k + 5)] *
                       in[static_cast<std::size_t>(y * w + x + k)];
            tmp[static_cast<std::size_t>(y * w + x)] = acc;
        }
    const std::int64_t oh = h - 10, ow = w - 10;
    out.assign(static_cast<std::size_t>(oh * ow), 0.0);
    for (std::int64_t y = 5; y < h - 5; ++y)
        for (std::int64_t x = 5; x < w - 5; ++x) {
            double acc = 0;
            for (int k = -5; k <= 5; ++k)
                acc += win[static_cast<std::size_t>(k + 5)] *
                       tmp[static_cast<std::size_t>((y + k) * w + x)];
            out[static_cast<std::size_t>((y - 5) * ow + x - 5)] = acc;
        }
}

}  // namespace detail_ssim

// SSIM with the standard constants (K1=0.01, K2=0.03, L=1), 11x11 Gaussian
// window, valid region, averaged over the three channels.
inline double ssim(const Image& a, const Image& b) {
    if (a.h != b.h || a.w != b.w) throw ShapeError("ssim: image sizes differ");
    if (a.h < 11 || a.w < 11) throw ParamError("ssim needs images of at least 11x11");
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const std::int64_t h = a.h, w = a.w;
    double total = 0.0;
    for (int ch = 0; ch < 3; ++ch) {
        std::vector<double> pa(static_cast<std::size_t>(h * w)), pb(pa.size()), paa(pa.size()),
            pbb(pa.size()), pab(pa.size());
        for (std::int64_t i = 0; i < h * w; ++i) {
            const double va = a.px[static_cast<std::size_t>(i * 3 + ch)];
            const double vb = b.px[static_cast<std::size_t>(i * 3 + ch)];
            pa[static_cast<std::size_t>(i)] = va;
            pb[static_cast<std::size_t>(i)] = vb;
            paa[static_cast<std::size_t>(i)] = va * va;
            pbb[static_cast<std::size_t>(i)] = vb * vb;
            pab[static_cast<std::size_t>(i)] = va * vb;
        }
        std::vector<double> ma, mb, maa, mbb, mab;
        detail_ssim::gaussian_filter_valid(pa, h, w, ma);
        detail_ssim::gaussian_filter_valid(pb, h, w, mb);
        detail_ssim::gaussian_filter_valid(paa, h, w, maa);
        detail_ssim::gaussian_filter_valid(pbb, h, w, mbb);
        detail_ssim::gaussian_filter_valid(pab, h, w, mab);
        double acc = 0.0;
        for (std::size_t i = 0; i < ma.size(); ++i) {
            const double va = maa[i] - ma[i] * ma[i];
            const double vb = mbb[i] - mb[i] * mb[i];
            const double cov = mab[i] - ma[i] * mb[i];
            acc += (2 * ma[i] * mb[i] + c1) * (2 * cov + c2) /
                   ((ma[i] * ma[i] + mb[i] * mb[i] + c1) * (va + vb + c2));
        }
        total += acc / static_cast<double>(ma.size());
    }
    return total / 3.0;
}

// ---- radially averaged power spectrum (feature-map analyzer) -------------- //

struct SpectrumProfile {
    std::string layer;
    std::vector<double> log_amplitude;  // one entry per radial bin
    std::int64_t bins() const { return static_cast<std::int64_t>(log_amplitude.size()); }
};

// log10 of the channel-mean power per radial frequency bin, bins measured
// from the centered (fftshift) spectrum; floor keeps empty bins finite
template <typename T>
SpectrumProfile power_spectrum(const Tensor<T>& feat, const std::string& layer_tag = "") {
    if (feat.ndim() != 4) throw ShapeError("power_spectrum expects (B,C,H,W)");
    const std::int64_t h = feat.size(2), w = feat.size(3);
    const std::int64_t nbins = std::max<std::int64_t>(1, std::min(h, w) / 2);
    auto z = fft2d(feat);
    std::vector<double> power(static_cast<std::size_t>(nbins), 0.0);
    std::vector<std::int64_t> count(static_cast<std::size_t>(nbins), 0);
    const double cy = static_cast<double>(h) / 2.0, cx = static_cast<double>(w) / 2.0;
    for (std::int64_t b = 0; b < feat.size(0); ++b)
        for (std::int64_t c = 0; c < feat.size(1); ++c)
            for (std::int64_t y = 0; y < h; ++y)
                for (std::int64_t x = 0; x < w; ++x) {
                    // fftshift: frequency (y,x) maps to centered coordinates
                    const std::int64_t sy = (y + h / 2) % h;
                    const std::int64_t sx = (x + w / 2) % w;
                    const double dy = static_cast<double>(sy) - cy;
                    const double dx = static_cast<double>(sx) - cx;
                    const std::int64_t bin =
                        static_cast<std::int64_t>(std::floor(std::sqrt(dy * dy + dx * dx)));
                    if (bin >= nbins) continue;
                    const double re = z.re.at4(b, c, y, x), im = z.im.at4(b, c, y, x);
                    power[static_cast<std::size_t>(bin)] += re * re + im * im;
                    ++count[static_cast<std::size_t>(bin)];
                }
    SpectrumProfile out;
    out.layer = layer_tag;
    out.log_amplitude.resize(static_cast<std::size_t>(nbins));
    for (std::int64_t i = 0; i < nbins; ++i) {
        const double mean = count[static_cast<std::size_t>(i)]
                                ? power[static_cast<std::size_t>(i)] /
                                      static_cast<double>(count[static_cast<std::size_t>(i)])
                                : 0.0;
        out.log_amplitude[static_cast<std::size_t>(i)] = std::log10(std::max(mean, 1e-30));
    }
    return out;
}

}  // namespace crwkv
