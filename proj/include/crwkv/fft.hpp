#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "crwkv/tensor.hpp"

namespace crwkv {
namespace fft {

using cplx = std::complex<double>;

namespace detail {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

// iterative radix-2, in place, n must be a power of two
inline void fft_pow2(std::vector<cplx>& a, bool inverse) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    const double pi = 3.14159265358979323846264338327950288;
    for (std::size_t len = 2; len <= n; len <<= 1) {
        double ang = 2.0 * pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
        cplx wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            cplx w(1.0, 0.0);
            for (std::size_t j = 0; j < len / 2; ++j) {
                cplx u = a[i + j];
                cplx v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wl;
            }
        }
    }
    if (inverse)
        for (auto& x : a) x /= static_cast<double>(n);
}

// Bluestein chirp-z for arbitrary n, expressed through a power-of-two convolution
inline void fft_bluestein(std::vector<cplx>& a, bool inverse) {
    const std::size_t n = a.size();
    const double pi = 3.14159265358979323846264338327950288;
    const double sign = inverse ? 1.0 : -1.0;
    std::vector<cplx> chirp(n);
    for (std::size_t i = 0; i < n; ++i) {
        // angle = pi * i^2 / n, computed mod 2n to keep the argument small
        std::uint64_t i2 = (static_cast<std::uint64_t>(i) * i) % (2 * n);
        double ang = sign * pi * static_cast<double>(i2) / static_cast<double>(n);
        chirp[i] = cplx(std::cos(ang), std::sin(ang));
    }
    const std::size_t m = next_pow2(2 * n - 1);
    std::vector<cplx> fa(m, cplx(0, 0)), fb(m, cplx(0, 0));
    for (std::size_t i = 0; i < n; ++i) fa[i] = a[i] * chirp[i];
    fb[0] = std::conj(chirp[0]);
    for (std::size_t i = 1; i < n; ++i) fb[i] = fb[m - i] = std::conj(chirp[i]);
    fft_pow2(fa, false);
    fft_pow2(fb, false);
    for (std::size_t i = 0; i < m; ++i) fa[i] *= fb[i];
    fft_pow2(fa, true);
    for (std::size_t i = 0; i < n; ++i) a[i] = fa[i] * chirp[i];
    if (inverse)
        for (auto& x : a) x /= static_cast<double>(n);
}

}  // namespace detail

// unnormalized forward / (1/n)-scaled inverse, any n >= 1
inline void transform(std::vector<cplx>& a, bool inverse) {
    if (a.size() <= 1) return;
    if (detail::is_pow2(a.size()))
        detail::fft_pow2(a, inverse);
    else
        detail::fft_bluestein(a, inverse);
}

// 2-D transform of one H x W plane held as separate re/im arrays (row-major).
// Internals run in double regardless of T.
template <typename T>
void transform_plane(const T* re_in, const T* im_in, T* re_out, T* im_out, std::int64_t h,
                     std::int64_t w, bool inverse) {
    std::vector<cplx> plane(static_cast<std::size_t>(h * w));
    for (std::int64_t i = 0; i < h * w; ++i)
        plane[static_cast<std::size_t>(i)] =
            cplx(static_cast<double>(re_in[i]), im_in ? static_cast<double>(im_in[i]) : 0.0);

    std::vector<cplx> line(static_cast<std::size_t>(std::max(h, w)));
    for (std::int64_t y = 0; y < h; ++y) {
        line.assign(plane.begin() + y * w, plane.begin() + (y + 1) * w);
        transform(line, inverse);
        std::copy(line.begin(), line.end(), plane.begin() + y * w);
    }
    line.resize(static_cast<std::size_t>(h));
    for (std::int64_t x = 0; x < w; ++x) {
        for (std::int64_t y = 0; y < h; ++y) line[static_cast<std::size_t>(y)] = plane[static_cast<std::size_t>(y * w + x)];
        transform(line, inverse);
        for (std::int64_t y = 0; y < h; ++y) plane[static_cast<std::size_t>(y * w + x)] = line[static_cast<std::size_t>(y)];
    }
    for (std::int64_t i = 0; i < h * w; ++i) {
        re_out[i] = static_cast<T>(plane[static_cast<std::size_t>(i)].real());
        if (im_out) im_out[i] = static_cast<T>(plane[static_cast<std::size_t>(i)].imag());
    }
}

}  // namespace fft

// Forward 2-D DFT over the spatial axes of every (batch, channel) plane.
// Convention: unnormalized forward, 1/(H*W) inverse.
template <typename T>
ComplexMap<T> fft2d(const Tensor<T>& x) {
    if (x.ndim() != 4) throw ShapeError("fft2d expects (B,C,H,W), got " + x.shape_str());
    const std::int64_t planes = x.size(0) * x.size(1);
    const std::int64_t h = x.size(2), w = x.size(3);
    ComplexMap<T> out{Tensor<T>(x.shape()), Tensor<T>(x.shape())};
    parallel_for(planes, [&](std::int64_t p) {
        const std::int64_t off = p * h * w;
        fft::transform_plane<T>(x.data() + off, nullptr, out.re.data() + off, out.im.data() + off,
                                h, w, false);
    });
    return out;
}

// complex-to-complex variant (used by gradients)
template <typename T>
ComplexMap<T> fft2d_complex(const ComplexMap<T>& z, bool inverse) {
    const std::int64_t planes = z.re.size(0) * z.re.size(1);
    const std::int64_t h = z.re.size(2), w = z.re.size(3);
    ComplexMap<T> out{Tensor<T>(z.re.shape()), Tensor<T>(z.re.shape())};
    parallel_for(planes, [&](std::int64_t p) {
        const std::int64_t off = p * h * w;
        fft::transform_plane<T>(z.re.data() + off, z.im.data() + off, out.re.data() + off,
                                out.im.data() + off, h, w, inverse);
    });
    return out;
}

// Inverse transform; returns the real part. The largest |imaginary| residue is
// reported through max_imag when supplied.
template <typename T>
Tensor<T> ifft2d(const ComplexMap<T>& z, T* max_imag = nullptr) {
    if (z.re.ndim() != 4 || !z.re.same_shape(z.im))
        throw ShapeError("ifft2d expects matching 4-d re/im parts");
    ComplexMap<T> full = fft2d_complex(z, true);
    if (max_imag) *max_imag = full.im.max_abs();
    return full.re;
}

}  // namespace crwkv
