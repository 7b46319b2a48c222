#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "crwkv/tensor.hpp"

namespace crwkv {

// Named learnable array plus its gradient accumulator.
template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    bool decay = true;  // excluded for norm affines and WKV w/u

    Parameter() = default;
    Parameter(std::string n, Tensor<T> v, bool d = true)
        : name(std::move(n)), value(std::move(v)), grad(value.shape()), decay(d) {}

    void zero_grad() { grad.fill(T{0}); }
};

namespace ops {

// --- linear: per-position affine map over the channel axis --------------- //
// x: (B, C_in, H, W), weight: (C_in, C_out), bias: (C_out)

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    if (x.ndim() != 4) throw ShapeError("linear expects (B,C,H,W), got " + x.shape_str());
    const std::int64_t cin = weight.size(0), cout = weight.size(1);
    if (x.size(1) != cin)
        throw ShapeError("linear: input channels " + x.shape_str() + " vs weight " +
                         weight.shape_str());
    if (bias.numel() != cout)
        throw ShapeError("linear: bias " + bias.shape_str() + " vs weight " + weight.shape_str());
    const std::int64_t b = x.size(0), hw = x.size(2) * x.size(3);
    Tensor<T> out({b, cout, x.size(2), x.size(3)});
    parallel_for(b, [&](std::int64_t bi) {
        const T* xb = x.data() + bi * cin * hw;
        T* ob = out.data() + bi * cout * hw;
        for (std::int64_t co = 0; co < cout; ++co) {
            T bv = bias[co];
            T* orow = ob + co * hw;
            for (std::int64_t p = 0; p < hw; ++p) orow[p] = bv;
        }
        for (std::int64_t ci = 0; ci < cin; ++ci) {
            const T* xrow = xb + ci * hw;
            for (std::int64_t co = 0; co < cout; ++co) {
                const T wv = weight.at2(ci, co);
                T* orow = ob + co * hw;
                for (std::int64_t p = 0; p < hw; ++p) orow[p] += wv * xrow[p];
            }
        }
    });
    return out;
}

template <typename T>
struct LinearGrads {
    Tensor<T> gx, gw, gb;
};

namespace detail {

// dot product with four independent accumulator chains; fixed summation order
// keeps results deterministic while letting the compiler vectorize
template <typename T>
T dot_unrolled(const T* a, const T* b, std::int64_t n) {
    T a0{0}, a1{0}, a2{0}, a3{0};
    std::int64_t p = 0;
    for (; p + 4 <= n; p += 4) {
        a0 += a[p] * b[p];
        a1 += a[p + 1] * b[p + 1];
        a2 += a[p + 2] * b[p + 2];
        a3 += a[p + 3] * b[p + 3];
    }
    T acc = (a0 + a1) + (a2 + a3);
    for (; p < n; ++p) acc += a[p] * b[p];
    return acc;
}

template <typename T>
T sum_unrolled(const T* a, std::int64_t n) {
    T a0{0}, a1{0}, a2{0}, a3{0};
    std::int64_t p = 0;
    for (; p + 4 <= n; p += 4) {
        a0 += a[p];
        a1 += a[p + 1];
        a2 += a[p + 2];
        a3 += a[p + 3];
    }
    T acc = (a0 + a1) + (a2 + a3);
    for (; p < n; ++p) acc += a[p];
    return acc;
}

}  // namespace detail

template <typename T>
LinearGrads<T> linear_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& g) {
    const std::int64_t b = x.size(0), cin = weight.size(0), cout = weight.size(1);
    const std::int64_t hw = x.size(2) * x.size(3);
    LinearGrads<T> out{Tensor<T>(x.shape()), Tensor<T>(weight.shape()), Tensor<T>({cout})};
    parallel_for(b, [&](std::int64_t bi) {
        const T* gb_ = g.data() + bi * cout * hw;
        T* gxb = out.gx.data() + bi * cin * hw;
        for (std::int64_t co = 0; co < cout; ++co) {
            const T* grow = gb_ + co * hw;
            for (std::int64_t ci = 0; ci < cin; ++ci) {
                const T wv = weight.at2(ci, co);
                T* gxrow = gxb + ci * hw;
                for (std::int64_t p = 0; p < hw; ++p) gxrow[p] += wv * grow[p];
            }
        }
    });
    // parameter grads accumulate serially in batch order
    for (std::int64_t bi = 0; bi < b; ++bi) {
        const T* xb = x.data() + bi * cin * hw;
        const T* gb_ = g.data() + bi * cout * hw;
        for (std::int64_t ci = 0; ci < cin; ++ci) {
            const T* xrow = xb + ci * hw;
            for (std::int64_t co = 0; co < cout; ++co)
                out.gw.at2(ci, co) += detail::dot_unrolled(xrow, gb_ + co * hw, hw);
        }
        for (std::int64_t co = 0; co < cout; ++co)
            out.gb[co] += detail::sum_unrolled(gb_ + co * hw, hw);
    }
    return out;
}

// --- conv2d: cross-correlation, kernel (C_out, C_in, k, k) --------------- //

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias, int stride,
                 int padding) {
    if (x.ndim() != 4 || kernel.ndim() != 4)
        throw ShapeError("conv2d expects 4-d input and kernel, got " + x.shape_str() + " and " +
                         kernel.shape_str());
    const std::int64_t cout = kernel.size(0), cin = kernel.size(1);
    const std::int64_t kh = kernel.size(2), kw = kernel.size(3);
    if (x.size(1) != cin)
        throw ShapeError("conv2d: input channels " + x.shape_str() + " vs kernel " +
                         kernel.shape_str());
    if (stride <= 0) throw ParamError("conv2d: stride must be positive, got " + std::to_string(stride));
    if (padding < 0) throw ParamError("conv2d: padding must be non-negative");
    const std::int64_t h = x.size(2), w = x.size(3);
    if (kh > h + 2 * padding || kw > w + 2 * padding)
        throw ParamError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                         " exceeds padded input " + std::to_string(h + 2 * padding) + "x" +
                         std::to_string(w + 2 * padding));
    const std::int64_t oh = (h + 2 * padding - kh) / stride + 1;
    const std::int64_t ow = (w + 2 * padding - kw) / stride + 1;
    const bool has_bias = !bias.empty();

    // valid output range along one axis for a given kernel offset
    const auto span = [stride, padding](std::int64_t kpos, std::int64_t in_dim,
                                        std::int64_t out_dim) {
        const std::int64_t a = padding - kpos;
        const std::int64_t lo = a > 0 ? (a + stride - 1) / stride : 0;
        const std::int64_t num = in_dim - 1 + padding - kpos;
        const std::int64_t hi = num >= 0 ? std::min(out_dim - 1, num / stride) : -1;
        return std::pair<std::int64_t, std::int64_t>(lo, hi);
    };

    Tensor<T> out({x.size(0), cout, oh, ow});
    parallel_for(x.size(0) * cout, [&](std::int64_t idx) {
        const std::int64_t bi = idx / cout, co = idx % cout;
        T* ob = out.data() + (bi * cout + co) * oh * ow;
        if (has_bias)
            for (std::int64_t p = 0; p < oh * ow; ++p) ob[p] = bias[co];
        for (std::int64_t ci = 0; ci < cin; ++ci) {
            const T* xb = x.data() + (bi * cin + ci) * h * w;
            for (std::int64_t ky = 0; ky < kh; ++ky) {
                const auto [oy_lo, oy_hi] = span(ky, h, oh);
                for (std::int64_t kx = 0; kx < kw; ++kx) {
                    const T wv = kernel.at4(co, ci, ky, kx);
                    const auto [ox_lo, ox_hi] = span(kx, w, ow);
                    for (std::int64_t oy = oy_lo; oy <= oy_hi; ++oy) {
                        const T* xrow = xb + (oy * stride - padding + ky) * w - padding + kx;
                        T* orow = ob + oy * ow;
                        if (stride == 1) {
                            for (std::int64_t ox = ox_lo; ox <= ox_hi; ++ox)
                                orow[ox] += wv * xrow[ox];
                        } else {
                            for (std::int64_t ox = ox_lo; ox <= ox_hi; ++ox)
                                orow[ox] += wv * xrow[ox * stride];
                        }
                    }
                }
            }
        }
    });
    return out;
}

template <typename T>
struct Conv2dGrads {
    Tensor<T> gx, gk, gb;
};

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& g,
                               int stride, int padding) {
    const std::int64_t b = x.size(0), cout = kernel.size(0), cin = kernel.size(1);
    const std::int64_t kh = kernel.size(2), kw = kernel.size(3);
    const std::int64_t h = x.size(2), w = x.size(3);
    const std::int64_t oh = g.size(2), ow = g.size(3);
    Conv2dGrads<T> out{Tensor<T>(x.shape()), Tensor<T>(kernel.shape()), Tensor<T>({cout})};

    const auto span = [stride, padding](std::int64_t kpos, std::int64_t in_dim,
                                        std::int64_t out_dim) {
        const std::int64_t a = padding - kpos;
        const std::int64_t lo = a > 0 ? (a + stride - 1) / stride : 0;
        const std::int64_t num = in_dim - 1 + padding - kpos;
        const std::int64_t hi = num >= 0 ? std::min(out_dim - 1, num / stride) : -1;
        return std::pair<std::int64_t, std::int64_t>(lo, hi);
    };

    for (std::int64_t bi = 0; bi < b; ++bi) {
        for (std::int64_t co = 0; co < cout; ++co) {
            const T* gb_ = g.data() + (bi * cout + co) * oh * ow;
            out.gb[co] += detail::sum_unrolled(gb_, oh * ow);
            for (std::int64_t ci = 0; ci < cin; ++ci) {
                const T* xb = x.data() + (bi * cin + ci) * h * w;
                T* gxb = out.gx.data() + (bi * cin + ci) * h * w;
                for (std::int64_t ky = 0; ky < kh; ++ky) {
                    const auto [oy_lo, oy_hi] = span(ky, h, oh);
                    for (std::int64_t kx = 0; kx < kw; ++kx) {
                        const auto [ox_lo, ox_hi] = span(kx, w, ow);
                        const T wv = kernel.at4(co, ci, ky, kx);
                        T wacc{0};
                        for (std::int64_t oy = oy_lo; oy <= oy_hi; ++oy) {
                            const std::int64_t row_off =
                                (oy * stride - padding + ky) * w - padding + kx;
                            const T* xrow = xb + row_off;
                            T* gxrow = gxb + row_off;
                            const T* grow = gb_ + oy * ow;
                            if (stride == 1) {
                                wacc += detail::dot_unrolled(xrow + ox_lo, grow + ox_lo,
                                                             ox_hi - ox_lo + 1);
                                for (std::int64_t ox = ox_lo; ox <= ox_hi; ++ox)
                                    gxrow[ox] += wv * grow[ox];
                            } else {
                                for (std::int64_t ox = ox_lo; ox <= ox_hi; ++ox) {
                                    wacc += xrow[ox * stride] * grow[ox];
                                    gxrow[ox * stride] += wv * grow[ox];
                                }
                            }
                        }
                        out.gk.at4(co, ci, ky, kx) += wacc;
                    }
                }
            }
        }
    }
    return out;
}

// --- layer norm over the channel axis, per spatial position -------------- //

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
    if (x.ndim() != 4) throw ShapeError("layer_norm expects (B,C,H,W), got " + x.shape_str());
    const std::int64_t c = x.size(1);
    if (gamma.numel() != c || beta.numel() != c)
        throw ShapeError("layer_norm: affine size vs channels " + x.shape_str());
    const std::int64_t b = x.size(0), hw = x.size(2) * x.size(3);
    Tensor<T> out(x.shape());
    parallel_for(b, [&](std::int64_t bi) {
        const T* xb = x.data() + bi * c * hw;
        T* ob = out.data() + bi * c * hw;
        for (std::int64_t p = 0; p < hw; ++p) {
            T mean{0};
            for (std::int64_t ci = 0; ci < c; ++ci) mean += xb[ci * hw + p];
            mean /= static_cast<T>(c);
            T var{0};
            for (std::int64_t ci = 0; ci < c; ++ci) {
                T d = xb[ci * hw + p] - mean;
                var += d * d;
            }
            var /= static_cast<T>(c);
            const T inv = T{1} / std::sqrt(var + eps);
            for (std::int64_t ci = 0; ci < c; ++ci)
                ob[ci * hw + p] = (xb[ci * hw + p] - mean) * inv * gamma[ci] + beta[ci];
        }
    });
    return out;
}

template <typename T>
struct LayerNormGrads {
    Tensor<T> gx, ggamma, gbeta;
};

template <typename T>
LayerNormGrads<T> layer_norm_backward(const Tensor<T>& x, const Tensor<T>& gamma, T eps,
                                      const Tensor<T>& g) {
    const std::int64_t b = x.size(0), c = x.size(1), hw = x.size(2) * x.size(3);
    LayerNormGrads<T> out{Tensor<T>(x.shape()), Tensor<T>({c}), Tensor<T>({c})};
    std::vector<T> xhat(static_cast<std::size_t>(c)), gh(static_cast<std::size_t>(c));
    for (std::int64_t bi = 0; bi < b; ++bi) {
        const T* xb = x.data() + bi * c * hw;
        const T* gb = g.data() + bi * c * hw;
        T* gxb = out.gx.data() + bi * c * hw;
        for (std::int64_t p = 0; p < hw; ++p) {
            T mean{0};
            for (std::int64_t ci = 0; ci < c; ++ci) mean += xb[ci * hw + p];
            mean /= static_cast<T>(c);
            T var{0};
            for (std::int64_t ci = 0; ci < c; ++ci) {
                T d = xb[ci * hw + p] - mean;
                var += d * d;
            }
            var /= static_cast<T>(c);
            const T inv = T{1} / std::sqrt(var + eps);
            T mean_gh{0}, mean_ghx{0};
            for (std::int64_t ci = 0; ci < c; ++ci) {
                xhat[static_cast<std::size_t>(ci)] = (xb[ci * hw + p] - mean) * inv;
                gh[static_cast<std::size_t>(ci)] = gb[ci * hw + p] * gamma[ci];
                out.ggamma[ci] += gb[ci * hw + p] * xhat[static_cast<std::size_t>(ci)];
                out.gbeta[ci] += gb[ci * hw + p];
                mean_gh += gh[static_cast<std::size_t>(ci)];
                mean_ghx += gh[static_cast<std::size_t>(ci)] * xhat[static_cast<std::size_t>(ci)];
            }
            mean_gh /= static_cast<T>(c);
            mean_ghx /= static_cast<T>(c);
            for (std::int64_t ci = 0; ci < c; ++ci)
                gxb[ci * hw + p] =
                    inv * (gh[static_cast<std::size_t>(ci)] - mean_gh -
                           xhat[static_cast<std::size_t>(ci)] * mean_ghx);
        }
    }
    return out;
}

// --- elementwise activations --------------------------------------------- //

template <typename T>
T sigmoid_scalar(T v) {
    return T{1} / (T{1} + std::exp(-v));
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i) out[i] = sigmoid_scalar(x[i]);
    return out;
}

// grad w.r.t. input given the forward output y
template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& g) {
    Tensor<T> out(y.shape());
    for (std::int64_t i = 0; i < y.numel(); ++i) out[i] = g[i] * y[i] * (T{1} - y[i]);
    return out;
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
    Tensor<T> out(x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i) out[i] = x[i] >= T{0} ? x[i] : slope * x[i];
    return out;
}

template <typename T>
Tensor<T> leaky_relu_backward(const Tensor<T>& x, T slope, const Tensor<T>& g) {
    Tensor<T> out(x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i) out[i] = x[i] >= T{0} ? g[i] : slope * g[i];
    return out;
}

// squared_relu(x) = max(0, x)^2
template <typename T>
Tensor<T> squared_relu(const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        T r = x[i] > T{0} ? x[i] : T{0};
        out[i] = r * r;
    }
    return out;
}

template <typename T>
Tensor<T> squared_relu_backward(const Tensor<T>& x, const Tensor<T>& g) {
    Tensor<T> out(x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i)
        out[i] = x[i] > T{0} ? T{2} * x[i] * g[i] : T{0};
    return out;
}

template <typename T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b))
        throw ShapeError("hadamard requires equal shapes, got " + a.shape_str() + " and " +
                         b.shape_str());
    Tensor<T> out(a.shape());
    for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] * b[i];
    return out;
}

}  // namespace ops
}  // namespace crwkv
