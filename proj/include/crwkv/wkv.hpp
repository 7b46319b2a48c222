#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "crwkv/tensor.hpp"

namespace crwkv {

// Per-channel decay w and current-token bonus u of the bidirectional WKV
// operator. w is a free real; stability comes from exponent shifting in the
// scan, not from clamping.
template <typename T>
struct WkvParams {
    Tensor<T> w;
    Tensor<T> u;
};

// Relative position bias b(t, i) = -(|t-i|-1)/T for 1-indexed t != i.
// The diagonal is governed by the u-term and is a contract violation here.
inline double position_bias(std::int64_t t, std::int64_t i, std::int64_t len) {
    if (t < 1 || i < 1 || t > len || i > len)
        throw ParamError("position_bias: indices must lie in [1, T]");
    if (t == i)
        throw ParamError("position_bias: t == i is reserved for the current-token bonus");
    return -static_cast<double>(std::llabs(t - i) - 1) / static_cast<double>(len);
}

namespace wkv_detail {

template <typename T>
constexpr T neg_inf() {
    return -std::numeric_limits<T>::infinity();
}

// one-direction accumulator in exponent-shifted form: value = e^p * (num, den)
template <typename T>
struct ShiftState {
    T p = neg_inf<T>();
    T num{0};
    T den{0};

    void absorb(T dec, T q, T val) {
        const T pdec = p + dec;
        const T np = std::max(pdec, q);
        const T so = std::exp(pdec - np);
        const T sn = std::exp(q - np);
        num = so * num + sn * val;
        den = so * den + sn;
        p = np;
    }
};

}  // namespace wkv_detail

// O(T^2) direct evaluation of the BiWKV summation with per-t max subtraction.
// k, v: (B, T, C); w, u: (C).
template <typename T>
Tensor<T> biwkv_reference(const Tensor<T>& k, const Tensor<T>& v, const Tensor<T>& w,
                          const Tensor<T>& u) {
    if (k.ndim() != 3 || !k.same_shape(v))
        throw ShapeError("biwkv: k and v must both be (B,T,C), got " + k.shape_str() + " and " +
                         v.shape_str());
    const std::int64_t b = k.size(0), len = k.size(1), c = k.size(2);
    if (w.numel() != c || u.numel() != c)
        throw ShapeError("biwkv: per-channel params must have length " + std::to_string(c));
    Tensor<T> y(k.shape());
    const T tf = static_cast<T>(len);
    parallel_for(b * c, [&](std::int64_t lane) {
        const std::int64_t bi = lane / c, ci = lane % c;
        const T wc = w[ci], uc = u[ci];
        std::vector<T> e(static_cast<std::size_t>(len));
        for (std::int64_t t = 0; t < len; ++t) {
            T m = wkv_detail::neg_inf<T>();
            for (std::int64_t i = 0; i < len; ++i) {
                T ex;
                if (i == t) {
                    ex = uc + k.at3(bi, t, ci);
                } else {
                    const T bias = -static_cast<T>(std::llabs(t - i) - 1) / tf;
                    ex = bias * wc + k.at3(bi, i, ci);
                }
                e[static_cast<std::size_t>(i)] = ex;
                m = std::max(m, ex);
            }
            T num{0}, den{0};
            for (std::int64_t i = 0; i < len; ++i) {
                const T wt = std::exp(e[static_cast<std::size_t>(i)] - m);
                num += wt * v.at3(bi, i, ci);
                den += wt;
            }
            y.at3(bi, t, ci) = num / den;
        }
    });
    return y;
}

// internals of the forward scan kept for the backward pass
template <typename T>
struct WkvCache {
    Tensor<T> y;         // (B,T,C) output
    Tensor<T> den_exp;   // m_t: shift exponent of the combined denominator
    Tensor<T> den_mant;  // d_t: denominator mantissa, true D_t = e^{m_t} * d_t
};

// O(T) evaluation: forward and mirrored backward recurrences with running-max
// exponent shifting, then a per-t three-way combination with the u-term.
template <typename T>
Tensor<T> biwkv_scan(const Tensor<T>& k, const Tensor<T>& v, const Tensor<T>& w, const Tensor<T>& u,
                     WkvCache<T>* cache = nullptr) {
    if (k.ndim() != 3 || !k.same_shape(v))
        throw ShapeError("biwkv: k and v must both be (B,T,C), got " + k.shape_str() + " and " +
                         v.shape_str());
    const std::int64_t b = k.size(0), len = k.size(1), c = k.size(2);
    if (w.numel() != c || u.numel() != c)
        throw ShapeError("biwkv: per-channel params must have length " + std::to_string(c));
    Tensor<T> y(k.shape());
    if (cache) {
        cache->den_exp = Tensor<T>(k.shape());
        cache->den_mant = Tensor<T>(k.shape());
    }
    parallel_for(b * c, [&](std::int64_t lane) {
        const std::int64_t bi = lane / c, ci = lane % c;
        const T dec = -w[ci] / static_cast<T>(len);
        const T uc = u[ci];

        // right-to-left sweep, state at t covers tokens i > t
        std::vector<wkv_detail::ShiftState<T>> suffix(static_cast<std::size_t>(len));
        wkv_detail::ShiftState<T> st;
        for (std::int64_t t = len - 1; t >= 0; --t) {
            suffix[static_cast<std::size_t>(t)] = st;
            st.absorb(dec, k.at3(bi, t, ci), v.at3(bi, t, ci));
        }

        // left-to-right sweep combines prefix, suffix and the diagonal term
        wkv_detail::ShiftState<T> pre;
        for (std::int64_t t = 0; t < len; ++t) {
            const auto& suf = suffix[static_cast<std::size_t>(t)];
            const T kd = uc + k.at3(bi, t, ci);
            const T m = std::max(std::max(pre.p, suf.p), kd);
            const T ef = std::exp(pre.p - m);
            const T eb = std::exp(suf.p - m);
            const T ed = std::exp(kd - m);
            const T num = (ef * pre.num + eb * suf.num) + ed * v.at3(bi, t, ci);
            const T den = (ef * pre.den + eb * suf.den) + ed;
            y.at3(bi, t, ci) = num / den;
            if (cache) {
                cache->den_exp.at3(bi, t, ci) = m;
                cache->den_mant.at3(bi, t, ci) = den;
            }
            pre.absorb(dec, k.at3(bi, t, ci), v.at3(bi, t, ci));
        }
    });
    if (cache) cache->y = y;
    return y;
}

template <typename T>
struct WkvGrads {
    Tensor<T> gk, gv;  // (B,T,C)
    Tensor<T> gw, gu;  // (C)
};

// O(T^2) softmax-Jacobian backward, the correctness baseline.
template <typename T>
WkvGrads<T> biwkv_backward_reference(const Tensor<T>& k, const Tensor<T>& v, const Tensor<T>& w,
                                     const Tensor<T>& u, const Tensor<T>& g) {
    const std::int64_t b = k.size(0), len = k.size(1), c = k.size(2);
    WkvGrads<T> out{Tensor<T>(k.shape()), Tensor<T>(k.shape()), Tensor<T>({c}), Tensor<T>({c})};
    const T tf = static_cast<T>(len);
    for (std::int64_t bi = 0; bi < b; ++bi) {
        for (std::int64_t ci = 0; ci < c; ++ci) {
            const T wc = w[ci], uc = u[ci];
            std::vector<T> e(static_cast<std::size_t>(len)), prob(static_cast<std::size_t>(len));
            for (std::int64_t t = 0; t < len; ++t) {
                T m = wkv_detail::neg_inf<T>();
                for (std::int64_t i = 0; i < len; ++i) {
                    T ex = (i == t) ? uc + k.at3(bi, t, ci)
                                    : -static_cast<T>(std::llabs(t - i) - 1) / tf * wc +
                                          k.at3(bi, i, ci);
                    e[static_cast<std::size_t>(i)] = ex;
                    m = std::max(m, ex);
                }
                T den{0};
                for (std::int64_t i = 0; i < len; ++i) {
                    prob[static_cast<std::size_t>(i)] = std::exp(e[static_cast<std::size_t>(i)] - m);
                    den += prob[static_cast<std::size_t>(i)];
                }
                T yt{0};
                for (std::int64_t i = 0; i < len; ++i) {
                    prob[static_cast<std::size_t>(i)] /= den;
                    yt += prob[static_cast<std::size_t>(i)] * v.at3(bi, i, ci);
                }
                const T gt = g.at3(bi, t, ci);
                for (std::int64_t i = 0; i < len; ++i) {
                    const T pi = prob[static_cast<std::size_t>(i)];
                    const T dv = v.at3(bi, i, ci) - yt;
                    out.gv.at3(bi, i, ci) += gt * pi;
                    out.gk.at3(bi, i, ci) += gt * pi * dv;
                    if (i == t) {
                        out.gu[ci] += gt * pi * dv;
                    } else {
                        const T bias = -static_cast<T>(std::llabs(t - i) - 1) / tf;
                        out.gw[ci] += gt * pi * dv * bias;
                    }
                }
            }
        }
    }
    return out;
}

// O(T) scan-form backward. Reuses the forward's shifted denominators, then
// runs mirrored scans over g/D and g*y/D with distance-derivative companions
// for the decay gradient.
template <typename T>
WkvGrads<T> biwkv_backward(const Tensor<T>& k, const Tensor<T>& v, const Tensor<T>& w,
                           const Tensor<T>& u, const Tensor<T>& g) {
    if (!k.same_shape(g))
        throw ShapeError("biwkv_backward: upstream shape " + g.shape_str() + " vs k " +
                         k.shape_str());
    const std::int64_t b = k.size(0), len = k.size(1), c = k.size(2);
    WkvGrads<T> out{Tensor<T>(k.shape()), Tensor<T>(k.shape()), Tensor<T>({c}), Tensor<T>({c})};
    WkvCache<T> cache;
    biwkv_scan(k, v, w, u, &cache);

    const T tf = static_cast<T>(len);
    std::vector<double> gw_acc(static_cast<std::size_t>(c), 0.0),
        gu_acc(static_cast<std::size_t>(c), 0.0);

    for (std::int64_t bi = 0; bi < b; ++bi) {
        for (std::int64_t ci = 0; ci < c; ++ci) {
            const T dec = -w[ci] / tf;
            const T uc = u[ci];
            std::vector<T> rh(static_cast<std::size_t>(len)), sh(static_cast<std::size_t>(len)),
                qe(static_cast<std::size_t>(len));
            for (std::int64_t t = 0; t < len; ++t) {
                const T dh = cache.den_mant.at3(bi, t, ci);
                const T gt = g.at3(bi, t, ci);
                rh[static_cast<std::size_t>(t)] = gt / dh;
                sh[static_cast<std::size_t>(t)] = gt * cache.y.at3(bi, t, ci) / dh;
                qe[static_cast<std::size_t>(t)] = -cache.den_exp.at3(bi, t, ci);
            }

            // state: shared exponent p; mantissas for the r-scan, the s-scan
            // and their token-distance derivatives
            auto sweep = [&](std::int64_t begin, std::int64_t end, std::int64_t step) {
                T p = wkv_detail::neg_inf<T>();
                T ar{0}, ard{0}, as{0}, asd{0};
                for (std::int64_t t = begin; t != end; t += step) {
                    const T kt = k.at3(bi, t, ci);
                    const T vt = v.at3(bi, t, ci);
                    const T ev = std::exp(kt + p);
                    out.gv.at3(bi, t, ci) += ev * ar;
                    out.gk.at3(bi, t, ci) += vt * ev * ar - ev * as;
                    gw_acc[static_cast<std::size_t>(ci)] +=
                        static_cast<double>(-(vt * ev * ard - ev * asd) / tf);
                    const T pdec = p + dec;
                    const T q = qe[static_cast<std::size_t>(t)];
                    const T np = std::max(pdec, q);
                    const T so = std::exp(pdec - np);
                    const T sn = std::exp(q - np);
                    ard = so * (ard + ar);
                    asd = so * (asd + as);
                    ar = so * ar + sn * rh[static_cast<std::size_t>(t)];
                    as = so * as + sn * sh[static_cast<std::size_t>(t)];
                    p = np;
                }
            };
            sweep(0, len, 1);
            sweep(len - 1, -1, -1);

            for (std::int64_t t = 0; t < len; ++t) {
                const T ed = std::exp(uc + k.at3(bi, t, ci) + qe[static_cast<std::size_t>(t)]);
                const T vt = v.at3(bi, t, ci);
                const T diag = ed * (vt * rh[static_cast<std::size_t>(t)] -
                                     sh[static_cast<std::size_t>(t)]);
                out.gv.at3(bi, t, ci) += ed * rh[static_cast<std::size_t>(t)];
                out.gk.at3(bi, t, ci) += diag;
                gu_acc[static_cast<std::size_t>(ci)] += static_cast<double>(diag);
            }
        }
    }
    for (std::int64_t ci = 0; ci < c; ++ci) {
        out.gw[ci] = static_cast<T>(gw_acc[static_cast<std::size_t>(ci)]);
        out.gu[ci] = static_cast<T>(gu_acc[static_cast<std::size_t>(ci)]);
    }
    return out;
}

}  // namespace crwkv
