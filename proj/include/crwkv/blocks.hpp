#pragma once

#include <memory>
#include <string>
#include <vector>

#include "crwkv/fft.hpp"
#include "crwkv/ops.hpp"
#include "crwkv/shift.hpp"
#include "crwkv/wkv.hpp"

namespace crwkv {

// row-major flattening: token t = y * W + x
template <typename T>
Tensor<T> map_to_seq(const Tensor<T>& x) {
    const std::int64_t b = x.size(0), c = x.size(1), hw = x.size(2) * x.size(3);
    Tensor<T> out({b, hw, c});
    for (std::int64_t bi = 0; bi < b; ++bi)
        for (std::int64_t ci = 0; ci < c; ++ci) {
            const T* src = x.data() + (bi * c + ci) * hw;
            for (std::int64_t t = 0; t < hw; ++t) out.at3(bi, t, ci) = src[t];
        }
    return out;
}

template <typename T>
Tensor<T> seq_to_map(const Tensor<T>& s, std::int64_t h, std::int64_t w) {
    const std::int64_t b = s.size(0), c = s.size(2);
    if (s.size(1) != h * w)
        throw ShapeError("seq_to_map: T=" + std::to_string(s.size(1)) + " vs " +
                         std::to_string(h) + "x" + std::to_string(w));
    Tensor<T> out({b, c, h, w});
    for (std::int64_t bi = 0; bi < b; ++bi)
        for (std::int64_t ci = 0; ci < c; ++ci) {
            T* dst = out.data() + (bi * c + ci) * h * w;
            for (std::int64_t t = 0; t < h * w; ++t) dst[t] = s.at3(bi, t, ci);
        }
    return out;
}

// ---- leaf layers --------------------------------------------------------- //

template <typename T>
class LinearLayer {
public:
    LinearLayer(const std::string& name, std::int64_t cin, std::int64_t cout, Rng& rng)
        : weight(name + ".weight", Tensor<T>({cin, cout})),
          bias(name + ".bias", Tensor<T>({cout})) {
        const double s = 1.0 / std::sqrt(static_cast<double>(cin));
        for (std::int64_t i = 0; i < weight.value.numel(); ++i)
            weight.value[i] = static_cast<T>(rng.uniform(-s, s));
    }

    Tensor<T> forward(const Tensor<T>& x) {
        if (train_) x_ = x;
        return ops::linear(x, weight.value, bias.value);
    }

    Tensor<T> backward(const Tensor<T>& g) {
        auto gr = ops::linear_backward(x_, weight.value, g);
        weight.grad += gr.gw;
        bias.grad += gr.gb;
        return std::move(gr.gx);
    }

    void collect_params(std::vector<Parameter<T>*>& out) {
        out.push_back(&weight);
        out.push_back(&bias);
    }
    void set_train(bool m) {
        train_ = m;
        if (!m) x_ = Tensor<T>();
    }

    Parameter<T> weight, bias;

private:
    bool train_ = true;
    Tensor<T> x_;
};

template <typename T>
class Conv2dLayer {
public:
    Conv2dLayer(const std::string& name, std::int64_t cin, std::int64_t cout, int k, int stride,
                int padding, Rng& rng)
        : weight(name + ".weight", Tensor<T>({cout, cin, k, k})),
          bias(name + ".bias", Tensor<T>({cout})),
          stride_(stride),
          padding_(padding) {
        const double s = 1.0 / std::sqrt(static_cast<double>(cin * k * k));
        for (std::int64_t i = 0; i < weight.value.numel(); ++i)
            weight.value[i] = static_cast<T>(rng.uniform(-s, s));
    }

    Tensor<T> forward(const Tensor<T>& x) {
        if (train_) x_ = x;
        return ops::conv2d(x, weight.value, bias.value, stride_, padding_);
    }

    Tensor<T> backward(const Tensor<T>& g) {
        auto gr = ops::conv2d_backward(x_, weight.value, g, stride_, padding_);
        weight.grad += gr.gk;
        bias.grad += gr.gb;
        return std::move(gr.gx);
    }

    void collect_params(std::vector<Parameter<T>*>& out) {
        out.push_back(&weight);
        out.push_back(&bias);
    }
    void set_train(bool m) {
        train_ = m;
        if (!m) x_ = Tensor<T>();
    }

    Parameter<T> weight, bias;

private:
    int stride_, padding_;
    bool train_ = true;
    Tensor<T> x_;
};

template <typename T>
class LayerNormLayer {
public:
    LayerNormLayer(const std::string& name, std::int64_t c)
        : gamma(name + ".gamma", Tensor<T>::ones({c}), false),
          beta(name + ".beta", Tensor<T>({c}), false) {}

    Tensor<T> forward(const Tensor<T>& x) {
        if (train_) x_ = x;
        return ops::layer_norm(x, gamma.value, beta.value, eps);
    }

    Tensor<T> backward(const Tensor<T>& g) {
        auto gr = ops::layer_norm_backward(x_, gamma.value, eps, g);
        gamma.grad += gr.ggamma;
        beta.grad += gr.gbeta;
        return std::move(gr.gx);
    }

    void collect_params(std::vector<Parameter<T>*>& out) {
        out.push_back(&gamma);
        out.push_back(&beta);
    }
    void set_train(bool m) {
        train_ = m;
        if (!m) x_ = Tensor<T>();
    }

    Parameter<T> gamma, beta;
    T eps = static_cast<T>(1e-5);

private:
    bool train_ = true;
    Tensor<T> x_;
};

// token shift with one learnable mixing scalar; omega = sigmoid(raw)
template <typename T>
class CtsLayer {
public:
    CtsLayer(const std::string& name, OffsetDictionary dict)
        : omega_raw(name + ".omega_raw", Tensor<T>({1}), false), dict_(std::move(dict)) {}

    Tensor<T> forward(const Tensor<T>& x) {
        if (train_) x_ = x;
        return cts_shift(x, dict_, omega());
    }

    Tensor<T> backward(const Tensor<T>& g) {
        const T om = omega();
        auto gr = cts_shift_backward(x_, dict_, om, g);
        omega_raw.grad[0] += gr.gomega * om * (T{1} - om);
        return std::move(gr.gx);
    }

    T omega() const { return ops::sigmoid_scalar(omega_raw.value[0]); }

    void collect_params(std::vector<Parameter<T>*>& out) { out.push_back(&omega_raw); }
    void set_train(bool m) {
        train_ = m;
        if (!m) x_ = Tensor<T>();
    }

    Parameter<T> omega_raw;

private:
    OffsetDictionary dict_;
    bool train_ = true;
    Tensor<T> x_;
};

// ---- CRM: spatial mixing through the bidirectional WKV ------------------- //

template <typename T>
class CrmBlock {
public:
    CrmBlock(const std::string& name, std::int64_t c, const OffsetDictionary& dict, Rng& rng)
        : cts(name + ".cts", dict),
          proj_r(name + ".proj_r", c, c, rng),
          proj_k(name + ".proj_k", c, c, rng),
          proj_v(name + ".proj_v", c, c, rng),
          wkv_w(name + ".wkv.w", Tensor<T>({c}), false),
          wkv_u(name + ".wkv.u", Tensor<T>({c}), false),
          norm(name + ".norm", c) {
        // decay spread over channels; bonus near 0.5 with a small stagger
        for (std::int64_t i = 0; i < c; ++i) {
            const double frac = c > 1 ? static_cast<double>(i) / static_cast<double>(c - 1) : 0.5;
            wkv_w.value[i] = static_cast<T>(-1.0 + 2.0 * frac);
            wkv_u.value[i] = static_cast<T>(0.5 + 0.05 * (frac - 0.5));
        }
    }

    Tensor<T> forward(const Tensor<T>& x) {
        const std::int64_t h = x.size(2), w = x.size(3);
        auto s = cts.forward(x);
        auto r1 = proj_r.forward(s);
        auto k1 = proj_k.forward(s);
        auto v1 = proj_v.forward(s);
        auto kseq = map_to_seq(k1);
        auto vseq = map_to_seq(v1);
        auto yseq = biwkv_scan(kseq, vseq, wkv_w.value, wkv_u.value);
        auto n = norm.forward(seq_to_map(yseq, h, w));
        auto sig = ops::sigmoid(r1);
        auto out = ops::hadamard(sig, n);
        if (train_) {
            kseq_ = std::move(kseq);
            vseq_ = std::move(vseq);
            sig_ = std::move(sig);
            n_ = std::move(n);
        }
        return out;
    }

    Tensor<T> backward(const Tensor<T>& g) {
        const std::int64_t h = g.size(2), w = g.size(3);
        auto gn = ops::hadamard(g, sig_);
        auto gsig = ops::hadamard(g, n_);
        auto gy = map_to_seq(norm.backward(gn));
        auto wgr = biwkv_backward(kseq_, vseq_, wkv_w.value, wkv_u.value, gy);
        wkv_w.grad += wgr.gw;
        wkv_u.grad += wgr.gu;
        auto gs = proj_k.backward(seq_to_map(wgr.gk, h, w));
        gs += proj_v.backward(seq_to_map(wgr.gv, h, w));
        gs += proj_r.backward(ops::sigmoid_backward(sig_, gsig));
        return cts.backward(gs);
    }

    void collect_params(std::vector<Parameter<T>*>& out) {
        cts.collect_params(out);
        proj_r.collect_params(out);
        proj_k.collect_params(out);
        proj_v.collect_params(out);
        out.push_back(&wkv_w);
        out.push_back(&wkv_u);
        norm.collect_params(out);
    }

    void set_train(bool m) {
        train_ = m;
        cts.set_train(m);
        proj_r.set_train(m);
        proj_k.set_train(m);
        proj_v.set_train(m);
        norm.set_train(m);
        if (!m) {
            kseq_ = vseq_ = Tensor<T>();
            sig_ = n_ = Tensor<T>();
        }
    }

    CtsLayer<T> cts;
    LinearLayer<T> proj_r, proj_k, proj_v;
    Parameter<T> wkv_w, wkv_u;
    LayerNormLayer<T> norm;

private:
    bool train_ = true;
    Tensor<T> kseq_, vseq_, sig_, n_;
};

// ---- CMix: gated channel mixing with squared-relu key path --------------- //

template <typename T>
class CmixBlock {
public:
    CmixBlock(const std::string& name, std::int64_t c, std::int64_t expansion,
              const OffsetDictionary& dict, Rng& rng)
        : cts_r(name + ".cts_r", dict),
          cts_k(name + ".cts_k", dict),
          gate(name + ".gate", c, c, rng),
          key_up(name + ".key_up", c, c * expansion, rng),
          key_down(name + ".key_down", c * expansion, c, rng),
          norm(name + ".norm", c) {}

    Tensor<T> forward(const Tensor<T>& z) {
        auto gpre = gate.forward(cts_r.forward(z));
        auto gsig = ops::sigmoid(gpre);
        auto kpre = key_up.forward(cts_k.forward(z));
        auto kact = ops::squared_relu(kpre);
        auto n = norm.forward(key_down.forward(kact));
        auto out = ops::hadamard(gsig, n);
        if (train_) {
            gsig_ = std::move(gsig);
            kpre_ = std::move(kpre);
            n_ = std::move(n);
        }
        return out;
    }

    Tensor<T> backward(const Tensor<T>& g) {
        auto gn = ops::hadamard(g, gsig_);
        auto ggate = ops::hadamard(g, n_);
        auto gkact = key_down.backward(norm.backward(gn));
        auto gz = cts_k.backward(key_up.backward(ops::squared_relu_backward(kpre_, gkact)));
        gz += cts_r.backward(gate.backward(ops::sigmoid_backward(gsig_, ggate)));
        return gz;
    }

    void collect_params(std::vector<Parameter<T>*>& out) {
        cts_r.collect_params(out);
        cts_k.collect_params(out);
        gate.collect_params(out);
        key_up.collect_params(out);
        key_down.collect_params(out);
        norm.collect_params(out);
    }

    void set_train(bool m) {
        train_ = m;
        cts_r.set_train(m);
        cts_k.set_train(m);
        gate.set_train(m);
        key_up.set_train(m);
        key_down.set_train(m);
        norm.set_train(m);
        if (!m) gsig_ = kpre_ = n_ = Tensor<T>();
    }

    CtsLayer<T> cts_r, cts_k;
    LinearLayer<T> gate, key_up, key_down;
    LayerNormLayer<T> norm;

private:
    bool train_ = true;
    Tensor<T> gsig_, kpre_, n_;
};

// ---- FMix: learned reweighting in the 2-D frequency domain --------------- //

template <typename T>
class FmixBlock {
public:
    FmixBlock(const std::string& name, std::int64_t c, Rng& rng)
        : freq(name + ".freq", 2 * c, 2 * c, rng), norm(name + ".norm", c) {}

    // real/imag planes stacked into 2C channels so the frequency weighting is
    // one dense channel map (allows real/imag cross mixing)
    static Tensor<T> stack(const ComplexMap<T>& z) {
        const std::int64_t b = z.re.size(0), c = z.re.size(1), h = z.re.size(2), w = z.re.size(3);
        Tensor<T> out({b, 2 * c, h, w});
        const std::int64_t plane = c * h * w;
        for (std::int64_t bi = 0; bi < b; ++bi) {
            std::copy(z.re.data() + bi * plane, z.re.data() + (bi + 1) * plane,
                      out.data() + bi * 2 * plane);
            std::copy(z.im.data() + bi * plane, z.im.data() + (bi + 1) * plane,
                      out.data() + bi * 2 * plane + plane);
        }
        return out;
    }

    static ComplexMap<T> unstack(const Tensor<T>& s) {
        const std::int64_t b = s.size(0), c2 = s.size(1), h = s.size(2), w = s.size(3);
        const std::int64_t c = c2 / 2, plane = c * h * w;
        ComplexMap<T> out{Tensor<T>({b, c, h, w}), Tensor<T>({b, c, h, w})};
        for (std::int64_t bi = 0; bi < b; ++bi) {
            std::copy(s.data() + bi * 2 * plane, s.data() + bi * 2 * plane + plane,
                      out.re.data() + bi * plane);
            std::copy(s.data() + bi * 2 * plane + plane, s.data() + (bi + 1) * 2 * plane,
                      out.im.data() + bi * plane);
        }
        return out;
    }

    Tensor<T> forward(const Tensor<T>& x) {
        auto spectrum = stack(fft2d(x));
        auto lin = freq.forward(spectrum);
        auto act = ops::leaky_relu(lin, slope);
        auto filtered = ifft2d(unstack(act));
        auto prod = ops::hadamard(filtered, x);
        auto out = norm.forward(prod);
        if (train_) {
            x_ = x;
            lin_ = std::move(lin);
            filtered_ = std::move(filtered);
        }
        return out;
    }

    Tensor<T> backward(const Tensor<T>& g) {
        const std::int64_t h = g.size(2), w = g.size(3);
        const T inv_hw = T{1} / static_cast<T>(h * w);
        auto gprod = norm.backward(g);
        auto gfiltered = ops::hadamard(gprod, x_);
        auto gx = ops::hadamard(gprod, filtered_);
        // through the real part of the inverse transform
        auto gf = fft2d(gfiltered);
        gf.re *= inv_hw;
        gf.im *= inv_hw;
        auto glin = ops::leaky_relu_backward(lin_, slope, stack(gf));
        auto gspec = unstack(freq.backward(glin));
        // through the forward transform: Re(DFT(gr - i*gi))
        gspec.im *= T{-1};
        gx += fft2d_complex(gspec, false).re;
        return gx;
    }

    void collect_params(std::vector<Parameter<T>*>& out) {
        freq.collect_params(out);
        norm.collect_params(out);
    }

    void set_train(bool m) {
        train_ = m;
        freq.set_train(m);
        norm.set_train(m);
        if (!m) x_ = lin_ = filtered_ = Tensor<T>();
    }

    LinearLayer<T> freq;
    LayerNormLayer<T> norm;
    T slope = static_cast<T>(0.2);

private:
    bool train_ = true;
    Tensor<T> x_, lin_, filtered_;
};

// ---- CRB: residual wrapper pairing one mixer with one CMix --------------- //

enum class CrbKind { fmix_type, crm_type };

template <typename T>
class CrbBlock {
public:
    CrbBlock(const std::string& name, CrbKind kind, std::int64_t c, std::int64_t expansion,
             const OffsetDictionary& dict, Rng& rng)
        : kind_(kind),
          cmix(name + ".cmix", c, expansion, dict, rng),
          norm1(name + ".norm1", c),
          norm2(name + ".norm2", c),
          scale1(name + ".scale1", Tensor<T>::ones({1}), false),
          scale2(name + ".scale2", Tensor<T>::ones({1}), false) {
        if (kind == CrbKind::fmix_type)
            fmix = std::make_unique<FmixBlock<T>>(name + ".fmix", c, rng);
        else
            crm = std::make_unique<CrmBlock<T>>(name + ".crm", c, dict, rng);
    }

    Tensor<T> forward(const Tensor<T>& x) {
        auto mixed = kind_ == CrbKind::fmix_type ? fmix->forward(x) : crm->forward(x);
        auto z1 = norm1.forward(mixed);
        {
            auto scaled = x;
            scaled *= scale1.value[0];
            z1 += scaled;
        }
        auto out = norm2.forward(cmix.forward(z1));
        {
            auto scaled = z1;
            scaled *= scale2.value[0];
            out += scaled;
        }
        if (train_) {
            x_ = x;
            z1_ = std::move(z1);
        }
        return out;
    }

    Tensor<T> backward(const Tensor<T>& g) {
        double s2 = 0;
        for (std::int64_t i = 0; i < g.numel(); ++i) s2 += static_cast<double>(g[i] * z1_[i]);
        scale2.grad[0] += static_cast<T>(s2);
        auto gz1 = cmix.backward(norm2.backward(g));
        {
            auto scaled = g;
            scaled *= scale2.value[0];
            gz1 += scaled;
        }
        double s1 = 0;
        for (std::int64_t i = 0; i < gz1.numel(); ++i) s1 += static_cast<double>(gz1[i] * x_[i]);
        scale1.grad[0] += static_cast<T>(s1);
        auto gmixed = norm1.backward(gz1);
        auto gx = kind_ == CrbKind::fmix_type ? fmix->backward(gmixed) : crm->backward(gmixed);
        {
            auto scaled = gz1;
            scaled *= scale1.value[0];
            gx += scaled;
        }
        return gx;
    }

    void collect_params(std::vector<Parameter<T>*>& out) {
        if (fmix) fmix->collect_params(out);
        if (crm) crm->collect_params(out);
        norm1.collect_params(out);
        out.push_back(&scale1);
        cmix.collect_params(out);
        norm2.collect_params(out);
        out.push_back(&scale2);
    }

    void set_train(bool m) {
        train_ = m;
        if (fmix) fmix->set_train(m);
        if (crm) crm->set_train(m);
        cmix.set_train(m);
        norm1.set_train(m);
        norm2.set_train(m);
        if (!m) x_ = z1_ = Tensor<T>();
    }

    CrbKind kind() const { return kind_; }

    std::unique_ptr<FmixBlock<T>> fmix;
    std::unique_ptr<CrmBlock<T>> crm;
    CmixBlock<T> cmix;
    LayerNormLayer<T> norm1, norm2;
    Parameter<T> scale1, scale2;

private:
    CrbKind kind_;
    bool train_ = true;
    Tensor<T> x_, z1_;
};

}  // namespace crwkv
