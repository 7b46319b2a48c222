#pragma once

#include <cstdlib>
#include <string>
#include <vector>

#include "crwkv/tensor.hpp"

namespace crwkv {

enum class ShiftVariant { uni, bi, quad, cts, cts_plus };

inline ShiftVariant shift_variant_from_string(const std::string& s) {
    if (s == "uni") return ShiftVariant::uni;
    if (s == "bi") return ShiftVariant::bi;
    if (s == "quad") return ShiftVariant::quad;
    if (s == "cts") return ShiftVariant::cts;
    if (s == "cts_plus") return ShiftVariant::cts_plus;
    throw ConfigError("unknown shift variant '" + s + "' (uni|bi|quad|cts|cts_plus)");
}

inline const char* shift_variant_name(ShiftVariant v) {
    switch (v) {
        case ShiftVariant::uni: return "uni";
        case ShiftVariant::bi: return "bi";
        case ShiftVariant::quad: return "quad";
        case ShiftVariant::cts: return "cts";
        case ShiftVariant::cts_plus: return "cts_plus";
    }
    return "?";
}

struct Offset {
    int dy = 0;
    int dx = 0;
    int manhattan() const { return std::abs(dy) + std::abs(dx); }
};

// Ordered set of non-zero displacements with 1/distance weights. The order is
// fixed (it determines the channel layout, which checkpoints depend on).
struct OffsetDictionary {
    std::vector<Offset> offsets;

    explicit OffsetDictionary(std::vector<Offset> offs) : offsets(std::move(offs)) {
        for (std::size_t i = 0; i < offsets.size(); ++i) {
            if (offsets[i].manhattan() == 0) throw ParamError("offset dictionary: zero offset");
            for (std::size_t j = 0; j < i; ++j)
                if (offsets[i].dy == offsets[j].dy && offsets[i].dx == offsets[j].dx)
                    throw ParamError("offset dictionary: duplicate offset");
        }
        if (offsets.empty()) throw ParamError("offset dictionary: empty");
    }

    double weight(std::size_t i) const { return 1.0 / offsets[i].manhattan(); }

    double weight_sum() const {
        double s = 0.0;
        for (std::size_t i = 0; i < offsets.size(); ++i) s += weight(i);
        return s;
    }

    std::size_t size() const { return offsets.size(); }

    // the 12 neighbors at Manhattan distance 1 and 2, axis offsets first
    static OffsetDictionary cts() {
        return OffsetDictionary({{0, 1},
                                 {0, -1},
                                 {1, 0},
                                 {-1, 0},
                                 {0, 2},
                                 {0, -2},
                                 {2, 0},
                                 {-2, 0},
                                 {1, 1},
                                 {1, -1},
                                 {-1, 1},
                                 {-1, -1}});
    }

    // cts plus the four axis-aligned neighbors at distance 3 (16 offsets)
    static OffsetDictionary cts_plus() {
        auto d = cts();
        d.offsets.push_back({0, 3});
        d.offsets.push_back({0, -3});
        d.offsets.push_back({3, 0});
        d.offsets.push_back({-3, 0});
        return d;
    }

    static OffsetDictionary uni() { return OffsetDictionary({{0, 1}}); }

    static OffsetDictionary bi() { return OffsetDictionary({{0, 1}, {0, -1}}); }

    static OffsetDictionary quad() { return OffsetDictionary({{0, 1}, {0, -1}, {1, 0}, {-1, 0}}); }

    static OffsetDictionary for_variant(ShiftVariant v) {
        switch (v) {
            case ShiftVariant::uni: return uni();
            case ShiftVariant::bi: return bi();
            case ShiftVariant::quad: return quad();
            case ShiftVariant::cts: return cts();
            case ShiftVariant::cts_plus: return cts_plus();
        }
        throw ConfigError("bad shift variant");
    }
};

struct ChannelSpan {
    Offset offset;
    std::int64_t start = 0;
    std::int64_t count = 0;
};

// Channel budget per offset: floor(k * w_p) with k = C / sum(w_p), assigned in
// dictionary order; the final span absorbs the rounding residue so the spans
// cover [0, C) exactly.
inline std::vector<ChannelSpan> partition_channels(const OffsetDictionary& d, std::int64_t c) {
    if (c <= 0) throw ParamError("partition_channels: channel count must be positive");
    const double expansion = static_cast<double>(c) / d.weight_sum();
    std::vector<ChannelSpan> spans(d.size());
    std::int64_t cursor = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        std::int64_t width = static_cast<std::int64_t>(expansion * d.weight(i));
        if (i + 1 == d.size()) width = c - cursor;  // residue
        spans[i] = {d.offsets[i], cursor, width};
        cursor += width;
    }
    return spans;
}

// CTS(x) = omega * o + (1 - omega) * x, where o holds per-span copies of x
// displaced by that span's offset ("prior pixel" direction: o[y][x] reads
// x[y-dy][x-dx]); out-of-range reads are zero.
template <typename T>
Tensor<T> cts_shift(const Tensor<T>& x, const OffsetDictionary& d, T omega) {
    if (x.ndim() != 4) throw ShapeError("cts expects (B,C,H,W), got " + x.shape_str());
    const std::int64_t b = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
    const auto spans = partition_channels(d, c);
    Tensor<T> out(x.shape());
    const T keep = T{1} - omega;
    parallel_for(b, [&](std::int64_t bi) {
        for (const auto& span : spans) {
            for (std::int64_t ci = span.start; ci < span.start + span.count; ++ci) {
                for (std::int64_t y = 0; y < h; ++y) {
                    const std::int64_t sy = y - span.offset.dy;
                    for (std::int64_t xx = 0; xx < w; ++xx) {
                        const std::int64_t sx = xx - span.offset.dx;
                        const T o = (sy >= 0 && sy < h && sx >= 0 && sx < w)
                                        ? x.at4(bi, ci, sy, sx)
                                        : T{0};
                        out.at4(bi, ci, y, xx) = omega * o + keep * x.at4(bi, ci, y, xx);
                    }
                }
            }
        }
    });
    return out;
}

template <typename T>
struct CtsGrads {
    Tensor<T> gx;
    T gomega;
};

template <typename T>
CtsGrads<T> cts_shift_backward(const Tensor<T>& x, const OffsetDictionary& d, T omega,
                               const Tensor<T>& g) {
    const std::int64_t b = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
    const auto spans = partition_channels(d, c);
    CtsGrads<T> out{Tensor<T>(x.shape()), T{0}};
    double gomega = 0.0;
    const T keep = T{1} - omega;
    for (std::int64_t bi = 0; bi < b; ++bi) {
        for (const auto& span : spans) {
            for (std::int64_t ci = span.start; ci < span.start + span.count; ++ci) {
                for (std::int64_t y = 0; y < h; ++y) {
                    const std::int64_t sy = y - span.offset.dy;
                    for (std::int64_t xx = 0; xx < w; ++xx) {
                        const std::int64_t sx = xx - span.offset.dx;
                        const T gv = g.at4(bi, ci, y, xx);
                        out.gx.at4(bi, ci, y, xx) += keep * gv;
                        const bool in = sy >= 0 && sy < h && sx >= 0 && sx < w;
                        if (in) out.gx.at4(bi, ci, sy, sx) += omega * gv;
                        const T o = in ? x.at4(bi, ci, sy, sx) : T{0};
                        gomega += static_cast<double>(gv * (o - x.at4(bi, ci, y, xx)));
                    }
                }
            }
        }
    }
    out.gomega = static_cast<T>(gomega);
    return out;
}

// Uni/Bi/Quad ablation baselines share the CTS fill-and-blend semantics; their
// dictionaries are all distance-1, so spans come out equal-width.
template <typename T>
Tensor<T> baseline_shift(const Tensor<T>& x, ShiftVariant variant, T omega) {
    return cts_shift(x, OffsetDictionary::for_variant(variant), omega);
}

}  // namespace crwkv
