#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "crwkv/tensor.hpp"

namespace crwkv {

// Error metric used throughout: |a - b| / max(1, |a|, |b|). Absolute for
// small magnitudes, relative for large ones.
inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

template <typename T>
double max_rel_err(const Tensor<T>& a, const Tensor<T>& b) {
    double worst = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i)
        worst = std::max(worst, rel_err(static_cast<double>(a[i]), static_cast<double>(b[i])));
    return worst;
}

// Central finite differences with h = h_scale * max(1, |theta|) against the
// analytic values, over the scalar slots listed in `slots`.
// eval() must recompute the loss from current slot contents.
inline double gradcheck_max_err(const std::vector<double*>& slots,
                                const std::vector<double>& analytic,
                                const std::function<double()>& eval, double h_scale = 1e-5) {
    double worst = 0.0;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        double& x = *slots[i];
        const double orig = x;
        const double h = h_scale * std::max(1.0, std::abs(orig));
        x = orig + h;
        const double fp = eval();
        x = orig - h;
        const double fm = eval();
        x = orig;
        const double fd = (fp - fm) / (2.0 * h);
        worst = std::max(worst, rel_err(fd, analytic[i]));
    }
    return worst;
}

// convenience: every element of a tensor as a perturbable slot
inline void collect_slots(Tensor<double>& t, std::vector<double*>& slots) {
    for (std::int64_t i = 0; i < t.numel(); ++i) slots.push_back(&t[i]);
}

inline void collect_grads(const Tensor<double>& t, std::vector<double>& vals) {
    for (std::int64_t i = 0; i < t.numel(); ++i) vals.push_back(t[i]);
}

}  // namespace crwkv
