#pragma once

#include <cmath>

#include "kernelmix/types.hpp"

namespace kernelmix {

/// Smoothing weight w_h(delta) for a time difference. Unnormalized so that
/// w_h(0) = 1; the normalization cancels in every ratio it is used in.
/// Exactly zero beyond cutoff * h.
inline double kernel_weight(const KernelSpec& spec, double delta) {
    const double a = std::abs(delta);
    if (a > spec.cutoff * spec.h) return 0.0;
    switch (spec.family) {
        case KernelFamily::gaussian: {
            const double z = a / spec.h;
            return std::exp(-0.5 * z * z);
        }
        case KernelFamily::boxcar:
            return a <= spec.h ? 1.0 : 0.0;
    }
    return 0.0;
}

} // namespace kernelmix
