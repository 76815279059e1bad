#pragma once

// Independent reference computations used to check the implementation.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "fieldlens/nn.hpp"

namespace fieldlens::testing {

/// Mean cross-entropy from forward() logits via a direct log-sum-exp, without touching backward().
inline double reference_loss(const ModelSpec& model, const TensorND& X, std::span<const std::size_t> y) {
    const TensorND z = forward(model, X);
    const std::size_t c = z.shape.back();
    double total = 0.0;
    for (std::size_t b = 0; b < y.size(); ++b) {
        double sum = 0.0;
        for (std::size_t k = 0; k < c; ++k) sum += std::exp(z.values[b * c + k]);
        total += std::log(sum) - z.values[b * c + y[b]];
    }
    return total / static_cast<double>(y.size());
}

/// Central finite differences of reference_loss over every packed parameter.
inline std::vector<double> finite_difference_gradient(const ModelSpec& model, const TensorND& X,
                                                      std::span<const std::size_t> y, double step = 1e-5) {
    std::vector<double> params = pack_parameters(model);
    std::vector<double> grad(params.size());
    ModelSpec probe = model;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = params[i];
        params[i] = saved + step;
        unpack_parameters(probe, params);
        const double up = reference_loss(probe, X, y);
        params[i] = saved - step;
        unpack_parameters(probe, params);
        const double down = reference_loss(probe, X, y);
        params[i] = saved;
        grad[i] = (up - down) / (2.0 * step);
    }
    return grad;
}

/// Largest |a-b| / max(|a|, |b|, floor) over the two vectors. The floor keeps
/// near-zero entries from dominating through finite-difference roundoff.
inline double max_relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-6) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

}  // namespace fieldlens::testing
