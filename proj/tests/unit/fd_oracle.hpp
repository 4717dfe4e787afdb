#pragma once

// Central finite-difference oracle, independent of Graph::backward.

#include <algorithm>
#include <cmath>
#include <functional>

#include "seedlab/numerics/params.hpp"
#include "seedlab/numerics/rng.hpp"

namespace seedlab::testing {

struct FdReport {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
};

// |analytic - numeric| / max(|analytic|, |numeric|, floor)
inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Checks up to `per_tensor` randomly chosen coordinates of every parameter
// (all of them if the tensor is small enough).
inline FdReport finite_difference_check(num::ParamStore& params, const num::Gradients& analytic,
                                        const std::function<double(const num::ParamStore&)>& loss,
                                        num::Rng& rng, std::size_t per_tensor = 12, double h = 1e-5) {
    FdReport rep;
    for (num::ParamId p = 0; p < params.size(); ++p) {
        num::Tensor& t = params.value(p);
        const std::size_t n = t.numel();
        const std::size_t count = std::min(n, per_tensor);
        for (std::size_t c = 0; c < count; ++c) {
            const std::size_t idx = n <= per_tensor ? c : static_cast<std::size_t>(rng.below(n));
            const double orig = t[idx];
            t[idx] = orig + h;
            const double up = loss(params);
            t[idx] = orig - h;
            const double down = loss(params);
            t[idx] = orig;
            const double numeric = (up - down) / (2.0 * h);
            rep.max_rel_error = std::max(rep.max_rel_error, rel_error(analytic.by_param[p][idx], numeric));
            ++rep.checked;
        }
    }
    return rep;
}

}  // namespace seedlab::testing
