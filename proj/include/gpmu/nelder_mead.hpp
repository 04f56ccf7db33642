#pragma once

#include "gpmu/types.hpp"

#include <functional>

namespace gpmu {

struct NelderMeadOptions {
    int max_evals = 500;
    double xtol = 1e-8;   // simplex spread in x
    double ftol = 1e-10;  // simplex spread in f
    double initial_step = 0.1; // per-coordinate simplex edge (relative when x!=0)
};

struct NelderMeadResult {
    Vec x;
    double f = 0.0;
    int evals = 0;
    bool converged = false;
};

/// Derivative-free simplex minimization (reflection/expansion/contraction/
/// shrink with the standard 1, 2, 0.5, 0.5 coefficients). The objective may
/// return +inf to veto a point. Result is the best vertex ever seen, so
/// f(result) <= f(x0) always holds.
NelderMeadResult nelder_mead(const std::function<double(const Vec&)>& f, const Vec& x0,
                             const NelderMeadOptions& opts = {});

} // namespace gpmu
