#pragma once

#include "gpmu/types.hpp"

namespace gpmu {

/// Pairwise (cascade) summation: deterministic under reordering-free use and
/// better conditioned than running sums for long reductions.
double pairwise_sum(const Vec& values);

/// ln sum exp(a_i) with max-subtraction; -inf when all entries are -inf.
double log_sum_exp(const Vec& log_values);

} // namespace gpmu
