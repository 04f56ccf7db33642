#include "gpmu/nelder_mead.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace gpmu {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

double guard(double v) { return std::isnan(v) ? kInf : v; }
} // namespace

NelderMeadResult nelder_mead(const std::function<double(const Vec&)>& f, const Vec& x0,
                             const NelderMeadOptions& opts) {
    const Index d = x0.size();
    NelderMeadResult best;
    best.x = x0;
    best.f = kInf;
    if (d == 0) {
        best.f = guard(f(x0));
        best.evals = 1;
        best.converged = true;
        return best;
    }
    int evals = 0;
    auto eval = [&](const Vec& x) {
        ++evals;
        const double v = guard(f(x));
        if (v < best.f) {
            best.f = v;
            best.x = x;
        }
        return v;
    };

    std::vector<Vec> xs(d + 1, x0);
    std::vector<double> fs(d + 1);
    fs[0] = eval(x0);
    for (Index i = 0; i < d; ++i) {
        const double step = opts.initial_step * std::max(std::abs(x0[i]), 1.0);
        xs[i + 1][i] += step;
        fs[i + 1] = eval(xs[i + 1]);
    }

    std::vector<int> order(d + 1);
    while (evals < opts.max_evals) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return fs[a] < fs[b]; });
        const int lo = order[0], hi = order[d], second_hi = order[std::max<Index>(d - 1, 0)];

        // convergence on simplex spread
        double xspread = 0.0;
        for (int i = 1; i <= d; ++i)
            xspread = std::max(xspread, (xs[order[i]] - xs[lo]).cwiseAbs().maxCoeff());
        const double fspread = fs[hi] - fs[lo];
        if (std::isfinite(fspread) && xspread <= opts.xtol * (1.0 + xs[lo].cwiseAbs().maxCoeff()) &&
            fspread <= opts.ftol * (1.0 + std::abs(fs[lo]))) {
            best.converged = true;
            break;
        }

        Vec centroid = Vec::Zero(d);
        for (int i = 0; i <= d; ++i)
            if (i != hi) centroid += xs[i];
        centroid /= static_cast<double>(d);

        const Vec xr = centroid + (centroid - xs[hi]);
        const double fr = eval(xr);
        if (fr < fs[lo]) {
            const Vec xe = centroid + 2.0 * (centroid - xs[hi]);
            const double fe = eval(xe);
            if (fe < fr) {
                xs[hi] = xe;
                fs[hi] = fe;
            } else {
                xs[hi] = xr;
                fs[hi] = fr;
            }
        } else if (fr < fs[second_hi]) {
            xs[hi] = xr;
            fs[hi] = fr;
        } else {
            const bool outside = fr < fs[hi];
            const Vec xc = outside ? Vec(centroid + 0.5 * (xr - centroid))
                                   : Vec(centroid - 0.5 * (centroid - xs[hi]));
            const double fc = eval(xc);
            if (fc < std::min(fr, fs[hi])) {
                xs[hi] = xc;
                fs[hi] = fc;
            } else {
                for (int i = 0; i <= d; ++i) {
                    if (i == lo) continue;
                    xs[i] = xs[lo] + 0.5 * (xs[i] - xs[lo]);
                    fs[i] = eval(xs[i]);
                    if (evals >= opts.max_evals) break;
                }
            }
        }
    }
    best.evals = evals;
    return best;
}

} // namespace gpmu
