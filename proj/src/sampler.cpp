#include "gpmu/sampler.hpp"

#include "gpmu/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace gpmu {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
} // namespace

double pairwise_sum(const Vec& values) {
    const Index n = values.size();
    if (n == 0) return 0.0;
    // bottom-up cascade on a scratch copy
    std::vector<double> buf(values.data(), values.data() + n);
    Index width = n;
    while (width > 1) {
        const Index half = width / 2;
        for (Index i = 0; i < half; ++i) buf[i] = buf[2 * i] + buf[2 * i + 1];
        if (width % 2 == 1) {
            buf[half] = buf[width - 1];
            width = half + 1;
        } else {
            width = half;
        }
    }
    return buf[0];
}

double log_sum_exp(const Vec& log_values) {
    if (log_values.size() == 0) return -kInf;
    const double m = log_values.maxCoeff();
    if (!std::isfinite(m)) return m; // all -inf (or a stray +inf propagates)
    Vec shifted = (log_values.array() - m).exp();
    return m + std::log(pairwise_sum(shifted));
}

void TmcmcConfig::validate() const {
    if (n_samples < 100) throw config_error("tmcmc needs at least 100 samples per stage");
    if (!(proposal_scale > 0.0 && proposal_scale <= 1.0))
        throw config_error("tmcmc proposal scale must be in (0, 1]");
    if (max_stages < 1) throw config_error("tmcmc needs max_stages >= 1");
    if (!seed.has_value()) throw config_error("tmcmc seed is required");
    if (target_weight_cov <= 0.0) throw config_error("target weight cov must be > 0");
}

std::vector<Index> multinomial_resample(const Vec& normalized_weights, SplitRng& rng) {
    const Index n = normalized_weights.size();
    Vec cdf(n);
    double acc = 0.0;
    for (Index i = 0; i < n; ++i) {
        acc += normalized_weights[i];
        cdf[i] = acc;
    }
    cdf[n - 1] = 1.0; // guard the tail against rounding
    std::vector<Index> parents(n);
    for (Index j = 0; j < n; ++j) {
        const double u = rng.uniform();
        parents[j] = std::lower_bound(cdf.data(), cdf.data() + n, u) - cdf.data();
    }
    return parents;
}

namespace {

// coefficient of variation of w_i = exp(delta * (ll_i - max ll))
double weight_cov(const Vec& ll, double delta) {
    const double m = ll.maxCoeff();
    const Vec w = (delta * (ll.array() - m)).exp();
    const double mean = w.mean();
    const double var = (w.array() - mean).square().mean();
    return std::sqrt(var) / mean;
}

} // namespace

PosteriorSamples tmcmc_run(const PriorModel& prior, const LogLikFn& loglik,
                           const TmcmcConfig& config) {
    config.validate();
    if (prior.dim < 1 || !prior.sample || !prior.log_density || !prior.in_support)
        throw invalid_model("prior model incomplete");
    const Index N = config.n_samples;
    const Index d = prior.dim;
    const SplitRng root(*config.seed);

    Mat x(N, d);
    Vec ll(N);
    for (Index i = 0; i < N; ++i) {
        SplitRng ri = root.split(static_cast<std::uint64_t>(i));
        x.row(i) = prior.sample(ri).transpose();
        ll[i] = loglik(x.row(i).transpose());
    }

    PosteriorSamples out;
    out.stage_betas.push_back(0.0);
    double beta = 0.0;
    double log_ev = 0.0;

    for (int stage = 1; stage <= config.max_stages && beta < 1.0; ++stage) {
        if (!(ll.maxCoeff() > -kInf))
            throw numerical_error("all likelihoods vanished at tempering stage " +
                                  std::to_string(stage));
        // next beta: largest step whose weight COV stays at the target
        double delta = 1.0 - beta;
        if (weight_cov(ll, delta) > config.target_weight_cov) {
            double lo = 0.0, hi = delta;
            for (int it = 0; it < 60; ++it) {
                const double mid = 0.5 * (lo + hi);
                if (weight_cov(ll, mid) > config.target_weight_cov) hi = mid;
                else lo = mid;
            }
            delta = 0.5 * (lo + hi);
        }
        const double beta_next = std::min(1.0, beta + delta);

        const double m = ll.maxCoeff();
        const Vec w = (delta * (ll.array() - m)).exp();
        const double mean_w = pairwise_sum(w) / static_cast<double>(N);
        log_ev += delta * m + std::log(mean_w);
        const Vec wn = w / (mean_w * static_cast<double>(N));

        // weighted moments drive the proposal
        const Vec mu = x.transpose() * wn;
        Mat cov = Mat::Zero(d, d);
        for (Index i = 0; i < N; ++i) {
            const Vec c = x.row(i).transpose() - mu;
            cov.noalias() += wn[i] * (c * c.transpose());
        }
        cov = config.proposal_scale * config.proposal_scale * cov;
        cov.diagonal().array() += 1e-12 * std::max(1.0, cov.trace() / static_cast<double>(d));
        Eigen::LLT<Mat> llt(cov);
        if (llt.info() != Eigen::Success) {
            cov.diagonal().array() += 1e-8 * std::max(1.0, cov.trace() / static_cast<double>(d));
            llt.compute(cov);
            if (llt.info() != Eigen::Success)
                throw numerical_error("tmcmc proposal covariance factorization failed");
        }
        const Mat chol = llt.matrixL();

        SplitRng stage_rng =
            root.split(0x8000000000000000ULL + static_cast<std::uint64_t>(stage));
        const std::vector<Index> parents = multinomial_resample(wn, stage_rng);

        Mat x_next(N, d);
        Vec ll_next(N);
        Index accepted = 0;
        for (Index j = 0; j < N; ++j) {
            SplitRng rj = root.split((static_cast<std::uint64_t>(stage) << 32) ^
                                     static_cast<std::uint64_t>(j));
            const Vec xp = x.row(parents[j]).transpose();
            const double llp = ll[parents[j]];
            Vec step(d);
            for (Index k = 0; k < d; ++k) step[k] = rj.normal();
            const Vec cand = xp + chol * step;
            double ll_cand = -kInf;
            bool accept = false;
            if (prior.in_support(cand)) {
                ll_cand = loglik(cand);
                const double log_acc = beta_next * (ll_cand - llp) + prior.log_density(cand) -
                                       prior.log_density(xp);
                const double u = rj.uniform();
                accept = std::log(u) < log_acc;
            } else {
                (void)rj.uniform(); // keep the per-sample stream aligned
            }
            if (accept) {
                x_next.row(j) = cand.transpose();
                ll_next[j] = ll_cand;
                ++accepted;
            } else {
                x_next.row(j) = xp.transpose();
                ll_next[j] = llp;
            }
        }
        x = x_next;
        ll = ll_next;
        beta = beta_next;
        out.stage_betas.push_back(beta);
        out.acceptance_rates.push_back(static_cast<double>(accepted) / static_cast<double>(N));
    }
    if (beta < 1.0)
        throw numerical_error("tempering did not reach beta = 1 within " +
                              std::to_string(config.max_stages) + " stages (beta = " +
                              std::to_string(beta) + ")");
    out.samples = x;
    out.log_likelihoods = ll;
    out.log_evidence = log_ev;
    return out;
}

PosteriorSamples tmcmc_sample(const InferenceProblem& problem, const TmcmcConfig& config) {
    problem.validate();
    const PriorSpec& ps = problem.prior;
    const Index d = ps.dim();

    // internal coordinates: log-uniform entries become flat in log space
    Vec lo(d), hi(d);
    for (Index i = 0; i < d; ++i) {
        const auto& e = ps.entries[static_cast<size_t>(i)];
        if (e.kind == PriorKind::LogUniform) {
            lo[i] = std::log(e.lo);
            hi[i] = std::log(e.hi);
        } else {
            lo[i] = e.lo;
            hi[i] = e.hi;
        }
    }
    PriorModel pm;
    pm.dim = d;
    pm.in_support = [lo, hi](const Vec& z) {
        return (z.array() >= lo.array()).all() && (z.array() <= hi.array()).all();
    };
    pm.log_density = [lo, hi](const Vec& z) -> double {
        if (!((z.array() >= lo.array()).all() && (z.array() <= hi.array()).all())) return -kInf;
        // flat in these coordinates; normalized so the evidence stays meaningful
        double ld = 0.0;
        for (Index i = 0; i < z.size(); ++i) ld -= std::log(hi[i] - lo[i]);
        return ld;
    };
    pm.sample = [lo, hi](SplitRng& rng) {
        Vec z(lo.size());
        for (Index i = 0; i < z.size(); ++i) z[i] = rng.uniform(lo[i], hi[i]);
        return z;
    };
    auto loglik = [&problem, &ps](const Vec& z) -> double {
        try {
            return problem_log_likelihood(problem, ps.from_internal(z));
        } catch (const invalid_model&) {
            return -kInf;
        } catch (const numerical_error&) {
            return -kInf;
        }
    };

    PosteriorSamples out = tmcmc_run(pm, loglik, config);
    for (Index i = 0; i < out.samples.rows(); ++i)
        out.samples.row(i) = ps.from_internal(out.samples.row(i).transpose()).transpose();
    for (const auto& info : problem.parameter_map) out.parameter_names.push_back(info.name);
    return out;
}

std::pair<Vec, Mat> sample_moments(const PosteriorSamples& samples) {
    const Index N = samples.n_samples();
    if (N < 2) throw invalid_model("moments need at least two samples");
    const Vec mean = samples.samples.colwise().mean();
    const Mat centered = samples.samples.rowwise() - mean.transpose();
    Mat cov = (centered.transpose() * centered) / static_cast<double>(N);
    cov = 0.5 * (cov + cov.transpose()).eval();
    return {mean, cov};
}

double evidence_naive(const Vec& log_likelihoods_at_prior_samples) {
    const Index N = log_likelihoods_at_prior_samples.size();
    if (N == 0) throw invalid_model("no samples");
    return log_sum_exp(log_likelihoods_at_prior_samples) - std::log(static_cast<double>(N));
}

double evidence_naive(const InferenceProblem& problem, int n_samples, std::uint64_t seed) {
    problem.validate();
    const SplitRng root(seed);
    Vec lls(n_samples);
    for (int i = 0; i < n_samples; ++i) {
        SplitRng ri = root.split(static_cast<std::uint64_t>(i));
        const Vec x = problem.prior.sample(ri);
        try {
            lls[i] = problem_log_likelihood(problem, x);
        } catch (const invalid_model&) {
            lls[i] = -kInf;
        } catch (const numerical_error&) {
            lls[i] = -kInf;
        }
    }
    return evidence_naive(lls);
}

} // namespace gpmu
