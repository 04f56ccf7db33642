#pragma once

#include "gpmu/inference.hpp"
#include "gpmu/rng.hpp"
#include "gpmu/types.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace gpmu {

struct TmcmcConfig {
    int n_samples = 1000;            // N_s per stage
    double target_weight_cov = 1.0;  // stage-step controller target
    double proposal_scale = 0.2;     // proposal cov = scale^2 x sample cov
    int max_stages = 100;
    std::optional<std::uint64_t> seed; // required; no silent default

    void validate() const; // n_samples >= 100, 0 < scale <= 1, seed set
};

struct PosteriorSamples {
    Mat samples;    // N_s x d, natural units
    Vec log_likelihoods;
    double log_evidence = 0.0;
    std::vector<double> stage_betas;      // 0 = ... strictly increasing ... = 1
    std::vector<double> acceptance_rates; // per transition stage
    std::vector<std::string> parameter_names;

    Index n_samples() const { return samples.rows(); }
    Index dim() const { return samples.cols(); }
};

/// Target prior for the generic sampler core: sampling, log density, and a
/// support test. Lets analytic targets (e.g. truncated Gaussians) drive the
/// scheme directly.
struct PriorModel {
    std::function<Vec(SplitRng&)> sample;
    std::function<double(const Vec&)> log_density; // -inf outside support
    std::function<bool(const Vec&)> in_support;
    Index dim = 0;
};

using LogLikFn = std::function<double(const Vec&)>;

/// Transitional MCMC: stage j targets p(x) L(x)^{beta_j}; the next beta is
/// found by bisection so the weight coefficient of variation hits
/// target_weight_cov; multinomial resampling; one Metropolis move per sample
/// with Gaussian proposal covariance proposal_scale^2 x weighted sample
/// covariance; log evidence accumulates ln(mean stage weights). RNG streams
/// split per sample index, so results are independent of evaluation order.
PosteriorSamples tmcmc_run(const PriorModel& prior, const LogLikFn& loglik,
                           const TmcmcConfig& config);

/// TMCMC over an inference problem's posterior. Internally samples in the
/// prior's internal coordinates (log space for LogUniform entries);
/// returned samples and evidence are in natural units (the evidence is
/// invariant under the reparameterization).
PosteriorSamples tmcmc_sample(const InferenceProblem& problem, const TmcmcConfig& config);

/// Plug-in mean and 1/N_s-normalized (biased) covariance of the samples.
std::pair<Vec, Mat> sample_moments(const PosteriorSamples& samples);

/// Parent index per offspring under multinomial resampling (CDF inversion of
/// one uniform draw per offspring).
std::vector<Index> multinomial_resample(const Vec& normalized_weights, SplitRng& rng);

/// ln((1/N) sum exp(ll_i)) over prior samples: the naive Monte-Carlo
/// evidence, kept for diagnostics precisely because it degrades on peaked
/// likelihoods. Pairwise/log-sum-exp reduction; -inf when all underflow.
double evidence_naive(const Vec& log_likelihoods_at_prior_samples);

/// Draws n prior samples from the problem and applies the estimator above.
double evidence_naive(const InferenceProblem& problem, int n_samples, std::uint64_t seed);

} // namespace gpmu
