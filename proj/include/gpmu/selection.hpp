#pragma once

#include "gpmu/inference.hpp"
#include "gpmu/prediction.hpp"
#include "gpmu/sampler.hpp"
#include "gpmu/types.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace gpmu {

struct ModelClassScore {
    std::string model_id;
    double log_evidence = 0.0;
    std::optional<double> log_posterior_predictive;
    double log_prior_prob = 0.0; // equal model priors by default: ln(1) shift-invariant
    std::optional<double> bic;
    std::string evidence_provenance; // "tmcmc" or "laplace"

    /// log_evidence + log_posterior_predictive (when present) + log_prior_prob.
    double total(bool use_predictive) const;
};

/// Softmax over per-model totals with max-subtraction; sums to one. Throws
/// numerical_error when every total is -inf.
Vec model_posterior_probabilities(const std::vector<ModelClassScore>& scores, bool use_predictive);

/// ln((1/N) sum_i exp(a_i)) via log-sum-exp.
double log_mixture_density(const Vec& component_log_densities);

/// ln[(1/N_s) sum_m N(Y_heldout | mu_m, Sigma_m)] with per-sample predictive
/// moments from conditional_predict. -inf (with n_underflow reporting via
/// return) when every component underflows.
double log_posterior_predictive_score(const InferenceProblem& problem,
                                      const PosteriorSamples& samples,
                                      const TimeSeriesDataset& heldout, int thin = 1);

/// Gaussian log density of the held-out record under one parameter point;
/// the N_s = 1 special case of the score above.
double log_predictive_density(const InferenceProblem& problem, const Vec& packed,
                              const TimeSeriesDataset& heldout);

/// log_lik_at_mpv - (n_params/2) ln(n_data). Callers pass the full count
/// including the noise parameter (N_theta + N_phi + 1 when the noise floor
/// is not already part of phi).
double bic_score(double log_lik_at_mpv, int n_params, Index n_data);

struct OrderCandidate {
    int order = 0;
    LaplaceSummary summary;
    double bic = 0.0;
    double log_lik_at_mpv = 0.0;
    bool failed = false;
    std::string error;
};

struct OrderSelectionResult {
    std::vector<OrderCandidate> candidates; // ordered as requested
    int chosen_order = 0;
};

/// Builds an inference problem + init per candidate order (the kernel-order
/// analog of a model family). Initialization policy — e.g. seeding MMTE
/// frequencies at the structural modal frequencies — lives in the factory.
using OrderedProblemFactory =
    std::function<std::pair<InferenceProblem, ParameterSplit>(int order)>;

/// find_mpv per order, scored by BIC with the parameter count taken from the
/// problem (theta + phi; the noise variance is part of phi here). Ties break
/// toward the smaller order. Per-order failures are recorded; throws only
/// when every order fails.
OrderSelectionResult select_mmte_order(const OrderedProblemFactory& factory,
                                       const std::vector<int>& orders,
                                       const MpvOptions& options = {});

/// Initial MMTE phi for a given order: frequencies at the first `order`
/// modal frequencies (harmonics of the last mode when order exceeds the
/// modes available), shared amplitude/length/noise guesses appended.
Vec mmte_initial_phi(const Vec& modal_freqs_rad, int order, double sigma_f2, double inv_len2,
                     double noise_var);

} // namespace gpmu
