#pragma once

#include "gpmu/dynamics.hpp"
#include "gpmu/kernels.hpp"
#include "gpmu/rng.hpp"
#include "gpmu/types.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace gpmu {

enum class Transform { Identity, Log };

struct ParameterInfo {
    std::string name;
    std::string unit;
    Transform transform = Transform::Identity;
};

/// Joint parameter vector split into structural parameters (theta) and
/// kernel hyperparameters (phi), with one ParameterInfo per entry
/// (theta first, then phi).
struct ParameterSplit {
    Vec theta;
    Vec phi;
    std::vector<ParameterInfo> parameter_map;

    Index n_theta() const { return theta.size(); }
    Index n_phi() const { return phi.size(); }
    Index n_total() const { return theta.size() + phi.size(); }

    Vec packed() const;
    static ParameterSplit from_packed(const Vec& x, Index n_theta,
                                      std::vector<ParameterInfo> parameter_map);

    /// Throws invalid_model when sizes disagree or values are non-finite.
    void validate() const;
};

enum class PriorKind { Uniform, LogUniform };

struct PriorEntry {
    PriorKind kind = PriorKind::Uniform;
    double lo = 0.0;
    double hi = 1.0;
};

/// Independent per-parameter priors over the packed [theta; phi] vector.
struct PriorSpec {
    std::vector<PriorEntry> entries;

    Index dim() const { return static_cast<Index>(entries.size()); }
    void validate() const;
    bool in_support(const Vec& x) const;
    /// Normalized log density; -inf outside the support.
    double log_density(const Vec& x) const;
    Vec sample(SplitRng& rng) const;

    /// Optimization/sampling coordinates: LogUniform entries live in log
    /// space (where their density is flat), Uniform entries untouched.
    Vec to_internal(const Vec& natural) const;
    Vec from_internal(const Vec& internal) const;
    std::vector<Transform> transforms() const;
};

/// Keep eigendirections with eigenvalue >= relative_threshold * lambda_max;
/// the discarded subspace is treated as pure noise floor.
struct TruncationPolicy {
    double relative_threshold = 5e-3;
    bool enabled = false;

    void validate() const; // threshold in [1e-3, 1e-2] when enabled
};

/// Spectral form of a symmetric covariance: retained eigenpairs plus an
/// isotropic floor on the complement.
struct TruncatedSpectral {
    Vec eigenvalues;  // retained, descending
    Mat eigenvectors; // dim x r
    double log_det = 0.0;
    double noise_floor = 0.0;
    Index dim = 0;

    Index retained() const { return eigenvalues.size(); }
    double quad_form(const Vec& x) const; // x' K^{-1} x
    Vec apply_inverse(const Vec& x) const;
};

TruncatedSpectral truncated_spectral_form(const Mat& K, const TruncationPolicy& policy,
                                          double noise_floor);

/// Factorized stacked-output covariance. Distinct channels share the
/// temporal kernel and are a-priori uncorrelated, so the stacked covariance
/// is I_channels (x) (K_t + sigma_n^2 I): one n x n factorization serves
/// every channel regardless of sensor count.
class CovarianceOperator {
  public:
    CovarianceOperator(const KernelConfig& kernel, const AuxiliaryGrid& grid,
                       const TruncationPolicy& policy = {});

    double log_det() const { return log_det_; }        // full stacked matrix
    double quad_form(const Mat& residual) const;       // residual is n x channels
    Mat solve_temporal(const Mat& rhs) const;          // (K_t + sn^2 I)^{-1} rhs
    Index dim() const { return n_ * channels_; }
    Index n_times() const { return n_; }
    bool truncated() const { return spectral_.has_value(); }
    Index retained_per_channel() const;
    bool jittered() const { return jittered_; }
    /// True when the uniform-grid Toeplitz recursion (O(n^2) per solve)
    /// handles this covariance instead of a dense factorization.
    bool toeplitz() const { return toeplitz_rho_.size() > 0; }

  private:
    Index n_ = 0;
    int channels_ = 1;
    double log_det_ = 0.0;
    double diagonal_value_ = 0.0; // > 0 on the white-noise fast path
    bool jittered_ = false;
    Eigen::LLT<Mat> llt_;
    std::optional<TruncatedSpectral> spectral_;
    Vec toeplitz_rho_;            // normalized first column; empty -> dense path
    double toeplitz_t0_ = 0.0;
};

/// ln N(Y | f(X;theta), K): Gaussian log density of the stacked outputs
/// about the simulated response, with K assembled from the kernel over the
/// dataset grid.
double log_likelihood(const TimeSeriesDataset& dataset, const ShearBuildingModel& model,
                      const KernelConfig& kernel, const TruncationPolicy& policy = {});

using ModelBuilder = std::function<ShearBuildingModel(const Vec& theta)>;
using KernelBuilder = std::function<KernelConfig(const Vec& phi)>;

/// A dataset bound to a parameterized model family and kernel family, with
/// priors over the packed [theta; phi] vector.
struct InferenceProblem {
    TimeSeriesDataset dataset;
    ModelBuilder build_model;
    KernelBuilder build_kernel;
    Index n_theta = 0;
    PriorSpec prior;
    std::vector<ParameterInfo> parameter_map;
    TruncationPolicy truncation{};
    /// Response at the dataset rows when the dataset alone cannot produce it
    /// (non-contiguous grids: the simulation must run over the full input
    /// history, then keep the observed rows). Empty -> simulate dataset.input.
    std::function<Mat(const ShearBuildingModel&)> response_override;

    Index n_phi() const { return prior.dim() - n_theta; }
    ParameterSplit split(const Vec& packed) const;
    void validate() const;
};

AuxiliaryGrid dataset_grid(const TimeSeriesDataset& dataset);

/// Response override for a dataset whose rows are a subset of `full`'s:
/// simulates over the full record, returns the subset rows.
std::function<Mat(const ShearBuildingModel&)> subset_response(TimeSeriesDataset full,
                                                              const TimeSeriesDataset& subset);

/// Simulated response at the problem's dataset rows (override respected).
Mat problem_response(const InferenceProblem& problem, const ShearBuildingModel& model);

/// ln p(Y|theta,phi) under the problem (override + truncation respected).
double problem_log_likelihood(const InferenceProblem& problem, const Vec& packed);

/// L(theta|phi) of the coordinate-descent scheme: 1/2 r'K^{-1}r - ln p(theta)
/// plus a carried constant; the theta-independent ln|K| term is dropped.
/// Out-of-support theta gives +inf, not an exception.
double neg_log_conditional_theta(const InferenceProblem& problem, const Vec& theta, const Vec& phi);

/// L(phi|theta): 1/2 ln|K| + 1/2 r'K^{-1}r - ln p(phi) plus the same carried
/// constant, so the two conditionals trace one joint objective.
double neg_log_conditional_phi(const InferenceProblem& problem, const Vec& phi, const Vec& theta);

/// Joint negative log posterior -ln p(theta,phi|Y,X) up to the additive
/// constant shared with the conditionals. +inf outside the prior support.
double neg_log_posterior(const InferenceProblem& problem, const Vec& packed);

struct MpvOptions {
    double tol = 1e-6;  // relative parameter change
    int max_iter = 100; // outer alternations
    int half_step_budget = 500;
    int restarts = 2; // perturbed restarts on the first sweep
    std::uint64_t restart_seed = 0x5eedu;
};

struct LaplaceSummary {
    ParameterSplit mpv;
    Mat covariance; // empty until laplace_covariance fills it
    bool converged = false;
    bool non_identifiable = false;
    int iterations = 0;
    double neg_log_posterior_at_mpv = 0.0;
    double log_likelihood_at_mpv = 0.0;
    std::vector<double> objective_trace; // joint objective per outer iteration

    Vec standard_deviations() const;
};

/// Two-stage coordinate search: alternate minimizing L(theta|phi) and
/// L(phi|theta) with a derivative-free simplex method until the relative
/// parameter change falls below tol. Covariance left empty.
LaplaceSummary find_mpv(const InferenceProblem& problem, const ParameterSplit& init,
                        const MpvOptions& options = {});

/// Gaussian posterior covariance at a minimum of the given negative log
/// posterior: central-difference Hessian in transformed coordinates
/// (h_i = max(1e-4 |x_i|, 1e-6)), symmetrized, inverted, delta-mapped back
/// to natural units. Non-PD Hessian -> pseudo-inverse + flag.
Mat laplace_covariance_of(const std::function<double(const Vec&)>& neg_log_post, const Vec& at,
                          const std::vector<Transform>& transforms,
                          bool* non_identifiable = nullptr);

/// Fills `summary.covariance` for the problem's posterior at summary.mpv.
LaplaceSummary laplace_covariance(const InferenceProblem& problem, LaplaceSummary summary);

/// ln p(Y|theta,phi) + ln p(theta,phi) + (p/2) ln 2pi + 1/2 ln|cov|:
/// the Gaussian-integral evidence of the Laplace approximation.
double laplace_evidence(const InferenceProblem& problem, const LaplaceSummary& summary);

/// --- standard family builders -------------------------------------------

/// theta entries replace the story stiffnesses listed in unknown_stories
/// (absolute, N/m).
ModelBuilder stiffness_builder(ShearBuildingModel nominal, std::vector<int> unknown_stories);

/// theta entries are dimensionless multipliers on the nominal stiffnesses of
/// unknown_stories.
ModelBuilder stiffness_ratio_builder(ShearBuildingModel nominal, std::vector<int> unknown_stories);

/// Kernel builder whose phi layout appends the noise variance:
///   GWN  [sn2];  SE [sf2, il2, sn2];  PE [sf2, il2, omega, sn2];
///   MMTE [s1, om1, il2_1, ..., s_m, om_m, il2_m, sn2].
KernelBuilder kernel_builder(KernelFamily family, int mmte_order = 1);

/// Names/units/log-transforms matching kernel_builder's phi layout.
std::vector<ParameterInfo> kernel_parameter_map(KernelFamily family, int mmte_order = 1);

Index kernel_phi_size(KernelFamily family, int mmte_order = 1);

} // namespace gpmu
