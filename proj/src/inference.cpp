#include "gpmu/inference.hpp"

#include "gpmu/nelder_mead.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gpmu {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093453; // ln(2*pi)
} // namespace

// --- parameters -------------------------------------------------------------

Vec ParameterSplit::packed() const {
    Vec x(n_total());
    x.head(theta.size()) = theta;
    x.tail(phi.size()) = phi;
    return x;
}

ParameterSplit ParameterSplit::from_packed(const Vec& x, Index n_theta,
                                           std::vector<ParameterInfo> parameter_map) {
    ParameterSplit s;
    s.theta = x.head(n_theta);
    s.phi = x.tail(x.size() - n_theta);
    s.parameter_map = std::move(parameter_map);
    return s;
}

void ParameterSplit::validate() const {
    if (!parameter_map.empty() &&
        static_cast<Index>(parameter_map.size()) != n_total())
        throw invalid_model("parameter map length must match theta+phi");
    if (!theta.allFinite() || !phi.allFinite())
        throw invalid_model("parameters must be finite");
}

void PriorSpec::validate() const {
    for (size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        if (!(e.lo < e.hi)) throw config_error("prior bounds must satisfy lo < hi");
        if (!std::isfinite(e.lo) || !std::isfinite(e.hi))
            throw config_error("prior bounds must be finite");
        if (e.kind == PriorKind::LogUniform && e.lo <= 0.0)
            throw config_error("log-uniform priors need lo > 0");
    }
}

bool PriorSpec::in_support(const Vec& x) const {
    if (x.size() != dim()) return false;
    for (Index i = 0; i < x.size(); ++i)
        if (!(x[i] >= entries[i].lo && x[i] <= entries[i].hi)) return false;
    return true;
}

double PriorSpec::log_density(const Vec& x) const {
    if (!in_support(x)) return -kInf;
    double ld = 0.0;
    for (Index i = 0; i < x.size(); ++i) {
        const auto& e = entries[i];
        if (e.kind == PriorKind::Uniform) ld -= std::log(e.hi - e.lo);
        else ld -= std::log(x[i]) + std::log(std::log(e.hi / e.lo));
    }
    return ld;
}

Vec PriorSpec::sample(SplitRng& rng) const {
    Vec x(dim());
    for (Index i = 0; i < x.size(); ++i) {
        const auto& e = entries[i];
        if (e.kind == PriorKind::Uniform) x[i] = rng.uniform(e.lo, e.hi);
        else x[i] = std::exp(rng.uniform(std::log(e.lo), std::log(e.hi)));
    }
    return x;
}

Vec PriorSpec::to_internal(const Vec& natural) const {
    Vec z = natural;
    for (Index i = 0; i < z.size(); ++i)
        if (entries[i].kind == PriorKind::LogUniform) z[i] = std::log(natural[i]);
    return z;
}

Vec PriorSpec::from_internal(const Vec& internal) const {
    Vec x = internal;
    for (Index i = 0; i < x.size(); ++i)
        if (entries[i].kind == PriorKind::LogUniform) x[i] = std::exp(internal[i]);
    return x;
}

std::vector<Transform> PriorSpec::transforms() const {
    std::vector<Transform> t(entries.size(), Transform::Identity);
    for (size_t i = 0; i < entries.size(); ++i)
        if (entries[i].kind == PriorKind::LogUniform) t[i] = Transform::Log;
    return t;
}

// --- truncation ---------------------------------------------------------------

void TruncationPolicy::validate() const {
    if (enabled && (relative_threshold < 1e-3 || relative_threshold > 1e-2))
        throw config_error("truncation threshold must lie in [1e-3, 1e-2]");
}

TruncatedSpectral truncated_spectral_form(const Mat& K, const TruncationPolicy& policy,
                                          double noise_floor) {
    policy.validate();
    Eigen::SelfAdjointEigenSolver<Mat> eig(K);
    if (eig.info() != Eigen::Success) throw numerical_error("eigendecomposition failed");
    const Vec lam = eig.eigenvalues(); // ascending
    const Index dim = lam.size();
    const double lmax = lam[dim - 1];
    if (!(lmax > 0.0)) throw numerical_error("covariance has no positive eigenvalues");
    const double cut = policy.enabled ? policy.relative_threshold * lmax : 0.0;

    Index first = 0; // ascending index of the first retained eigenvalue
    while (first < dim && lam[first] < cut) ++first;
    const Index r = dim - first;
    if (r < dim && noise_floor <= 0.0)
        throw numerical_error("truncation requires a positive noise floor");

    TruncatedSpectral s;
    s.dim = dim;
    s.noise_floor = noise_floor;
    s.eigenvalues = lam.tail(r).reverse();
    s.eigenvectors = eig.eigenvectors().rightCols(r).rowwise().reverse();
    double ld = 0.0;
    for (Index i = 0; i < r; ++i) {
        if (s.eigenvalues[i] <= 0.0) throw numerical_error("retained eigenvalue not positive");
        ld += std::log(s.eigenvalues[i]);
    }
    ld += static_cast<double>(dim - r) * (dim > r ? std::log(noise_floor) : 0.0);
    s.log_det = ld;
    return s;
}

double TruncatedSpectral::quad_form(const Vec& x) const {
    const Vec proj = eigenvectors.transpose() * x;
    double q = (proj.array().square() / eigenvalues.array()).sum();
    if (retained() < dim) q += (x.squaredNorm() - proj.squaredNorm()) / noise_floor;
    return q;
}

Vec TruncatedSpectral::apply_inverse(const Vec& x) const {
    const Vec proj = eigenvectors.transpose() * x;
    Vec y = eigenvectors * (proj.array() / eigenvalues.array()).matrix();
    if (retained() < dim) y += (x - eigenvectors * proj) / noise_floor;
    return y;
}

// --- covariance operator ------------------------------------------------------

namespace {

/// Levinson recursion on a symmetric positive-definite Toeplitz matrix
/// T = t0 * toeplitz(rho), rho[0] == 1. Stationary kernels on uniform grids
/// always produce one, so this replaces the O(n^3) factorization with O(n^2)
/// work per solve. Accumulates ln det T from the innovation variances and,
/// when B is given, solves T X = B. Returns false when the recursion loses
/// positive definiteness (callers fall back to the dense path).
bool levinson(const Vec& rho, double t0, const Mat* B, Mat* X, double* log_det) {
    const Index n = rho.size();
    if (n == 0 || !(t0 > 0.0)) return false;
    double ld = static_cast<double>(n) * std::log(t0);
    if (X) *X = *B / t0;
    if (n == 1) {
        if (log_det) *log_det = ld;
        return true;
    }

    Vec y(n);                 // forward vector; entries [0, k) valid at step k
    double beta = 1.0;
    double alpha = -rho[1];
    y[0] = alpha;
    for (Index k = 1; k < n; ++k) {
        beta *= 1.0 - alpha * alpha;
        if (!(beta > 0.0) || !std::isfinite(beta)) return false;
        ld += std::log(beta);
        if (X) {
            const auto rev = rho.segment(1, k).reverse();
            Eigen::RowVectorXd mu = (X->row(k) - rev.transpose() * X->topRows(k)) / beta;
            X->topRows(k).noalias() += y.head(k).reverse() * mu;
            X->row(k) = mu;
        }
        if (k + 1 < n) {
            alpha = -(rho[k + 1] + rho.segment(1, k).reverse().dot(y.head(k))) / beta;
            const Vec yrev = y.head(k).reverse();
            y.head(k) += alpha * yrev;
            y[k] = alpha;
        }
    }
    if (log_det) *log_det = ld;
    return true;
}

} // namespace

CovarianceOperator::CovarianceOperator(const KernelConfig& kernel, const AuxiliaryGrid& grid,
                                       const TruncationPolicy& policy) {
    kernel.validate();
    grid.validate();
    policy.validate();
    n_ = grid.n_times();
    channels_ = grid.channels;

    if (kernel.family == KernelFamily::GWN) {
        if (kernel.noise_floor <= 0.0)
            throw numerical_error("white-noise covariance needs sigma_n^2 > 0");
        diagonal_value_ = kernel.noise_floor;
        log_det_ = static_cast<double>(dim()) * std::log(diagonal_value_);
        return;
    }

    if (!policy.enabled) {
        double dt = 0.0;
        if (grid.is_uniform(&dt) && n_ >= 2) {
            Vec lags(n_);
            for (Index i = 0; i < n_; ++i) lags[i] = static_cast<double>(i) * dt;
            Vec col = kernel_values(kernel, lags);
            col[0] += kernel.noise_floor;
            if (col[0] > 0.0) {
                Vec rho = col / col[0];
                double ld = 0.0;
                if (levinson(rho, col[0], nullptr, nullptr, &ld)) {
                    toeplitz_rho_ = std::move(rho);
                    toeplitz_t0_ = col[0];
                    log_det_ = static_cast<double>(channels_) * ld;
                    return;
                }
            }
        }
    }

    Mat Kt = temporal_covariance(kernel, grid.zeta);
    if (policy.enabled) {
        spectral_ = truncated_spectral_form(Kt, policy, kernel.noise_floor);
        log_det_ = static_cast<double>(channels_) * spectral_->log_det;
        return;
    }
    llt_.compute(Kt);
    if (llt_.info() != Eigen::Success) {
        Kt.diagonal().array() += jitter_scale(Kt);
        jittered_ = true;
        llt_.compute(Kt);
        if (llt_.info() != Eigen::Success)
            throw numerical_error("covariance factorization failed after jitter (n = " +
                                  std::to_string(n_) + ")");
    }
    log_det_ = 2.0 * static_cast<double>(channels_) *
               llt_.matrixLLT().diagonal().array().log().sum();
}

double CovarianceOperator::quad_form(const Mat& residual) const {
    if (residual.rows() != n_ || residual.cols() != channels_)
        throw invalid_model("residual shape mismatch");
    if (diagonal_value_ > 0.0) return residual.squaredNorm() / diagonal_value_;
    if (spectral_) {
        double q = 0.0;
        for (Index c = 0; c < residual.cols(); ++c) q += spectral_->quad_form(residual.col(c));
        return q;
    }
    if (toeplitz()) {
        Mat x;
        if (!levinson(toeplitz_rho_, toeplitz_t0_, &residual, &x, nullptr))
            throw numerical_error("toeplitz recursion lost positive definiteness");
        return (residual.array() * x.array()).sum();
    }
    return (llt_.matrixL().solve(residual)).squaredNorm();
}

Mat CovarianceOperator::solve_temporal(const Mat& rhs) const {
    if (rhs.rows() != n_) throw invalid_model("rhs row count mismatch");
    if (diagonal_value_ > 0.0) return rhs / diagonal_value_;
    if (spectral_) {
        Mat out(rhs.rows(), rhs.cols());
        for (Index c = 0; c < rhs.cols(); ++c) out.col(c) = spectral_->apply_inverse(rhs.col(c));
        return out;
    }
    if (toeplitz()) {
        Mat x;
        if (!levinson(toeplitz_rho_, toeplitz_t0_, &rhs, &x, nullptr))
            throw numerical_error("toeplitz recursion lost positive definiteness");
        return x;
    }
    return llt_.solve(rhs);
}

Index CovarianceOperator::retained_per_channel() const {
    return spectral_ ? spectral_->retained() : n_;
}

// --- likelihood ----------------------------------------------------------------

AuxiliaryGrid dataset_grid(const TimeSeriesDataset& dataset) {
    AuxiliaryGrid g;
    g.zeta = dataset.times();
    g.channels = static_cast<int>(dataset.n_outputs());
    g.validate();
    return g;
}

namespace {

double dataset_dt(const TimeSeriesDataset& data) {
    if (data.t.size() == 0) return data.dt;
    AuxiliaryGrid g;
    g.zeta = data.t;
    g.channels = 1;
    double dt = 0.0;
    if (!g.is_uniform(&dt) || dt <= 0.0)
        throw invalid_model("non-contiguous dataset grid needs a response override");
    return dt;
}

double gaussian_log_density(const CovarianceOperator& cov, const Mat& residual) {
    const double quad = cov.quad_form(residual);
    return -0.5 * quad - 0.5 * cov.log_det() -
           0.5 * static_cast<double>(cov.dim()) * kLog2Pi;
}

} // namespace

double log_likelihood(const TimeSeriesDataset& dataset, const ShearBuildingModel& model,
                      const KernelConfig& kernel, const TruncationPolicy& policy) {
    dataset.validate();
    if (!dataset.has_output()) throw invalid_model("dataset has no outputs to score");
    const Mat response = simulate_response(model, dataset.input, dataset_dt(dataset));
    const Mat residual = dataset.output - response;
    const CovarianceOperator cov(kernel, dataset_grid(dataset), policy);
    return gaussian_log_density(cov, residual);
}

ParameterSplit InferenceProblem::split(const Vec& packed) const {
    return ParameterSplit::from_packed(packed, n_theta, parameter_map);
}

void InferenceProblem::validate() const {
    dataset.validate();
    if (!dataset.has_output()) throw invalid_model("inference needs observed outputs");
    if (!build_model || !build_kernel) throw invalid_model("problem needs both builders");
    prior.validate();
    if (n_theta < 0 || n_theta > prior.dim()) throw invalid_model("bad theta split");
    if (!parameter_map.empty() &&
        static_cast<Index>(parameter_map.size()) != prior.dim())
        throw invalid_model("parameter map length must match prior dimension");
}

std::function<Mat(const ShearBuildingModel&)> subset_response(TimeSeriesDataset full,
                                                              const TimeSeriesDataset& subset) {
    full.validate();
    subset.validate();
    const Vec tf = full.times();
    const Vec ts = subset.times();
    const double eps = 1e-9 * std::max(1.0, std::abs(tf[tf.size() - 1]));
    std::vector<Index> rows(ts.size());
    Index j = 0;
    for (Index i = 0; i < ts.size(); ++i) {
        while (j < tf.size() && tf[j] < ts[i] - eps) ++j;
        if (j >= tf.size() || std::abs(tf[j] - ts[i]) > eps)
            throw invalid_model("subset times not found in the full record");
        rows[i] = j;
    }
    const double dt = dataset_dt(full);
    const Mat input = full.input;
    return [input, dt, rows](const ShearBuildingModel& model) {
        const Mat resp = simulate_response(model, input, dt);
        Mat out(static_cast<Index>(rows.size()), resp.cols());
        for (size_t r = 0; r < rows.size(); ++r)
            out.row(static_cast<Index>(r)) = resp.row(rows[r]);
        return out;
    };
}

Mat problem_response(const InferenceProblem& problem, const ShearBuildingModel& model) {
    if (problem.response_override) return problem.response_override(model);
    return simulate_response(model, problem.dataset.input, dataset_dt(problem.dataset));
}

double problem_log_likelihood(const InferenceProblem& problem, const Vec& packed) {
    const ParameterSplit s = problem.split(packed);
    const ShearBuildingModel model = problem.build_model(s.theta);
    const KernelConfig kernel = problem.build_kernel(s.phi);
    const Mat residual = problem.dataset.output - problem_response(problem, model);
    const CovarianceOperator cov(kernel, dataset_grid(problem.dataset), problem.truncation);
    return gaussian_log_density(cov, residual);
}

// --- conditionals and the joint objective --------------------------------------

namespace {

// Split log prior over the theta/phi blocks so each conditional carries the
// other block's term as part of its constant.
double block_log_prior(const PriorSpec& prior, const Vec& x, Index begin, Index count) {
    double ld = 0.0;
    for (Index i = begin; i < begin + count; ++i) {
        const auto& e = prior.entries[static_cast<size_t>(i)];
        if (!(x[i] >= e.lo && x[i] <= e.hi)) return -kInf;
        if (e.kind == PriorKind::Uniform) ld -= std::log(e.hi - e.lo);
        else ld -= std::log(x[i]) + std::log(std::log(e.hi / e.lo));
    }
    return ld;
}

} // namespace

double neg_log_posterior(const InferenceProblem& problem, const Vec& packed) {
    if (!problem.prior.in_support(packed)) return kInf;
    try {
        return -problem_log_likelihood(problem, packed) - problem.prior.log_density(packed);
    } catch (const invalid_model&) {
        return kInf;
    } catch (const numerical_error&) {
        return kInf;
    }
}

double neg_log_conditional_theta(const InferenceProblem& problem, const Vec& theta,
                                 const Vec& phi) {
    Vec packed(theta.size() + phi.size());
    packed << theta, phi;
    return neg_log_posterior(problem, packed);
}

double neg_log_conditional_phi(const InferenceProblem& problem, const Vec& phi,
                               const Vec& theta) {
    Vec packed(theta.size() + phi.size());
    packed << theta, phi;
    return neg_log_posterior(problem, packed);
}

// --- MPV search ------------------------------------------------------------------

namespace {

struct HalfStepResult {
    Vec z; // internal coordinates of the minimized block
    double objective;
};

// Minimize `objective` (over internal coordinates of one block) starting at
// z0, with optional perturbed restarts. Never returns a point worse than z0.
HalfStepResult minimize_block(const std::function<double(const Vec&)>& objective, const Vec& z0,
                              int budget, int restarts, double initial_step, SplitRng* rng) {
    NelderMeadOptions opts;
    opts.initial_step = initial_step;
    const int runs = 1 + std::max(restarts, 0);
    opts.max_evals = std::max(budget / runs, 2 * static_cast<int>(z0.size()) + 2);
    Vec zbest = z0;
    double fbest = objective(z0);
    {
        const NelderMeadResult r = nelder_mead(objective, z0, opts);
        if (r.f < fbest) {
            fbest = r.f;
            zbest = r.x;
        }
    }
    for (int k = 0; k < restarts && rng; ++k) {
        Vec zs = zbest;
        for (Index i = 0; i < zs.size(); ++i)
            zs[i] += 0.05 * std::max(std::abs(zbest[i]), 1.0) * rng->normal();
        const NelderMeadResult r = nelder_mead(objective, zs, opts);
        if (r.f < fbest) {
            fbest = r.f;
            zbest = r.x;
        }
    }
    return {zbest, fbest};
}

} // namespace

LaplaceSummary find_mpv(const InferenceProblem& problem, const ParameterSplit& init,
                        const MpvOptions& options) {
    problem.validate();
    init.validate();
    const Index nt = problem.n_theta;
    const Index np = problem.n_phi();
    if (init.n_theta() != nt || init.n_phi() != np)
        throw invalid_model("init does not match the problem's parameter split");

    Vec x = init.packed();
    if (!problem.prior.in_support(x))
        throw invalid_model("initialization outside the prior support");

    const double f0 = neg_log_posterior(problem, x);
    if (!std::isfinite(f0))
        throw numerical_error("objective not finite at the initialization");

    const AuxiliaryGrid grid = dataset_grid(problem.dataset);
    SplitRng restart_rng(options.restart_seed);
    LaplaceSummary out;
    out.iterations = 0;
    out.converged = false;

    Vec z = problem.prior.to_internal(x);
    double f_joint = f0;
    double last_step_norm = 1.0;

    for (int iter = 0; iter < options.max_iter; ++iter) {
        const Vec x_old = problem.prior.from_internal(z);

        // theta | phi: factorize the kernel covariance once for the sweep
        if (nt > 0) {
            const Vec phi = x_old.tail(np);
            KernelConfig kernel;
            bool kernel_ok = true;
            try {
                kernel = problem.build_kernel(phi);
            } catch (const invalid_model&) {
                kernel_ok = false;
            }
            if (kernel_ok) {
                const CovarianceOperator cov(kernel, grid, problem.truncation);
                const double phi_terms =
                    0.5 * cov.log_det() +
                    0.5 * static_cast<double>(cov.dim()) * kLog2Pi -
                    block_log_prior(problem.prior, x_old, nt, np);
                auto theta_objective = [&](const Vec& z_theta) -> double {
                    Vec zfull = z;
                    zfull.head(nt) = z_theta;
                    const Vec xe = problem.prior.from_internal(zfull);
                    const double lp = block_log_prior(problem.prior, xe, 0, nt);
                    if (!std::isfinite(lp)) return kInf;
                    try {
                        const ShearBuildingModel model = problem.build_model(xe.head(nt));
                        const Mat residual =
                            problem.dataset.output - problem_response(problem, model);
                        return 0.5 * cov.quad_form(residual) - lp + phi_terms;
                    } catch (const invalid_model&) {
                        return kInf;
                    } catch (const numerical_error&) {
                        return kInf;
                    }
                };
                const double step = iter == 0 ? 0.1 : std::clamp(2.0 * last_step_norm, 1e-5, 0.1);
                const HalfStepResult r = minimize_block(
                    theta_objective, z.head(nt), options.half_step_budget,
                    iter == 0 ? options.restarts : 0, step, &restart_rng);
                z.head(nt) = r.z;
                f_joint = r.objective;
            }
        }

        // phi | theta: the residual is fixed for the sweep
        if (np > 0) {
            const Vec x_mid = problem.prior.from_internal(z);
            Mat residual;
            bool model_ok = true;
            double theta_terms = 0.0;
            try {
                const ShearBuildingModel model = problem.build_model(x_mid.head(nt));
                residual = problem.dataset.output - problem_response(problem, model);
                theta_terms = -block_log_prior(problem.prior, x_mid, 0, nt);
            } catch (const invalid_model&) {
                model_ok = false;
            } catch (const numerical_error&) {
                model_ok = false;
            }
            if (model_ok) {
                auto phi_objective = [&](const Vec& z_phi) -> double {
                    Vec zfull = z;
                    zfull.tail(np) = z_phi;
                    const Vec xe = problem.prior.from_internal(zfull);
                    const double lp = block_log_prior(problem.prior, xe, nt, np);
                    if (!std::isfinite(lp)) return kInf;
                    try {
                        const KernelConfig kernel = problem.build_kernel(xe.tail(np));
                        const CovarianceOperator cov(kernel, grid, problem.truncation);
                        return 0.5 * cov.quad_form(residual) + 0.5 * cov.log_det() +
                               0.5 * static_cast<double>(cov.dim()) * kLog2Pi - lp +
                               theta_terms;
                    } catch (const invalid_model&) {
                        return kInf;
                    } catch (const numerical_error&) {
                        return kInf;
                    }
                };
                const double step = iter == 0 ? 0.1 : std::clamp(2.0 * last_step_norm, 1e-5, 0.1);
                const HalfStepResult r = minimize_block(
                    phi_objective, z.tail(np), options.half_step_budget,
                    iter == 0 ? options.restarts : 0, step, &restart_rng);
                z.tail(np) = r.z;
                f_joint = r.objective;
            }
        }

        out.iterations = iter + 1;
        out.objective_trace.push_back(f_joint);

        const Vec x_new = problem.prior.from_internal(z);
        const double denom = x_old.norm();
        const double conv = (x_new - x_old).norm() / denom;
        last_step_norm =
            denom > 0.0 ? (problem.prior.to_internal(x_new) -
                           problem.prior.to_internal(x_old)).cwiseAbs().maxCoeff()
                        : 1.0;
        if (std::isfinite(conv) && conv <= options.tol) {
            out.converged = true;
            break;
        }
    }

    const Vec x_final = problem.prior.from_internal(z);
    out.mpv = ParameterSplit::from_packed(x_final, nt, problem.parameter_map);
    out.neg_log_posterior_at_mpv = neg_log_posterior(problem, x_final);
    out.log_likelihood_at_mpv = problem_log_likelihood(problem, x_final);
    return out;
}

// --- Laplace ------------------------------------------------------------------

Vec LaplaceSummary::standard_deviations() const {
    if (covariance.size() == 0) return Vec();
    return covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
}

Mat laplace_covariance_of(const std::function<double(const Vec&)>& neg_log_post, const Vec& at,
                          const std::vector<Transform>& transforms, bool* non_identifiable) {
    const Index p = at.size();
    if (static_cast<Index>(transforms.size()) != p)
        throw invalid_model("one transform per parameter required");
    if (non_identifiable) *non_identifiable = false;

    auto to_z = [&](const Vec& x) {
        Vec z = x;
        for (Index i = 0; i < p; ++i)
            if (transforms[static_cast<size_t>(i)] == Transform::Log) z[i] = std::log(x[i]);
        return z;
    };
    auto from_z = [&](const Vec& z) {
        Vec x = z;
        for (Index i = 0; i < p; ++i)
            if (transforms[static_cast<size_t>(i)] == Transform::Log) x[i] = std::exp(z[i]);
        return x;
    };
    const Vec z0 = to_z(at);
    auto g = [&](const Vec& z) { return neg_log_post(from_z(z)); };
    const double g0 = g(z0);
    if (!std::isfinite(g0)) throw numerical_error("objective not finite at the expansion point");

    // per-coordinate steps, shrunk until the one-dimensional stencil is finite
    Vec h(p);
    bool degenerate = false;
    for (Index i = 0; i < p; ++i) {
        h[i] = std::max(1e-4 * std::abs(z0[i]), 1e-6);
        for (int tries = 0; tries < 30; ++tries) {
            Vec zp = z0, zm = z0;
            zp[i] += h[i];
            zm[i] -= h[i];
            if (std::isfinite(g(zp)) && std::isfinite(g(zm))) break;
            h[i] *= 0.5;
            if (tries == 29) degenerate = true;
        }
    }

    Mat H(p, p);
    for (Index i = 0; i < p; ++i) {
        Vec zp = z0, zm = z0;
        zp[i] += h[i];
        zm[i] -= h[i];
        const double gp = g(zp), gm = g(zm);
        H(i, i) = (gp - 2.0 * g0 + gm) / (h[i] * h[i]);
        for (Index j = i + 1; j < p; ++j) {
            Vec zpp = z0, zpm = z0, zmp = z0, zmm = z0;
            zpp[i] += h[i]; zpp[j] += h[j];
            zpm[i] += h[i]; zpm[j] -= h[j];
            zmp[i] -= h[i]; zmp[j] += h[j];
            zmm[i] -= h[i]; zmm[j] -= h[j];
            double v = (g(zpp) - g(zpm) - g(zmp) + g(zmm)) / (4.0 * h[i] * h[j]);
            if (!std::isfinite(v)) {
                v = 0.0;
                degenerate = true;
            }
            H(i, j) = H(j, i) = v;
        }
        if (!std::isfinite(H(i, i))) {
            H(i, i) = 0.0;
            degenerate = true;
        }
    }
    H = (0.5 * (H + H.transpose())).eval();

    Mat cov_z(p, p);
    Eigen::LLT<Mat> llt(H);
    bool pd = llt.info() == Eigen::Success && (H.diagonal().array() > 0.0).all();
    if (pd) {
        cov_z = llt.solve(Mat::Identity(p, p));
        // inversion of a barely-PD Hessian can still blow up
        if (!cov_z.allFinite()) pd = false;
    }
    if (!pd) {
        Eigen::SelfAdjointEigenSolver<Mat> eig(H);
        const Vec lam = eig.eigenvalues();
        const double lmax = lam.cwiseAbs().maxCoeff();
        Vec inv = Vec::Zero(p);
        for (Index i = 0; i < p; ++i)
            inv[i] = lam[i] > 1e-12 * std::max(lmax, 1.0) ? 1.0 / lam[i] : 0.0;
        cov_z = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
        degenerate = true;
    }
    cov_z = (0.5 * (cov_z + cov_z.transpose())).eval();

    // delta method back to natural units: dx/dz = x for log coordinates
    Vec scale = Vec::Ones(p);
    for (Index i = 0; i < p; ++i)
        if (transforms[static_cast<size_t>(i)] == Transform::Log) scale[i] = at[i];
    Mat cov = scale.asDiagonal() * cov_z * scale.asDiagonal();
    cov = (0.5 * (cov + cov.transpose())).eval();
    if (non_identifiable) *non_identifiable = degenerate;
    return cov;
}

LaplaceSummary laplace_covariance(const InferenceProblem& problem, LaplaceSummary summary) {
    std::vector<Transform> transforms;
    if (!summary.mpv.parameter_map.empty()) {
        for (const auto& info : summary.mpv.parameter_map) transforms.push_back(info.transform);
    } else {
        transforms = problem.prior.transforms();
    }
    auto objective = [&](const Vec& x) { return neg_log_posterior(problem, x); };
    bool degenerate = false;
    summary.covariance =
        laplace_covariance_of(objective, summary.mpv.packed(), transforms, &degenerate);
    summary.non_identifiable = degenerate;
    return summary;
}

double laplace_evidence(const InferenceProblem& problem, const LaplaceSummary& summary) {
    if (summary.covariance.size() == 0)
        throw invalid_model("laplace evidence needs the covariance (run laplace_covariance)");
    const Vec x = summary.mpv.packed();
    const double p = static_cast<double>(x.size());
    Eigen::SelfAdjointEigenSolver<Mat> eig(summary.covariance);
    double half_log_det = 0.0;
    for (Index i = 0; i < eig.eigenvalues().size(); ++i) {
        const double lam = eig.eigenvalues()[i];
        if (lam > 0.0) half_log_det += 0.5 * std::log(lam);
    }
    return problem_log_likelihood(problem, x) + problem.prior.log_density(x) +
           0.5 * p * kLog2Pi + half_log_det;
}

// --- family builders -------------------------------------------------------------

ModelBuilder stiffness_builder(ShearBuildingModel nominal, std::vector<int> unknown_stories) {
    return [nominal = std::move(nominal),
            unknown = std::move(unknown_stories)](const Vec& theta) {
        if (theta.size() != static_cast<Index>(unknown.size()))
            throw invalid_model("one theta entry per unknown story required");
        ShearBuildingModel model = nominal;
        for (size_t i = 0; i < unknown.size(); ++i)
            model.story_stiffnesses[unknown[i]] = theta[static_cast<Index>(i)];
        return model;
    };
}

ModelBuilder stiffness_ratio_builder(ShearBuildingModel nominal,
                                     std::vector<int> unknown_stories) {
    return [nominal = std::move(nominal),
            unknown = std::move(unknown_stories)](const Vec& theta) {
        if (theta.size() != static_cast<Index>(unknown.size()))
            throw invalid_model("one theta entry per unknown story required");
        ShearBuildingModel model = nominal;
        for (size_t i = 0; i < unknown.size(); ++i)
            model.story_stiffnesses[unknown[i]] *= theta[static_cast<Index>(i)];
        return model;
    };
}

Index kernel_phi_size(KernelFamily family, int mmte_order) {
    switch (family) {
    case KernelFamily::GWN: return 1;
    case KernelFamily::SE: return 3;
    case KernelFamily::PE: return 4;
    case KernelFamily::MMTE: return 3 * mmte_order + 1;
    }
    return 0;
}

KernelBuilder kernel_builder(KernelFamily family, int mmte_order) {
    const Index expect = kernel_phi_size(family, mmte_order);
    return [family, mmte_order, expect](const Vec& phi) {
        if (phi.size() != expect) throw invalid_model("kernel hyperparameter count mismatch");
        switch (family) {
        case KernelFamily::GWN: return KernelConfig::gwn(phi[0]);
        case KernelFamily::SE: return KernelConfig::se(phi[0], phi[1], phi[2]);
        case KernelFamily::PE: return KernelConfig::pe(phi[0], phi[1], phi[2], phi[3]);
        case KernelFamily::MMTE:
            return KernelConfig::mmte(phi.head(3 * mmte_order), phi[3 * mmte_order]);
        }
        throw invalid_model("unknown kernel family");
    };
}

std::vector<ParameterInfo> kernel_parameter_map(KernelFamily family, int mmte_order) {
    std::vector<ParameterInfo> map;
    auto log_param = [](std::string name, std::string unit) {
        return ParameterInfo{std::move(name), std::move(unit), Transform::Log};
    };
    switch (family) {
    case KernelFamily::GWN: break;
    case KernelFamily::SE:
        map.push_back(log_param("sigma_f2", "(m/s^2)^2"));
        map.push_back(log_param("inv_len2", "1/s^2"));
        break;
    case KernelFamily::PE:
        map.push_back(log_param("sigma_f2", "(m/s^2)^2"));
        map.push_back(log_param("inv_len2", "1/s^2"));
        map.push_back(log_param("omega", "rad/s"));
        break;
    case KernelFamily::MMTE:
        for (int k = 1; k <= mmte_order; ++k) {
            const std::string s = std::to_string(k);
            map.push_back(log_param("sigma_f2_" + s, "(m/s^2)^2"));
            map.push_back(log_param("omega_" + s, "rad/s"));
            map.push_back(log_param("inv_len2_" + s, "1/s^2"));
        }
        break;
    }
    map.push_back(log_param("sigma_n2", "(m/s^2)^2"));
    return map;
}

} // namespace gpmu
