#include "gpmu/selection.hpp"

#include "gpmu/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gpmu {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
} // namespace

double ModelClassScore::total(bool use_predictive) const {
    double t = log_evidence + log_prior_prob;
    if (use_predictive) {
        if (!log_posterior_predictive)
            throw invalid_model("predictive score requested but not computed for '" + model_id +
                                "'");
        t += *log_posterior_predictive;
    }
    return t;
}

Vec model_posterior_probabilities(const std::vector<ModelClassScore>& scores,
                                  bool use_predictive) {
    if (scores.empty()) throw invalid_model("no model classes to rank");
    Vec totals(static_cast<Index>(scores.size()));
    for (size_t i = 0; i < scores.size(); ++i)
        totals[static_cast<Index>(i)] = scores[i].total(use_predictive);
    const double m = totals.maxCoeff();
    if (!std::isfinite(m)) throw numerical_error("all model scores are -inf");
    Vec p = (totals.array() - m).exp();
    p /= p.sum();
    return p;
}

double log_mixture_density(const Vec& component_log_densities) {
    if (component_log_densities.size() == 0) throw invalid_model("no mixture components");
    return log_sum_exp(component_log_densities) -
           std::log(static_cast<double>(component_log_densities.size()));
}

namespace {

Vec stack_rows(const Mat& block) {
    Vec out(block.rows() * block.cols());
    for (Index i = 0; i < block.rows(); ++i)
        for (Index c = 0; c < block.cols(); ++c) out[i * block.cols() + c] = block(i, c);
    return out;
}

} // namespace

double log_predictive_density(const InferenceProblem& problem, const Vec& packed,
                              const TimeSeriesDataset& heldout) {
    if (!heldout.has_output()) throw invalid_model("held-out record has no outputs to score");
    const ShearBuildingModel model = problem.build_model(packed.head(problem.n_theta));
    const KernelConfig kernel = problem.build_kernel(packed.tail(packed.size() - problem.n_theta));
    const PredictiveDistribution pred =
        conditional_predict(problem.dataset, model, kernel, heldout, problem.truncation);

    const Vec y = stack_rows(heldout.output);
    const Vec r = y - pred.mean;
    Mat cov = pred.covariance;
    Eigen::LLT<Mat> llt(cov);
    if (llt.info() != Eigen::Success) {
        cov.diagonal().array() += jitter_scale(cov);
        llt.compute(cov);
        if (llt.info() != Eigen::Success)
            throw numerical_error("predictive covariance factorization failed");
    }
    const double quad = llt.matrixL().solve(r).squaredNorm();
    const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    return -0.5 * quad - 0.5 * log_det -
           0.5 * static_cast<double>(r.size()) * std::log(2.0 * M_PI);
}

double log_posterior_predictive_score(const InferenceProblem& problem,
                                      const PosteriorSamples& samples,
                                      const TimeSeriesDataset& heldout, int thin) {
    if (samples.n_samples() < 1) throw invalid_model("no posterior samples");
    if (!heldout.has_output()) throw invalid_model("held-out record has no outputs to score");
    const int step = std::max(thin, 1);
    std::vector<double> lds;
    for (Index m = 0; m < samples.n_samples(); m += step) {
        double v = -kInf;
        try {
            v = log_predictive_density(problem, samples.samples.row(m).transpose(), heldout);
        } catch (const invalid_model&) {
        } catch (const numerical_error&) {
        }
        lds.push_back(v);
    }
    Vec v = Eigen::Map<Vec>(lds.data(), static_cast<Index>(lds.size()));
    return log_mixture_density(v);
}

double bic_score(double log_lik_at_mpv, int n_params, Index n_data) {
    if (n_data < 2) throw invalid_model("BIC needs at least two data points");
    if (n_params < 1) throw invalid_model("BIC needs at least one parameter");
    return log_lik_at_mpv -
           0.5 * static_cast<double>(n_params) * std::log(static_cast<double>(n_data));
}

OrderSelectionResult select_mmte_order(const OrderedProblemFactory& factory,
                                       const std::vector<int>& orders,
                                       const MpvOptions& options) {
    if (orders.empty()) throw invalid_model("no candidate orders");
    OrderSelectionResult out;
    double best_bic = -kInf;
    int best_order = 0;
    bool any_ok = false;
    for (int order : orders) {
        OrderCandidate cand;
        cand.order = order;
        try {
            auto [problem, init] = factory(order);
            cand.summary = find_mpv(problem, init, options);
            cand.log_lik_at_mpv = cand.summary.log_likelihood_at_mpv;
            const Index n_data = dataset_grid(problem.dataset).dim();
            cand.bic = bic_score(cand.log_lik_at_mpv, static_cast<int>(problem.prior.dim()),
                                 n_data);
        } catch (const std::exception& e) {
            cand.failed = true;
            cand.error = e.what();
            out.candidates.push_back(std::move(cand));
            continue;
        }
        const bool better =
            !any_ok || cand.bic > best_bic ||
            (cand.bic == best_bic && order < best_order);
        if (better) {
            best_bic = cand.bic;
            best_order = order;
        }
        any_ok = true;
        out.candidates.push_back(std::move(cand));
    }
    if (!any_ok) throw numerical_error("every candidate order failed");
    out.chosen_order = best_order;
    return out;
}

Vec mmte_initial_phi(const Vec& modal_freqs_rad, int order, double sigma_f2, double inv_len2,
                     double noise_var) {
    if (order < 1) throw invalid_model("order must be >= 1");
    if (modal_freqs_rad.size() == 0) throw invalid_model("no modal frequencies");
    Vec phi(3 * order + 1);
    const Index n_modes = modal_freqs_rad.size();
    for (int k = 0; k < order; ++k) {
        double omega;
        if (k < n_modes) {
            omega = modal_freqs_rad[k];
        } else {
            // past the available modes: harmonics of the highest one
            omega = modal_freqs_rad[n_modes - 1] * static_cast<double>(k - n_modes + 2);
        }
        phi[3 * k] = sigma_f2;
        phi[3 * k + 1] = omega;
        phi[3 * k + 2] = inv_len2;
    }
    phi[3 * order] = noise_var;
    return phi;
}

} // namespace gpmu
