#include "gpmu/prediction.hpp"

#include <algorithm>
#include <cmath>
#include <unsupported/Eigen/KroneckerProduct>

namespace gpmu {

std::string to_string(PredictionProvenance p) {
    switch (p) {
    case PredictionProvenance::Map: return "map";
    case PredictionProvenance::Mixture: return "mixture";
    case PredictionProvenance::MixtureDiagonal: return "mixture-diagonal";
    }
    return "?";
}

Vec PredictiveDistribution::sd() const {
    return variance.cwiseMax(0.0).cwiseSqrt();
}

void PredictiveDistribution::validate() const {
    if (mean.size() == 0) return; // empty prediction (zero-length grid)
    if (mean.size() != variance.size()) throw invalid_model("mean/variance size mismatch");
    if (!mean.allFinite()) throw invalid_model("prediction mean not finite");
    if ((variance.array() < -1e-10).any())
        throw invalid_model("prediction variance below tolerance");
    if (!diagonal_only) {
        if (covariance.rows() != mean.size() || covariance.cols() != mean.size())
            throw invalid_model("covariance shape mismatch");
        if (!covariance.isApprox(covariance.transpose(), 1e-9))
            throw invalid_model("prediction covariance not symmetric");
    }
}

namespace {

// time-major stacking of an n x C response block
Vec stack_rows(const Mat& block) {
    Vec out(block.rows() * block.cols());
    for (Index i = 0; i < block.rows(); ++i)
        for (Index c = 0; c < block.cols(); ++c) out[i * block.cols() + c] = block(i, c);
    return out;
}

struct MergedResponse {
    Mat train; // rows of the training grid
    Mat pred;  // rows of the prediction grid
};

bool nearly_uniform(const Vec& t, double* dt_out) {
    if (t.size() < 2) return true;
    double dt = t[1] - t[0];
    for (Index i = 0; i + 1 < t.size(); ++i) {
        const double d = t[i + 1] - t[i];
        if (std::abs(d - dt) > 1e-6 * std::max(1.0, std::abs(dt))) return false;
    }
    if (dt_out) *dt_out = dt;
    return dt > 0.0;
}

// Model response on both grids. When the union of the two grids forms one
// uniform timeline the state marches through it in a single pass (the gap /
// held-out cases); genuinely disjoint records fall back to independent
// zero-state simulations.
MergedResponse merged_response(const ShearBuildingModel& model, const TimeSeriesDataset& train,
                               const TimeSeriesDataset& pred) {
    const Vec tt = train.times();
    const Vec tp = pred.times();
    struct Row {
        double t;
        int origin; // 0 train, 1 pred
        Index row;
    };
    std::vector<Row> rows;
    rows.reserve(tt.size() + tp.size());
    for (Index i = 0; i < tt.size(); ++i) rows.push_back({tt[i], 0, i});
    for (Index i = 0; i < tp.size(); ++i) rows.push_back({tp[i], 1, i});
    std::stable_sort(rows.begin(), rows.end(),
                     [](const Row& a, const Row& b) { return a.t < b.t; });

    const double span = rows.back().t - rows.front().t;
    const double eps = 1e-9 * std::max(1.0, span);
    std::vector<Row> uniq;
    for (const Row& r : rows) {
        if (!uniq.empty() && std::abs(r.t - uniq.back().t) <= eps) continue; // train wins ties
        uniq.push_back(r);
    }

    Vec tu(static_cast<Index>(uniq.size()));
    for (size_t i = 0; i < uniq.size(); ++i) tu[static_cast<Index>(i)] = uniq[i].t;
    double dt = 0.0;
    MergedResponse out;
    if (nearly_uniform(tu, &dt) && tu.size() >= 2) {
        Mat input(tu.size(), train.input.cols());
        for (size_t i = 0; i < uniq.size(); ++i)
            input.row(static_cast<Index>(i)) = uniq[i].origin == 0
                                                   ? train.input.row(uniq[i].row)
                                                   : pred.input.row(uniq[i].row);
        const Mat resp = simulate_response(model, input, dt);
        out.train = Mat(tt.size(), resp.cols());
        out.pred = Mat(tp.size(), resp.cols());
        // map each grid row back to its merged row
        Index j = 0;
        for (Index i = 0; i < tt.size(); ++i) {
            while (j < tu.size() && tu[j] < tt[i] - eps) ++j;
            out.train.row(i) = resp.row(j);
        }
        j = 0;
        for (Index i = 0; i < tp.size(); ++i) {
            while (j < tu.size() && tu[j] < tp[i] - eps) ++j;
            out.pred.row(i) = resp.row(j);
        }
        return out;
    }

    // disjoint records: no shared state path exists, simulate each at rest
    double dt_t = train.dt, dt_p = pred.dt;
    if (!nearly_uniform(tt, &dt_t) || !nearly_uniform(tp, &dt_p))
        throw invalid_model("record grids neither merge into one uniform timeline "
                            "nor are uniform on their own");
    out.train = simulate_response(model, train.input, dt_t > 0.0 ? dt_t : train.dt);
    out.pred = simulate_response(model, pred.input, dt_p > 0.0 ? dt_p : pred.dt);
    return out;
}

} // namespace

PredictiveDistribution conditional_predict(const TimeSeriesDataset& train,
                                           const ShearBuildingModel& model,
                                           const KernelConfig& kernel,
                                           const TimeSeriesDataset& pred,
                                           const TruncationPolicy& policy) {
    train.validate();
    pred.validate();
    model.validate();
    kernel.validate();
    if (!train.has_output()) throw invalid_model("training record has no outputs");
    if (train.input.cols() != pred.input.cols())
        throw invalid_model("train/pred input channel mismatch");

    const int channels = model.n_outputs();
    if (train.output.cols() != channels)
        throw invalid_model("training outputs do not match the model's observed DOFs");

    const MergedResponse f = merged_response(model, train, pred);
    const Mat residual = train.output - f.train;

    const Vec tt = train.times();
    const Vec tp = pred.times();
    AuxiliaryGrid train_grid{tt, channels};
    AuxiliaryGrid pred_grid{tp, channels};

    const CovarianceOperator cov(kernel, train_grid, policy);
    const Mat kc = temporal_cross_covariance(kernel, tt, tp); // n x n'
    Mat kt_pred = temporal_covariance(kernel, tp);            // noise included

    const Mat a = cov.solve_temporal(kc); // K^{-1} Kc, column per prediction time
    Mat sigma_t = kt_pred - kc.transpose() * a;
    sigma_t = 0.5 * (sigma_t + sigma_t.transpose()).eval();

    const Mat mu_block = f.pred + (a.transpose() * residual); // n' x C

    PredictiveDistribution out;
    out.grid = pred_grid;
    out.mean = stack_rows(mu_block);
    if (channels == 1) {
        out.covariance = sigma_t;
    } else {
        out.covariance =
            Eigen::kroneckerProduct(sigma_t, Mat::Identity(channels, channels));
    }
    out.variance = out.covariance.diagonal();
    out.provenance = PredictionProvenance::Map;
    out.n_components = 1;
    out.validate();
    return out;
}

PredictiveDistribution map_predict(const InferenceProblem& problem, const LaplaceSummary& laplace,
                                   const TimeSeriesDataset& pred) {
    if (!laplace.converged)
        throw invalid_model("point prediction requires a converged parameter search");
    const ShearBuildingModel model = problem.build_model(laplace.mpv.theta);
    const KernelConfig kernel = problem.build_kernel(laplace.mpv.phi);
    return conditional_predict(problem.dataset, model, kernel, pred, problem.truncation);
}

PredictiveDistribution mixture_predict(const InferenceProblem& problem,
                                       const PosteriorSamples& samples,
                                       const TimeSeriesDataset& pred,
                                       const MixtureOptions& options) {
    if (samples.n_samples() < 1) throw invalid_model("mixture needs at least one sample");
    const int thin = std::max(options.thin, 1);

    std::vector<Index> used;
    for (Index m = 0; m < samples.n_samples(); m += thin) used.push_back(m);

    Index dim = 0;
    bool diag_only = false;

    Vec sum_mean;
    Mat sum_outer;  // E[mu mu' + Sigma] accumulator (full mode)
    Vec sum_diag;   // diagonal mode
    Mat comp_means, comp_vars;
    int n_used = 0, n_skipped = 0;
    AuxiliaryGrid grid;

    for (size_t idx = 0; idx < used.size(); ++idx) {
        const Vec packed = samples.samples.row(used[idx]).transpose();
        PredictiveDistribution comp;
        try {
            const ShearBuildingModel model = problem.build_model(packed.head(problem.n_theta));
            const KernelConfig kernel =
                problem.build_kernel(packed.tail(packed.size() - problem.n_theta));
            comp = conditional_predict(problem.dataset, model, kernel, pred, problem.truncation);
        } catch (const invalid_model&) {
            ++n_skipped;
            continue;
        } catch (const numerical_error&) {
            ++n_skipped;
            continue;
        }
        if (n_used == 0) {
            dim = comp.mean.size();
            grid = comp.grid;
            diag_only = dim > options.diagonal_cutoff;
            sum_mean = Vec::Zero(dim);
            if (diag_only) sum_diag = Vec::Zero(dim);
            else sum_outer = Mat::Zero(dim, dim);
            if (options.keep_components) {
                comp_means = Mat(static_cast<Index>(used.size()), dim);
                comp_vars = Mat(static_cast<Index>(used.size()), dim);
            }
        }
        sum_mean += comp.mean;
        if (diag_only) {
            sum_diag += comp.variance + comp.mean.cwiseProduct(comp.mean);
        } else {
            sum_outer += comp.covariance;
            sum_outer.selfadjointView<Eigen::Lower>().rankUpdate(comp.mean);
        }
        if (options.keep_components) {
            comp_means.row(n_used) = comp.mean.transpose();
            comp_vars.row(n_used) = comp.variance.transpose();
        }
        ++n_used;
    }
    if (n_used == 0) throw numerical_error("every mixture component failed");
    if (10 * n_skipped > static_cast<int>(used.size()))
        throw numerical_error("more than 10% of mixture components failed (" +
                              std::to_string(n_skipped) + " of " +
                              std::to_string(used.size()) + ")");

    const double inv = 1.0 / static_cast<double>(n_used);
    PredictiveDistribution out;
    out.grid = grid;
    out.mean = sum_mean * inv;
    out.n_components = n_used;
    out.n_skipped = n_skipped;
    if (diag_only) {
        out.diagonal_only = true;
        out.variance = (sum_diag * inv - out.mean.cwiseProduct(out.mean)).cwiseMax(0.0);
        out.provenance = PredictionProvenance::MixtureDiagonal;
    } else {
        Mat second = sum_outer.selfadjointView<Eigen::Lower>();
        out.covariance = second * inv - out.mean * out.mean.transpose();
        out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
        out.variance = out.covariance.diagonal();
        out.provenance = PredictionProvenance::Mixture;
    }
    if (options.keep_components && n_used > 0) {
        out.component_means = comp_means.topRows(n_used);
        out.component_variances = comp_vars.topRows(n_used);
    }
    out.validate();
    return out;
}

PredictiveDistribution reconstruct_missing(const TimeSeriesDataset& observed,
                                           const ShearBuildingModel& model,
                                           const KernelConfig& kernel,
                                           const TimeSeriesDataset& gap,
                                           const TruncationPolicy& policy) {
    if (gap.input.rows() == 0) return PredictiveDistribution{}; // nothing to fill
    return conditional_predict(observed, model, kernel, gap, policy);
}

} // namespace gpmu
