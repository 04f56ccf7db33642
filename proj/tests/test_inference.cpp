#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gpmu/dynamics.hpp"
#include "gpmu/inference.hpp"
#include "gpmu/kernels.hpp"
#include "gpmu/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <vector>

using namespace gpmu;

namespace {

constexpr double kLn2Pi = 1.8378770664093455;

ShearBuildingModel sdof(double k = 5.0, double zeta = 0.05) {
    ShearBuildingModel m;
    m.masses = Vec::Constant(1, 1.0);
    m.story_stiffnesses = Vec::Constant(1, k);
    m.damping = ViscousRatioDamping{zeta};
    m.observed_dofs = {0};
    return m;
}

/// SDOF problem with a GWN kernel: packed = [k, sn2].
InferenceProblem sdof_gwn_problem(TimeSeriesDataset data) {
    InferenceProblem p;
    p.dataset = std::move(data);
    p.build_model = stiffness_builder(sdof(), {0});
    p.build_kernel = kernel_builder(KernelFamily::GWN);
    p.n_theta = 1;
    p.prior.entries = {{PriorKind::LogUniform, 0.5, 50.0},
                       {PriorKind::LogUniform, 1e-9, 10.0}};
    p.parameter_map = {{"k1", "N/m", Transform::Log}};
    for (const auto& info : kernel_parameter_map(KernelFamily::GWN))
        p.parameter_map.push_back(info);
    return p;
}

/// Dense stacked-covariance oracle: channel-blocked kron(I_C, K_t) layout
/// with index = time * C + channel.
double dense_log_density(const Mat& residual, const Mat& Kt) {
    const Index n = residual.rows();
    const Index C = residual.cols();
    const Index N = n * C;
    Mat big = Mat::Zero(N, N);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j)
            for (Index c = 0; c < C; ++c) big(i * C + c, j * C + c) = Kt(i, j);
    Vec r(N);
    for (Index i = 0; i < n; ++i)
        for (Index c = 0; c < C; ++c) r[i * C + c] = residual(i, c);
    const Eigen::LLT<Mat> llt(big);
    REQUIRE(llt.info() == Eigen::Success);
    const Vec alpha = llt.solve(r);
    double log_det = 0.0;
    for (Index i = 0; i < N; ++i) log_det += 2.0 * std::log(llt.matrixL()(i, i));
    return -0.5 * r.dot(alpha) - 0.5 * log_det - 0.5 * static_cast<double>(N) * kLn2Pi;
}

Vec packed2(double a, double b) {
    Vec x(2);
    x << a, b;
    return x;
}

} // namespace

TEST_CASE("parameter split: packing round trip and validation") {
    ParameterSplit s;
    s.theta = packed2(5.0, 7.0);
    s.phi = Vec::Constant(1, 0.25);
    s.parameter_map = {{"k1", "N/m", Transform::Log},
                       {"k2", "N/m", Transform::Log},
                       {"sn2", "-", Transform::Log}};
    CHECK(s.n_theta() == 2);
    CHECK(s.n_phi() == 1);
    const Vec x = s.packed();
    CHECK(x.size() == 3);
    CHECK(x[0] == 5.0);
    CHECK(x[2] == 0.25);
    const auto back = ParameterSplit::from_packed(x, 2, s.parameter_map);
    CHECK(back.theta == s.theta);
    CHECK(back.phi == s.phi);
    CHECK_NOTHROW(s.validate());

    ParameterSplit bad = s;
    bad.parameter_map.pop_back();
    CHECK_THROWS_AS(bad.validate(), invalid_model);
    bad = s;
    bad.theta[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(bad.validate(), invalid_model);
}

TEST_CASE("priors: normalized densities, support, transforms, sampling") {
    PriorSpec prior;
    prior.entries = {{PriorKind::Uniform, 2.0, 4.0}, {PriorKind::LogUniform, 1.0, std::exp(2.0)}};
    CHECK_NOTHROW(prior.validate());

    // Uniform(2,4): density 1/2. LogUniform(1,e^2): density 1/(2x).
    CHECK(prior.log_density(packed2(3.0, std::exp(1.0))) ==
          doctest::Approx(-std::log(2.0) + (-1.0 - std::log(2.0))).epsilon(1e-14));
    CHECK(prior.log_density(packed2(1.0, 2.0)) == -std::numeric_limits<double>::infinity());
    CHECK(prior.in_support(packed2(2.0, 1.0)));  // bounds inclusive
    CHECK(prior.in_support(packed2(4.0, std::exp(2.0))));
    CHECK(!prior.in_support(packed2(4.0001, 2.0)));

    // Internal coordinates: log space for LogUniform entries only.
    const Vec x = packed2(2.5, 3.0);
    const Vec z = prior.to_internal(x);
    CHECK(z[0] == 2.5);
    CHECK(z[1] == doctest::Approx(std::log(3.0)).epsilon(1e-15));
    CHECK((prior.from_internal(z) - x).cwiseAbs().maxCoeff() < 1e-14);
    const auto tr = prior.transforms();
    CHECK(tr[0] == Transform::Identity);
    CHECK(tr[1] == Transform::Log);

    SplitRng rng(99);
    for (int i = 0; i < 500; ++i) CHECK(prior.in_support(prior.sample(rng)));

    PriorSpec bad;
    bad.entries = {{PriorKind::Uniform, 4.0, 4.0}};
    CHECK_THROWS_AS(bad.validate(), config_error);
    bad.entries = {{PriorKind::LogUniform, 0.0, 1.0}};
    CHECK_THROWS_AS(bad.validate(), config_error);
}

TEST_CASE("log likelihood: zero residual with identity covariance") {
    const int n = 64;
    TimeSeriesDataset data;
    data.dt = 0.01;
    data.input = Mat::Zero(n, 1);
    data.output = Mat::Zero(n, 1); // equals the simulated response of zero input
    CHECK(log_likelihood(data, sdof(), KernelConfig::gwn(1.0)) ==
          doctest::Approx(-0.5 * n * kLn2Pi).epsilon(1e-14));
}

TEST_CASE("log likelihood: unit residual scalar gaussian") {
    TimeSeriesDataset data;
    data.dt = 0.01;
    data.input = Mat::Zero(1, 1);
    data.output = Mat::Constant(1, 1, 1.0);
    CHECK(log_likelihood(data, sdof(), KernelConfig::gwn(1.0)) ==
          doctest::Approx(-1.4189385332046727).epsilon(1e-14));
}

TEST_CASE("log likelihood matches a dense-inverse oracle") {
    SplitRng rng(2024);

    SUBCASE("white-noise kernel, 10 points") {
        const int n = 10;
        TimeSeriesDataset data;
        data.dt = 0.05;
        data.input = Mat::Zero(n, 1);
        data.output = Mat::NullaryExpr(n, 1, [&](Index, Index) { return rng.normal(); });
        const double sn2 = 0.37;
        const double ll = log_likelihood(data, sdof(), KernelConfig::gwn(sn2));
        const double oracle = -0.5 * data.output.squaredNorm() / sn2 -
                              0.5 * n * std::log(sn2) - 0.5 * n * kLn2Pi;
        CHECK(ll == doctest::Approx(oracle).epsilon(1e-12));
    }

    SUBCASE("squared-exponential kernel, two channels") {
        ShearBuildingModel m;
        m.masses = Vec::Constant(2, 1.0);
        m.story_stiffnesses = Vec::Constant(2, 8.0);
        m.damping = RayleighDamping{0.01, 1e-4};
        m.observed_dofs = {0, 1};
        const auto data = synthesize_dataset(m, GwnExcitation{1.0, 7}, 0.05, 0.6, 0.02);
        const int n = static_cast<int>(data.output.rows());
        REQUIRE(n == 12);

        const auto cfg = KernelConfig::se(0.8, 2.5, 0.05);
        const double ll = log_likelihood(data, m, cfg);

        auto grid = AuxiliaryGrid::regular(n, 0.05);
        const Mat Kt = assemble_covariance(cfg, grid); // includes the noise diagonal
        const Mat residual = data.output - simulate_response(m, data.input, data.dt);
        const double oracle = dense_log_density(residual, Kt);
        CHECK(ll == doctest::Approx(oracle).epsilon(1e-8));
    }
}

TEST_CASE("covariance operator: stacked structure via one temporal factorization") {
    const int n = 15;
    const auto cfg = KernelConfig::se(1.3, 1.7, 0.09);
    auto grid = AuxiliaryGrid::regular(n, 0.1);
    grid.channels = 2;
    const CovarianceOperator cov(cfg, grid);
    CHECK(cov.dim() == 2 * n);
    CHECK(cov.n_times() == n);

    auto tgrid = AuxiliaryGrid::regular(n, 0.1);
    const Mat Kt = assemble_covariance(cfg, tgrid);
    const Eigen::LLT<Mat> llt(Kt);
    double ld_t = 0.0;
    for (Index i = 0; i < n; ++i) ld_t += 2.0 * std::log(llt.matrixL()(i, i));
    CHECK(cov.log_det() == doctest::Approx(2.0 * ld_t).epsilon(1e-12));

    SplitRng rng(5);
    Mat R = Mat::NullaryExpr(n, 2, [&](Index, Index) { return rng.normal(); });
    const double qf = cov.quad_form(R);
    const double qf_oracle = (R.transpose() * llt.solve(R)).trace();
    CHECK(qf == doctest::Approx(qf_oracle).epsilon(1e-10));

    const Mat solved = cov.solve_temporal(R);
    CHECK((solved - llt.solve(R)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("covariance operator: uniform grids take the toeplitz recursion") {
    // stationary kernel + uniform grid must engage the O(n^2) path; jittered
    // grids, truncation, and near-singular matrices must fall back to dense
    const auto cfg = KernelConfig::se(1.3, 1.7, 0.09);
    CHECK(CovarianceOperator(cfg, AuxiliaryGrid::regular(40, 0.1)).toeplitz());

    AuxiliaryGrid ragged;
    ragged.zeta = Vec(4);
    ragged.zeta << 0.0, 0.1, 0.25, 0.3;
    ragged.channels = 1;
    CHECK_FALSE(CovarianceOperator(cfg, ragged).toeplitz());

    TruncationPolicy policy;
    policy.enabled = true;
    policy.relative_threshold = 5e-3;
    CHECK_FALSE(CovarianceOperator(cfg, AuxiliaryGrid::regular(40, 0.1), policy).toeplitz());

    // noise-free long-length-scale kernel is numerically singular: the
    // recursion must refuse it rather than return garbage
    const auto singular = KernelConfig::se(1.0, 1e-4, 0.0);
    const CovarianceOperator fallback(singular, AuxiliaryGrid::regular(60, 0.1));
    CHECK_FALSE(fallback.toeplitz());
}

TEST_CASE("theta conditional: minimum at truth, quadratic collapse, shared constant") {
    const auto data = synthesize_dataset(sdof(), GwnExcitation{1.0, 11}, 0.01, 3.0, 0.0);
    auto problem = sdof_gwn_problem(data);
    // flat prior over theta so the data term alone places the minimum
    problem.prior.entries[0] = {PriorKind::Uniform, 0.5, 50.0};
    const Vec phi = Vec::Constant(1, 1.0); // K = I

    SUBCASE("zero residual attains the minimum under a flat prior") {
        const double at_truth = neg_log_conditional_theta(problem, Vec::Constant(1, 5.0), phi);
        for (double k : {2.0, 3.5, 4.5, 5.5, 7.0, 20.0})
            CHECK(at_truth < neg_log_conditional_theta(problem, Vec::Constant(1, k), phi));
    }

    SUBCASE("identity covariance collapses to half the squared residual norm") {
        auto residual_sq = [&](double k) {
            const Mat r = data.output - simulate_response(sdof(k), data.input, data.dt);
            return r.squaredNorm();
        };
        const double d_obj = neg_log_conditional_theta(problem, Vec::Constant(1, 4.0), phi) -
                             neg_log_conditional_theta(problem, Vec::Constant(1, 6.0), phi);
        const double d_quad = 0.5 * (residual_sq(4.0) - residual_sq(6.0));
        CHECK(d_obj == doctest::Approx(d_quad).epsilon(1e-10));
    }

    SUBCASE("differs from -log_likelihood - log prior by a theta-independent constant") {
        const Vec phi2 = Vec::Constant(1, 0.31);
        auto full = [&](double k) {
            return -problem_log_likelihood(problem, packed2(k, phi2[0])) -
                   problem.prior.log_density(packed2(k, phi2[0]));
        };
        const double c1 = neg_log_conditional_theta(problem, Vec::Constant(1, 4.2), phi2) - full(4.2);
        const double c2 = neg_log_conditional_theta(problem, Vec::Constant(1, 6.8), phi2) - full(6.8);
        CHECK(c1 == doctest::Approx(c2).epsilon(1e-12));
    }

    SUBCASE("out-of-support theta yields +inf, not an exception") {
        CHECK(neg_log_conditional_theta(problem, Vec::Constant(1, 0.1), phi) ==
              std::numeric_limits<double>::infinity());
    }
}

TEST_CASE("phi conditional: noise-variance MLE, determinant growth, shared constant") {
    const auto data = synthesize_dataset(sdof(4.7), GwnExcitation{1.0, 13}, 0.01, 6.0, 0.05);
    auto problem = sdof_gwn_problem(data);
    problem.prior.entries[1] = {PriorKind::Uniform, 1e-8, 10.0}; // flat so the MLE is exact
    const Vec theta = Vec::Constant(1, 5.0); // deliberately off-truth: residual nonzero

    SUBCASE("numeric minimizer matches the closed-form variance") {
        const Mat r = data.output - simulate_response(sdof(theta[0]), data.input, data.dt);
        const double target = r.squaredNorm() / static_cast<double>(r.size());

        auto obj = [&](double sn2) {
            return neg_log_conditional_phi(problem, Vec::Constant(1, sn2), theta);
        };
        // bracket on a log grid, then golden-section polish
        double best = 1e-6, fbest = obj(best);
        for (int i = 1; i <= 200; ++i) {
            const double s = 1e-6 * std::pow(1e7, i / 200.0);
            const double f = obj(s);
            if (f < fbest) {
                fbest = f;
                best = s;
            }
        }
        double lo = best / 1.1, hi = best * 1.1;
        const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
        for (int it = 0; it < 80; ++it) {
            const double a = hi - gr * (hi - lo), b = lo + gr * (hi - lo);
            if (obj(a) < obj(b)) hi = b;
            else lo = a;
        }
        const double minimizer = 0.5 * (lo + hi);
        CHECK(minimizer == doctest::Approx(target).epsilon(1e-3));
    }

    SUBCASE("with zero residual, doubling the signal variance raises the objective") {
        InferenceProblem se = problem;
        se.dataset.output = simulate_response(sdof(5.0), data.input, data.dt);
        se.build_kernel = kernel_builder(KernelFamily::SE);
        se.prior.entries = {{PriorKind::Uniform, 0.5, 50.0},
                            {PriorKind::Uniform, 1e-4, 100.0},
                            {PriorKind::Uniform, 1e-4, 100.0},
                            {PriorKind::Uniform, 1e-8, 10.0}};
        se.parameter_map = {{"k1", "N/m", Transform::Log}};
        for (const auto& info : kernel_parameter_map(KernelFamily::SE))
            se.parameter_map.push_back(info);
        Vec phi(3);
        phi << 0.5, 1.0, 0.01;
        Vec phi_double = phi;
        phi_double[0] *= 2.0;
        CHECK(neg_log_conditional_phi(se, phi, theta) <
              neg_log_conditional_phi(se, phi_double, theta));
    }

    SUBCASE("differs from -log_likelihood - log prior by a phi-independent constant") {
        auto full = [&](double sn2) {
            return -problem_log_likelihood(problem, packed2(theta[0], sn2)) -
                   problem.prior.log_density(packed2(theta[0], sn2));
        };
        const double c1 = neg_log_conditional_phi(problem, Vec::Constant(1, 0.2), theta) - full(0.2);
        const double c2 = neg_log_conditional_phi(problem, Vec::Constant(1, 0.02), theta) - full(0.02);
        CHECK(c1 == doctest::Approx(c2).epsilon(1e-12));
    }
}

TEST_CASE("mpv search recovers the sdof stiffness from noisy data") {
    const auto data = synthesize_dataset(sdof(), GwnExcitation{1.0, 3}, 0.01, 8.0, 0.05);
    const auto problem = sdof_gwn_problem(data);

    ParameterSplit init;
    init.theta = Vec::Constant(1, 3.0);
    init.phi = Vec::Constant(1, 0.1);
    init.parameter_map = problem.parameter_map;

    const auto summary = find_mpv(problem, init);
    CHECK(summary.converged);
    CHECK(summary.iterations <= 100);
    CHECK(summary.mpv.theta[0] > 4.95);
    CHECK(summary.mpv.theta[0] < 5.05);
    // noise variance should land near the injected 0.05^2
    CHECK(summary.mpv.phi[0] > 0.5 * 0.0025);
    CHECK(summary.mpv.phi[0] < 2.0 * 0.0025);

    SUBCASE("joint objective trace is non-increasing across outer iterations") {
        REQUIRE(summary.objective_trace.size() >= 2);
        for (size_t i = 1; i < summary.objective_trace.size(); ++i)
            CHECK(summary.objective_trace[i] <=
                  summary.objective_trace[i - 1] +
                      1e-9 * std::max(1.0, std::abs(summary.objective_trace[i - 1])));
    }

}

TEST_CASE("gradient at the mpv is small in transformed coordinates") {
    const auto data = synthesize_dataset(sdof(), GwnExcitation{1.0, 27}, 0.01, 2.0, 0.05);
    const auto problem = sdof_gwn_problem(data);
    ParameterSplit init;
    init.theta = Vec::Constant(1, 4.0);
    init.phi = Vec::Constant(1, 0.01);
    init.parameter_map = problem.parameter_map;
    MpvOptions opts;
    opts.tol = 1e-9;
    opts.max_iter = 200;
    opts.half_step_budget = 2000;
    const auto summary = find_mpv(problem, init, opts);

    const Vec z = problem.prior.to_internal(summary.mpv.packed());
    double gmax = 0.0;
    for (Index i = 0; i < z.size(); ++i) {
        const double h = 1e-6 * std::max(std::abs(z[i]), 1.0);
        Vec zp = z, zm = z;
        zp[i] += h;
        zm[i] -= h;
        const double g = (neg_log_posterior(problem, problem.prior.from_internal(zp)) -
                          neg_log_posterior(problem, problem.prior.from_internal(zm))) /
                         (2.0 * h);
        gmax = std::max(gmax, std::abs(g));
    }
    CHECK(gmax < 1e-3);
}

TEST_CASE("mpv search: self-consistency at zero measurement noise") {
    const auto data = synthesize_dataset(sdof(), GwnExcitation{1.0, 21}, 0.01, 4.0, 0.0);
    const auto problem = sdof_gwn_problem(data);

    ParameterSplit init;
    init.theta = Vec::Constant(1, 4.0);
    init.phi = Vec::Constant(1, 0.01);
    init.parameter_map = problem.parameter_map;

    const auto summary = find_mpv(problem, init);
    CHECK(std::abs(summary.mpv.theta[0] - 5.0) / 5.0 < 1e-4);
}

TEST_CASE("mpv search rejects an out-of-support initialization") {
    const auto data = synthesize_dataset(sdof(), GwnExcitation{1.0, 2}, 0.01, 1.0, 0.01);
    const auto problem = sdof_gwn_problem(data);
    ParameterSplit init;
    init.theta = Vec::Constant(1, 0.01); // below the prior's lower bound
    init.phi = Vec::Constant(1, 0.01);
    init.parameter_map = problem.parameter_map;
    CHECK_THROWS_AS(find_mpv(problem, init), invalid_model);
}

TEST_CASE("laplace covariance: analytic quadratics and the linear-gaussian toy") {
    SUBCASE("1d quadratic: variance is the inverse curvature") {
        const double a = 3.7;
        auto f = [&](const Vec& x) { return 0.5 * a * (x[0] - 1.2) * (x[0] - 1.2); };
        bool flag = true;
        const Mat cov = laplace_covariance_of(f, Vec::Constant(1, 1.2), {Transform::Identity}, &flag);
        CHECK(cov(0, 0) == doctest::Approx(1.0 / a).epsilon(1e-8));
        CHECK(!flag);
    }

    SUBCASE("2d quadratic: covariance is the inverse hessian") {
        Mat A(2, 2);
        A << 2.0, 0.5, 0.5, 1.0;
        auto f = [&](const Vec& x) { return 0.5 * x.dot(A * x); };
        const Mat cov = laplace_covariance_of(f, Vec::Zero(2),
                                              {Transform::Identity, Transform::Identity});
        const Mat expect = A.inverse();
        CHECK((cov - expect).cwiseAbs().maxCoeff() < 1e-6);
        CHECK((cov - cov.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    }

    SUBCASE("linear-gaussian regression: matches the conjugate posterior variance") {
        SplitRng rng(31);
        const int n = 40;
        const double sigma = 0.3, theta_true = 2.0;
        Vec x(n), y(n);
        for (int i = 0; i < n; ++i) {
            x[i] = rng.uniform(-1.0, 1.0);
            y[i] = theta_true * x[i] + sigma * rng.normal();
        }
        const double theta_hat = x.dot(y) / x.squaredNorm();
        auto f = [&](const Vec& th) { return (y - th[0] * x).squaredNorm() / (2.0 * sigma * sigma); };
        const Mat cov = laplace_covariance_of(f, Vec::Constant(1, theta_hat), {Transform::Identity});
        const double exact = sigma * sigma / x.squaredNorm();
        CHECK(std::abs(cov(0, 0) - exact) / exact < 1e-4);
    }

    SUBCASE("log transform: delta method maps the variance back to natural units") {
        const double a = 4.0, mu = 0.7;
        auto f = [&](const Vec& x) {
            const double z = std::log(x[0]);
            return 0.5 * a * (z - mu) * (z - mu);
        };
        const double xhat = std::exp(mu);
        const Mat cov = laplace_covariance_of(f, Vec::Constant(1, xhat), {Transform::Log});
        CHECK(cov(0, 0) == doctest::Approx(xhat * xhat / a).epsilon(1e-6));
    }

    SUBCASE("non-positive-definite hessian flags non-identifiability") {
        auto f = [](const Vec& x) { return -0.5 * x[0] * x[0]; };
        bool flag = false;
        const Mat cov = laplace_covariance_of(f, Vec::Zero(1), {Transform::Identity}, &flag);
        CHECK(flag);
        CHECK(std::isfinite(cov(0, 0)));
    }
}

TEST_CASE("laplace covariance and evidence on the sdof posterior") {
    const auto data = synthesize_dataset(sdof(), GwnExcitation{1.0, 3}, 0.01, 8.0, 0.05);
    const auto problem = sdof_gwn_problem(data);

    ParameterSplit init;
    init.theta = Vec::Constant(1, 3.0);
    init.phi = Vec::Constant(1, 0.1);
    init.parameter_map = problem.parameter_map;

    auto summary = laplace_covariance(problem, find_mpv(problem, init));
    REQUIRE(summary.covariance.rows() == 2);
    CHECK(!summary.non_identifiable);
    CHECK((summary.covariance - summary.covariance.transpose()).cwiseAbs().maxCoeff() <
          1e-6 * summary.covariance.cwiseAbs().maxCoeff());
    CHECK(summary.covariance(0, 0) >= 0.0);
    CHECK(summary.covariance(1, 1) >= 0.0);

    // stiffness SD of order 1e-3 (scaled record: looser order-of-magnitude band)
    const double sd = summary.standard_deviations()[0];
    CHECK(sd > 1e-4);
    CHECK(sd < 5e-2);

    const double ev = laplace_evidence(problem, summary);
    CHECK(std::isfinite(ev));
    CHECK(ev < summary.log_likelihood_at_mpv); // wide priors cost evidence mass
}

TEST_CASE("truncated spectral form: flat, rank-1, and analytic spectra") {
    TruncationPolicy policy;
    policy.enabled = true;
    policy.relative_threshold = 5e-3;

    SUBCASE("identity matrix retains every dimension") {
        const auto ts = truncated_spectral_form(Mat::Identity(20, 20), policy, 1e-4);
        CHECK(ts.retained() == 20);
        CHECK(ts.log_det == doctest::Approx(0.0).epsilon(1e-12));
        SplitRng rng(1);
        const Vec x = Vec::NullaryExpr(20, [&](Index) { return rng.normal(); });
        CHECK(ts.quad_form(x) == doctest::Approx(x.squaredNorm()).epsilon(1e-10));
    }

    SUBCASE("rank-1 plus tiny jitter retains one dimension") {
        SplitRng rng(2);
        Vec v = Vec::NullaryExpr(8, [&](Index) { return rng.normal(); });
        const Mat K = 2.0 * v * v.transpose() + 1e-12 * Mat::Identity(8, 8);
        CHECK(truncated_spectral_form(K, policy, 1e-12).retained() == 1);
    }

    SUBCASE("known eigenvalues: retained terms plus noise floor on the complement") {
        SplitRng rng(3);
        Mat G = Mat::NullaryExpr(4, 4, [&](Index, Index) { return rng.normal(); });
        const Mat Q = Eigen::HouseholderQR<Mat>(G).householderQ();
        Vec lambda(4);
        lambda << 1.0, 0.5, 1e-6, 1e-8;
        const Mat K = Q * lambda.asDiagonal() * Q.transpose();

        TruncationPolicy p2;
        p2.enabled = true;
        p2.relative_threshold = 1e-2;
        const double floor = 1e-6;
        const auto ts = truncated_spectral_form(K, p2, floor);
        REQUIRE(ts.retained() == 2);
        CHECK(ts.log_det ==
              doctest::Approx(std::log(1.0) + std::log(0.5) + 2.0 * std::log(floor)).epsilon(1e-9));
        CHECK(ts.quad_form(Q.col(0)) == doctest::Approx(1.0).epsilon(1e-8));
        // a direction in the discarded subspace is handled by the noise floor
        CHECK(ts.quad_form(Q.col(3)) == doctest::Approx(1.0 / floor).epsilon(1e-6));
        CHECK((ts.apply_inverse(Q.col(3)) - Q.col(3) / floor).cwiseAbs().maxCoeff() <
              1e-6 / floor);
    }

    SUBCASE("threshold outside the allowed range is rejected when enabled") {
        TruncationPolicy bad;
        bad.enabled = true;
        bad.relative_threshold = 5e-4;
        CHECK_THROWS_AS(bad.validate(), config_error);
        bad.relative_threshold = 2e-2;
        CHECK_THROWS_AS(bad.validate(), config_error);
        bad.enabled = false; // range only constrains active policies
        CHECK_NOTHROW(bad.validate());
    }
}

TEST_CASE("truncated likelihood matches the dense value when nothing is discarded") {
    // noise floor keeps the spectrum well above threshold * lambda_max, so the
    // smallest allowed threshold retains everything
    const int n = 200;
    TimeSeriesDataset data;
    data.dt = 0.05;
    data.input = Mat::Zero(n, 1);
    SplitRng rng(17);
    data.output = Mat::NullaryExpr(n, 1, [&](Index, Index) { return rng.normal(); });

    const auto cfg = KernelConfig::se(1.0, 1.0, 0.5);
    const double dense = log_likelihood(data, sdof(), cfg);

    TruncationPolicy policy;
    policy.enabled = true;
    policy.relative_threshold = 1e-3;
    const double truncated = log_likelihood(data, sdof(), cfg, policy);
    CHECK(std::abs(truncated - dense) < 1e-6 * std::abs(dense));

    auto grid = AuxiliaryGrid::regular(n, 0.05);
    const CovarianceOperator cov(cfg, grid, policy);
    CHECK(cov.truncated());
    CHECK(cov.retained_per_channel() == n);
}

TEST_CASE("truncating covariance operator reports a reduced subspace") {
    // long correlation length + small noise: spectrum decays fast
    const int n = 120;
    const auto cfg = KernelConfig::se(1.0, 100.0, 1e-4);
    auto grid = AuxiliaryGrid::regular(n, 0.05);
    TruncationPolicy policy;
    policy.enabled = true;
    policy.relative_threshold = 5e-3;
    const CovarianceOperator cov(cfg, grid, policy);
    CHECK(cov.truncated());
    CHECK(cov.retained_per_channel() < n);
    CHECK(cov.retained_per_channel() >= 1);
    CHECK(std::isfinite(cov.log_det()));
}

TEST_CASE("unit rescale invariance of the mpv") {
    // N <-> kN style rescale: masses, stiffness, and force all x1000 leave
    // accelerations (and hence the data) unchanged
    const double scale = 1000.0;
    const auto data = synthesize_dataset(sdof(), GwnExcitation{1.0, 41}, 0.01, 6.0, 0.05);

    const auto base = sdof_gwn_problem(data);
    ParameterSplit init;
    init.theta = Vec::Constant(1, 3.0);
    init.phi = Vec::Constant(1, 0.1);
    init.parameter_map = base.parameter_map;
    const auto ref = find_mpv(base, init);

    TimeSeriesDataset scaled_data = data;
    scaled_data.input *= scale;
    ShearBuildingModel nominal = sdof();
    nominal.masses *= scale;
    InferenceProblem scaled = base;
    scaled.dataset = scaled_data;
    scaled.build_model = stiffness_builder(nominal, {0});
    scaled.prior.entries[0] = {PriorKind::LogUniform, 0.5 * scale, 50.0 * scale};
    ParameterSplit init2 = init;
    init2.theta *= scale;
    const auto res = find_mpv(scaled, init2);

    CHECK(std::abs(res.mpv.theta[0] / (scale * ref.mpv.theta[0]) - 1.0) < 1e-4);
    CHECK(std::abs(res.mpv.phi[0] / ref.mpv.phi[0] - 1.0) < 1e-3);
}
