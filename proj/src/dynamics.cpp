#include "gpmu/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <unsupported/Eigen/MatrixFunctions>

namespace gpmu {

void ShearBuildingModel::validate() const {
    const int n = n_stories();
    if (n < 1) throw invalid_model("model needs at least one story");
    if (story_stiffnesses.size() != n) throw invalid_model("one stiffness per story required");
    if (!masses.allFinite() || (masses.array() <= 0.0).any())
        throw invalid_model("masses must be finite and > 0");
    if (!story_stiffnesses.allFinite() || (story_stiffnesses.array() <= 0.0).any())
        throw invalid_model("story stiffnesses must be finite and > 0");
    if (observed_dofs.empty()) throw invalid_model("at least one observed DOF required");
    for (size_t a = 0; a < observed_dofs.size(); ++a) {
        const int dof = observed_dofs[a];
        if (dof < 0 || dof >= n) throw invalid_model("observed DOF out of range");
        for (size_t b = 0; b < a; ++b)
            if (observed_dofs[b] == dof) throw invalid_model("observed DOFs must be distinct");
    }
    if (input_kind == InputKind::Force && (input_dof < 0 || input_dof >= n))
        throw invalid_model("input DOF out of range");
    if (const auto* modal = std::get_if<ModalRatioDamping>(&damping)) {
        if (modal->zeta.size() != n) throw invalid_model("one modal ratio per story required");
        if ((modal->zeta.array() < 0.0).any() || (modal->zeta.array() >= 1.0).any())
            throw invalid_model("damping ratios must lie in [0, 1)");
    } else if (const auto* viscous = std::get_if<ViscousRatioDamping>(&damping)) {
        if (n != 1) throw invalid_model("single viscous ratio only defined for one story");
        if (viscous->zeta < 0.0 || viscous->zeta >= 1.0)
            throw invalid_model("damping ratio must lie in [0, 1)");
    } else if (const auto* rayleigh = std::get_if<RayleighDamping>(&damping)) {
        if (!std::isfinite(rayleigh->alpha) || !std::isfinite(rayleigh->beta) ||
            rayleigh->alpha < 0.0 || rayleigh->beta < 0.0)
            throw invalid_model("rayleigh coefficients must be finite and >= 0");
    }
}

Vec TimeSeriesDataset::times() const {
    if (t.size() > 0) return t;
    Vec out(n());
    for (Index i = 0; i < out.size(); ++i) out[i] = static_cast<double>(i) * dt;
    return out;
}

void TimeSeriesDataset::validate() const {
    if (input.rows() < 1) throw invalid_model("dataset must have at least one row");
    if (t.size() == 0 && dt <= 0.0) throw invalid_model("dataset needs dt > 0 or explicit times");
    if (t.size() > 0) {
        if (t.size() != input.rows()) throw invalid_model("one time per row required");
        for (Index i = 0; i + 1 < t.size(); ++i)
            if (t[i + 1] <= t[i]) throw invalid_model("times must be strictly increasing");
    }
    if (has_output() && output.rows() != input.rows())
        throw invalid_model("input/output row counts differ");
    if (!channel_labels.empty() && static_cast<Index>(channel_labels.size()) != output.cols())
        throw invalid_model("one channel label per output column required");
    if (!input.allFinite() || (has_output() && !output.allFinite()))
        throw invalid_model("dataset values must be finite");
}

StructuralMatrices assemble_matrices(const ShearBuildingModel& model) {
    model.validate();
    const int n = model.n_stories();
    StructuralMatrices s;
    s.M = model.masses.asDiagonal();
    s.K = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        s.K(i, i) += model.story_stiffnesses[i];
        if (i + 1 < n) {
            s.K(i, i) += model.story_stiffnesses[i + 1];
            s.K(i, i + 1) -= model.story_stiffnesses[i + 1];
            s.K(i + 1, i) -= model.story_stiffnesses[i + 1];
        }
    }
    if (const auto* rayleigh = std::get_if<RayleighDamping>(&model.damping)) {
        s.C = rayleigh->alpha * s.K + rayleigh->beta * s.M;
    } else if (const auto* viscous = std::get_if<ViscousRatioDamping>(&model.damping)) {
        s.C = Mat::Constant(1, 1, 2.0 * viscous->zeta *
                                     std::sqrt(model.story_stiffnesses[0] * model.masses[0]));
    } else {
        const auto& modal = std::get<ModalRatioDamping>(model.damping);
        Eigen::GeneralizedSelfAdjointEigenSolver<Mat> eig(s.K, s.M);
        if (eig.info() != Eigen::Success) throw numerical_error("modal decomposition failed");
        const Vec omega = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
        const Mat phi = eig.eigenvectors(); // phi' M phi = I
        // C = M Phi diag(2 zeta_j w_j) Phi' M
        const Mat mp = s.M * phi;
        s.C = mp * (2.0 * modal.zeta.array() * omega.array()).matrix().asDiagonal() *
              mp.transpose();
        s.C = 0.5 * (s.C + s.C.transpose()).eval();
    }
    return s;
}

ModalResult modal_analysis(const ShearBuildingModel& model) {
    const StructuralMatrices s = assemble_matrices(model);
    Eigen::GeneralizedSelfAdjointEigenSolver<Mat> eig(s.K, s.M);
    if (eig.info() != Eigen::Success) throw numerical_error("modal decomposition failed");
    ModalResult r;
    r.frequencies = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    r.shapes = eig.eigenvectors();
    for (Index j = 0; j < r.shapes.cols(); ++j) {
        Index imax = 0;
        r.shapes.col(j).cwiseAbs().maxCoeff(&imax);
        if (r.shapes(imax, j) < 0.0) r.shapes.col(j) = -r.shapes.col(j);
    }
    return r;
}

Mat simulate_response(const ShearBuildingModel& model, const Mat& input, double dt,
                      const std::optional<InitialState>& initial) {
    model.validate();
    if (input.cols() != 1) throw invalid_model("single excitation history expected");
    if (dt <= 0.0) throw invalid_model("dt must be > 0");
    const int n = model.n_stories();
    const Index steps = input.rows();
    const StructuralMatrices s = assemble_matrices(model);
    const Mat minv_k = s.M.ldlt().solve(s.K);
    const Mat minv_c = s.M.ldlt().solve(s.C);

    // state z = [x; v], zdot = A z + B u, exact ZOH via augmented exponential
    Mat aug = Mat::Zero(2 * n + 1, 2 * n + 1);
    aug.block(0, n, n, n) = Mat::Identity(n, n);
    aug.block(n, 0, n, n) = -minv_k;
    aug.block(n, n, n, n) = -minv_c;
    Vec b = Vec::Zero(2 * n);
    Vec f_shape = Vec::Zero(n); // force vector per unit input, divided by mass
    if (model.input_kind == InputKind::Force) {
        f_shape[model.input_dof] = 1.0 / model.masses[model.input_dof];
    } else {
        f_shape = -Vec::Ones(n); // F = -M 1 a_g
    }
    b.tail(n) = f_shape;
    aug.block(0, 2 * n, 2 * n, 1) = b;
    const Mat phi = (aug * dt).exp();
    const Mat ad = phi.topLeftCorner(2 * n, 2 * n);
    const Vec bd = phi.block(0, 2 * n, 2 * n, 1);

    Vec z = Vec::Zero(2 * n);
    if (initial) {
        if (initial->displacement.size() != n || initial->velocity.size() != n)
            throw invalid_model("initial state size mismatch");
        z.head(n) = initial->displacement;
        z.tail(n) = initial->velocity;
    }
    Mat out(steps, model.n_outputs());
    for (Index k = 0; k < steps; ++k) {
        const double u = input(k, 0);
        // acceleration at t_k with the held input value: M^{-1}(F - C v - K x)
        const Vec acc = f_shape * u - minv_c * z.tail(n) - minv_k * z.head(n);
        for (int c = 0; c < model.n_outputs(); ++c) out(k, c) = acc[model.observed_dofs[c]];
        z = ad * z + bd * u;
    }
    if (!out.allFinite()) throw numerical_error("simulation produced non-finite output");
    return out;
}

TimeSeriesDataset synthesize_dataset(const ShearBuildingModel& model,
                                     const GwnExcitation& excitation, double dt, double duration,
                                     double output_noise_std) {
    model.validate();
    if (dt <= 0.0 || duration <= 0.0) throw invalid_model("dt and duration must be > 0");
    const Index n = static_cast<Index>(std::llround(duration / dt));
    if (n < 2) throw invalid_model("record too short");
    SplitRng root(excitation.seed);
    SplitRng input_rng = root.split(1);
    SplitRng noise_rng = root.split(2);

    TimeSeriesDataset data;
    data.dt = dt;
    data.input = Mat(n, 1);
    for (Index i = 0; i < n; ++i) data.input(i, 0) = excitation.std_dev * input_rng.normal();
    data.output = simulate_response(model, data.input, dt);
    if (output_noise_std > 0.0)
        for (Index i = 0; i < data.output.rows(); ++i)
            for (Index c = 0; c < data.output.cols(); ++c)
                data.output(i, c) += output_noise_std * noise_rng.normal();
    data.channel_labels = model.observed_dofs;
    data.validate();
    return data;
}

namespace {

TimeSeriesDataset take_rows(const TimeSeriesDataset& data, const std::vector<Index>& rows) {
    TimeSeriesDataset out;
    out.dt = data.dt;
    const Vec t = data.times();
    out.t = Vec(rows.size());
    out.input = Mat(rows.size(), data.input.cols());
    if (data.has_output()) out.output = Mat(rows.size(), data.output.cols());
    else out.output = Mat(0, data.output.cols());
    for (size_t r = 0; r < rows.size(); ++r) {
        out.t[static_cast<Index>(r)] = t[rows[r]];
        out.input.row(static_cast<Index>(r)) = data.input.row(rows[r]);
        if (data.has_output()) out.output.row(static_cast<Index>(r)) = data.output.row(rows[r]);
    }
    out.channel_labels = data.channel_labels;
    return out;
}

double boundary_eps(const TimeSeriesDataset& data) {
    if (data.dt > 0.0) return 1e-9 * data.dt;
    const Vec t = data.times();
    return t.size() > 1 ? 1e-9 * (t[t.size() - 1] - t[0]) / static_cast<double>(t.size()) : 1e-12;
}

} // namespace

TimeSeriesDataset slice(const TimeSeriesDataset& data, double t_lo, double t_hi) {
    data.validate();
    const Vec t = data.times();
    const double eps = boundary_eps(data);
    std::vector<Index> rows;
    for (Index i = 0; i < t.size(); ++i)
        if (t[i] >= t_lo - eps && t[i] < t_hi - eps) rows.push_back(i);
    return take_rows(data, rows);
}

std::pair<TimeSeriesDataset, TimeSeriesDataset> split_at(const TimeSeriesDataset& data,
                                                         double t_split) {
    const double inf = std::numeric_limits<double>::infinity();
    return {slice(data, -inf, t_split), slice(data, t_split, inf)};
}

std::pair<TimeSeriesDataset, TimeSeriesDataset> excise(const TimeSeriesDataset& data,
                                                       double gap_lo, double gap_hi) {
    data.validate();
    const Vec t = data.times();
    const double eps = boundary_eps(data);
    std::vector<Index> kept, cut;
    for (Index i = 0; i < t.size(); ++i) {
        if (t[i] >= gap_lo - eps && t[i] < gap_hi - eps) cut.push_back(i);
        else kept.push_back(i);
    }
    return {take_rows(data, kept), take_rows(data, cut)};
}

} // namespace gpmu
