#include "gpmu/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <unsupported/Eigen/KroneckerProduct>

namespace gpmu {

std::string to_string(KernelFamily family) {
    switch (family) {
    case KernelFamily::GWN: return "gwn";
    case KernelFamily::SE: return "se";
    case KernelFamily::PE: return "pe";
    case KernelFamily::MMTE: return "mmte";
    }
    return "?";
}

KernelFamily kernel_family_from_string(const std::string& name) {
    if (name == "gwn") return KernelFamily::GWN;
    if (name == "se") return KernelFamily::SE;
    if (name == "pe") return KernelFamily::PE;
    if (name == "mmte") return KernelFamily::MMTE;
    throw config_error("unknown kernel family '" + name + "'");
}

KernelConfig KernelConfig::gwn(double noise_var) {
    KernelConfig c;
    c.family = KernelFamily::GWN;
    c.noise_floor = noise_var;
    c.validate();
    return c;
}

KernelConfig KernelConfig::se(double sigma_f2, double inv_len2, double noise_var) {
    KernelConfig c;
    c.family = KernelFamily::SE;
    c.params = Vec(2);
    c.params << sigma_f2, inv_len2;
    c.noise_floor = noise_var;
    c.validate();
    return c;
}

KernelConfig KernelConfig::pe(double sigma_f2, double inv_len2, double omega, double noise_var) {
    KernelConfig c;
    c.family = KernelFamily::PE;
    c.params = Vec(3);
    c.params << sigma_f2, inv_len2, omega;
    c.noise_floor = noise_var;
    c.validate();
    return c;
}

KernelConfig KernelConfig::mmte(std::initializer_list<double> components, double noise_var) {
    Vec v(static_cast<Index>(components.size()));
    Index i = 0;
    for (double x : components) v[i++] = x;
    return mmte(v, noise_var);
}

KernelConfig KernelConfig::mmte(const Vec& components, double noise_var) {
    if (components.size() == 0 || components.size() % 3 != 0)
        throw invalid_model("mmte components must come in [sigma^2, omega, 1/l^2] triples");
    const int m = static_cast<int>(components.size() / 3);
    std::vector<int> idx(m);
    for (int k = 0; k < m; ++k) idx[k] = k;
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        return components[3 * a + 1] < components[3 * b + 1];
    });
    KernelConfig c;
    c.family = KernelFamily::MMTE;
    c.mmte_order = m;
    c.params = Vec(3 * m);
    for (int k = 0; k < m; ++k) c.params.segment(3 * k, 3) = components.segment(3 * idx[k], 3);
    c.noise_floor = noise_var;
    c.validate();
    return c;
}

void KernelConfig::validate() const {
    if (!std::isfinite(noise_floor) || noise_floor < 0.0)
        throw invalid_model("kernel noise variance must be finite and >= 0");
    if (!params.allFinite()) throw invalid_model("kernel parameters must be finite");
    switch (family) {
    case KernelFamily::GWN:
        if (params.size() != 0) throw invalid_model("gwn kernel takes no parameters");
        if (noise_floor <= 0.0) throw invalid_model("gwn kernel needs a noise variance > 0");
        break;
    case KernelFamily::SE:
        if (params.size() != 2) throw invalid_model("se kernel takes [sigma_f^2, 1/l^2]");
        if (params[0] <= 0.0 || params[1] <= 0.0)
            throw invalid_model("se kernel parameters must be > 0");
        break;
    case KernelFamily::PE:
        if (params.size() != 3) throw invalid_model("pe kernel takes [sigma_f^2, 1/l^2, omega]");
        if (params[0] <= 0.0 || params[1] <= 0.0 || params[2] <= 0.0)
            throw invalid_model("pe kernel parameters must be > 0");
        break;
    case KernelFamily::MMTE: {
        if (mmte_order < 1 || params.size() != 3 * mmte_order)
            throw invalid_model("mmte kernel takes [sigma^2, omega, 1/l^2] per mode");
        double prev_omega = -1.0;
        for (int k = 0; k < mmte_order; ++k) {
            const double s2 = params[3 * k], om = params[3 * k + 1], il2 = params[3 * k + 2];
            if (s2 <= 0.0 || il2 <= 0.0) throw invalid_model("mmte amplitudes/lengths must be > 0");
            if (om < 0.0) throw invalid_model("mmte frequencies must be >= 0");
            if (om < prev_omega) throw invalid_model("mmte modes must be ordered by frequency");
            prev_omega = om;
        }
        break;
    }
    }
}

double KernelConfig::value_at_zero() const {
    switch (family) {
    case KernelFamily::GWN: return 0.0;
    case KernelFamily::SE:
    case KernelFamily::PE: return params[0];
    case KernelFamily::MMTE: {
        double s = 0.0;
        for (int k = 0; k < mmte_order; ++k) s += params[3 * k];
        return s;
    }
    }
    return 0.0;
}

double kernel_value(const KernelConfig& config, double d) {
    if (d < 0.0) throw invalid_model("kernel distance must be >= 0");
    switch (config.family) {
    case KernelFamily::GWN: return 0.0;
    case KernelFamily::SE: return config.params[0] * std::exp(-0.5 * config.params[1] * d * d);
    case KernelFamily::PE: {
        const double s = std::sin(config.params[2] * d);
        return config.params[0] * std::exp(-0.5 * config.params[1] * s * s);
    }
    case KernelFamily::MMTE: {
        double v = 0.0;
        for (int k = 0; k < config.mmte_order; ++k) {
            const double s2 = config.params[3 * k];
            const double om = config.params[3 * k + 1];
            const double il2 = config.params[3 * k + 2];
            v += s2 * std::exp(-d * d * il2) * std::cos(om * d);
        }
        return v;
    }
    }
    return 0.0;
}

Vec kernel_values(const KernelConfig& config, const Vec& d) {
    switch (config.family) {
    case KernelFamily::GWN: return Vec::Zero(d.size());
    case KernelFamily::SE:
        return config.params[0] * (-0.5 * config.params[1] * d.array().square()).exp();
    case KernelFamily::PE:
        return config.params[0] *
               (-0.5 * config.params[1] * (config.params[2] * d.array()).sin().square()).exp();
    case KernelFamily::MMTE: {
        Vec v = Vec::Zero(d.size());
        for (int k = 0; k < config.mmte_order; ++k) {
            const double s2 = config.params[3 * k];
            const double om = config.params[3 * k + 1];
            const double il2 = config.params[3 * k + 2];
            v.array() += s2 * (-il2 * d.array().square()).exp() * (om * d.array()).cos();
        }
        return v;
    }
    }
    return Vec::Zero(d.size());
}

AuxiliaryGrid AuxiliaryGrid::regular(Index n, double dt, int channels, double t0) {
    AuxiliaryGrid g;
    g.zeta = Vec(n);
    for (Index i = 0; i < n; ++i) g.zeta[i] = t0 + static_cast<double>(i) * dt;
    g.channels = channels;
    g.validate();
    return g;
}

bool AuxiliaryGrid::is_uniform(double* dt_out) const {
    if (zeta.size() < 2) {
        if (dt_out) *dt_out = 0.0;
        return true;
    }
    const double d0 = zeta[1] - zeta[0];
    const Index n = zeta.size();
    for (Index i = 1; i + 1 < n; ++i)
        if (std::abs((zeta[i + 1] - zeta[i]) - d0) > 1e-9 * std::max(1.0, std::abs(d0)))
            return false;
    if (dt_out) *dt_out = d0;
    return true;
}

void AuxiliaryGrid::validate() const {
    if (zeta.size() == 0) throw invalid_model("grid must have at least one point");
    if (channels < 1) throw invalid_model("grid needs at least one channel");
    if (!zeta.allFinite()) throw invalid_model("grid times must be finite");
    for (Index i = 0; i + 1 < zeta.size(); ++i)
        if (zeta[i + 1] <= zeta[i]) throw invalid_model("grid times must be strictly increasing");
}

Mat temporal_covariance(const KernelConfig& config, const Vec& t) {
    const Index n = t.size();
    Mat K(n, n);
    bool uniform = true;
    double dt = 0.0;
    if (n >= 2) {
        dt = t[1] - t[0];
        for (Index i = 1; i + 1 < n; ++i)
            if (std::abs((t[i + 1] - t[i]) - dt) > 1e-9 * std::max(1.0, std::abs(dt))) {
                uniform = false;
                break;
            }
    }
    if (uniform && n >= 2) {
        Vec lags(n);
        for (Index i = 0; i < n; ++i) lags[i] = static_cast<double>(i) * dt;
        const Vec row = kernel_values(config, lags);
        for (Index j = 0; j < n; ++j)
            for (Index i = j; i < n; ++i) K(i, j) = row[i - j];
        K.triangularView<Eigen::StrictlyUpper>() = K.transpose();
    } else {
        for (Index j = 0; j < n; ++j) {
            const Vec d = (t.array() - t[j]).abs();
            K.col(j) = kernel_values(config, d);
        }
        K = 0.5 * (K + K.transpose()).eval();
    }
    K.diagonal().array() += config.noise_floor;
    return K;
}

Mat temporal_cross_covariance(const KernelConfig& config, const Vec& t, const Vec& s) {
    Mat K(t.size(), s.size());
    for (Index j = 0; j < s.size(); ++j) {
        const Vec d = (t.array() - s[j]).abs();
        K.col(j) = kernel_values(config, d);
    }
    return K;
}

Mat assemble_covariance(const KernelConfig& config, const AuxiliaryGrid& grid) {
    grid.validate();
    const Mat Kt = temporal_covariance(config, grid.zeta);
    if (grid.channels == 1) return Kt;
    const Mat I = Mat::Identity(grid.channels, grid.channels);
    return Eigen::kroneckerProduct(Kt, I);
}

Mat assemble_cross_covariance(const KernelConfig& config, const AuxiliaryGrid& train,
                              const AuxiliaryGrid& pred) {
    if (train.channels != pred.channels)
        throw invalid_model("cross covariance needs matching channel counts");
    const Mat Kc = temporal_cross_covariance(config, train.zeta, pred.zeta);
    if (train.channels == 1) return Kc;
    const Mat I = Mat::Identity(train.channels, train.channels);
    return Eigen::kroneckerProduct(Kc, I);
}

double jitter_scale(const Mat& K) {
    return 1e-10 * K.diagonal().mean();
}

} // namespace gpmu
