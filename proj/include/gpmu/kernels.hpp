#pragma once

#include "gpmu/types.hpp"

#include <initializer_list>
#include <string>

namespace gpmu {

enum class KernelFamily { GWN, SE, PE, MMTE };

std::string to_string(KernelFamily family);
KernelFamily kernel_family_from_string(const std::string& name);

/// A kernel family plus its hyperparameters in canonical order:
///   SE:   params = [sigma_f^2, 1/l^2]
///   PE:   params = [sigma_f^2, 1/l^2, omega]
///   MMTE: params = [sigma_f1^2, omega_1, 1/l1^2, ..., sigma_fm^2, omega_m, 1/lm^2]
///   GWN:  params empty
/// noise_floor is the additive isotropic variance sigma_n^2, applied on the
/// diagonal of assembled covariances only (never inside kernel_value).
///
/// SE and PE keep the 1/2 factor in the exponent; MMTE has none. The two
/// conventions are intentionally not unified.
struct KernelConfig {
    KernelFamily family = KernelFamily::GWN;
    Vec params;
    double noise_floor = 0.0;
    int mmte_order = 1;

    static KernelConfig gwn(double noise_var);
    static KernelConfig se(double sigma_f2, double inv_len2, double noise_var = 0.0);
    static KernelConfig pe(double sigma_f2, double inv_len2, double omega, double noise_var = 0.0);
    /// components has 3m entries [sigma^2, omega, 1/l^2] per mode; modes are
    /// canonicalized to ascending omega on construction.
    static KernelConfig mmte(const Vec& components, double noise_var = 0.0);
    static KernelConfig mmte(std::initializer_list<double> components, double noise_var = 0.0);

    /// Throws invalid_model when positivity/ordering constraints are violated.
    void validate() const;

    /// Kernel value at zero distance, noise excluded: sigma_f^2 (SE, PE),
    /// sum of sigma_fk^2 (MMTE), 0 (GWN).
    double value_at_zero() const;

    int n_params() const { return static_cast<int>(params.size()); }
};

/// Auxiliary-variable grid the kernel operates on; here the sample times.
/// Each time carries `channels` output channels, stacked time-major
/// (index = i*channels + c).
struct AuxiliaryGrid {
    Vec zeta;         // strictly increasing, seconds
    int channels = 1; // N_o

    Index n_times() const { return zeta.size(); }
    Index dim() const { return zeta.size() * channels; }

    static AuxiliaryGrid regular(Index n, double dt, int channels = 1, double t0 = 0.0);

    /// True when the grid spacing is uniform; writes the spacing if asked.
    bool is_uniform(double* dt_out = nullptr) const;

    void validate() const;
};

/// Kernel covariance at distance d >= 0, without the noise term.
double kernel_value(const KernelConfig& config, double d);

/// Vectorized kernel_value over a distance array (no noise term).
Vec kernel_values(const KernelConfig& config, const Vec& d);

/// Temporal n x n covariance [k(|t_i - t_j|)] + sigma_n^2 I. Uses a Toeplitz
/// fill on uniform grids.
Mat temporal_covariance(const KernelConfig& config, const Vec& t);

/// Temporal cross block [k(|t_i - s_j|)], no noise.
Mat temporal_cross_covariance(const KernelConfig& config, const Vec& t, const Vec& s);

/// Full (n*No) x (n*No) covariance of the stacked output: temporal kernel
/// across time, identity across channels (distinct sensors a-priori
/// uncorrelated, one shared hyperparameter set), plus sigma_n^2 on the full
/// diagonal. Symmetric by construction.
Mat assemble_covariance(const KernelConfig& config, const AuxiliaryGrid& grid);

/// Rectangular cross covariance between a training grid and a prediction
/// grid under the same cross-channel rule; carries no noise term.
Mat assemble_cross_covariance(const KernelConfig& config, const AuxiliaryGrid& train,
                              const AuxiliaryGrid& pred);

/// Jitter magnitude used when a downstream factorization fails:
/// 1e-10 x (mean diagonal). Added once; a second failure is an error.
double jitter_scale(const Mat& K);

} // namespace gpmu
