#pragma once

#include "gpmu/rng.hpp"
#include "gpmu/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace gpmu {

/// C = alpha*K + beta*M. Note the role of alpha/beta follows the convention
/// used throughout this project (alpha multiplies K), which is the reverse of
/// the more common Rayleigh notation.
struct RayleighDamping {
    double alpha = 0.0; // s
    double beta = 0.0;  // 1/s
};

/// Modal damping: C assembled from per-mode ratios and the model's own
/// (nominal) modal frequencies and shapes. zeta.size() must equal the number
/// of stories.
struct ModalRatioDamping {
    Vec zeta;
};

/// Single viscous ratio, intended for SDOF models: c = 2*zeta*sqrt(k*m).
struct ViscousRatioDamping {
    double zeta = 0.0;
};

using DampingSpec = std::variant<RayleighDamping, ModalRatioDamping, ViscousRatioDamping>;

enum class InputKind {
    Force,            // point force at input_dof
    BaseAcceleration, // uniform base excitation, F = -M * 1 * a_g
};

/// Lumped-mass shear frame. Story i sits on spring k_i connecting it to the
/// story (or ground) below, giving the usual tridiagonal stiffness pattern.
struct ShearBuildingModel {
    Vec masses;            // kg
    Vec story_stiffnesses; // N/m
    DampingSpec damping = ViscousRatioDamping{0.0};
    std::vector<int> observed_dofs; // measured stories, 0-based
    InputKind input_kind = InputKind::Force;
    int input_dof = 0; // forcing DOF when input_kind == Force

    int n_stories() const { return static_cast<int>(masses.size()); }
    int n_outputs() const { return static_cast<int>(observed_dofs.size()); }

    /// Throws invalid_model on bad masses/stiffnesses/indices/damping.
    void validate() const;
};

/// Sampled input/output record. Rows are time steps, t_i = i*dt by default;
/// records carved out of a longer history (held-out spans, gap segments)
/// carry their times explicitly in `t`, which then need not be contiguous.
/// `output` may have zero rows for input-only records (prediction targets).
struct TimeSeriesDataset {
    double dt = 0.0; // nominal spacing, used when t is empty
    Vec t;           // optional explicit times, strictly increasing
    Mat input;       // n x Nx
    Mat output;      // n x No, or 0 x No when unobserved
    std::vector<int> channel_labels; // DOF index per output column

    Index n() const { return input.rows(); }
    Index n_inputs() const { return input.cols(); }
    Index n_outputs() const { return output.cols(); }
    bool has_output() const { return output.rows() > 0 && output.cols() > 0; }
    Vec times() const;

    void validate() const;
};

struct StructuralMatrices {
    Mat M, K, C;
};

struct ModalResult {
    Vec frequencies; // rad/s, ascending
    Mat shapes;      // columns, mass-normalized (phi' M phi = I)
};

struct InitialState {
    Vec displacement;
    Vec velocity;
};

/// Mass (diagonal), stiffness (tridiagonal shear pattern) and damping
/// matrices of the model. All symmetric.
StructuralMatrices assemble_matrices(const ShearBuildingModel& model);

/// Generalized eigenproblem K*phi = w^2*M*phi. Frequencies ascending, shapes
/// mass-normalized with a deterministic sign convention.
ModalResult modal_analysis(const ShearBuildingModel& model);

/// March the linear system through the input history with the exact
/// zero-order-hold discretization of the state-space form. Returns the
/// n x No acceleration history at the observed DOFs, computed as
/// M^{-1}(F - C*v - K*x) at each step. Zero initial conditions unless given.
Mat simulate_response(const ShearBuildingModel& model, const Mat& input, double dt,
                      const std::optional<InitialState>& initial = std::nullopt);

struct GwnExcitation {
    double std_dev = 1.0; // N (or m/s^2 for base excitation)
    std::uint64_t seed = 0;
};

/// Draw a GWN input history, simulate, and optionally add i.i.d. Gaussian
/// noise to the outputs. Fully reproducible from the seed.
TimeSeriesDataset synthesize_dataset(const ShearBuildingModel& model, const GwnExcitation& excitation,
                                     double dt, double duration, double output_noise_std = 0.0);

/// Rows with time in [t_lo, t_hi). A sample exactly on a boundary joins the
/// range it opens, never the one it closes, so complementary slices cannot
/// share a sample.
TimeSeriesDataset slice(const TimeSeriesDataset& data, double t_lo, double t_hi);

/// {before-split, from-split}: train/held-out split at t_split seconds.
std::pair<TimeSeriesDataset, TimeSeriesDataset> split_at(const TimeSeriesDataset& data, double t_split);

/// {observed, gap}: removes [gap_lo, gap_hi) from the record. The gap part
/// keeps its outputs (if any) so callers can score reconstructions against
/// the withheld truth.
std::pair<TimeSeriesDataset, TimeSeriesDataset> excise(const TimeSeriesDataset& data, double gap_lo,
                                                       double gap_hi);

} // namespace gpmu
