#pragma once

#include "gpmu/dynamics.hpp"
#include "gpmu/inference.hpp"
#include "gpmu/kernels.hpp"
#include "gpmu/sampler.hpp"
#include "gpmu/types.hpp"

#include <optional>
#include <string>

namespace gpmu {

enum class PredictionProvenance { Map, Mixture, MixtureDiagonal };

std::string to_string(PredictionProvenance p);

/// Gaussian (or moment-matched mixture) over the stacked outputs at the
/// prediction grid. Stacking is time-major, matching AuxiliaryGrid.
struct PredictiveDistribution {
    AuxiliaryGrid grid;
    Vec mean;
    Mat covariance; // full matrix; empty when diagonal_only
    Vec variance;   // always populated with the diagonal
    bool diagonal_only = false;
    PredictionProvenance provenance = PredictionProvenance::Map;
    int n_components = 1;
    int n_skipped = 0; // mixture components dropped on numerical failure

    // per-component moments, kept when requested (rows = components)
    std::optional<Mat> component_means;
    std::optional<Mat> component_variances;

    Vec sd() const;
    void validate() const;
};

/// Conditional Gaussian of the unobserved outputs given the training record:
///   mu    = f(X_pred) + Kc' K^{-1} (Y - f(X))
///   Sigma = K_pred - Kc' K^{-1} Kc
/// with K the TRAINING covariance (noise included), K_pred the prediction
/// covariance (noise included: bands cover noisy observations), and Kc the
/// cross block. The model response over the prediction grid is simulated on
/// the merged train+prediction timeline, so held-out spans see the full
/// input history. `pred` needs input only; its output, if any, is ignored.
PredictiveDistribution conditional_predict(const TimeSeriesDataset& train,
                                           const ShearBuildingModel& model,
                                           const KernelConfig& kernel,
                                           const TimeSeriesDataset& pred,
                                           const TruncationPolicy& policy = {});

/// conditional_predict at the MPV; parameter uncertainty deliberately
/// ignored (point-estimate prediction).
PredictiveDistribution map_predict(const InferenceProblem& problem, const LaplaceSummary& laplace,
                                   const TimeSeriesDataset& pred);

struct MixtureOptions {
    int thin = 1;                  // use every thin-th sample
    bool keep_components = false;  // store per-component moments
    Index diagonal_cutoff = 2000;  // store only diagonals beyond this dim
};

/// Moment-matched Gaussian mixture over posterior samples:
///   mean = E[mu_m],  cov = E[mu_m mu_m' + Sigma_m] - mean mean'.
/// Components that fail numerically are skipped (error if > 10% do).
PredictiveDistribution mixture_predict(const InferenceProblem& problem,
                                       const PosteriorSamples& samples,
                                       const TimeSeriesDataset& pred,
                                       const MixtureOptions& options = {});

/// Infill of a missing segment: condition on the (non-contiguous) observed
/// record, predict over the gap. The gap record needs input only.
PredictiveDistribution reconstruct_missing(const TimeSeriesDataset& observed,
                                           const ShearBuildingModel& model,
                                           const KernelConfig& kernel,
                                           const TimeSeriesDataset& gap,
                                           const TruncationPolicy& policy = {});

} // namespace gpmu
