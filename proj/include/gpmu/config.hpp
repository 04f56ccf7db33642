#pragma once

#include "gpmu/dynamics.hpp"
#include "gpmu/inference.hpp"
#include "gpmu/kernels.hpp"
#include "gpmu/sampler.hpp"
#include "gpmu/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace gpmu {

inline constexpr const char* kConfigSchemaVersion = "1";

struct Finding {
    bool error = false; // false = warning
    std::string where;  // JSON-pointer-ish location
    std::string message;
};

/// Truth and template may differ deliberately (model-error studies run the
/// data-generating system at other damping/stiffness than the inference
/// template); unset fields fall back to the template model's values.
struct SynthesisSpec {
    double excitation_std = 1.0;
    double dt = 0.01;
    double duration = 0.0;
    double output_noise_std = 0.0;
    std::optional<Vec> true_stiffnesses;
    std::optional<DampingSpec> true_damping;
};

struct ModelBlock {
    Vec masses;
    Vec stiffnesses;
    DampingSpec damping = ViscousRatioDamping{0.0};
    std::vector<int> observed_dofs;
    InputKind input_kind = InputKind::Force;
    int input_dof = 0;
    std::vector<int> unknown_stories; // 0-based
    bool theta_as_ratio = false;      // multipliers on nominal stiffness vs absolute N/m
    std::vector<PriorEntry> theta_priors; // mandatory: one per unknown story
    Vec theta_init;
};

struct KernelBlock {
    KernelFamily family = KernelFamily::GWN;
    int order = 1; // MMTE modes
    std::vector<PriorEntry> phi_priors; // empty -> documented defaults (warned)
    Vec phi_init;                       // empty -> family default init
    bool init_omegas_from_modes = true; // MMTE: seed omegas at modal frequencies
};

struct DataBlock {
    std::string path; // exactly one of path / synthesis
    std::optional<SynthesisSpec> synthesis;
};

struct InferenceBlock {
    std::string method = "mpv"; // "mpv" | "tmcmc"
    MpvOptions mpv{};
    TmcmcConfig tmcmc{};
    TruncationPolicy truncation{};
};

struct PredictionBlock {
    std::optional<double> train_end;        // seconds; held-out starts here
    std::optional<std::pair<double, double>> gap; // [lo, hi) seconds
    double band_k = 2.0;
    int mixture_thin = 1;
};

struct SelectionBlock {
    std::vector<std::pair<KernelFamily, int>> candidates; // kernel ranking set
    std::vector<int> orders;                              // MMTE order sweep
    bool use_predictive = true;
};

struct ExperimentConfig {
    std::string schema_version = kConfigSchemaVersion;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir;
    ModelBlock model;
    KernelBlock kernel;
    DataBlock data;
    InferenceBlock inference;
    PredictionBlock prediction;
    SelectionBlock selection;
};

/// Parses the JSON config file. Syntax errors throw config_error with the
/// parser's location; structural problems land in findings.
ExperimentConfig parse_config(const std::string& path, std::vector<Finding>& findings);

/// Structural and physical checks (prior bounds, split times inside the
/// record, referenced stories exist, dt vs duration sanity).
std::vector<Finding> validate_config(const ExperimentConfig& config);

ShearBuildingModel template_model(const ModelBlock& block);

/// Documented fallback hyperpriors per family (wide log-uniform boxes).
std::vector<PriorEntry> default_phi_priors(KernelFamily family, int order);

/// Family default phi init; for MMTE with init_omegas_from_modes, omegas are
/// seeded at the template model's modal frequencies.
Vec default_phi_init(const ExperimentConfig& config);

/// Assembles the InferenceProblem for a dataset under this config's model
/// and kernel blocks (kernel family/order overridable for selection sweeps).
InferenceProblem build_problem(const ExperimentConfig& config, TimeSeriesDataset dataset,
                               std::optional<KernelFamily> family = std::nullopt,
                               std::optional<int> order = std::nullopt);

/// Packed [theta_init; phi_init] with the matching parameter map.
ParameterSplit initial_split(const ExperimentConfig& config,
                             std::optional<KernelFamily> family = std::nullopt,
                             std::optional<int> order = std::nullopt);

} // namespace gpmu
