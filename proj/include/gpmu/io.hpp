#pragma once

#include "gpmu/diagnostics.hpp"
#include "gpmu/dynamics.hpp"
#include "gpmu/inference.hpp"
#include "gpmu/prediction.hpp"
#include "gpmu/sampler.hpp"
#include "gpmu/selection.hpp"
#include "gpmu/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gpmu {

/// Delimited text, comma separator, one header row, numbers printed with 15
/// significant digits so round-trips preserve doubles to ~1 ulp.
void write_table(const std::string& path, const std::vector<std::string>& header,
                 const Mat& columns);

struct Table {
    std::vector<std::string> header;
    Mat columns;
};

Table read_table(const std::string& path);

std::string format_double(double v); // %.15g

// --- dataset --------------------------------------------------------------

/// Columns: t, x_1..x_Nx, y_1..y_No. A JSON sidecar at `path + ".meta.json"`
/// carries dt, the observed-DOF label per y column, and (optionally) the
/// generating seed and a model description.
void write_dataset(const std::string& path, const TimeSeriesDataset& data,
                   const std::string& description = "",
                   std::optional<std::uint64_t> seed = std::nullopt);
TimeSeriesDataset read_dataset(const std::string& path);

// --- result artifacts -------------------------------------------------------

/// Parameter names, MPV, SDs, covariance, convergence metadata (JSON text).
void write_laplace_summary(const std::string& path, const LaplaceSummary& summary);
LaplaceSummary read_laplace_summary(const std::string& path);

/// Sample table (one row per sample, parameter columns + log_likelihood)
/// next to a JSON summary (log_evidence, betas, acceptance rates).
void write_posterior_samples(const std::string& table_path, const std::string& summary_path,
                             const PosteriorSamples& samples);
PosteriorSamples read_posterior_samples(const std::string& table_path,
                                        const std::string& summary_path);

/// Columns: t, then per channel mean, sd, lower, upper (mean -/+ k sd).
void write_predictive(const std::string& path, const PredictiveDistribution& pred,
                      double band_k = 2.0);

/// Columns: model_id (as row label), log_evidence, log_posterior_predictive,
/// bic, posterior_probability.
void write_score_table(const std::string& path, const std::vector<ModelClassScore>& scores,
                       const Vec& probabilities);

void write_acf(const std::string& path, const Vec& acf, double dt);
void write_psd(const std::string& path, const Psd& psd);

// --- manifest ---------------------------------------------------------------

/// FNV-1a 64-bit over the file bytes, hex string.
std::string file_hash(const std::string& path);

struct ManifestEntry {
    std::string path; // relative to the run directory
    std::string hash;
};

struct RunManifest {
    std::string command;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string schema_version;
    double wall_seconds = 0.0;
    std::vector<ManifestEntry> artifacts;
};

void write_manifest(const std::string& path, const RunManifest& manifest);

} // namespace gpmu
