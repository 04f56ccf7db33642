#pragma once

#include "gpmu/config.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace gpmu {

struct RunOptions {
    std::string config_path;
    std::string out_dir; // overrides config when set
    std::optional<std::uint64_t> seed_override;
    int threads = 1;
    bool quiet = false;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitNumerical = 2;

/// Executes one pipeline stage (synthesize, infer-mpv, infer-tmcmc, predict,
/// reconstruct, select, diagnose, report), writing artifacts plus a manifest
/// into the output directory. Returns one of the exit codes above; messages
/// go to stderr, progress to stdout unless quiet.
int run_command(const std::string& command, const RunOptions& options);

} // namespace gpmu
