#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "vacl/config.hpp"
#include "vacl/trainer.hpp"

namespace vacl {

/// Command-line overrides layered on top of the config file.
struct CommandOptions {
    std::filesystem::path config;
    std::optional<std::filesystem::path> out;
    std::optional<std::uint64_t> seed;
    std::optional<double> tau;
    std::optional<double> lambda;
    std::optional<std::filesystem::path> checkpoint;  // input checkpoint for prune, finetune, sweep-tau, heatmap
    std::optional<int> group;                         // heatmap group id
};

enum ExitCode : int { kExitOk = 0, kExitOther = 1, kExitConfig = 2, kExitNumeric = 3, kExitIo = 4 };

/// Loads the config and applies the overrides. --seed replaces train.seed,
/// --lambda replaces penalty.lambda and every stage lambda.
ExperimentConfig resolve_config(const CommandOptions& options);

DataSplit load_data(const ExperimentConfig& config);
ModelGraph build_model(const ExperimentConfig& config, std::size_t input_dim);

// Each command computes everything first, then writes its artifacts into the
// output directory atomically. They return the paths written.
std::vector<std::filesystem::path> cmd_train(const CommandOptions& options);
std::vector<std::filesystem::path> cmd_prune(const CommandOptions& options);
std::vector<std::filesystem::path> cmd_finetune(const CommandOptions& options);
std::vector<std::filesystem::path> cmd_pipeline(const CommandOptions& options);
std::vector<std::filesystem::path> cmd_sweep_tau(const CommandOptions& options);
std::vector<std::filesystem::path> cmd_sweep_lambda(const CommandOptions& options);
std::vector<std::filesystem::path> cmd_heatmap(const CommandOptions& options);
std::vector<std::filesystem::path> cmd_contour(const CommandOptions& options);

/// Rows "tau,params_after,accuracy" sorted by tau, from one trained model.
std::string sweep_tau_csv(const ModelGraph& graph, const ParamMap& params, const Dataset& eval_set,
                          std::vector<double> taus);
/// Rows "w2,w3,value" over a resolution x resolution grid on [-extent, extent]^2.
std::string contour_csv(PenaltyKind kind, std::size_t resolution, double w1, double extent);

/// Number of sweep workers: VACL_THREADS if set and positive, else the OpenMP
/// maximum, never more than `jobs`.
int sweep_workers(std::size_t jobs);

/// Runs the named command, listing written files on `out` and diagnostics on
/// `err`. Failures map to exit codes: 2 config or structural, 3 numeric, 4 I/O, 1 anything else.
int run_command(const std::string& name, const CommandOptions& options, std::ostream& out, std::ostream& err);

}  // namespace vacl
