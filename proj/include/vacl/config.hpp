#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vacl/regularizers.hpp"
#include "vacl/trainer.hpp"

namespace vacl {

struct ModelConfig {
    std::vector<std::size_t> widths;
    std::vector<std::size_t> blocks;
    std::size_t classes = 2;
};

struct DatasetConfig {
    enum class Source { Synthetic, Csv } source = Source::Synthetic;
    // synthetic
    std::size_t features = 2;
    std::size_t train_size = 512;
    std::size_t test_size = 512;
    std::uint64_t seed = 0;
    double separation = 2.0;
    // csv, relative paths resolve against the config file's directory
    std::filesystem::path train_path;
    std::filesystem::path test_path;
};

struct FinetuneConfig {
    TrainConfig train;  // penalty unused
    FinetuneOptions final{true, kFinetuneL2};
    FinetuneOptions between{false, kFinetuneL2};
};

struct ContourConfig {
    std::string kind = "variance_aware";
    std::size_t resolution = 101;
    double w1 = 0.5;
    double extent = 1.5;
};

/// A pipeline stage: penalty kind plus optional overrides of the base training config.
struct StageConfig {
    PenaltyKind kind = PenaltyKind::None;
    std::optional<double> lambda;  // falls back to penalty.lambda
    std::optional<std::size_t> epochs;
};

struct ExperimentConfig {
    ModelConfig model;
    DatasetConfig dataset;
    PenaltySpec penalty;
    TrainConfig train;  // train.penalty mirrors `penalty`
    FinetuneConfig finetune;
    double tau = kDefaultTau;
    std::vector<StageConfig> pipeline;  // empty means one stage with `penalty`
    std::vector<double> sweep_tau;
    std::vector<double> sweep_lambda;
    std::vector<std::uint64_t> sweep_seeds;  // empty means {train.seed}
    int heatmap_group = 0;
    ContourConfig contour;
    std::filesystem::path output_dir = "out";
    double accuracy_tolerance = 0.01;

    /// Training configs for each pipeline stage, seeds offset per stage.
    std::vector<TrainConfig> stage_configs() const;
};

/// Validates the document (unknown keys are errors) and fills defaults.
/// All problems are reported together in one ConfigError.
ExperimentConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace vacl
