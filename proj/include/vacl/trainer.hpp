#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vacl/autodiff.hpp"
#include "vacl/netgraph.hpp"
#include "vacl/pruner.hpp"
#include "vacl/regularizers.hpp"

namespace vacl {

enum class Split { Train, Test };

struct Dataset {
    Tensor features;  // [n x d]
    std::vector<int> labels;
    std::size_t num_classes = 0;
    Split split = Split::Train;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t dim() const { return features.cols(); }
};

struct DataSplit {
    Dataset train;
    Dataset test;
};

/// Gaussian clusters with unit noise. Class c is centred at separation * e_c
/// (for c < d; later classes get seeded unit directions). Labels cycle through
/// the classes. Same arguments give identical bytes.
Dataset synth_dataset(std::size_t num_classes, std::size_t d, std::size_t n, std::uint64_t seed,
                      double separation = 3.0, Split split = Split::Train);
/// Train and test sets drawn independently from the same clusters.
DataSplit synth_split(std::size_t num_classes, std::size_t d, std::size_t n_train, std::size_t n_test,
                      std::uint64_t seed, double separation = 3.0);

/// Header row, feature columns, then an integer label column.
Dataset load_csv_dataset(const std::filesystem::path& path, Split split, std::size_t num_classes);

double accuracy(const ModelGraph& graph, const ParamMap& params, const Dataset& data);

/// Step decay: lr = initial * factor^(number of decay epochs <= epoch).
struct LrSchedule {
    double initial = 0.05;
    std::vector<std::size_t> decay_epochs;
    double factor = 0.1;

    double at(std::size_t epoch) const;
};

struct TrainConfig {
    PenaltySpec penalty;
    std::size_t epochs = 1;
    std::size_t batch_size = 32;
    LrSchedule lr;
    double momentum = 0.0;
    std::uint64_t seed = 0;

    /// Throws ConfigError. Zero epochs is allowed only for fine-tuning.
    void validate(bool allow_zero_epochs = false) const;
};

struct EpochMetrics {
    std::size_t epoch = 0;
    double lr = 0.0;
    double data_loss = 0.0;  // mean over minibatches
    double penalty = 0.0;    // at the end of the epoch
    double train_accuracy = 0.0;
    std::optional<double> test_accuracy;
};

struct TrainMetrics {
    std::vector<EpochMetrics> epochs;
    double final_train_accuracy = 0.0;
    std::optional<double> final_test_accuracy;

    nlohmann::json to_json() const;
};

struct TrainResult {
    ParamMap params;
    TrainMetrics metrics;
};

/// Minibatch SGD on cross-entropy plus the configured penalty, starting from
/// `params`. Throws NumericError when the loss or parameters stop being finite.
TrainResult train(const ModelGraph& graph, ParamMap params, const Dataset& train_set, const Dataset* test_set,
                  const TrainConfig& config);
/// Fresh initialisation from config.seed.
TrainResult train(const ModelGraph& graph, const Dataset& train_set, const Dataset* test_set,
                  const TrainConfig& config);

/// Default fine-tuning L2 strength.
inline constexpr double kFinetuneL2 = 1e-4;

struct FinetuneOptions {
    bool regularize = true;
    double l2 = kFinetuneL2;
};

/// Training with only an L2 penalty (or none). The config's penalty is ignored.
TrainResult finetune(const ModelGraph& graph, ParamMap params, const Dataset& train_set, const Dataset* test_set,
                     TrainConfig config, const FinetuneOptions& options = {});

struct StageReport {
    std::size_t stage = 1;
    PenaltyKind penalty = PenaltyKind::None;
    double lambda = 0.0;
    double accuracy_before_prune = 0.0;
    double accuracy_after_prune = 0.0;
    std::optional<double> accuracy_after_finetune;
    std::size_t params = 0;  // after pruning
    PruneReport prune;
    bool flagged = false;  // fine-tuned accuracy fell more than the tolerance below pre-prune accuracy

    nlohmann::json to_json() const;
};

struct StageResult {
    ModelGraph graph;
    ParamMap params;
    StageReport report;
    TrainMetrics metrics;
};

/// Train with the configured penalty, score filters, threshold at tau, prune.
/// Accuracies are measured on `eval_set` (the test set when given).
StageResult train_prune_stage(const ModelGraph& graph, ParamMap params, const Dataset& train_set,
                              const Dataset& eval_set, const TrainConfig& config, double tau,
                              std::size_t stage_index = 1);

struct PipelineOptions {
    double tau = kDefaultTau;
    TrainConfig finetune;                        // epochs, lr, batch, momentum; penalty ignored
    FinetuneOptions between{false, kFinetuneL2};  // after every stage but the last
    FinetuneOptions final{true, kFinetuneL2};     // after the last stage
    double accuracy_tolerance = 0.01;
};

struct PipelineResult {
    ModelGraph graph;
    ParamMap params;
    std::vector<StageReport> reports;

    nlohmann::json to_json() const;
};

/// Runs the stages in order, fine-tuning after each.
PipelineResult run_pipeline(const ModelGraph& graph, ParamMap params, const Dataset& train_set,
                            const Dataset& eval_set, const std::vector<TrainConfig>& stages,
                            const PipelineOptions& options);

}  // namespace vacl
