#include "vacl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "vacl/errors.hpp"

namespace vacl {

// ---------------------------------------------------------------------------
// Data

Dataset synth_dataset(std::size_t num_classes, std::size_t d, std::size_t n, std::uint64_t seed, double separation,
                      Split split) {
    if (num_classes == 0 || d == 0 || n == 0) {
        throw ConfigError("synthetic dataset needs classes, features and samples >= 1");
    }
    // Class centres depend on the seed only, so the train and test draws share them.
    std::mt19937_64 centre_rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<std::vector<double>> centres(num_classes, std::vector<double>(d, 0.0));
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (c < d) {
            centres[c][c] = separation;
            continue;
        }
        double norm = 0.0;
        for (double& v : centres[c]) {
            v = normal(centre_rng);
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (double& v : centres[c]) v = separation * v / norm;
    }

    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + (split == Split::Train ? 1 : 2));
    Dataset out;
    out.features = Tensor({n, d});
    out.labels.resize(n);
    out.num_classes = num_classes;
    out.split = split;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = i % num_classes;
        out.labels[i] = static_cast<int>(c);
        auto row = out.features.row(i);
        for (std::size_t k = 0; k < d; ++k) row[k] = centres[c][k] + normal(rng);
    }
    return out;
}

DataSplit synth_split(std::size_t num_classes, std::size_t d, std::size_t n_train, std::size_t n_test,
                      std::uint64_t seed, double separation) {
    return DataSplit{synth_dataset(num_classes, d, n_train, seed, separation, Split::Train),
                     synth_dataset(num_classes, d, n_test, seed, separation, Split::Test)};
}

Dataset load_csv_dataset(const std::filesystem::path& path, Split split, std::size_t num_classes) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line)) throw IoError("dataset '" + path.string() + "' is empty");
    const std::size_t columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
    if (columns < 2) throw IoError("dataset '" + path.string() + "' needs feature columns and a label column");
    const std::size_t d = columns - 1;

    std::vector<double> values;
    std::vector<int> labels;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::size_t col = 0;
        try {
            while (std::getline(ss, cell, ',')) {
                if (col < d) {
                    values.push_back(std::stod(cell));
                } else if (col == d) {
                    std::size_t used = 0;
                    const long label = std::stol(cell, &used);
                    if (used != cell.size() || label < 0 || static_cast<std::size_t>(label) >= num_classes) {
                        throw std::out_of_range("label");
                    }
                    labels.push_back(static_cast<int>(label));
                }
                ++col;
            }
        } catch (const std::exception&) {
            throw IoError(path.string() + ":" + std::to_string(line_no) + ": malformed value or label out of range");
        }
        if (col != columns) throw IoError(path.string() + ":" + std::to_string(line_no) + ": wrong column count");
    }
    if (labels.empty()) throw IoError("dataset '" + path.string() + "' has no rows");
    Dataset out;
    out.features = Tensor({labels.size(), d}, std::move(values));
    out.labels = std::move(labels);
    out.num_classes = num_classes;
    out.split = split;
    return out;
}

double accuracy(const ModelGraph& graph, const ParamMap& params, const Dataset& data) {
    if (data.size() == 0) return 0.0;
    const Tensor logits = forward(graph, params, data.features);
    std::size_t correct = 0;
    for (std::size_t r = 0; r < data.size(); ++r) {
        auto row = logits.row(r);
        const auto pred = std::max_element(row.begin(), row.end()) - row.begin();
        correct += pred == data.labels[r];
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

// ---------------------------------------------------------------------------
// Training

double LrSchedule::at(std::size_t epoch) const {
    double lr = initial;
    for (std::size_t e : decay_epochs)
        if (epoch >= e) lr *= factor;
    return lr;
}

void TrainConfig::validate(bool allow_zero_epochs) const {
    if (epochs == 0 && !allow_zero_epochs) throw ConfigError("epochs must be >= 1");
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (!(lr.initial >= 0.0) || !std::isfinite(lr.initial)) throw ConfigError("learning rate must be finite and >= 0");
    if (!(lr.factor > 0.0)) throw ConfigError("decay factor must be > 0");
    for (std::size_t i = 1; i < lr.decay_epochs.size(); ++i) {
        if (lr.decay_epochs[i] <= lr.decay_epochs[i - 1]) throw ConfigError("decay epochs must be strictly increasing");
    }
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
    if (!(penalty.lambda >= 0.0)) throw ConfigError("penalty lambda must be >= 0");
    if (!(penalty.head_l2 >= 0.0)) throw ConfigError("head_l2 must be >= 0");
}

nlohmann::json TrainMetrics::to_json() const {
    nlohmann::json j;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& e : epochs) {
        rows.push_back({{"epoch", e.epoch},
                        {"lr", e.lr},
                        {"data_loss", e.data_loss},
                        {"penalty", e.penalty},
                        {"train_accuracy", e.train_accuracy},
                        {"test_accuracy", e.test_accuracy ? nlohmann::json(*e.test_accuracy) : nlohmann::json()}});
    }
    j["epochs"] = rows;
    j["final_train_accuracy"] = final_train_accuracy;
    j["final_test_accuracy"] = final_test_accuracy ? nlohmann::json(*final_test_accuracy) : nlohmann::json();
    return j;
}

TrainResult train(const ModelGraph& graph, ParamMap params, const Dataset& train_set, const Dataset* test_set,
                  const TrainConfig& config) {
    config.validate(true);
    check_params(graph, params);
    if (train_set.size() == 0) throw ConfigError("training set is empty");
    if (train_set.dim() != graph.input_dim()) {
        throw DimensionError("dataset has " + std::to_string(train_set.dim()) + " features, model expects " +
                             std::to_string(graph.input_dim()));
    }
    const CrossLayerGroupSet groups = extract_cross_layer_groups(graph);
    config.penalty.validate(groups);

    TrainResult result;
    MomentumSgd optimizer(config.momentum);
    std::mt19937_64 rng(config.seed ^ 0xA5A5A5A5DEADBEEFULL);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t d = train_set.dim();

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        const double lr = config.lr.at(epoch);
        double loss_sum = 0.0;
        std::size_t batches = 0, correct = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t count = std::min(config.batch_size, order.size() - start);
            Tensor xb({count, d});
            std::vector<int> yb(count);
            for (std::size_t r = 0; r < count; ++r) {
                auto src = train_set.features.row(order[start + r]);
                std::copy(src.begin(), src.end(), xb.row(r).begin());
                yb[r] = train_set.labels[order[start + r]];
            }

            ad::Tape tape;
            std::map<std::string, ad::Var> vars;
            for (const auto& [name, value] : params) vars.emplace(name, tape.parameter(name, value));
            const ad::Var logits = forward_on_tape(tape, graph, vars, tape.constant(std::move(xb)));
            const ad::Var data_loss = ad::softmax_cross_entropy(tape, logits, yb);
            ad::Var loss = data_loss;
            if (config.penalty.kind != PenaltyKind::None || config.penalty.head_l2 > 0.0) {
                loss = ad::add(tape, data_loss, penalty_on_tape(tape, config.penalty, graph, groups, vars));
            }
            const double loss_value = tape.value(loss).item();
            if (!std::isfinite(loss_value)) {
                throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(batches));
            }
            const Tensor& z = tape.value(logits);
            for (std::size_t r = 0; r < count; ++r) {
                auto row = z.row(r);
                correct += (std::max_element(row.begin(), row.end()) - row.begin()) == yb[r];
            }
            loss_sum += tape.value(data_loss).item();
            ++batches;

            optimizer.step(params, ad::backward(tape, loss), lr);
        }
        for (const auto& [name, value] : params) {
            if (!value.all_finite()) {
                throw NumericError("parameter " + name + " became non-finite at epoch " + std::to_string(epoch));
            }
        }

        EpochMetrics m;
        m.epoch = epoch;
        m.lr = lr;
        m.data_loss = loss_sum / static_cast<double>(batches);
        m.penalty = penalty_value(config.penalty, graph, groups, params);
        m.train_accuracy = static_cast<double>(correct) / static_cast<double>(train_set.size());
        if (test_set) m.test_accuracy = accuracy(graph, params, *test_set);
        result.metrics.epochs.push_back(m);
    }

    result.metrics.final_train_accuracy = accuracy(graph, params, train_set);
    if (test_set) result.metrics.final_test_accuracy = accuracy(graph, params, *test_set);
    result.params = std::move(params);
    return result;
}

TrainResult train(const ModelGraph& graph, const Dataset& train_set, const Dataset* test_set,
                  const TrainConfig& config) {
    return train(graph, init_params(graph, config.seed), train_set, test_set, config);
}

TrainResult finetune(const ModelGraph& graph, ParamMap params, const Dataset& train_set, const Dataset* test_set,
                     TrainConfig config, const FinetuneOptions& options) {
    config.penalty = PenaltySpec{};
    if (options.regularize) {
        config.penalty.kind = PenaltyKind::L2;
        config.penalty.lambda = options.l2;
    }
    if (config.epochs == 0) {
        TrainResult unchanged;
        unchanged.metrics.final_train_accuracy = accuracy(graph, params, train_set);
        if (test_set) unchanged.metrics.final_test_accuracy = accuracy(graph, params, *test_set);
        unchanged.params = std::move(params);
        return unchanged;
    }
    return train(graph, std::move(params), train_set, test_set, config);
}

// ---------------------------------------------------------------------------
// Stages

nlohmann::json StageReport::to_json() const {
    nlohmann::json j;
    j["stage"] = stage;
    j["penalty"] = std::string(to_string(penalty));
    j["lambda"] = lambda;
    j["accuracy_before_prune"] = accuracy_before_prune;
    j["accuracy_after_prune"] = accuracy_after_prune;
    j["accuracy_after_finetune"] =
        accuracy_after_finetune ? nlohmann::json(*accuracy_after_finetune) : nlohmann::json();
    j["params"] = params;
    j["flagged"] = flagged;
    j["prune"] = prune.to_json();
    return j;
}

StageResult train_prune_stage(const ModelGraph& graph, ParamMap params, const Dataset& train_set,
                              const Dataset& eval_set, const TrainConfig& config, double tau,
                              std::size_t stage_index) {
    TrainResult trained = train(graph, std::move(params), train_set, &eval_set, config);
    const CrossLayerGroupSet groups = extract_cross_layer_groups(graph);
    const ImportanceMap importance = compute_importance(graph, trained.params);
    const PruneMask mask = select_prunable(importance, tau, graph, groups);
    PruneResult pruned = prune(graph, trained.params, mask);

    StageReport report;
    report.stage = stage_index;
    report.penalty = config.penalty.kind;
    report.lambda = config.penalty.lambda;
    report.accuracy_before_prune = accuracy(graph, trained.params, eval_set);
    report.accuracy_after_prune = accuracy(pruned.graph, pruned.params, eval_set);
    report.params = pruned.graph.param_count();
    report.prune = pruned.report;
    report.prune.accuracy_before = report.accuracy_before_prune;
    report.prune.accuracy_after = report.accuracy_after_prune;
    return StageResult{std::move(pruned.graph), std::move(pruned.params), std::move(report),
                       std::move(trained.metrics)};
}

nlohmann::json PipelineResult::to_json() const {
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& r : reports) stages.push_back(r.to_json());
    return nlohmann::json{{"stages", stages}, {"final_params", graph.param_count()}};
}

PipelineResult run_pipeline(const ModelGraph& graph, ParamMap params, const Dataset& train_set,
                            const Dataset& eval_set, const std::vector<TrainConfig>& stages,
                            const PipelineOptions& options) {
    if (stages.empty()) throw ConfigError("pipeline needs at least one stage");
    options.finetune.validate(true);
    PipelineResult out{graph, std::move(params), {}};
    for (std::size_t s = 0; s < stages.size(); ++s) {
        StageResult stage = train_prune_stage(out.graph, std::move(out.params), train_set, eval_set, stages[s],
                                              options.tau, s + 1);
        const bool last = s + 1 == stages.size();
        TrainConfig ft = options.finetune;
        ft.seed = stages[s].seed + 7919 * (s + 1);
        TrainResult tuned = finetune(stage.graph, std::move(stage.params), train_set, &eval_set, ft,
                                     last ? options.final : options.between);
        stage.report.accuracy_after_finetune = tuned.metrics.final_test_accuracy;
        stage.report.flagged =
            *stage.report.accuracy_after_finetune < stage.report.accuracy_before_prune - options.accuracy_tolerance;
        out.graph = std::move(stage.graph);
        out.params = std::move(tuned.params);
        out.reports.push_back(std::move(stage.report));
    }
    return out;
}

}  // namespace vacl
