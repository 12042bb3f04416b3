#include "vacl/commands.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <ostream>
#include <sstream>
#include <system_error>
#include <utility>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "vacl/checkpoint.hpp"
#include "vacl/errors.hpp"
#include "vacl/format.hpp"
#include "vacl/kernels.hpp"
#include "vacl/pruner.hpp"

namespace vacl {

namespace {

using Paths = std::vector<std::filesystem::path>;

/// Outputs staged in memory and written only once the command has succeeded.
class Artifacts {
public:
    explicit Artifacts(std::filesystem::path dir) : dir_(std::move(dir)) {}

    void add(const std::string& name, std::string contents) { files_.emplace_back(name, std::move(contents)); }
    void add_json(const std::string& name, const nlohmann::json& doc) { add(name, doc.dump(2) + "\n"); }
    void add_checkpoint(const std::string& name, const ParamMap& params) { add(name, serialize_checkpoint(params)); }

    Paths commit() const {
        std::error_code ec;
        std::filesystem::create_directories(dir_, ec);
        if (ec) throw IoError("cannot create output directory '" + dir_.string() + "': " + ec.message());
        Paths written;
        for (const auto& [name, contents] : files_) {
            write_file_atomic(dir_ / name, contents);
            written.push_back(dir_ / name);
        }
        return written;
    }

private:
    std::filesystem::path dir_;
    std::vector<std::pair<std::string, std::string>> files_;
};

struct LoadedModel {
    ModelGraph graph;
    ParamMap params;
};

LoadedModel load_model(const ExperimentConfig& config, std::size_t input_dim, const std::filesystem::path& path) {
    ParamMap params = load_checkpoint(path);
    ModelGraph graph = build_model(config, input_dim).resized_to(params);
    check_params(graph, params);
    return {std::move(graph), std::move(params)};
}

std::filesystem::path input_checkpoint(const CommandOptions& options, const ExperimentConfig& config,
                                       const char* default_name) {
    return options.checkpoint ? *options.checkpoint : config.output_dir / default_name;
}

PipelineOptions pipeline_options(const ExperimentConfig& config) {
    PipelineOptions p;
    p.tau = config.tau;
    p.finetune = config.finetune.train;
    p.between = config.finetune.between;
    p.final = config.finetune.final;
    p.accuracy_tolerance = config.accuracy_tolerance;
    return p;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

ExperimentConfig resolve_config(const CommandOptions& options) {
    ExperimentConfig config = load_config(options.config);
    if (options.out) config.output_dir = *options.out;
    if (options.seed) config.train.seed = *options.seed;
    if (options.tau) {
        if (!(*options.tau >= 0.0)) throw ConfigError("--tau must be >= 0");
        config.tau = *options.tau;
    }
    if (options.lambda) {
        if (!(*options.lambda >= 0.0)) throw ConfigError("--lambda must be >= 0");
        config.penalty.lambda = *options.lambda;
        config.train.penalty.lambda = *options.lambda;
        for (auto& stage : config.pipeline) stage.lambda.reset();
    }
    if (options.group) config.heatmap_group = *options.group;
    return config;
}

DataSplit load_data(const ExperimentConfig& config) {
    const auto& d = config.dataset;
    if (d.source == DatasetConfig::Source::Synthetic) {
        return synth_split(config.model.classes, d.features, d.train_size, d.test_size, d.seed, d.separation);
    }
    DataSplit data{load_csv_dataset(d.train_path, Split::Train, config.model.classes),
                   load_csv_dataset(d.test_path, Split::Test, config.model.classes)};
    if (data.train.dim() != data.test.dim()) {
        throw ConfigError("dataset: train and test files have different feature counts");
    }
    return data;
}

ModelGraph build_model(const ExperimentConfig& config, std::size_t input_dim) {
    return build_residual_mlp(input_dim, config.model.widths, config.model.blocks, config.model.classes);
}

Paths cmd_train(const CommandOptions& options) {
    const ExperimentConfig config = resolve_config(options);
    const DataSplit data = load_data(config);
    const ModelGraph graph = build_model(config, data.train.dim());
    TrainResult result = train(graph, data.train, &data.test, config.train);

    nlohmann::json metrics = result.metrics.to_json();
    metrics["params"] = graph.param_count();
    metrics["penalty"] = std::string(to_string(config.penalty.kind));
    metrics["lambda"] = config.penalty.lambda;
    metrics["seed"] = config.train.seed;

    Artifacts out(config.output_dir);
    out.add_checkpoint("model.ckpt", result.params);
    out.add_json("train_metrics.json", metrics);
    return out.commit();
}

Paths cmd_prune(const CommandOptions& options) {
    const ExperimentConfig config = resolve_config(options);
    const DataSplit data = load_data(config);
    const LoadedModel model = load_model(config, data.train.dim(), input_checkpoint(options, config, "model.ckpt"));
    const CrossLayerGroupSet groups = extract_cross_layer_groups(model.graph);
    const PruneMask mask =
        select_prunable(compute_importance(model.graph, model.params), config.tau, model.graph, groups);
    PruneResult pruned = prune(model.graph, model.params, mask);
    pruned.report.accuracy_before = accuracy(model.graph, model.params, data.test);
    pruned.report.accuracy_after = accuracy(pruned.graph, pruned.params, data.test);

    nlohmann::json report = pruned.report.to_json();
    report["tau"] = config.tau;

    Artifacts out(config.output_dir);
    out.add_checkpoint("pruned.ckpt", pruned.params);
    out.add_json("prune_report.json", report);
    return out.commit();
}

Paths cmd_finetune(const CommandOptions& options) {
    const ExperimentConfig config = resolve_config(options);
    const DataSplit data = load_data(config);
    LoadedModel model = load_model(config, data.train.dim(), input_checkpoint(options, config, "pruned.ckpt"));
    TrainConfig ft = config.finetune.train;
    ft.seed = config.train.seed;
    TrainResult result = finetune(model.graph, std::move(model.params), data.train, &data.test, ft,
                                  config.finetune.final);

    nlohmann::json metrics = result.metrics.to_json();
    metrics["params"] = model.graph.param_count();
    metrics["l2"] = config.finetune.final.regularize ? config.finetune.final.l2 : 0.0;

    Artifacts out(config.output_dir);
    out.add_checkpoint("finetuned.ckpt", result.params);
    out.add_json("finetune_metrics.json", metrics);
    return out.commit();
}

Paths cmd_pipeline(const CommandOptions& options) {
    const ExperimentConfig config = resolve_config(options);
    const DataSplit data = load_data(config);
    const ModelGraph graph = build_model(config, data.train.dim());
    PipelineResult result = run_pipeline(graph, init_params(graph, config.train.seed), data.train, data.test,
                                         config.stage_configs(), pipeline_options(config));

    Artifacts out(config.output_dir);
    out.add_checkpoint("pipeline.ckpt", result.params);
    out.add_json("pipeline_report.json", result.to_json());
    return out.commit();
}

std::string sweep_tau_csv(const ModelGraph& graph, const ParamMap& params, const Dataset& eval_set,
                          std::vector<double> taus) {
    if (taus.empty()) throw ConfigError("sweep-tau: the tau grid is empty");
    for (double t : taus) {
        if (!(t >= 0.0)) throw ConfigError("sweep-tau: tau values must be >= 0");
    }
    std::sort(taus.begin(), taus.end());
    const CrossLayerGroupSet groups = extract_cross_layer_groups(graph);
    const ImportanceMap importance = compute_importance(graph, params);
    std::ostringstream csv;
    csv << "tau,params_after,accuracy\n";
    for (double t : taus) {
        const PruneResult pruned = prune(graph, params, select_prunable(importance, t, graph, groups));
        csv << format_double(t) << ',' << pruned.report.params_after << ','
            << format_double(accuracy(pruned.graph, pruned.params, eval_set)) << '\n';
    }
    return csv.str();
}

Paths cmd_sweep_tau(const CommandOptions& options) {
    const ExperimentConfig config = resolve_config(options);
    if (config.sweep_tau.empty()) throw ConfigError("sweep-tau: sweep.tau is empty");
    const DataSplit data = load_data(config);
    const LoadedModel model = load_model(config, data.train.dim(), input_checkpoint(options, config, "model.ckpt"));
    Artifacts out(config.output_dir);
    out.add("sweep_tau.csv", sweep_tau_csv(model.graph, model.params, data.test, config.sweep_tau));
    return out.commit();
}

int sweep_workers(std::size_t jobs) {
    int workers = kernels::max_threads();
    if (const char* env = std::getenv("VACL_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) workers = static_cast<int>(std::min<long>(v, 1 << 16));
    }
    workers = std::min<long long>(workers, static_cast<long long>(std::max<std::size_t>(jobs, 1)));
    return std::max(workers, 1);
}

Paths cmd_sweep_lambda(const CommandOptions& options) {
    ExperimentConfig config = resolve_config(options);
    if (config.sweep_lambda.empty()) throw ConfigError("sweep-lambda: sweep.lambda is empty");
    const std::vector<std::uint64_t> seeds =
        config.sweep_seeds.empty() ? std::vector<std::uint64_t>{config.train.seed} : config.sweep_seeds;
    for (auto& stage : config.pipeline) stage.lambda.reset();
    const DataSplit data = load_data(config);
    const ModelGraph graph = build_model(config, data.train.dim());
    const PipelineOptions popts = pipeline_options(config);

    struct Job {
        double lambda;
        std::uint64_t seed;
        std::size_t params = 0;
        double accuracy = 0.0;
    };
    std::vector<Job> jobs;
    for (double l : config.sweep_lambda)
        for (std::uint64_t s : seeds) jobs.push_back({l, s});
    std::vector<std::exception_ptr> errors(jobs.size());

    const auto run = [&](std::size_t j) {
        try {
            ExperimentConfig c = config;
            c.penalty.lambda = jobs[j].lambda;
            c.train.seed = jobs[j].seed;
            PipelineResult r =
                run_pipeline(graph, init_params(graph, c.train.seed), data.train, data.test, c.stage_configs(), popts);
            jobs[j].params = r.graph.param_count();
            jobs[j].accuracy = r.reports.back().accuracy_after_finetune.value_or(r.reports.back().accuracy_after_prune);
        } catch (...) {
            errors[j] = std::current_exception();
        }
    };
    const long long n = static_cast<long long>(jobs.size());
#ifdef _OPENMP
#pragma omp parallel for num_threads(sweep_workers(jobs.size())) schedule(dynamic, 1)
    for (long long j = 0; j < n; ++j) run(static_cast<std::size_t>(j));
#else
    for (long long j = 0; j < n; ++j) run(static_cast<std::size_t>(j));
#endif
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    std::vector<double> lambdas = config.sweep_lambda;
    std::sort(lambdas.begin(), lambdas.end());
    lambdas.erase(std::unique(lambdas.begin(), lambdas.end()), lambdas.end());
    std::ostringstream summary, runs;
    summary << "lambda,params_after,accuracy\n";
    runs << "lambda,seed,params_after,accuracy\n";
    for (double l : lambdas) {
        std::vector<double> params, acc;
        for (const Job& job : jobs) {
            if (job.lambda != l) continue;
            params.push_back(static_cast<double>(job.params));
            acc.push_back(job.accuracy);
        }
        summary << format_double(l) << ',' << format_double(median(params)) << ',' << format_double(median(acc))
                << '\n';
    }
    std::vector<const Job*> ordered;
    for (const Job& job : jobs) ordered.push_back(&job);
    std::stable_sort(ordered.begin(), ordered.end(), [](const Job* a, const Job* b) {
        return a->lambda != b->lambda ? a->lambda < b->lambda : a->seed < b->seed;
    });
    for (const Job* job : ordered) {
        runs << format_double(job->lambda) << ',' << job->seed << ',' << job->params << ','
             << format_double(job->accuracy) << '\n';
    }

    Artifacts out(config.output_dir);
    out.add("sweep_lambda.csv", summary.str());
    out.add("sweep_lambda_runs.csv", runs.str());
    return out.commit();
}

Paths cmd_heatmap(const CommandOptions& options) {
    const ExperimentConfig config = resolve_config(options);
    const DataSplit data = load_data(config);
    const LoadedModel model = load_model(config, data.train.dim(), input_checkpoint(options, config, "model.ckpt"));
    const CrossLayerGroupSet groups = extract_cross_layer_groups(model.graph);
    const int g = config.heatmap_group;
    if (g < 0 || static_cast<std::size_t>(g) >= groups.groups.size()) {
        throw ConfigError("heatmap: unknown group " + std::to_string(g) + " (model has " +
                          std::to_string(groups.groups.size()) + " groups)");
    }
    const CrossLayerGroup& group = groups.group(g);
    const Tensor matrix = heatmap(group, compute_importance(model.graph, model.params));
    Artifacts out(config.output_dir);
    out.add("heatmap_group" + std::to_string(g) + ".csv", heatmap_csv(group, matrix));
    return out.commit();
}

std::string contour_csv(PenaltyKind kind, std::size_t resolution, double w1, double extent) {
    if (resolution < 3) throw ConfigError("contour: resolution must be >= 3");
    if (!(extent > 0.0)) throw ConfigError("contour: extent must be > 0");
    contour_penalty(kind, 0.0, 0.0, 0.0);
    const auto coord = [&](std::size_t i) {
        return -extent + 2.0 * extent * static_cast<double>(i) / static_cast<double>(resolution - 1);
    };
    std::ostringstream csv;
    csv << "w2,w3,value\n";
    for (std::size_t i = 0; i < resolution; ++i) {
        for (std::size_t j = 0; j < resolution; ++j) {
            const double w2 = coord(i), w3 = coord(j);
            csv << format_double(w2) << ',' << format_double(w3) << ','
                << format_double(contour_penalty(kind, w1, w2, w3)) << '\n';
        }
    }
    return csv.str();
}

Paths cmd_contour(const CommandOptions& options) {
    const ExperimentConfig config = resolve_config(options);
    const PenaltyKind kind = parse_penalty_kind(config.contour.kind);
    Artifacts out(config.output_dir);
    out.add("contour_" + config.contour.kind + ".csv",
            contour_csv(kind, config.contour.resolution, config.contour.w1, config.contour.extent));
    return out.commit();
}

int run_command(const std::string& name, const CommandOptions& options, std::ostream& out, std::ostream& err) {
    using Command = Paths (*)(const CommandOptions&);
    static const std::pair<const char*, Command> table[] = {
        {"train", cmd_train},         {"prune", cmd_prune},           {"finetune", cmd_finetune},
        {"pipeline", cmd_pipeline},   {"sweep-tau", cmd_sweep_tau},   {"sweep-lambda", cmd_sweep_lambda},
        {"heatmap", cmd_heatmap},     {"contour", cmd_contour},
    };
    Command command = nullptr;
    for (const auto& [n, fn] : table)
        if (name == n) command = fn;
    if (!command) {
        err << "error: unknown command '" << name << "'\n";
        return kExitConfig;
    }
    try {
        for (const auto& path : command(options)) out << "wrote " << path.string() << '\n';
        return kExitOk;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const StructuralError& e) {
        err << "model error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const DimensionError& e) {
        err << "shape error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const NumericError& e) {
        err << "numeric abort: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const IoError& e) {
        err << "i/o error: " << e.what() << '\n';
        return kExitIo;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitOther;
    }
}

}  // namespace vacl
