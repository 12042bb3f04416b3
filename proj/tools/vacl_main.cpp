#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vacl/commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Variance-aware cross-layer regularization and structured pruning for residual MLPs"};
    app.require_subcommand(1, 1);

    vacl::CommandOptions options;
    std::string config, out, checkpoint;
    std::uint64_t seed = 0;
    double tau = 0.0, lambda = 0.0;
    int group = 0;

    struct Entry {
        const char* name;
        const char* help;
    };
    const Entry commands[] = {
        {"train", "train a model with the configured penalty"},
        {"prune", "prune a trained checkpoint at tau"},
        {"finetune", "fine-tune a pruned checkpoint"},
        {"pipeline", "run the configured train-prune-finetune stages"},
        {"sweep-tau", "prune one checkpoint over the tau grid"},
        {"sweep-lambda", "run the pipeline for every lambda and seed in the sweep grid"},
        {"heatmap", "write the filter importance matrix of one cross-layer group"},
        {"contour", "sample a penalty over (w2, w3) for contour plots"},
    };
    std::vector<CLI::Option*> seed_opts, tau_opts, lambda_opts, out_opts, ckpt_opts, group_opts;
    for (const auto& c : commands) {
        CLI::App* sub = app.add_subcommand(c.name, c.help);
        sub->add_option("--config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
        out_opts.push_back(sub->add_option("--out", out, "output directory"));
        seed_opts.push_back(sub->add_option("--seed", seed, "training seed"));
        tau_opts.push_back(sub->add_option("--tau", tau, "pruning threshold")->check(CLI::NonNegativeNumber));
        lambda_opts.push_back(
            sub->add_option("--lambda", lambda, "regularization strength")->check(CLI::NonNegativeNumber));
        ckpt_opts.push_back(sub->add_option("--checkpoint", checkpoint, "input checkpoint"));
        group_opts.push_back(sub->add_option("--group", group, "cross-layer group id for heatmap"));
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : vacl::kExitConfig;
    }

    const auto given = [](const std::vector<CLI::Option*>& opts) {
        for (const auto* o : opts)
            if (o->count() > 0) return true;
        return false;
    };
    options.config = config;
    if (given(out_opts)) options.out = out;
    if (given(seed_opts)) options.seed = seed;
    if (given(tau_opts)) options.tau = tau;
    if (given(lambda_opts)) options.lambda = lambda;
    if (given(ckpt_opts)) options.checkpoint = checkpoint;
    if (given(group_opts)) options.group = group;

    const std::string name = app.get_subcommands().front()->get_name();
    return vacl::run_command(name, options, std::cout, std::cerr);
}
