#include "mm/runs.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <functional>
#include <optional>

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::vector<std::string> sets;
    std::optional<uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "JSON config file");
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--set", args.sets, "key=value config override (repeatable)");
    cmd->add_option("--seed", [&args](const std::vector<std::string>& v) {
        args.seed = std::stoull(v[0]);
        return true;
    }, "root random seed");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Motion-magnitude-guided video deblurring pipeline"};
    app.require_subcommand(1);

    struct Sub {
        const char* name;
        const char* help;
        const char* section;
        std::function<void(const mm::RunConfig&)> fn;
    };
    const Sub subs[] = {
        {"datagen", "synthesize blurry/MMP training pairs from sharp sequences", "datagen",
         mm::run_datagen},
        {"train-mmp", "train the motion magnitude regressor", "train_mmp", mm::run_train_mmp},
        {"train-deblur", "train the recurrent deblurring network", "train_deblur",
         mm::run_train_deblur},
        {"eval", "score a checkpoint on a dataset and write the report", "eval", mm::run_eval},
        {"infer", "deblur a directory of frames and emit prior maps", "infer", mm::run_infer},
        {"ablate", "run the ablation variant sweep", "train_deblur", mm::run_ablate},
        {"plot", "regenerate charts from report/metrics files", "plot", mm::run_plot},
    };

    std::vector<std::pair<const Sub*, std::shared_ptr<CommonArgs>>> wired;
    for (const auto& sub : subs) {
        CLI::App* cmd = app.add_subcommand(sub.name, sub.help);
        auto args = std::make_shared<CommonArgs>();
        add_common(cmd, *args);
        wired.emplace_back(&sub, args);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    for (auto& [sub, args] : wired) {
        if (!app.get_subcommand(sub->name)->parsed()) continue;
        try {
            mm::RunConfig cfg = mm::RunConfig::resolve(args->config_path, args->sets,
                                                       sub->section, args->out_dir, args->seed);
            sub->fn(cfg);
            return 0;
        } catch (const mm::UsageError& e) {
            std::fprintf(stderr, "usage error: %s\n", e.what());
            return 1;
        } catch (const std::exception& e) {
            std::fprintf(stderr, "error: %s\n", e.what());
            return 2;
        }
    }
    return 1;
}
