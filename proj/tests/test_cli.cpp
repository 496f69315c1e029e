#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mm/image.hpp"
#include "mm/evalsuite.hpp"
#include "mm/runs.hpp"
#include "mm/synth.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>

using namespace mm;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
    std::string cmd = std::string(MMPRNN_BIN) + " " + args + " >/dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

fs::path fresh(const char* name) {
    fs::path p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("config resolution: defaults, file, overrides, precedence") {
    RunConfig def = RunConfig::resolve("", {}, "datagen", "", std::nullopt);
    CHECK(def.datagen().K == doctest::Approx(15.0));
    CHECK(def.datagen().window_min == 7);
    CHECK(def.datagen().window_max == 13);
    CHECK(def.loss().lambda1 == doctest::Approx(0.5));
    CHECK(def.loss().lambda2 == doctest::Approx(1.0));
    CHECK(def.loss().epsilon == doctest::Approx(0.001));
    CHECK(def.net().n_a == 9);
    CHECK(def.train_deblur().base_lr == doctest::Approx(0.0005));
    CHECK(def.train_deblur().schedule == "cosine");
    CHECK(def.train_mmp().base_lr == doctest::Approx(0.0003));
    CHECK(def.train_mmp().trim_fraction == doctest::Approx(0.5));

    // bare keys resolve inside the subcommand section, dotted from the root
    RunConfig o = RunConfig::resolve(
        "", {"window_range=[7,7]", "net.n_c=16", "loss.lambda2=0"}, "datagen", "", 42);
    CHECK(o.datagen().window_min == 7);
    CHECK(o.datagen().window_max == 7);
    CHECK(o.net().n_c == 16);
    CHECK(o.loss().lambda2 == 0.0);
    CHECK(o.seed() == 42);

    // file values override defaults, flags override the file
    fs::path dir = fresh("mm_cli_cfg");
    {
        std::ofstream f((dir / "cfg.json").string());
        f << R"({"net": {"n_a": 3, "n_b": 4}, "seed": 7})";
    }
    RunConfig file = RunConfig::resolve((dir / "cfg.json").string(), {"net.n_a=5"}, "eval",
                                        "", std::nullopt);
    CHECK(file.net().n_a == 5);
    CHECK(file.net().n_b == 4);
    CHECK(file.seed() == 7);

    CHECK_THROWS_AS((void)RunConfig::resolve("", {"not_a_key=1"}, "datagen", "", std::nullopt),
                    UsageError);
    CHECK_THROWS_AS((void)RunConfig::resolve("", {"netn_a"}, "datagen", "", std::nullopt),
                    UsageError);
    try {
        (void)RunConfig::resolve("", {"datagen.bogus=3"}, "datagen", "", std::nullopt);
        FAIL("expected usage error");
    } catch (const UsageError& e) {
        CHECK(std::string(e.what()).find("bogus") != std::string::npos);
    }
}

TEST_CASE("datagen subcommand: spec example, config echo, artifact determinism") {
    fs::path raw = fresh("mm_cli_raw");
    SynthSpec spec;
    spec.frames = 13;
    spec.height = 24;
    spec.width = 24;
    write_synthetic_sequence(spec, (raw / "seq000").string());

    fs::path out1 = fresh("mm_cli_out1");
    std::string common = "datagen --set datagen.raw_root=" + raw.string() +
                         " --set window_range=[7,7] --set datagen.flow.iterations=20 --seed 9";
    CHECK(run_cli(common + " --out " + out1.string()) == 0);
    CHECK(fs::exists(out1 / "config_resolved.json"));
    CHECK(fs::exists(out1 / "dataset" / "manifest.tsv"));
    {
        std::ifstream m((out1 / "dataset" / "manifest.tsv").string());
        std::string line;
        int rows = -1;  // header
        while (std::getline(m, line))
            if (!line.empty()) ++rows;
        CHECK(rows == 1);  // 13-frame sequence, window 7 -> one sample
    }

    fs::path out2 = fresh("mm_cli_out2");
    CHECK(run_cli(common + " --out " + out2.string()) == 0);
    CHECK(hash_file((out1 / "dataset" / "manifest.tsv").string()) ==
          hash_file((out2 / "dataset" / "manifest.tsv").string()));
    CHECK(hash_file((out1 / "dataset" / "train" / "seq000" / "blur" / "00000000.png").string()) ==
          hash_file((out2 / "dataset" / "train" / "seq000" / "blur" / "00000000.png").string()));

    for (const auto& p : {raw, out1, out2}) fs::remove_all(p);
}

TEST_CASE("pipeline smoke through the run functions at miniature scale") {
    fs::path root = fresh("mm_cli_pipe");
    SynthSpec spec;
    spec.frames = 36;
    spec.height = 16;
    spec.width = 16;
    spec.seed = 77;
    write_synthetic_sequence(spec, (root / "raw" / "seq000").string());

    auto cfg = [&](std::vector<std::string> sets, const std::string& section,
                   const std::string& out) {
        return RunConfig::resolve("", std::move(sets), section, (root / out).string(), 5);
    };

    run_datagen(cfg({"datagen.raw_root=" + (root / "raw").string(),
                     "window_range=[4,4]", "datagen.flow.iterations=20",
                     "datagen.out_root=" + (root / "ds").string()},
                    "datagen", "dg"));
    CHECK(fs::exists(root / "dg" / "config_resolved.json"));

    std::vector<std::string> arch = {
        "mmpnet.base_channels=4", "mmpnet.levels=2", "mmpnet.rdb_layers=2",
        "mmpnet.rdb_growth=4",    "net.n_a=1",       "net.n_b=1",
        "net.n_c=4",              "net.F=5"};

    auto mmp_sets = arch;
    mmp_sets.insert(mmp_sets.end(),
                    {"train_mmp.dataset=" + (root / "ds").string(), "train_mmp.epochs=2",
                     "train_mmp.batch_size=4", "train_mmp.patch_size=16",
                     "train_mmp.trim_fraction=1.0", "train_mmp.val_interval=0"});
    run_train_mmp(cfg(mmp_sets, "train_mmp", "run"));
    std::string mmp_ckpt = (root / "run" / "mmpnet" / "ckpt_epoch0001").string();
    CHECK(fs::exists(mmp_ckpt));

    auto deblur_sets = arch;
    deblur_sets.insert(deblur_sets.end(),
                       {"train_deblur.dataset=" + (root / "ds").string(),
                        "train_deblur.epochs=2", "train_deblur.batch_size=1",
                        "train_deblur.patch_size=16", "train_deblur.seq_len_train=5",
                        "train_deblur.val_interval=0",
                        "train_deblur.mmp_checkpoint=" + mmp_ckpt});
    run_train_deblur(cfg(deblur_sets, "train_deblur", "run"));
    std::string deblur_ckpt = (root / "run" / "deblur" / "ckpt_epoch0001").string();
    CHECK(fs::exists(deblur_ckpt));

    run_eval(cfg({"eval.dataset=" + (root / "ds").string(), "eval.split=train",
                  "eval.checkpoint=" + deblur_ckpt, "eval.runtime_frames=2",
                  "eval.warmup_frames=1"},
                 "eval", "eval"));
    CHECK(fs::exists(root / "eval" / "report.tsv"));
    CHECK(fs::exists(root / "eval" / "report.txt"));
    auto reports = parse_report_tsv((root / "eval" / "report.tsv").string());
    REQUIRE(reports.size() == 1);
    CHECK(reports[0].has_metrics);

    // metric-free degradation: eval exits cleanly without sharp references
    fs::path stripped = root / "ds_nosharp";
    fs::copy(root / "ds", stripped, fs::copy_options::recursive);
    fs::remove_all(stripped / "train" / "seq000" / "sharp");
    run_eval(cfg({"eval.dataset=" + stripped.string(), "eval.split=train",
                  "eval.checkpoint=" + deblur_ckpt, "eval.runtime_frames=2",
                  "eval.warmup_frames=1"},
                 "eval", "eval_nosharp"));
    auto r2 = parse_report_tsv((root / "eval_nosharp" / "report.tsv").string());
    REQUIRE(r2.size() == 1);
    CHECK_FALSE(r2[0].has_metrics);

    // infer: 8 frames at F=5 -> 4 outputs + 8 prior maps
    fs::path frames = root / "frames";
    fs::create_directories(frames);
    for (int i = 0; i < 8; ++i) {
        char name[16];
        std::snprintf(name, sizeof(name), "%08d.png", i);
        fs::copy_file(root / "ds" / "train" / "seq000" / "blur" / name, frames / name);
    }
    run_infer(cfg({"infer.frames=" + frames.string(), "infer.checkpoint=" + deblur_ckpt},
                  "infer", "infer"));
    int deblurred = 0, maps = 0;
    for (const auto& e : fs::directory_iterator(root / "infer" / "deblurred")) ++deblurred, (void)e;
    for (const auto& e : fs::directory_iterator(root / "infer" / "mmp")) ++maps, (void)e;
    CHECK(deblurred == 4);
    CHECK(maps == 8);

    run_plot(cfg({"plot.report_tsv=" + (root / "eval" / "report.tsv").string(),
                  "plot.metrics_log=" + (root / "run" / "deblur" / "metrics_deblur.tsv").string()},
                 "plot", "plots"));
    CHECK(fs::exists(root / "plots" / "psnr_vs_gmacs.png"));
    CHECK(fs::exists(root / "plots" / "loss_curves.png"));

    fs::remove_all(root);
}

TEST_CASE("exit codes: usage errors are 1, runtime failures are 2") {
    CHECK(run_cli("not-a-subcommand") == 1);
    CHECK(run_cli("datagen --set bogus_key=1") == 1);
    CHECK(run_cli("datagen --set datagen.raw_root=/nonexistent/raw --out /tmp/mm_cli_rt") == 2);
    CHECK(run_cli("--help") == 0);
    fs::remove_all("/tmp/mm_cli_rt");
}
