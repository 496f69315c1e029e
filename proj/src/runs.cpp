#include "mm/runs.hpp"

#include "mm/checkpoint.hpp"
#include "mm/evalsuite.hpp"
#include "mm/image.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <set>

namespace fs = std::filesystem;

namespace mm {

MMPNet load_mmpnet_checkpoint(const std::string& path) {
    Checkpoint ck = load_checkpoint(path);
    check(ck.kind == "mmpnet", "not an MMP-Net checkpoint: " + path);
    MMPNetConfig cfg;
    const auto& j = ck.meta.at("config");
    cfg.base_channels = j.at("base_channels").get<int>();
    cfg.levels = j.at("levels").get<int>();
    cfg.rdb_layers = j.at("rdb_layers").get<int>();
    cfg.rdb_growth = j.at("rdb_growth").get<int>();
    MMPNet net(cfg, 0);
    ck.restore_params(net.params());
    net.params().set_requires_grad(false);
    return net;
}

LoadedDeblur load_deblur_checkpoint(const std::string& path) {
    Checkpoint ck = load_checkpoint(path);
    check(ck.kind == "mmprnn", "not a deblurring checkpoint: " + path);
    LoadedDeblur out;
    const auto& j = ck.meta.at("config");
    out.net_config.n_a = j.at("n_a").get<int>();
    out.net_config.n_b = j.at("n_b").get<int>();
    out.net_config.n_c = j.at("n_c").get<int>();
    out.net_config.F = j.at("F").get<int>();
    const auto& o = ck.meta.at("options");
    out.options.use_mmam = o.at("use_mmam").get<bool>();
    out.options.use_ndf = o.at("use_ndf").get<bool>();
    out.prior_source = o.at("prior_source").get<std::string>();
    out.mmp_checkpoint = ck.meta.value("mmp_checkpoint", "");
    out.net = std::make_shared<DeblurNet>(out.net_config, out.options, 0);
    ck.restore_params(out.net->params());
    out.net->params().set_requires_grad(false);
    return out;
}

void run_datagen(const RunConfig& cfg) {
    cfg.echo();
    DatagenConfig dc = cfg.datagen();
    check(!dc.raw_root.empty(), "datagen: raw_root not configured");
    DatasetManifest m = build_dataset(dc);
    std::printf("datagen: wrote %zu samples under %s\n", m.rows.size(), dc.out_root.c_str());
}

void run_train_mmp(const RunConfig& cfg) {
    cfg.echo();
    TrainConfig tc = cfg.train_mmp();
    check(!tc.dataset_root.empty(), "train-mmp: dataset not configured");
    TrainStats st = train_mmpnet_run(tc);
    std::printf("train-mmp: %d epoch(s), last train L1 %.6f, checkpoint %s\n", st.epochs_run,
                st.last_loss, st.final_checkpoint.c_str());
}

void run_train_deblur(const RunConfig& cfg) {
    cfg.echo();
    TrainConfig tc = cfg.train_deblur();
    check(!tc.dataset_root.empty(), "train-deblur: dataset not configured");
    TrainStats st = train_deblur_run(tc);
    std::printf("train-deblur: %d epoch(s), last loss %.6f, checkpoint %s\n", st.epochs_run,
                st.last_loss, st.final_checkpoint.c_str());
}

void run_eval(const RunConfig& cfg) {
    cfg.echo();
    const auto& e = cfg.tree().at("eval");
    std::string ckpt = e.at("checkpoint").get<std::string>();
    check(!ckpt.empty(), "eval: checkpoint not configured");
    LoadedDeblur model = load_deblur_checkpoint(ckpt);
    std::string mmp_path = e.at("mmp_checkpoint").get<std::string>();
    if (mmp_path.empty()) mmp_path = model.mmp_checkpoint;
    MMPNet mmpnet = mmp_path.empty() ? MMPNet(cfg.mmpnet(), 0) : load_mmpnet_checkpoint(mmp_path);

    EvalOptions opts;
    opts.split = e.at("split").get<std::string>();
    opts.prior_source = model.prior_source;
    opts.runtime_frames = e.at("runtime_frames").get<int>();
    opts.warmup_frames = e.at("warmup_frames").get<int>();
    MetricsReport report =
        evaluate_model(mmpnet, *model.net, e.at("dataset").get<std::string>(), opts);

    ReportPaths paths;
    paths.tsv = cfg.out_dir() + "/report.tsv";
    paths.table = cfg.out_dir() + "/report.txt";
    paths.scatter_png = cfg.out_dir() + "/psnr_vs_gmacs.png";
    render_report({report}, paths);
    if (report.has_metrics)
        std::printf("eval: %s PSNR %.2f SSIM %.4f over %d frame(s)\n", report.model.c_str(),
                    report.psnr_mean, report.ssim_mean, report.frames_scored);
    else
        std::printf("eval: %s ran without sharp references; metrics columns are absent\n",
                    report.model.c_str());
}

void run_infer(const RunConfig& cfg) {
    cfg.echo();
    const auto& e = cfg.tree().at("infer");
    std::string frames_dir = e.at("frames").get<std::string>();
    std::string ckpt = e.at("checkpoint").get<std::string>();
    check(!frames_dir.empty() && !ckpt.empty(), "infer: frames and checkpoint required");
    LoadedDeblur model = load_deblur_checkpoint(ckpt);
    std::string mmp_path = e.at("mmp_checkpoint").get<std::string>();
    if (mmp_path.empty()) mmp_path = model.mmp_checkpoint;
    check(!mmp_path.empty(), "infer: no MMP-Net checkpoint configured or recorded");
    MMPNet mmpnet = load_mmpnet_checkpoint(mmp_path);

    std::vector<std::string> names;
    for (const auto& p : fs::directory_iterator(frames_dir))
        if (p.is_regular_file() && p.path().extension() == ".png")
            names.push_back(p.path().filename().string());
    std::sort(names.begin(), names.end());
    check(names.size() >= 5, "infer: need at least 5 frames, found " +
                                 std::to_string(names.size()));

    std::vector<Tensor> frames;
    for (const auto& n : names) frames.push_back(load_png(frames_dir + "/" + n));

    fs::create_directories(cfg.out_dir() + "/deblurred");
    fs::create_directories(cfg.out_dir() + "/mmp");
    for (size_t i = 0; i < frames.size(); ++i)
        save_png_gray16(cfg.out_dir() + "/mmp/" + names[i], mmpnet.infer(frames[i]));

    const int F = model.net_config.F;
    const int n = static_cast<int>(frames.size());
    const int win = std::min(F, n);
    std::set<int> produced;
    auto run_window = [&](int s) {
        std::vector<Tensor> window(frames.begin() + s, frames.begin() + s + win);
        DeblurResult res = deblur_sequence(window, mmpnet, *model.net);
        for (size_t i = 0; i < res.outputs.size(); ++i) {
            int center = s + 2 + static_cast<int>(i);
            if (!produced.insert(center).second) continue;
            save_png_rgb8(cfg.out_dir() + "/deblurred/" + names[static_cast<size_t>(center)],
                          res.outputs[i]);
        }
    };
    int s = 0;
    while (s + win <= n) {
        run_window(s);
        s += std::max(1, win - 4);
    }
    if (static_cast<int>(produced.size()) < n - 4) run_window(n - win);
    std::printf("infer: %zu deblurred frame(s) and %d prior map(s) under %s\n", produced.size(),
                n, cfg.out_dir().c_str());
}

void run_ablate(const RunConfig& cfg) {
    cfg.echo();
    TrainConfig base = cfg.train_deblur();
    check(!base.dataset_root.empty(), "ablate: train_deblur.dataset not configured");
    base.epochs = cfg.tree().at("ablate").at("epochs").get<int>();
    base.out_dir = cfg.out_dir() + "/ablation";

    std::vector<MetricsReport> reports;
    for (TrainConfig variant : ablation_variants(base)) {
        std::printf("ablate: training variant %s\n", variant.tag.c_str());
        TrainStats st = train_deblur_run(variant);
        LoadedDeblur model = load_deblur_checkpoint(st.final_checkpoint);
        MMPNet mmpnet = variant.mmp_checkpoint.empty()
                            ? MMPNet(variant.mmpnet, variant.seed)
                            : load_mmpnet_checkpoint(variant.mmp_checkpoint);
        EvalOptions opts;
        opts.split = "";
        opts.prior_source = variant.prior_source;
        opts.runtime_frames = 4;
        opts.warmup_frames = 1;
        std::string eval_root =
            variant.aux_dataset_root.empty() ? variant.dataset_root : variant.aux_dataset_root;
        MetricsReport r = evaluate_model(mmpnet, *model.net, eval_root, opts);
        r.model = variant.tag;
        reports.push_back(std::move(r));
    }
    ReportPaths paths;
    paths.tsv = cfg.out_dir() + "/ablation/report.tsv";
    paths.table = cfg.out_dir() + "/ablation/report.txt";
    paths.scatter_png = cfg.out_dir() + "/ablation/psnr_vs_gmacs.png";
    render_report(reports, paths);
    std::printf("ablate: %zu variants reported under %s/ablation\n", reports.size(),
                cfg.out_dir().c_str());
}

void run_plot(const RunConfig& cfg) {
    cfg.echo();
    const auto& p = cfg.tree().at("plot");
    std::string report_tsv = p.at("report_tsv").get<std::string>();
    std::string metrics_log = p.at("metrics_log").get<std::string>();
    check(!report_tsv.empty() || !metrics_log.empty(),
          "plot: configure plot.report_tsv and/or plot.metrics_log");
    ReportPaths paths;
    if (!report_tsv.empty()) {
        paths.scatter_png = cfg.out_dir() + "/psnr_vs_gmacs.png";
        std::vector<MetricsReport> reports = parse_report_tsv(report_tsv);
        render_report(reports, paths);
        paths = ReportPaths();
    }
    if (!metrics_log.empty()) {
        paths.metrics_log = metrics_log;
        paths.loss_curves_png = cfg.out_dir() + "/loss_curves.png";
        MetricsReport dummy;
        dummy.model = "log";
        render_report({dummy}, paths);
    }
    std::printf("plot: wrote chart(s) under %s\n", cfg.out_dir().c_str());
}

}  // namespace mm
