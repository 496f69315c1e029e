#include "mm/trainer.hpp"

#include "mm/checkpoint.hpp"
#include "mm/evalsuite.hpp"
#include "mm/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace fs = std::filesystem;

namespace mm {

Real lr_at(const TrainConfig& cfg, int epoch) {
    if (cfg.schedule == "cosine")
        return Real(0.5) * cfg.base_lr *
               (1 + std::cos(M_PI * static_cast<Real>(epoch) / static_cast<Real>(cfg.epochs)));
    if (cfg.schedule == "step")
        return epoch >= cfg.epochs / 2 ? cfg.base_lr / 2 : cfg.base_lr;
    if (cfg.schedule == "const") return cfg.base_lr;
    throw std::invalid_argument("trainer: unknown schedule '" + cfg.schedule + "'");
}

namespace {

Tensor flip_h(const Tensor& t) {
    int c = t.dim(0), h = t.dim(1), w = t.dim(2);
    Tensor out = Tensor::zeros({c, h, w});
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                out.data()[(int64_t(ci) * h + y) * w + x] =
                    t.data()[(int64_t(ci) * h + y) * w + (w - 1 - x)];
    return out;
}

Tensor flip_v(const Tensor& t) {
    int c = t.dim(0), h = t.dim(1), w = t.dim(2);
    Tensor out = Tensor::zeros({c, h, w});
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                out.data()[(int64_t(ci) * h + y) * w + x] =
                    t.data()[(int64_t(ci) * h + (h - 1 - y)) * w + x];
    return out;
}

Tensor rot90_cw(const Tensor& t) {
    int c = t.dim(0), h = t.dim(1), w = t.dim(2);
    Tensor out = Tensor::zeros({c, w, h});
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < w; ++y)
            for (int x = 0; x < h; ++x)
                out.data()[(int64_t(ci) * w + y) * h + x] =
                    t.data()[(int64_t(ci) * h + (h - 1 - x)) * w + y];
    return out;
}

Tensor crop_chw(const Tensor& t, int y0, int x0, int h, int w) {
    Tensor out = Tensor::zeros({t.dim(0), h, w});
    for (int c = 0; c < t.dim(0); ++c)
        for (int y = 0; y < h; ++y)
            std::copy(t.data() + (int64_t(c) * t.dim(1) + y0 + y) * t.dim(2) + x0,
                      t.data() + (int64_t(c) * t.dim(1) + y0 + y) * t.dim(2) + x0 + w,
                      out.data() + (int64_t(c) * h + y) * w);
    return out;
}

struct Transform {
    int y0 = 0, x0 = 0, h = 0, w = 0;
    bool fh = false, fv = false, rot = false;

    Tensor operator()(const Tensor& t) const {
        Tensor out = crop_chw(t, y0, x0, h, w);
        if (fh) out = flip_h(out);
        if (fv) out = flip_v(out);
        if (rot && h == w) out = rot90_cw(out);
        return out;
    }
};

Tensor normalize_map(const Tensor& t) {
    Tensor out = t.detach();
    Real mx = 0;
    for (Real v : out.vec()) mx = std::max(mx, v);
    if (mx > 0)
        for (Real& v : out.vec()) v /= mx;
    return out;
}

void append_log(const std::string& path, const std::string& header, const std::string& row) {
    bool fresh = !fs::exists(path);
    std::ofstream out(path, std::ios::app);
    check(out.good(), "trainer: cannot write metrics log " + path);
    if (fresh) out << header << '\n';
    out << row << '\n';
}

std::string ckpt_name(const std::string& dir, int epoch) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "ckpt_epoch%04d", epoch);
    return dir + "/" + buf;
}

}  // namespace

SeqBatch sample_batch(const VideoDataset& ds, int batch_size, int seq_len, int patch,
                      bool augment, const std::string& prior_kind, RngStream& rng) {
    check(batch_size > 0 && seq_len > 0, "sample_batch: invalid sizes");
    const auto& seqs = ds.sequences();
    check(!seqs.empty(), "sample_batch: empty dataset");
    bool any_long = false;
    for (const auto& s : seqs)
        if (static_cast<int>(s.rows.size()) >= seq_len) any_long = true;
    check(any_long, "sample_batch: no sequence holds " + std::to_string(seq_len) + " samples");

    const bool dataset_prior =
        prior_kind == "gt" || prior_kind == "gt_norm" || prior_kind == "center_flow";
    std::vector<std::vector<Tensor>> blur(static_cast<size_t>(seq_len)),
        sharp(static_cast<size_t>(seq_len)), prior(static_cast<size_t>(seq_len));

    int failures = 0;
    for (int b = 0; b < batch_size; ++b) {
        const VideoDataset::Sequence* seq = nullptr;
        while (true) {
            const auto& cand = seqs[static_cast<size_t>(
                rng.uniform_int(0, static_cast<int64_t>(seqs.size()) - 1))];
            if (static_cast<int>(cand.rows.size()) >= seq_len) {
                seq = &cand;
                break;
            }
            if (++failures == 100)
                std::fprintf(stderr,
                             "sample_batch: 100 draws hit sequences shorter than %d samples\n",
                             seq_len);
        }
        int start = static_cast<int>(
            rng.uniform_int(0, static_cast<int64_t>(seq->rows.size()) - seq_len));
        Tensor probe = ds.load(seq->rows[static_cast<size_t>(start)], "blur");
        int H = probe.dim(1), W = probe.dim(2);
        int ph = std::min(patch, H), pw = std::min(patch, W);

        Transform tf;
        tf.h = ph;
        tf.w = pw;
        tf.y0 = static_cast<int>(rng.uniform_int(0, H - ph));
        tf.x0 = static_cast<int>(rng.uniform_int(0, W - pw));
        if (augment) {
            tf.fh = rng.uniform() < 0.5;
            tf.fv = rng.uniform() < 0.5;
            tf.rot = rng.uniform() < 0.5;
        }

        for (int t = 0; t < seq_len; ++t) {
            size_t row = seq->rows[static_cast<size_t>(start + t)];
            blur[static_cast<size_t>(t)].push_back(tf(ds.load(row, "blur")));
            sharp[static_cast<size_t>(t)].push_back(tf(ds.load(row, "sharp")));
            if (dataset_prior) {
                const char* kind = prior_kind == "center_flow" ? "mmpc" : "mmp";
                Tensor m = ds.load(row, kind);
                if (prior_kind == "gt_norm") m = normalize_map(m);
                prior[static_cast<size_t>(t)].push_back(tf(m));
            }
        }
    }

    SeqBatch out;
    for (int t = 0; t < seq_len; ++t) {
        out.blur.push_back(stack_batch(blur[static_cast<size_t>(t)]));
        out.sharp.push_back(stack_batch(sharp[static_cast<size_t>(t)]));
        if (dataset_prior) out.prior.push_back(stack_batch(prior[static_cast<size_t>(t)]));
    }
    return out;
}

TrainStats train_mmpnet_run(const TrainConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    VideoDataset ds = VideoDataset::open(cfg.dataset_root);
    check(ds.size() > 0, "train-mmp: empty dataset");
    std::optional<VideoDataset> test_ds;
    if (!cfg.aux_dataset_root.empty()) test_ds = VideoDataset::open(cfg.aux_dataset_root);

    MMPNet net(cfg.mmpnet, cfg.seed);
    Adam adam(cfg.base_lr);
    int start_epoch = 0;
    if (!cfg.resume_from.empty()) {
        Checkpoint ck = load_checkpoint(cfg.resume_from);
        check(ck.kind == "mmpnet", "train-mmp: checkpoint kind mismatch");
        ck.restore_params(net.params());
        ck.restore_adam(adam);
        start_epoch = ck.meta.at("epoch").get<int>() + 1;
    }

    const std::string log_path = cfg.out_dir + "/metrics_mmp.tsv";
    TrainStats stats;
    stats.metrics_log = log_path;
    stats.last_val = std::numeric_limits<Real>::quiet_NaN();

    auto save_at = [&](int epoch) {
        nlohmann::json meta;
        meta["epoch"] = epoch;
        meta["config"] = {{"base_channels", cfg.mmpnet.base_channels},
                          {"levels", cfg.mmpnet.levels},
                          {"rdb_layers", cfg.mmpnet.rdb_layers},
                          {"rdb_growth", cfg.mmpnet.rdb_growth}};
        std::string path = ckpt_name(cfg.out_dir, epoch);
        save_checkpoint(path, Checkpoint::from_params("mmpnet", meta, net.params(), &adam));
        stats.final_checkpoint = path;
    };

    if (cfg.epochs == 0) {
        save_at(0);
        return stats;
    }

    auto eval_l1 = [&](const VideoDataset& eds, int max_samples) {
        NoGradGuard ng;
        Real acc = 0;
        int n = std::min<int>(max_samples, static_cast<int>(eds.size()));
        for (int i = 0; i < n; ++i) {
            Tensor blur = eds.load(static_cast<size_t>(i), "blur");
            Tensor gt = eds.load(static_cast<size_t>(i), "mmp");
            Tensor pred = net.infer(blur);
            acc += l1_loss(pred, gt).item();
        }
        return n > 0 ? acc / n : Real(0);
    };

    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        adam.set_lr(lr_at(cfg, epoch));
        RngStream rng = derive_rng(cfg.seed, "mmp.epoch", static_cast<uint64_t>(epoch));
        std::vector<size_t> order =
            trim_for_epoch(ds.size(), cfg.trim_fraction, rng.next_u64());
        RngStream aug_rng = derive_rng(cfg.seed, "mmp.aug", static_cast<uint64_t>(epoch));

        Real loss_acc = 0;
        int steps = 0;
        for (size_t ofs = 0; ofs < order.size(); ofs += static_cast<size_t>(cfg.batch_size)) {
            size_t n = std::min<size_t>(static_cast<size_t>(cfg.batch_size),
                                        order.size() - ofs);
            std::vector<Tensor> blurs, gts;
            for (size_t i = 0; i < n; ++i) {
                size_t row = order[ofs + i];
                Tensor blur = ds.load(row, "blur");
                Tensor gt = ds.load(row, "mmp");
                int H = blur.dim(1), W = blur.dim(2);
                int ph = std::min(cfg.patch_size, H), pw = std::min(cfg.patch_size, W);
                Transform tf;
                tf.h = ph;
                tf.w = pw;
                tf.y0 = static_cast<int>(aug_rng.uniform_int(0, H - ph));
                tf.x0 = static_cast<int>(aug_rng.uniform_int(0, W - pw));
                if (cfg.augment) {
                    tf.fh = aug_rng.uniform() < 0.5;
                    tf.fv = aug_rng.uniform() < 0.5;
                    tf.rot = aug_rng.uniform() < 0.5;
                }
                blurs.push_back(tf(blur));
                gts.push_back(tf(gt));
            }
            Tensor pred = net.forward(stack_batch(blurs));
            Tensor loss = l1_loss(pred, stack_batch(gts));
            Real lv = loss.item();
            if (!std::isfinite(lv))
                throw std::runtime_error(
                    "train-mmp: non-finite loss at epoch " + std::to_string(epoch) +
                    "; last good checkpoint kept in " + cfg.out_dir);
            net.params().zero_grad();
            loss.backward();
            adam.step(net.params());
            loss_acc += lv;
            ++steps;
        }
        stats.last_loss = loss_acc / std::max(1, steps);
        stats.epochs_run = epoch + 1;

        std::string test_cell = "-";
        if (cfg.val_interval > 0 && (epoch % cfg.val_interval == 0 || epoch + 1 == cfg.epochs)) {
            stats.last_val = eval_l1(test_ds ? *test_ds : ds, 8);
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.6f", stats.last_val);
            test_cell = buf;
        }
        char row[160];
        std::snprintf(row, sizeof(row), "%d\t%.6g\t%.6f\t%s", epoch, adam.lr(),
                      stats.last_loss, test_cell.c_str());
        append_log(log_path, "epoch\tlr\ttrain_l1\ttest_l1", row);

        if (epoch % cfg.checkpoint_interval == 0 || epoch + 1 == cfg.epochs) save_at(epoch);
    }
    return stats;
}

namespace {

// Priors for one timestep according to the configured source.
Tensor priors_for(const std::string& source, const MMPNet* mmpnet, const Tensor& blur_batch,
                  const SeqBatch& batch, size_t t) {
    if (source == "mmpnet") {
        check(mmpnet != nullptr, "train-deblur: prior source mmpnet needs a checkpoint");
        NoGradGuard ng;
        return clamp01(mmpnet->forward(blur_batch));
    }
    return batch.prior[t];
}

}  // namespace

TrainStats train_deblur_run(const TrainConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    VideoDataset ds = VideoDataset::open(cfg.dataset_root);
    check(ds.size() > 0, "train-deblur: empty dataset");

    const bool needs_mmpnet =
        (cfg.use_mmam && cfg.prior_source == "mmpnet") || cfg.loss.lambda2 != 0;
    std::optional<MMPNet> mmpnet;
    if (needs_mmpnet) {
        check(!cfg.mmp_checkpoint.empty(),
              "train-deblur: MMAM/L_MM enabled but no MMP-Net checkpoint configured");
        Checkpoint ck = load_checkpoint(cfg.mmp_checkpoint);
        check(ck.kind == "mmpnet", "train-deblur: not an MMP-Net checkpoint");
        MMPNetConfig mc = cfg.mmpnet;
        if (ck.meta.contains("config")) {
            const auto& j = ck.meta["config"];
            mc.base_channels = j.value("base_channels", mc.base_channels);
            mc.levels = j.value("levels", mc.levels);
            mc.rdb_layers = j.value("rdb_layers", mc.rdb_layers);
            mc.rdb_growth = j.value("rdb_growth", mc.rdb_growth);
        }
        mmpnet.emplace(mc, cfg.seed);
        ck.restore_params(mmpnet->params());
        mmpnet->params().set_requires_grad(false);  // frozen prior producer
    }

    DeblurOptions opts;
    opts.use_mmam = cfg.use_mmam && cfg.prior_source != "none";
    opts.use_ndf = cfg.use_ndf;
    DeblurNet net(cfg.net, opts, cfg.seed);
    Adam adam(cfg.base_lr);
    int start_epoch = 0;
    if (!cfg.resume_from.empty()) {
        Checkpoint ck = load_checkpoint(cfg.resume_from);
        check(ck.kind == "mmprnn", "train-deblur: checkpoint kind mismatch");
        ck.restore_params(net.params());
        ck.restore_adam(adam);
        start_epoch = ck.meta.at("epoch").get<int>() + 1;
    }

    std::optional<VideoDataset> val_ds;
    if (!cfg.aux_dataset_root.empty()) val_ds = VideoDataset::open(cfg.aux_dataset_root);

    const std::string log_path = cfg.out_dir + "/metrics_deblur.tsv";
    TrainStats stats;
    stats.metrics_log = log_path;
    stats.last_val = std::numeric_limits<Real>::quiet_NaN();

    auto save_at = [&](int epoch) {
        nlohmann::json meta;
        meta["epoch"] = epoch;
        meta["tag"] = cfg.tag;
        meta["config"] = {{"n_a", cfg.net.n_a}, {"n_b", cfg.net.n_b}, {"n_c", cfg.net.n_c},
                          {"F", cfg.net.F}};
        meta["options"] = {{"use_mmam", opts.use_mmam}, {"use_ndf", opts.use_ndf},
                           {"prior_source", cfg.prior_source}};
        meta["mmp_checkpoint"] = cfg.mmp_checkpoint;
        std::string path = ckpt_name(cfg.out_dir, epoch);
        save_checkpoint(path, Checkpoint::from_params("mmprnn", meta, net.params(), &adam));
        stats.final_checkpoint = path;
    };

    if (cfg.epochs == 0) {
        save_at(0);
        return stats;
    }

    const int seq_len = std::max(cfg.seq_len_train, 5);
    int64_t usable = 0;
    for (const auto& s : ds.sequences())
        usable += std::max<int64_t>(0, static_cast<int64_t>(s.rows.size()));
    const int steps_per_epoch = std::max<int>(
        1, static_cast<int>(usable / (static_cast<int64_t>(cfg.batch_size) * seq_len)));

    auto validate = [&]() {
        NoGradGuard ng;
        const VideoDataset& vds = val_ds ? *val_ds : ds;
        Real acc = 0;
        int count = 0;
        int taken = 0;
        for (const auto& seq : vds.sequences()) {
            if (taken++ >= 8) break;
            int n = std::min<int>(cfg.net.F, static_cast<int>(seq.rows.size()));
            if (n < 5) continue;
            std::vector<Tensor> blur, sharp;
            for (int i = 0; i < n; ++i) {
                blur.push_back(vds.load(seq.rows[static_cast<size_t>(i)], "blur"));
                sharp.push_back(vds.load(seq.rows[static_cast<size_t>(i)], "sharp"));
            }
            int H = blur[0].dim(1), W = blur[0].dim(2);
            int ch = std::min(256, H), cw = std::min(256, W);
            int y0 = (H - ch) / 2, x0 = (W - cw) / 2;
            std::vector<Tensor> priors;
            std::vector<Tensor> bb, sb;
            for (int i = 0; i < n; ++i) {
                bb.push_back(stack_batch({crop_chw(blur[static_cast<size_t>(i)], y0, x0, ch, cw)}));
                sb.push_back(crop_chw(sharp[static_cast<size_t>(i)], y0, x0, ch, cw));
            }
            if (opts.use_mmam) {
                for (int i = 0; i < n; ++i) {
                    if (cfg.prior_source == "mmpnet") {
                        priors.push_back(clamp01(mmpnet->forward(bb[static_cast<size_t>(i)])));
                    } else {
                        const char* kind =
                            cfg.prior_source == "center_flow" ? "mmpc" : "mmp";
                        Tensor m = vds.load(seq.rows[static_cast<size_t>(i)], kind);
                        if (cfg.prior_source == "gt_norm") m = normalize_map(m);
                        priors.push_back(stack_batch({crop_chw(m, y0, x0, ch, cw)}));
                    }
                }
            }
            std::vector<Tensor> outs = net.forward_sequence(bb, priors);
            for (size_t i = 0; i < outs.size(); ++i) {
                Tensor o = clamp01(slice_batch(outs[i], 0));
                Real p = psnr(sb[i + 2], o);
                if (std::isfinite(p)) {
                    acc += p;
                    ++count;
                }
            }
        }
        return count > 0 ? acc / count : Real(0);
    };

    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        adam.set_lr(lr_at(cfg, epoch));
        RngStream rng = derive_rng(cfg.seed, "deblur.epoch", static_cast<uint64_t>(epoch));
        Real ch_acc = 0, gr_acc = 0, mm_acc = 0, tot_acc = 0;
        for (int step = 0; step < steps_per_epoch; ++step) {
            SeqBatch batch = sample_batch(ds, cfg.batch_size, seq_len, cfg.patch_size,
                                          cfg.augment, cfg.prior_source, rng);
            std::vector<Tensor> priors;
            if (opts.use_mmam)
                for (size_t t = 0; t < batch.blur.size(); ++t)
                    priors.push_back(
                        priors_for(cfg.prior_source, mmpnet ? &*mmpnet : nullptr,
                                   batch.blur[t], batch, t));
            std::vector<Tensor> outs = net.forward_sequence(batch.blur, priors);

            Tensor loss;
            Real ch_v = 0, gr_v = 0, mm_v = 0;
            for (size_t i = 0; i < outs.size(); ++i) {
                const Tensor& ref = batch.sharp[i + 2];
                Tensor c = charbonnier(ref, outs[i], cfg.loss.epsilon);
                Tensor term = c;
                ch_v += c.item();
                if (cfg.loss.lambda1 != 0) {
                    Tensor g = gradient_loss(ref, outs[i], cfg.loss.gradient_op);
                    gr_v += g.item();
                    term = add(term, scale(g, cfg.loss.lambda1));
                }
                if (cfg.loss.lambda2 != 0) {
                    Tensor m = mm_loss(outs[i], *mmpnet);
                    mm_v += m.item();
                    term = add(term, scale(m, cfg.loss.lambda2));
                }
                loss = loss.defined() ? add(loss, term) : term;
            }
            loss = scale(loss, Real(1) / static_cast<Real>(outs.size()));
            Real lv = loss.item();
            if (!std::isfinite(lv))
                throw std::runtime_error(
                    "train-deblur: non-finite loss at epoch " + std::to_string(epoch) +
                    "; last good checkpoint kept in " + cfg.out_dir);
            net.params().zero_grad();
            loss.backward();
            adam.step(net.params());
            Real inv = Real(1) / static_cast<Real>(outs.size());
            ch_acc += ch_v * inv;
            gr_acc += gr_v * inv;
            mm_acc += mm_v * inv;
            tot_acc += lv;
        }
        Real inv_steps = Real(1) / steps_per_epoch;
        stats.last_loss = tot_acc * inv_steps;
        stats.epochs_run = epoch + 1;

        std::string val_cell = "-";
        if (cfg.val_interval > 0 && (epoch % cfg.val_interval == 0 || epoch + 1 == cfg.epochs)) {
            stats.last_val = validate();
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.4f", stats.last_val);
            val_cell = buf;
        }
        char row[240];
        std::snprintf(row, sizeof(row), "%d\t%.6g\t%.6f\t%.6f\t%.6f\t%.6f\t%s", epoch,
                      adam.lr(), ch_acc * inv_steps, gr_acc * inv_steps, mm_acc * inv_steps,
                      stats.last_loss, val_cell.c_str());
        append_log(log_path, "epoch\tlr\tL_char\tL_grad\tL_MM\ttotal\tval_PSNR", row);

        if (epoch % cfg.checkpoint_interval == 0 || epoch + 1 == cfg.epochs) save_at(epoch);
    }
    return stats;
}

std::vector<TrainConfig> ablation_variants(const TrainConfig& base) {
    std::vector<TrainConfig> out;
    auto push = [&](const std::string& tag, auto&& mutate) {
        TrainConfig c = base;
        c.tag = tag;
        mutate(c);
        if (!c.out_dir.empty()) c.out_dir += "/" + tag;
        out.push_back(std::move(c));
    };
    push("full", [](TrainConfig&) {});
    push("no_mmam", [](TrainConfig& c) { c.use_mmam = false; });
    push("no_mmam_no_lmm", [](TrainConfig& c) {
        c.use_mmam = false;
        c.loss.lambda2 = 0;
    });
    push("no_mmam_no_lmm_no_ndf", [](TrainConfig& c) {
        c.use_mmam = false;
        c.loss.lambda2 = 0;
        c.use_ndf = false;
    });
    push("prior_gt", [](TrainConfig& c) { c.prior_source = "gt"; });
    push("prior_center_flow", [](TrainConfig& c) { c.prior_source = "center_flow"; });
    push("prior_gt_norm", [](TrainConfig& c) { c.prior_source = "gt_norm"; });
    push("prior_none", [](TrainConfig& c) { c.prior_source = "none"; });
    push("prior_mmpnet", [](TrainConfig& c) { c.prior_source = "mmpnet"; });
    return out;
}

}  // namespace mm
