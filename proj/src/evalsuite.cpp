#include "mm/evalsuite.hpp"

#include "mm/dataset.hpp"
#include "mm/plot.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace mm {

Real psnr(const Tensor& reference, const Tensor& output) {
    check(reference.defined() && output.defined() && reference.shape() == output.shape(),
          "psnr: shape mismatch");
    const Real* a = reference.data();
    const Real* b = output.data();
    Real mse = 0;
    int64_t n = reference.numel();
    for (int64_t i = 0; i < n; ++i) {
        Real d = a[i] - b[i];
        mse += d * d;
    }
    mse /= static_cast<Real>(n);
    if (mse == 0) return std::numeric_limits<Real>::infinity();
    return Real(10) * std::log10(Real(1) / mse);
}

namespace {

constexpr int kSsimWindow = 11;
constexpr Real kSsimSigma = 1.5;
constexpr Real kC1 = 0.01 * 0.01;
constexpr Real kC2 = 0.03 * 0.03;

std::vector<Real> gaussian_kernel() {
    std::vector<Real> k(kSsimWindow);
    Real sum = 0;
    for (int i = 0; i < kSsimWindow; ++i) {
        Real d = i - (kSsimWindow - 1) / Real(2);
        k[static_cast<size_t>(i)] = std::exp(-d * d / (2 * kSsimSigma * kSsimSigma));
        sum += k[static_cast<size_t>(i)];
    }
    for (Real& v : k) v /= sum;
    return k;
}

// Separable valid-mode Gaussian filter of one plane.
std::vector<Real> gauss_valid(const std::vector<Real>& src, int h, int w, int& ho, int& wo) {
    static const std::vector<Real> k = gaussian_kernel();
    ho = h - kSsimWindow + 1;
    wo = w - kSsimWindow + 1;
    std::vector<Real> tmp(static_cast<size_t>(h) * wo);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < wo; ++x) {
            Real s = 0;
            for (int t = 0; t < kSsimWindow; ++t)
                s += k[static_cast<size_t>(t)] * src[static_cast<size_t>(y) * w + x + t];
            tmp[static_cast<size_t>(y) * wo + x] = s;
        }
    std::vector<Real> out(static_cast<size_t>(ho) * wo);
    for (int y = 0; y < ho; ++y)
        for (int x = 0; x < wo; ++x) {
            Real s = 0;
            for (int t = 0; t < kSsimWindow; ++t)
                s += k[static_cast<size_t>(t)] * tmp[static_cast<size_t>(y + t) * wo + x];
            out[static_cast<size_t>(y) * wo + x] = s;
        }
    return out;
}

}  // namespace

Real ssim(const Tensor& reference, const Tensor& output) {
    check(reference.defined() && output.defined() && reference.shape() == output.shape() &&
              reference.ndim() == 3,
          "ssim: expected matching (C,H,W) tensors");
    const int c = reference.dim(0), h = reference.dim(1), w = reference.dim(2);
    check(h >= kSsimWindow && w >= kSsimWindow, "ssim: image smaller than the 11x11 window");
    const int64_t plane = static_cast<int64_t>(h) * w;
    Real total = 0;
    for (int ch = 0; ch < c; ++ch) {
        std::vector<Real> x(reference.data() + ch * plane, reference.data() + (ch + 1) * plane);
        std::vector<Real> y(output.data() + ch * plane, output.data() + (ch + 1) * plane);
        std::vector<Real> xx(x.size()), yy(y.size()), xy(x.size());
        for (size_t i = 0; i < x.size(); ++i) {
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        int ho = 0, wo = 0;
        std::vector<Real> mx = gauss_valid(x, h, w, ho, wo);
        std::vector<Real> my = gauss_valid(y, h, w, ho, wo);
        std::vector<Real> mxx = gauss_valid(xx, h, w, ho, wo);
        std::vector<Real> myy = gauss_valid(yy, h, w, ho, wo);
        std::vector<Real> mxy = gauss_valid(xy, h, w, ho, wo);
        Real acc = 0;
        for (size_t i = 0; i < mx.size(); ++i) {
            Real vx = mxx[i] - mx[i] * mx[i];
            Real vy = myy[i] - my[i] * my[i];
            Real cov = mxy[i] - mx[i] * my[i];
            acc += ((2 * mx[i] * my[i] + kC1) * (2 * cov + kC2)) /
                   ((mx[i] * mx[i] + my[i] * my[i] + kC1) * (vx + vy + kC2));
        }
        total += acc / static_cast<Real>(mx.size());
    }
    return total / static_cast<Real>(c);
}

namespace {

Tensor normalize_map(const Tensor& t) {
    Tensor out = t.detach();
    Real mx = 0;
    for (Real v : out.vec()) mx = std::max(mx, v);
    if (mx > 0)
        for (Real& v : out.vec()) v /= mx;
    return out;
}

struct WindowRunner {
    const MMPNet* mmpnet;
    const DeblurNet* net;
    const VideoDataset* ds;
    std::string prior_source;

    std::vector<Tensor> run(const std::vector<Tensor>& blur,
                            const std::vector<size_t>& rows) const {
        NoGradGuard ng;
        const int h = blur[0].dim(1), w = blur[0].dim(2);
        const int ph = (4 - h % 4) % 4, pw = (4 - w % 4) % 4;
        std::vector<Tensor> frames, priors;
        for (size_t i = 0; i < blur.size(); ++i) {
            Tensor fb = stack_batch({blur[i]});
            if (ph || pw) fb = pad2d(fb, 0, ph, 0, pw);
            frames.push_back(fb);
            if (net->options().use_mmam) {
                Tensor m;
                if (prior_source == "mmpnet") {
                    m = stack_batch({mmpnet->infer(blur[i])});
                } else {
                    const char* kind = prior_source == "center_flow" ? "mmpc" : "mmp";
                    m = ds->load(rows[i], kind);
                    if (prior_source == "gt_norm") m = normalize_map(m);
                    m = stack_batch({m});
                }
                if (ph || pw) m = pad2d(m, 0, ph, 0, pw);
                priors.push_back(m);
            }
        }
        std::vector<Tensor> outs = net->forward_sequence(frames, priors);
        std::vector<Tensor> result;
        for (auto& o : outs) {
            Tensor cropped = (ph || pw) ? crop2d(o, 0, 0, h, w) : o;
            result.push_back(clamp01(slice_batch(cropped, 0)));
        }
        return result;
    }
};

}  // namespace

MetricsReport evaluate_model(const MMPNet& mmpnet, const DeblurNet& net,
                             const std::string& dataset_root, const EvalOptions& opts) {
    VideoDataset ds = VideoDataset::open(dataset_root);
    const int F = net.config().F;
    MetricsReport report;
    report.model = net.config().tag();
    report.gmacs = rnn_gmacs(net.config(), 720, 1280, net.options(), mmpnet.config());
    report.params_m =
        static_cast<double>(rnn_param_count(net.config(), net.options(), mmpnet.config())) / 1e6;
    report.has_metrics = ds.has_kind("sharp");

    WindowRunner runner{&mmpnet, &net, &ds, opts.prior_source};
    Real psnr_acc = 0, ssim_acc = 0;
    int scored = 0, psnr_excluded = 0;
    std::vector<Tensor> timing_window;
    std::vector<size_t> timing_rows;

    for (const auto* seq : ds.sequences_matching(opts.split)) {
        std::vector<Tensor> blur;
        std::vector<size_t> rows;
        for (size_t r : seq->rows) {
            blur.push_back(ds.load(r, "blur"));
            rows.push_back(r);
        }
        const int n = static_cast<int>(blur.size());
        if (n < 5) continue;
        report.eval_height = blur[0].dim(1);
        report.eval_width = blur[0].dim(2);
        std::vector<Tensor> sharp;
        if (report.has_metrics)
            for (size_t r : seq->rows) sharp.push_back(ds.load(r, "sharp"));

        std::set<int> produced;
        auto run_window = [&](int s, int len) {
            std::vector<Tensor> wb(blur.begin() + s, blur.begin() + s + len);
            std::vector<size_t> wr(rows.begin() + s, rows.begin() + s + len);
            std::vector<Tensor> outs = runner.run(wb, wr);
            for (size_t i = 0; i < outs.size(); ++i) {
                int center = s + 2 + static_cast<int>(i);
                if (produced.count(center)) continue;
                produced.insert(center);
                if (report.has_metrics) {
                    Real p = psnr(sharp[static_cast<size_t>(center)], outs[i]);
                    if (std::isinf(p)) {
                        ++psnr_excluded;
                    } else {
                        psnr_acc += p;
                        ssim_acc += ssim(sharp[static_cast<size_t>(center)], outs[i]);
                        ++scored;
                    }
                }
            }
        };

        const int win = std::min(F, n);
        int s = 0;
        while (s + win <= n) {
            run_window(s, win);
            if (timing_window.empty()) {
                timing_window.assign(blur.begin(), blur.begin() + win);
                timing_rows.assign(rows.begin(), rows.begin() + win);
            }
            s += std::max(1, win - 4);
        }
        if (static_cast<int>(produced.size()) < n - 4) run_window(n - win, win);
    }

    if (psnr_excluded > 0)
        std::fprintf(stderr,
                     "eval: %d identical frame(s) scored +inf PSNR, excluded from the mean\n",
                     psnr_excluded);
    if (report.has_metrics && scored > 0) {
        report.psnr_mean = psnr_acc / scored;
        report.ssim_mean = ssim_acc / scored;
    }
    report.frames_scored = scored;

    if (!timing_window.empty()) {
        int warm = 0, timed = 0;
        double elapsed = 0;
        while (timed < opts.runtime_frames) {
            auto t0 = std::chrono::steady_clock::now();
            std::vector<Tensor> outs = runner.run(timing_window, timing_rows);
            auto t1 = std::chrono::steady_clock::now();
            int produced = static_cast<int>(outs.size());
            if (warm < opts.warmup_frames) {
                warm += produced;
            } else {
                timed += produced;
                elapsed += std::chrono::duration<double>(t1 - t0).count();
            }
        }
        report.runtime_s = elapsed / timed;
    }
    return report;
}

namespace {

std::string cell(Real v, bool present) {
    if (!present) return "-";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

}  // namespace

std::vector<MetricsReport> parse_report_tsv(const std::string& path) {
    std::ifstream in(path);
    if (!in.good()) throw std::runtime_error("missing report: " + path);
    std::vector<MetricsReport> reports;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        MetricsReport r;
        std::string psnr_s, ssim_s, tok;
        std::getline(ls, r.model, '\t');
        std::getline(ls, psnr_s, '\t');
        std::getline(ls, ssim_s, '\t');
        std::getline(ls, tok, '\t');
        r.gmacs = std::stod(tok);
        std::getline(ls, tok, '\t');
        r.params_m = std::stod(tok);
        std::getline(ls, tok, '\t');
        r.runtime_s = std::stod(tok);
        r.has_metrics = psnr_s != "-";
        if (r.has_metrics) {
            r.psnr_mean = std::stod(psnr_s);
            r.ssim_mean = std::stod(ssim_s);
        }
        reports.push_back(std::move(r));
    }
    return reports;
}

void render_report(std::vector<MetricsReport> reports, const ReportPaths& paths) {
    check(!reports.empty(), "render_report: no reports");
    std::sort(reports.begin(), reports.end(), [](const MetricsReport& a, const MetricsReport& b) {
        if (a.has_metrics != b.has_metrics) return a.has_metrics;
        if (a.psnr_mean != b.psnr_mean) return a.psnr_mean > b.psnr_mean;
        return a.model < b.model;
    });

    if (!paths.tsv.empty()) {
        std::ofstream out(paths.tsv);
        check(out.good(), "render_report: cannot write " + paths.tsv);
        out << "model\tpsnr\tssim\tgmacs\tparams_M\ttime_s\n";
        for (const auto& r : reports) {
            char buf[160];
            std::snprintf(buf, sizeof(buf), "%.2f\t%.2f\t%.6f", r.gmacs, r.params_m,
                          r.runtime_s);
            out << r.model << '\t' << cell(r.psnr_mean, r.has_metrics) << '\t'
                << cell(r.ssim_mean, r.has_metrics) << '\t' << buf << '\n';
        }
    }

    if (!paths.table.empty()) {
        std::ofstream out(paths.table);
        check(out.good(), "render_report: cannot write " + paths.table);
        char line[200];
        std::snprintf(line, sizeof(line), "%-26s %10s %10s %10s %10s %10s\n", "model", "PSNR",
                      "SSIM", "GMACs", "Param(M)", "Time(s)");
        out << line;
        for (const auto& r : reports) {
            std::snprintf(line, sizeof(line), "%-26s %10s %10s %10.2f %10.2f %10.4f\n",
                          r.model.c_str(), cell(r.psnr_mean, r.has_metrics).c_str(),
                          cell(r.ssim_mean, r.has_metrics).c_str(), r.gmacs, r.params_m,
                          r.runtime_s);
            out << line;
        }
        out << "\nGMACs are per 720P frame and include MMP-Net inference when enabled.\n";
        for (const auto& r : reports)
            if (r.eval_width > 0) {
                std::snprintf(line, sizeof(line),
                              "Time(s) is wall clock per frame at %dx%d, MMP-Net included.\n",
                              r.eval_width, r.eval_height);
                out << line;
                break;
            }
    }

    if (!paths.scatter_png.empty()) {
        std::vector<Series> pts;
        for (const auto& r : reports) {
            if (!r.has_metrics) continue;
            Series s;
            s.label = r.model;
            s.x.push_back(r.gmacs);
            s.y.push_back(static_cast<double>(r.psnr_mean));
            pts.push_back(std::move(s));
        }
        if (!pts.empty()) {
            PlotSpec spec;
            spec.title = "PSNR VS GMACS";
            spec.xlabel = "GMACS";
            spec.ylabel = "PSNR";
            spec.scatter = true;
            spec.label_points = true;
            render_plot(pts, spec, paths.scatter_png);
        }
    }

    if (!paths.loss_curves_png.empty() && !paths.metrics_log.empty()) {
        std::ifstream in(paths.metrics_log);
        if (in.good()) {
            std::string header;
            std::getline(in, header);
            std::vector<std::string> cols;
            {
                std::istringstream hs(header);
                std::string c;
                while (std::getline(hs, c, '\t')) cols.push_back(c);
            }
            std::vector<Series> series(cols.size() > 2 ? cols.size() - 2 : 0);
            for (size_t i = 2; i < cols.size(); ++i) series[i - 2].label = cols[i];
            std::string line;
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                std::istringstream ls(line);
                std::string tok;
                std::getline(ls, tok, '\t');
                double epoch = std::stod(tok);
                std::getline(ls, tok, '\t');  // lr
                for (size_t i = 0; i < series.size() && std::getline(ls, tok, '\t'); ++i) {
                    if (tok == "-" || tok.empty()) continue;
                    series[i].x.push_back(epoch);
                    series[i].y.push_back(std::stod(tok));
                }
            }
            series.erase(std::remove_if(series.begin(), series.end(),
                                        [](const Series& s) { return s.x.empty(); }),
                         series.end());
            if (!series.empty()) {
                PlotSpec spec;
                spec.title = "TRAINING CURVES";
                spec.xlabel = "EPOCH";
                spec.ylabel = "VALUE";
                render_plot(series, spec, paths.loss_curves_png);
            }
        }
    }
}

}  // namespace mm
