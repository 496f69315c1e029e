#include "mm/datagen.hpp"

#include "mm/image.hpp"
#include "mm/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace fs = std::filesystem;

namespace mm {

Tensor MagnitudeMap::to_tensor() const {
    Tensor t = Tensor::zeros({1, h, w});
    std::copy(values.begin(), values.end(), t.data());
    return t;
}

MagnitudeMap MagnitudeMap::from_tensor(const Tensor& t, Real k_norm) {
    check(t.ndim() == 3 && t.dim(0) == 1, "MagnitudeMap: expected (1,H,W)");
    MagnitudeMap m;
    m.h = t.dim(1);
    m.w = t.dim(2);
    m.values = t.vec();
    m.k_norm = k_norm;
    return m;
}

CrfSpec parse_crf(const std::string& text) {
    CrfSpec crf;
    if (text == "identity") {
        crf.type = CrfSpec::Type::Identity;
    } else if (text == "gamma") {
        crf.type = CrfSpec::Type::Gamma;
    } else if (text.rfind("gamma:", 0) == 0) {
        crf.type = CrfSpec::Type::Gamma;
        crf.gamma = std::stod(text.substr(6));
        check(crf.gamma > 0, "crf: gamma must be positive");
    } else {
        throw std::invalid_argument("crf: unknown spec '" + text + "'");
    }
    return crf;
}

Tensor synthesize_blur(const SharpWindow& window, const CrfSpec& crf) {
    check(!window.frames.empty(), "synthesize_blur: empty window");
    const Tensor& first = window.frames[0];
    for (const auto& f : window.frames)
        check(f.shape() == first.shape(), "synthesize_blur: frame shape mismatch");
    const int64_t n = first.numel();
    const Real inv_n = Real(1) / static_cast<Real>(window.frames.size());
    Tensor out = Tensor::zeros(first.shape());
    Real* acc = out.data();
    const bool gamma = crf.type == CrfSpec::Type::Gamma;
    for (const auto& f : window.frames) {
        const Real* src = f.data();
        if (gamma) {
            for (int64_t i = 0; i < n; ++i) acc[i] += std::pow(src[i], crf.gamma);
        } else {
            for (int64_t i = 0; i < n; ++i) acc[i] += src[i];
        }
    }
    if (gamma) {
        const Real inv_g = Real(1) / crf.gamma;
        for (int64_t i = 0; i < n; ++i) acc[i] = std::pow(acc[i] * inv_n, inv_g);
    } else {
        for (int64_t i = 0; i < n; ++i) acc[i] *= inv_n;
    }
    return out;
}

MagnitudeMap compute_mmp(const SharpWindow& window, const WindowFlows& flows, Real K) {
    check(K > 0, "compute_mmp: K must be positive");
    const size_t n = window.frames.size();
    check(n >= 2, "compute_mmp: window needs at least two frames");
    check(flows.to_prev.size() == n && flows.to_next.size() == n,
          "compute_mmp: flows inconsistent with window length");
    const int h = window.frames[0].dim(1);
    const int w = window.frames[0].dim(2);
    const size_t npx = static_cast<size_t>(h) * w;

    std::vector<Real> acc(npx, Real(0));
    for (size_t i = 0; i < n; ++i) {
        const FlowField* prev = flows.to_prev[i] ? &*flows.to_prev[i] : nullptr;
        const FlowField* next = flows.to_next[i] ? &*flows.to_next[i] : nullptr;
        FrameMagnitude m = bidirectional_magnitude(prev, next);
        check(m.h == h && m.w == w, "compute_mmp: flow shape mismatch");
        for (size_t p = 0; p < npx; ++p) acc[p] += m.values[p];
    }
    MagnitudeMap out;
    out.h = h;
    out.w = w;
    out.k_norm = K;
    out.values.resize(npx);
    const Real norm = K * static_cast<Real>(n);
    for (size_t p = 0; p < npx; ++p)
        out.values[p] = std::min(Real(1), std::max(Real(0), acc[p] / norm));
    return out;
}

MagnitudeMap center_frame_magnitude(const SharpWindow& window, Real K,
                                    const std::string& flow_method,
                                    const FlowOptions& fopts) {
    check(K > 0, "center_frame_magnitude: K must be positive");
    const size_t n = window.frames.size();
    check(n >= 2, "center_frame_magnitude: window needs at least two frames");
    const size_t c = n / 2;
    FlowField to_first = estimate_flow(window.frames[c], window.frames[0], flow_method, fopts);
    FlowField to_last =
        estimate_flow(window.frames[c], window.frames[n - 1], flow_method, fopts);
    FrameMagnitude m = bidirectional_magnitude(&to_first, &to_last);
    MagnitudeMap out;
    out.h = m.h;
    out.w = m.w;
    out.k_norm = K;
    out.values.resize(m.values.size());
    for (size_t p = 0; p < m.values.size(); ++p)
        out.values[p] = std::min(Real(1), std::max(Real(0), m.values[p] / K));
    return out;
}

namespace {

std::string pad8(int v) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%08d", v);
    return buf;
}

std::vector<std::string> list_sorted(const fs::path& dir, bool dirs) {
    std::vector<std::string> out;
    if (!fs::exists(dir)) return out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (dirs ? e.is_directory() : e.is_regular_file()) out.push_back(e.path().filename());
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::string external_flow_path(const std::string& dir, const std::string& seq, int i, int j) {
    return dir + "/" + seq + "/" + pad8(i) + "_" + pad8(j) + ".flow";
}

std::string flow_method_for(const DatagenConfig& cfg, const std::string& seq, int i, int j) {
    if (cfg.flow_method == "builtin") return "builtin";
    if (cfg.flow_method == "external")
        return "external:" + external_flow_path(cfg.external_flow_dir, seq, i, j);
    throw std::invalid_argument("datagen: unknown flow method '" + cfg.flow_method + "'");
}

std::string fmt_real(Real v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

}  // namespace

std::string DatasetManifest::sample_stem(size_t row) const {
    return pad8(rows[row].sample_index);
}

std::string sample_path(const std::string& root, const ManifestRow& row, const char* kind) {
    return root + "/" + row.split + "/" + row.seq_id + "/" + kind + "/" + pad8(row.sample_index) +
           ".png";
}

DatasetManifest build_dataset(const DatagenConfig& cfg) {
    check(cfg.window_min >= 2 && cfg.window_max >= cfg.window_min,
          "datagen: invalid window range");
    check(cfg.K > 0, "datagen: K must be positive");
    std::vector<std::string> seqs = list_sorted(cfg.raw_root, true);
    check(!seqs.empty(), "datagen: no sequence directories under " + cfg.raw_root);

    DatasetManifest manifest;
    for (const std::string& seq : seqs) {
        std::vector<std::string> frames = list_sorted(fs::path(cfg.raw_root) / seq, false);
        const int nframes = static_cast<int>(frames.size());
        if (nframes < cfg.window_min) {
            std::fprintf(stderr, "datagen: skipping sequence %s (%d frames < window %d)\n",
                         seq.c_str(), nframes, cfg.window_min);
            continue;
        }
        RngStream rng = derive_rng(cfg.seed, "datagen.windows." + seq);
        for (const char* kind : {"blur", "sharp", "mmp", "mmpc"}) {
            if (!cfg.write_center_magnitude && std::string(kind) == "mmpc") continue;
            fs::create_directories(fs::path(cfg.out_root) / cfg.split / seq / kind);
        }

        int pos = 0;
        int sample_index = 0;
        while (true) {
            int len = static_cast<int>(rng.uniform_int(cfg.window_min, cfg.window_max));
            if (pos + len > nframes) break;

            SharpWindow window;
            window.frames.reserve(static_cast<size_t>(len));
            for (int i = 0; i < len; ++i) {
                fs::path p = fs::path(cfg.raw_root) / seq / frames[static_cast<size_t>(pos + i)];
                window.frames.push_back(load_png(p.string()));
            }

            WindowFlows flows;
            flows.to_prev.resize(static_cast<size_t>(len));
            flows.to_next.resize(static_cast<size_t>(len));
            for (int i = 0; i < len; ++i) {
                if (i > 0)
                    flows.to_prev[static_cast<size_t>(i)] = estimate_flow(
                        window.frames[static_cast<size_t>(i)],
                        window.frames[static_cast<size_t>(i - 1)],
                        flow_method_for(cfg, seq, pos + i, pos + i - 1), cfg.flow);
                if (i + 1 < len)
                    flows.to_next[static_cast<size_t>(i)] = estimate_flow(
                        window.frames[static_cast<size_t>(i)],
                        window.frames[static_cast<size_t>(i + 1)],
                        flow_method_for(cfg, seq, pos + i, pos + i + 1), cfg.flow);
            }

            Tensor blur = synthesize_blur(window, cfg.crf);
            MagnitudeMap mmp = compute_mmp(window, flows, cfg.K);
            const int center = len / 2;

            ManifestRow row;
            row.split = cfg.split;
            row.seq_id = seq;
            row.frame_id = pos + center;
            row.window_len = len;
            row.K = cfg.K;
            row.sample_index = sample_index;

            save_png_rgb8(sample_path(cfg.out_root, row, "blur"), blur);
            save_png_rgb8(sample_path(cfg.out_root, row, "sharp"),
                          window.frames[static_cast<size_t>(center)]);
            save_png_gray16(sample_path(cfg.out_root, row, "mmp"), mmp.to_tensor());
            if (cfg.write_center_magnitude) {
                MagnitudeMap mc = center_frame_magnitude(
                    window, cfg.K,
                    cfg.flow_method == "builtin"
                        ? std::string("builtin")
                        : flow_method_for(cfg, seq, pos + center, pos),
                    cfg.flow);
                save_png_gray16(sample_path(cfg.out_root, row, "mmpc"), mc.to_tensor());
            }
            manifest.rows.push_back(std::move(row));

            ++sample_index;
            pos += cfg.stride > 0 ? cfg.stride : len;
        }
    }
    save_manifest(cfg.out_root, manifest);
    return manifest;
}

void save_manifest(const std::string& dataset_root, const DatasetManifest& manifest) {
    fs::create_directories(dataset_root);
    std::ofstream out(dataset_root + "/manifest.tsv");
    check(out.good(), "datagen: cannot write manifest under " + dataset_root);
    out << "split\tseq_id\tframe_id\twindow_len\tK\n";
    for (const auto& r : manifest.rows)
        out << r.split << '\t' << r.seq_id << '\t' << r.frame_id << '\t' << r.window_len << '\t'
            << fmt_real(r.K) << '\n';
}

DatasetManifest load_manifest(const std::string& dataset_root) {
    std::ifstream in(dataset_root + "/manifest.tsv");
    if (!in.good()) throw std::runtime_error("missing manifest: " + dataset_root + "/manifest.tsv");
    DatasetManifest manifest;
    std::string line;
    std::getline(in, line);  // header
    std::map<std::string, int> per_seq;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        ManifestRow row;
        std::string k;
        std::getline(ls, row.split, '\t');
        std::getline(ls, row.seq_id, '\t');
        ls >> row.frame_id >> row.window_len >> k;
        row.K = std::stod(k);
        row.sample_index = per_seq[row.split + "/" + row.seq_id]++;
        manifest.rows.push_back(std::move(row));
    }
    return manifest;
}

std::vector<size_t> trim_for_epoch(size_t total, Real fraction, uint64_t epoch_seed) {
    check(fraction > 0 && fraction <= 1, "trim_for_epoch: fraction must be in (0,1]");
    std::vector<size_t> idx(total);
    std::iota(idx.begin(), idx.end(), size_t(0));
    const size_t keep =
        static_cast<size_t>(std::llround(fraction * static_cast<Real>(total)));
    if (keep >= total) return idx;
    RngStream rng(epoch_seed);
    rng.shuffle(idx);
    idx.resize(keep);
    return idx;
}

}  // namespace mm
