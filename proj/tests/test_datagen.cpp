#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mm/datagen.hpp"
#include "mm/image.hpp"
#include "mm/synth.hpp"
#include "oracles.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace mm;
namespace fs = std::filesystem;

namespace {

FlowField const_flow(int h, int w, Real u, Real v) {
    FlowField f;
    f.h = h;
    f.w = w;
    f.u.assign(static_cast<size_t>(h) * w, u);
    f.v.assign(static_cast<size_t>(h) * w, v);
    return f;
}

WindowFlows const_window_flows(int n, int h, int w, Real u, Real v) {
    WindowFlows flows;
    flows.to_prev.resize(static_cast<size_t>(n));
    flows.to_next.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        if (i > 0) flows.to_prev[static_cast<size_t>(i)] = const_flow(h, w, u, v);
        if (i + 1 < n) flows.to_next[static_cast<size_t>(i)] = const_flow(h, w, u, v);
    }
    return flows;
}

fs::path fresh_dir(const char* name) {
    fs::path p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("blur synthesis closed-form cases") {
    Tensor zeros = Tensor::zeros({3, 4, 4});
    Tensor ones = Tensor::full({3, 4, 4}, 1.0);
    CrfSpec identity{CrfSpec::Type::Identity, 2.2};

    SharpWindow same{{ones, ones, ones}};
    Tensor b1 = synthesize_blur(same, identity);
    for (Real v : b1.vec()) CHECK(v == 1.0);

    SharpWindow mix{{zeros, ones}};
    Tensor b2 = synthesize_blur(mix, identity);
    for (Real v : b2.vec()) CHECK(v == doctest::Approx(0.5));

    CrfSpec gamma = parse_crf("gamma:2.2");
    Tensor b3 = synthesize_blur(mix, gamma);
    const Real want = std::pow(0.5, 1.0 / 2.2);  // linearize, average, re-encode
    for (Real v : b3.vec()) CHECK(v == doctest::Approx(want).epsilon(1e-12));

    CHECK_THROWS_AS((void)synthesize_blur(SharpWindow{}, identity), std::invalid_argument);
    CHECK_THROWS_AS((void)parse_crf("srgb"), std::invalid_argument);
}

TEST_CASE("blur output stays in range for random windows") {
    RngStream rng(3);
    SharpWindow w;
    for (int i = 0; i < 5; ++i) w.frames.push_back(oracle::random_tensor({3, 6, 6}, rng, 0, 1));
    for (const char* crf : {"identity", "gamma:2.2", "gamma:1.8"}) {
        Tensor b = synthesize_blur(w, parse_crf(crf));
        for (Real v : b.vec()) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("compute_mmp closed-form cases") {
    SharpWindow w;
    for (int i = 0; i < 3; ++i) w.frames.push_back(Tensor::zeros({3, 4, 4}));

    MagnitudeMap zero = compute_mmp(w, const_window_flows(3, 4, 4, 0, 0), 15.0);
    for (Real v : zero.values) CHECK(v == 0.0);

    // magnitude 7.5 everywhere: 3-4-5 triangle scaled by 1.5
    MagnitudeMap half = compute_mmp(w, const_window_flows(3, 4, 4, 4.5, 6.0), 15.0);
    for (Real v : half.values) CHECK(v == doctest::Approx(0.5).epsilon(1e-12));

    CHECK_THROWS_AS((void)compute_mmp(w, const_window_flows(3, 4, 4, 0, 0), 0.0),
                    std::invalid_argument);
    CHECK_THROWS_AS((void)compute_mmp(w, const_window_flows(2, 4, 4, 0, 0), 15.0),
                    std::invalid_argument);
}

namespace {

// Scalar double-loop reference for the window-averaged normalized magnitude.
std::vector<Real> mmp_oracle(const WindowFlows& flows, int n, int h, int w, Real K) {
    std::vector<Real> out(static_cast<size_t>(h) * w, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            size_t p = static_cast<size_t>(y) * w + x;
            Real acc = 0;
            for (int i = 0; i < n; ++i) {
                const auto& fp = flows.to_prev[static_cast<size_t>(i)];
                const auto& fn = flows.to_next[static_cast<size_t>(i)];
                Real m = 0;
                if (fp && fn) {
                    Real mp = std::sqrt(fp->u[p] * fp->u[p] + fp->v[p] * fp->v[p]);
                    Real mn = std::sqrt(fn->u[p] * fn->u[p] + fn->v[p] * fn->v[p]);
                    m = (mp + mn) / Real(2);
                } else {
                    const auto& f = fp ? fp : fn;
                    m = std::sqrt(f->u[p] * f->u[p] + f->v[p] * f->v[p]);
                }
                acc += m;
            }
            Real v = acc / (K * static_cast<Real>(n));
            out[p] = std::min(Real(1), std::max(Real(0), v));
        }
    return out;
}

WindowFlows random_window_flows(int n, int h, int w, RngStream& rng, Real lo, Real hi) {
    WindowFlows flows;
    flows.to_prev.resize(static_cast<size_t>(n));
    flows.to_next.resize(static_cast<size_t>(n));
    auto rand_flow = [&](FlowField& f) {
        f.h = h;
        f.w = w;
        f.u.resize(static_cast<size_t>(h) * w);
        f.v.resize(static_cast<size_t>(h) * w);
        for (auto& x : f.u) x = rng.uniform(lo, hi);
        for (auto& x : f.v) x = rng.uniform(lo, hi);
    };
    for (int i = 0; i < n; ++i) {
        if (i > 0) rand_flow(flows.to_prev[static_cast<size_t>(i)].emplace());
        if (i + 1 < n) rand_flow(flows.to_next[static_cast<size_t>(i)].emplace());
    }
    return flows;
}

}  // namespace

TEST_CASE("compute_mmp matches the scalar oracle bitwise") {
    RngStream rng(17);
    for (int n : {2, 3, 7}) {
        SharpWindow w;
        for (int i = 0; i < n; ++i) w.frames.push_back(Tensor::zeros({3, 8, 8}));
        WindowFlows flows = random_window_flows(n, 8, 8, rng, -6, 6);
        MagnitudeMap got = compute_mmp(w, flows, 15.0);
        std::vector<Real> want = mmp_oracle(flows, n, 8, 8, 15.0);
        for (size_t i = 0; i < want.size(); ++i) CHECK(got.values[i] == want[i]);
    }
}

TEST_CASE("compute_mmp window-reversal invariance and flow scaling") {
    RngStream rng(19);
    const int n = 5;
    SharpWindow w;
    for (int i = 0; i < n; ++i) w.frames.push_back(Tensor::zeros({3, 8, 8}));
    WindowFlows flows = random_window_flows(n, 8, 8, rng, -1.0, 1.0);  // no clamping
    MagnitudeMap base = compute_mmp(w, flows, 15.0);

    WindowFlows rev;
    rev.to_prev.resize(n);
    rev.to_next.resize(n);
    for (int i = 0; i < n; ++i) {
        rev.to_prev[static_cast<size_t>(i)] = flows.to_next[static_cast<size_t>(n - 1 - i)];
        rev.to_next[static_cast<size_t>(i)] = flows.to_prev[static_cast<size_t>(n - 1 - i)];
    }
    MagnitudeMap reversed = compute_mmp(w, rev, 15.0);
    for (size_t i = 0; i < base.values.size(); ++i)
        CHECK(reversed.values[i] == doctest::Approx(base.values[i]).epsilon(1e-12));

    const Real alpha = 0.4;
    WindowFlows scaled = flows;
    for (auto& of : scaled.to_prev)
        if (of)
            for (size_t i = 0; i < of->u.size(); ++i) {
                of->u[i] *= alpha;
                of->v[i] *= alpha;
            }
    for (auto& of : scaled.to_next)
        if (of)
            for (size_t i = 0; i < of->u.size(); ++i) {
                of->u[i] *= alpha;
                of->v[i] *= alpha;
            }
    MagnitudeMap s = compute_mmp(w, scaled, 15.0);
    for (size_t i = 0; i < s.values.size(); ++i)
        CHECK(s.values[i] == doctest::Approx(alpha * base.values[i]).epsilon(1e-12));
}

TEST_CASE("build_dataset window arithmetic and determinism") {
    fs::path raw = fresh_dir("mm_dg_raw");
    SynthSpec spec;
    spec.frames = 21;
    spec.height = 24;
    spec.width = 24;
    write_synthetic_sequence(spec, (raw / "seq000").string());

    DatagenConfig cfg;
    cfg.raw_root = raw.string();
    cfg.window_min = cfg.window_max = 7;
    cfg.stride = 7;
    cfg.K = 15.0;
    cfg.seed = 5;
    cfg.flow.iterations = 30;  // keep the test quick

    fs::path out1 = fresh_dir("mm_dg_out1");
    cfg.out_root = out1.string();
    DatasetManifest m1 = build_dataset(cfg);
    CHECK(m1.rows.size() == 3);  // floor(21/7)
    CHECK(m1.rows[0].frame_id == 3);
    CHECK(m1.rows[1].frame_id == 10);

    fs::path out2 = fresh_dir("mm_dg_out2");
    cfg.out_root = out2.string();
    DatasetManifest m2 = build_dataset(cfg);
    CHECK(hash_file((out1 / "manifest.tsv").string()) ==
          hash_file((out2 / "manifest.tsv").string()));
    for (const char* kind : {"blur", "sharp", "mmp", "mmpc"})
        CHECK(hash_file(sample_path(out1.string(), m1.rows[0], kind)) ==
              hash_file(sample_path(out2.string(), m2.rows[0], kind)));

    // 13 usable frames -> exactly one window
    fs::path raw13 = fresh_dir("mm_dg_raw13");
    SynthSpec s13 = spec;
    s13.frames = 13;
    write_synthetic_sequence(s13, (raw13 / "seq000").string());
    DatagenConfig c13 = cfg;
    c13.raw_root = raw13.string();
    fs::path out3 = fresh_dir("mm_dg_out3");
    c13.out_root = out3.string();
    CHECK(build_dataset(c13).rows.size() == 1);

    // shorter than the minimum window -> skipped, not fatal
    fs::path raw5 = fresh_dir("mm_dg_raw5");
    SynthSpec s5 = spec;
    s5.frames = 5;
    write_synthetic_sequence(s5, (raw5 / "seq000").string());
    DatagenConfig c5 = cfg;
    c5.raw_root = raw5.string();
    fs::path out4 = fresh_dir("mm_dg_out4");
    c5.out_root = out4.string();
    CHECK(build_dataset(c5).rows.empty());

    // dataset files decode to the documented formats
    Tensor blur = load_png(sample_path(out1.string(), m1.rows[0], "blur"));
    Tensor mmp = load_png(sample_path(out1.string(), m1.rows[0], "mmp"));
    CHECK(blur.dim(0) == 3);
    CHECK(mmp.dim(0) == 1);
    DatasetManifest reloaded = load_manifest(out1.string());
    REQUIRE(reloaded.rows.size() == m1.rows.size());
    CHECK(reloaded.rows[2].window_len == 7);
    CHECK(reloaded.rows[2].K == doctest::Approx(15.0));

    for (const auto& p : {raw, out1, out2, raw13, out3, raw5, out4}) fs::remove_all(p);
}

TEST_CASE("16-bit magnitude storage reaches the documented precision") {
    fs::path dir = fresh_dir("mm_dg_16bit");
    Tensor m = Tensor::zeros({1, 4, 4});
    for (int i = 0; i < 16; ++i) m.data()[i] = i / 15.0;
    save_png_gray16((dir / "m.png").string(), m);
    Tensor r = load_png((dir / "m.png").string());
    for (int i = 0; i < 16; ++i)
        CHECK(std::abs(r.data()[i] - m.data()[i]) <= 0.5 / 65535.0 + 1e-12);
    fs::remove_all(dir);
}

TEST_CASE("trim_for_epoch sizes and reshuffling") {
    std::vector<size_t> all = trim_for_epoch(100, 1.0, 7);
    CHECK(all.size() == 100);
    for (size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);

    CHECK(trim_for_epoch(22499, 0.5, 1).size() == 11250);  // round half up

    auto a = trim_for_epoch(200, 0.5, 1);
    auto b = trim_for_epoch(200, 0.5, 2);
    auto c = trim_for_epoch(200, 0.5, 3);
    CHECK((a != b || b != c));
    CHECK_THROWS_AS((void)trim_for_epoch(10, 0.0, 1), std::invalid_argument);
}
