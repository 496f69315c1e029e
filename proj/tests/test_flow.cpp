#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mm/flow.hpp"
#include "mm/rng.hpp"
#include "oracles.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

using namespace mm;

namespace {

// Constant background with one bright square whose left-top corner sits at
// (x0,y0); integer shifts give exact ground-truth displacement.
Tensor square_image(int h, int w, int y0, int x0, int side) {
    Tensor img = Tensor::full({3, h, w}, 0.2);
    Real* d = img.data();
    int64_t plane = static_cast<int64_t>(h) * w;
    for (int y = y0; y < y0 + side; ++y)
        for (int x = x0; x < x0 + side; ++x)
            for (int c = 0; c < 3; ++c) d[c * plane + y * static_cast<int64_t>(w) + x] = 0.9;
    return img;
}

FlowField random_flow(int h, int w, RngStream& rng, Real lo = -4, Real hi = 4) {
    FlowField f;
    f.h = h;
    f.w = w;
    f.u.resize(static_cast<size_t>(h) * w);
    f.v.resize(static_cast<size_t>(h) * w);
    for (auto& x : f.u) x = rng.uniform(lo, hi);
    for (auto& x : f.v) x = rng.uniform(lo, hi);
    return f;
}

}  // namespace

TEST_CASE("identical frames give zero flow") {
    Tensor a = square_image(32, 32, 10, 12, 8);
    FlowField f = estimate_flow(a, a, "builtin");
    Real m = 0;
    for (size_t i = 0; i < f.u.size(); ++i)
        m = std::max(m, std::max(std::abs(f.u[i]), std::abs(f.v[i])));
    CHECK(m < 1e-9);
}

TEST_CASE("2px shift is recovered inside the square") {
    const int shift = 2, side = 12;
    Tensor a = square_image(48, 48, 18, 16, side);
    Tensor b = square_image(48, 48, 18, 16 + shift, side);
    FlowField f = estimate_flow(a, b, "builtin");
    // interior of the moving square, one pixel margin
    Real umin = 1e9, umax = -1e9, vmax = 0;
    for (int y = 20; y < 18 + side - 2; ++y)
        for (int x = 18; x < 16 + side - 2; ++x) {
            size_t i = static_cast<size_t>(y) * 48 + x;
            umin = std::min(umin, f.u[i]);
            umax = std::max(umax, f.u[i]);
            vmax = std::max(vmax, std::abs(f.v[i]));
        }
    CHECK(umin > shift - 0.5);
    CHECK(umax < shift + 0.5);
    CHECK(vmax < 0.5);
}

TEST_CASE("external flow files round-trip and feed estimate_flow") {
    std::string path = (std::filesystem::temp_directory_path() / "mm_test_flow.flow").string();
    FlowField f;
    f.h = 6;
    f.w = 5;
    f.u.assign(30, 3.0);
    f.v.assign(30, 4.0);
    save_flow_file(path, f);
    Tensor a = Tensor::zeros({3, 6, 5});
    FlowField g = estimate_flow(a, a, "external:" + path);
    for (size_t i = 0; i < g.u.size(); ++i) {
        CHECK(g.u[i] == doctest::Approx(3.0));
        CHECK(g.v[i] == doctest::Approx(4.0));
    }
    std::filesystem::remove(path);
}

TEST_CASE("flow error paths") {
    Tensor a = Tensor::zeros({3, 8, 8});
    Tensor b = Tensor::zeros({3, 8, 9});
    CHECK_THROWS_AS((void)estimate_flow(a, b, "builtin"), std::invalid_argument);
    CHECK_THROWS_AS((void)estimate_flow(a, a, "raft"), std::invalid_argument);
    try {
        (void)estimate_flow(a, a, "external:/nonexistent/path.flow");
        FAIL("expected an error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("/nonexistent/path.flow") != std::string::npos);
    }
    CHECK_THROWS_AS((void)bidirectional_magnitude(nullptr, nullptr), std::invalid_argument);
}

TEST_CASE("bidirectional magnitude closed-form cases") {
    FlowField prev, next;
    prev.h = next.h = 4;
    prev.w = next.w = 4;
    prev.u.assign(16, 3.0);
    prev.v.assign(16, 4.0);
    next.u.assign(16, 0.0);
    next.v.assign(16, 0.0);
    FrameMagnitude m = bidirectional_magnitude(&prev, &next);
    for (Real v : m.values) CHECK(v == doctest::Approx(2.5));

    FlowField only;
    only.h = only.w = 4;
    only.u.assign(16, 0.0);
    only.v.assign(16, 3.0);
    FrameMagnitude e = bidirectional_magnitude(nullptr, &only);
    for (Real v : e.values) CHECK(v == doctest::Approx(3.0));
}

TEST_CASE("bidirectional magnitude matches the per-pixel oracle bitwise") {
    RngStream rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        FlowField prev = random_flow(8, 8, rng);
        FlowField next = random_flow(8, 8, rng);
        FrameMagnitude m = bidirectional_magnitude(&prev, &next);
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) {
                size_t i = static_cast<size_t>(y) * 8 + x;
                Real mp = std::sqrt(prev.u[i] * prev.u[i] + prev.v[i] * prev.v[i]);
                Real mn = std::sqrt(next.u[i] * next.u[i] + next.v[i] * next.v[i]);
                Real want = (mp + mn) / Real(2);
                CHECK(m.values[i] == want);
            }
    }
}

TEST_CASE("magnitude properties: symmetry, scaling, positivity") {
    RngStream rng(12);
    FlowField a = random_flow(8, 8, rng);
    FlowField b = random_flow(8, 8, rng);
    FrameMagnitude ab = bidirectional_magnitude(&a, &b);
    FrameMagnitude ba = bidirectional_magnitude(&b, &a);
    for (size_t i = 0; i < ab.values.size(); ++i) CHECK(ab.values[i] == ba.values[i]);

    const Real alpha = 0.37;
    FlowField as = a, bs = b;
    for (auto& v : as.u) v *= alpha;
    for (auto& v : as.v) v *= alpha;
    for (auto& v : bs.u) v *= alpha;
    for (auto& v : bs.v) v *= alpha;
    FrameMagnitude scaled = bidirectional_magnitude(&as, &bs);
    for (size_t i = 0; i < scaled.values.size(); ++i)
        CHECK(scaled.values[i] == doctest::Approx(alpha * ab.values[i]).epsilon(1e-12));

    FlowField zero = a;
    std::fill(zero.u.begin(), zero.u.end(), 0.0);
    std::fill(zero.v.begin(), zero.v.end(), 0.0);
    FrameMagnitude z = bidirectional_magnitude(&zero, &zero);
    for (Real v : z.values) CHECK(v == 0.0);
    for (Real v : ab.values) CHECK(v >= 0.0);
}
