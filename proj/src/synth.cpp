#include "mm/synth.hpp"

#include "mm/image.hpp"
#include "mm/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

namespace mm {

namespace {

struct Box {
    Real cx, cy, vx, vy, hw, hh;
    Real color[3];
    Real stripe_fx, stripe_fy, stripe_phase;
};

Real coverage(Real d) { return std::clamp(d + Real(0.5), Real(0), Real(1)); }

Real wrapped_delta(Real x, Real c, int n) {
    Real d = std::fmod(x - c, static_cast<Real>(n));
    if (d < -n / Real(2)) d += n;
    if (d >= n / Real(2)) d -= n;
    return d;
}

}  // namespace

std::vector<Tensor> render_synthetic_sequence(const SynthSpec& spec) {
    check(spec.frames >= 1 && spec.height >= 8 && spec.width >= 8,
          "synth: degenerate sequence spec");
    RngStream rng = derive_rng(spec.seed, "synth");
    std::vector<Box> boxes;
    for (int i = 0; i < spec.objects; ++i) {
        Box b;
        b.cx = rng.uniform(0.2, 0.8) * spec.width;
        b.cy = rng.uniform(0.2, 0.8) * spec.height;
        Real speed = rng.uniform(spec.min_speed, spec.max_speed);
        Real angle = rng.uniform(0, 2 * M_PI);
        b.vx = speed * std::cos(angle);
        b.vy = speed * std::sin(angle);
        b.hw = rng.uniform(0.10, 0.20) * spec.width;
        b.hh = rng.uniform(0.10, 0.20) * spec.height;
        for (Real& c : b.color) c = rng.uniform(0.35, 0.9);
        // stripes ride along with the object, so motion blur erases them
        Real period = rng.uniform(3.0, 6.0);
        Real theta = rng.uniform(0, 2 * M_PI);
        b.stripe_fx = std::cos(theta) * 2 * M_PI / period;
        b.stripe_fy = std::sin(theta) * 2 * M_PI / period;
        b.stripe_phase = rng.uniform(0, 2 * M_PI);
        boxes.push_back(b);
    }

    std::vector<Tensor> frames;
    const int64_t plane = static_cast<int64_t>(spec.height) * spec.width;
    for (int t = 0; t < spec.frames; ++t) {
        Tensor img = Tensor::zeros({3, spec.height, spec.width});
        Real* data = img.data();
        for (int y = 0; y < spec.height; ++y)
            for (int x = 0; x < spec.width; ++x) {
                // shaded background with an 8px checker so flow has texture
                Real gx = static_cast<Real>(x) / spec.width;
                Real gy = static_cast<Real>(y) / spec.height;
                Real checker = (((x / 8) + (y / 8)) % 2) ? Real(0.08) : Real(0);
                Real base = Real(0.18) + Real(0.35) * gx + Real(0.2) * gy + checker;
                Real rgb[3] = {base, base * Real(0.95), base * Real(0.9)};
                for (const Box& b : boxes) {
                    Real cx = b.cx + b.vx * t;
                    Real cy = b.cy + b.vy * t;
                    // wrap so objects stay in frame over long sequences
                    cx = std::fmod(std::fmod(cx, spec.width) + spec.width, spec.width);
                    cy = std::fmod(std::fmod(cy, spec.height) + spec.height, spec.height);
                    Real dx = wrapped_delta(x, cx, spec.width);
                    Real dy = wrapped_delta(y, cy, spec.height);
                    Real a = coverage(b.hw - std::abs(dx)) * coverage(b.hh - std::abs(dy));
                    if (a <= 0) continue;
                    Real stripe = Real(0.3) * std::sin(b.stripe_fx * dx + b.stripe_fy * dy +
                                                       b.stripe_phase);
                    for (int c = 0; c < 3; ++c) {
                        Real oc = std::clamp(b.color[c] * (1 + stripe), Real(0), Real(1));
                        rgb[c] = (1 - a) * rgb[c] + a * oc;
                    }
                }
                int64_t i = static_cast<int64_t>(y) * spec.width + x;
                for (int c = 0; c < 3; ++c)
                    data[c * plane + i] = std::clamp(rgb[c], Real(0), Real(1));
            }
        frames.push_back(std::move(img));
    }
    return frames;
}

void write_synthetic_sequence(const SynthSpec& spec, const std::string& dir) {
    std::filesystem::create_directories(dir);
    std::vector<Tensor> frames = render_synthetic_sequence(spec);
    for (size_t i = 0; i < frames.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "%08zu.png", i);
        save_png_rgb8(dir + "/" + name, frames[i]);
    }
}

}  // namespace mm
