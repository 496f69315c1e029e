#include "mm/synth.hpp"

#include <CLI11.hpp>

#include <cstdio>

// Writes synthetic sharp sequences in the raw layout the datagen subcommand
// consumes: <out>/<seq_id>/00000000.png ...
int main(int argc, char** argv) {
    CLI::App app{"Generate synthetic sharp sequences for the deblurring pipeline"};
    std::string out = "demo_raw";
    int sequences = 1, frames = 70, height = 64, width = 64;
    uint64_t seed = 1;
    app.add_option("--out", out, "output directory");
    app.add_option("--sequences", sequences, "number of sequences");
    app.add_option("--frames", frames, "frames per sequence");
    app.add_option("--height", height, "frame height");
    app.add_option("--width", width, "frame width");
    app.add_option("--seed", seed, "random seed");
    CLI11_PARSE(app, argc, argv);

    try {
        for (int s = 0; s < sequences; ++s) {
            mm::SynthSpec spec;
            spec.frames = frames;
            spec.height = height;
            spec.width = width;
            spec.seed = seed + static_cast<uint64_t>(s);
            char name[32];
            std::snprintf(name, sizeof(name), "seq%03d", s);
            mm::write_synthetic_sequence(spec, out + "/" + name);
        }
        std::printf("wrote %d sequence(s) under %s\n", sequences, out.c_str());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
