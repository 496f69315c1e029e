#include "mm/image.hpp"

#include "mm/rng.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

namespace mm {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void fail(const std::string& what, const std::string& path) {
    throw std::runtime_error(what + ": " + path);
}

}  // namespace

Tensor load_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) fail("cannot open image", path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail("png allocation failed", path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail("png decode error", path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    int color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);

    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    color = png_get_color_type(png, info);
    depth = png_get_bit_depth(png, info);
    int channels = png_get_channels(png, info);
    if (channels != 1 && channels != 3) fail("unsupported channel count", path);

    size_t rowbytes = png_get_rowbytes(png, info);
    std::vector<png_byte> buf(rowbytes * h);
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = buf.data() + y * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Tensor out = Tensor::zeros({channels, static_cast<int>(h), static_cast<int>(w)});
    Real* dst = out.data();
    const int64_t plane = static_cast<int64_t>(h) * w;
    for (png_uint_32 y = 0; y < h; ++y) {
        const png_byte* row = rows[y];
        for (png_uint_32 x = 0; x < w; ++x) {
            for (int c = 0; c < channels; ++c) {
                Real v;
                if (depth == 16) {
                    size_t i = (static_cast<size_t>(x) * channels + c) * 2;
                    v = static_cast<Real>((row[i] << 8) | row[i + 1]) / Real(65535);
                } else {
                    v = static_cast<Real>(row[static_cast<size_t>(x) * channels + c]) /
                        Real(255);
                }
                dst[c * plane + static_cast<int64_t>(y) * w + x] = v;
            }
        }
    }
    return out;
}

namespace {

void write_png(const std::string& path, int w, int h, int color_type, int depth,
               const std::vector<png_byte>& bytes) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) fail("cannot write image", path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        fail("png allocation failed", path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail("png encode error", path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), depth,
                 color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    size_t rowbytes = png_get_rowbytes(png, info);
    std::vector<png_bytep> rows(static_cast<size_t>(h));
    for (int y = 0; y < h; ++y)
        rows[static_cast<size_t>(y)] = const_cast<png_bytep>(bytes.data() + y * rowbytes);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

int quant(Real v, int maxval) {
    Real c = std::min(Real(1), std::max(Real(0), v));
    return static_cast<int>(std::lround(c * maxval));
}

}  // namespace

void save_png_rgb8(const std::string& path, const Tensor& img) {
    check(img.ndim() == 3 && img.dim(0) == 3, "save_png_rgb8: expected (3,H,W)");
    int h = img.dim(1), w = img.dim(2);
    const int64_t plane = static_cast<int64_t>(h) * w;
    std::vector<png_byte> bytes(static_cast<size_t>(plane) * 3);
    const Real* src = img.data();
    for (int64_t i = 0; i < plane; ++i)
        for (int c = 0; c < 3; ++c)
            bytes[static_cast<size_t>(i) * 3 + c] =
                static_cast<png_byte>(quant(src[c * plane + i], 255));
    write_png(path, w, h, PNG_COLOR_TYPE_RGB, 8, bytes);
}

void save_png_gray16(const std::string& path, const Tensor& img) {
    check(img.ndim() == 3 && img.dim(0) == 1, "save_png_gray16: expected (1,H,W)");
    int h = img.dim(1), w = img.dim(2);
    const int64_t plane = static_cast<int64_t>(h) * w;
    std::vector<png_byte> bytes(static_cast<size_t>(plane) * 2);
    const Real* src = img.data();
    for (int64_t i = 0; i < plane; ++i) {
        int v = quant(src[i], 65535);
        bytes[static_cast<size_t>(i) * 2] = static_cast<png_byte>(v >> 8);
        bytes[static_cast<size_t>(i) * 2 + 1] = static_cast<png_byte>(v & 0xff);
    }
    write_png(path, w, h, PNG_COLOR_TYPE_GRAY, 16, bytes);
}

Tensor to_gray(const Tensor& img) {
    check(img.ndim() == 3, "to_gray: expected (C,H,W)");
    if (img.dim(0) == 1) return img.detach();
    check(img.dim(0) == 3, "to_gray: expected 1 or 3 channels");
    int h = img.dim(1), w = img.dim(2);
    const int64_t plane = static_cast<int64_t>(h) * w;
    Tensor out = Tensor::zeros({1, h, w});
    const Real* src = img.data();
    Real* dst = out.data();
    for (int64_t i = 0; i < plane; ++i)
        dst[i] = Real(0.299) * src[i] + Real(0.587) * src[plane + i] +
                 Real(0.114) * src[2 * plane + i];
    return out;
}

uint64_t hash_file(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) fail("cannot open file for hashing", path);
    uint64_t h = 0xcbf29ce484222325ull;
    char buf[1 << 14];
    size_t n;
    while ((n = std::fread(buf, 1, sizeof(buf), fp.get())) > 0) h = fnv1a64(buf, n, h);
    return h;
}

}  // namespace mm
