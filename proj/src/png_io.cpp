#include "pfcn/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <vector>

namespace pfcn {

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

void write_png(const std::filesystem::path& path, int w, int h, int bit_depth, int color_type,
               const std::vector<png_bytep>& rows) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot open for writing: " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng initialization failed: " + path.string());
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("failed writing PNG: " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, w, h, bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, const_cast<png_bytepp>(rows.data()));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

struct Decoded {
    int w = 0, h = 0, bit_depth = 0, color_type = 0;
    std::vector<unsigned char> pixels;
    size_t rowbytes = 0;
};

Decoded read_png(const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot open: " + path.string());
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        throw IoError("not a PNG file: " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng initialization failed: " + path.string());
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("corrupt PNG: " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    Decoded d;
    d.w = static_cast<int>(png_get_image_width(png, info));
    d.h = static_cast<int>(png_get_image_height(png, info));
    d.bit_depth = png_get_bit_depth(png, info);
    d.color_type = png_get_color_type(png, info);
    d.rowbytes = png_get_rowbytes(png, info);
    d.pixels.resize(d.rowbytes * d.h);
    std::vector<png_bytep> rows(d.h);
    for (int y = 0; y < d.h; ++y) rows[y] = d.pixels.data() + d.rowbytes * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return d;
}

}  // namespace

void write_rgb_png(const std::filesystem::path& path, const RgbImage& img) {
    std::vector<png_bytep> rows(img.h);
    for (int y = 0; y < img.h; ++y)
        rows[y] = const_cast<png_bytep>(img.data.data() + static_cast<size_t>(y) * img.w * 3);
    write_png(path, img.w, img.h, 8, PNG_COLOR_TYPE_RGB, rows);
}

RgbImage read_rgb_png(const std::filesystem::path& path) {
    Decoded d = read_png(path);
    if (d.bit_depth != 8 || d.color_type != PNG_COLOR_TYPE_RGB)
        throw IoError("expected an 8-bit RGB PNG: " + path.string());
    RgbImage img(d.h, d.w);
    for (int y = 0; y < d.h; ++y)
        std::copy_n(d.pixels.data() + d.rowbytes * y, static_cast<size_t>(d.w) * 3,
                    img.data.data() + static_cast<size_t>(y) * d.w * 3);
    return img;
}

void write_gray16_png(const std::filesystem::path& path, const IdMap& ids) {
    std::vector<unsigned char> buf(static_cast<size_t>(ids.w) * ids.h * 2);
    for (size_t i = 0; i < ids.data.size(); ++i) {
        const int32_t v = ids.data[i];
        if (v < 0 || v > 65535) throw IoError("id " + std::to_string(v) + " does not fit a 16-bit PNG: " + path.string());
        buf[2 * i] = static_cast<unsigned char>(v >> 8);  // PNG stores 16-bit samples big-endian
        buf[2 * i + 1] = static_cast<unsigned char>(v & 0xFF);
    }
    std::vector<png_bytep> rows(ids.h);
    for (int y = 0; y < ids.h; ++y) rows[y] = buf.data() + static_cast<size_t>(y) * ids.w * 2;
    write_png(path, ids.w, ids.h, 16, PNG_COLOR_TYPE_GRAY, rows);
}

IdMap read_gray16_png(const std::filesystem::path& path) {
    Decoded d = read_png(path);
    if (d.bit_depth != 16 || d.color_type != PNG_COLOR_TYPE_GRAY)
        throw IoError("expected a 16-bit grayscale PNG: " + path.string());
    IdMap ids(d.h, d.w, 0);
    for (int y = 0; y < d.h; ++y)
        for (int x = 0; x < d.w; ++x) {
            const unsigned char* p = d.pixels.data() + d.rowbytes * y + 2 * x;
            ids.at(y, x) = (static_cast<int32_t>(p[0]) << 8) | p[1];
        }
    return ids;
}

}  // namespace pfcn
