#include "semformer/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace semformer {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::uint8_t to_byte_round(double v) {
    v = std::min(1.0, std::max(0.0, v));
    return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

std::uint8_t to_byte_floor(double v) {
    v = std::min(1.0, std::max(0.0, v));
    return static_cast<std::uint8_t>(std::floor(v * 255.0));
}

void write_rows(const std::string& path, std::int64_t height, std::int64_t width, int color_type,
                const std::vector<std::uint8_t>& bytes,
                const std::vector<std::array<std::uint8_t, 3>>* palette) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw std::runtime_error("png_io: cannot open for writing: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png_io: png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("png_io: png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("png_io: write failed: " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    if (color_type == PNG_COLOR_TYPE_PALETTE) {
        std::vector<png_color> colors(palette->size());
        for (std::size_t i = 0; i < palette->size(); ++i) {
            colors[i].red = (*palette)[i][0];
            colors[i].green = (*palette)[i][1];
            colors[i].blue = (*palette)[i][2];
        }
        png_set_PLTE(png, info, colors.data(), static_cast<int>(colors.size()));
    }
    png_write_info(png, info);

    const std::int64_t stride =
        color_type == PNG_COLOR_TYPE_RGB ? width * 3 : width;
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    for (std::int64_t y = 0; y < height; ++y) {
        rows[static_cast<std::size_t>(y)] =
            const_cast<png_bytep>(bytes.data() + y * stride);
    }
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_png_rgb(const std::string& path, const Tensor& img) {
    if (img.rank() != 3 || img.dim(2) != 3) {
        throw std::invalid_argument("write_png_rgb: expected (H, W, 3), got " + img.shape_str());
    }
    const std::int64_t h = img.dim(0), w = img.dim(1);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(h * w * 3));
    for (std::int64_t i = 0; i < h * w * 3; ++i) bytes[static_cast<std::size_t>(i)] = to_byte_round(img[i]);
    write_rows(path, h, w, PNG_COLOR_TYPE_RGB, bytes, nullptr);
}

void write_png_gray(const std::string& path, const Tensor& img) {
    if (img.rank() != 2) {
        throw std::invalid_argument("write_png_gray: expected (H, W), got " + img.shape_str());
    }
    const std::int64_t h = img.dim(0), w = img.dim(1);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(h * w));
    for (std::int64_t i = 0; i < h * w; ++i) bytes[static_cast<std::size_t>(i)] = to_byte_floor(img[i]);
    write_rows(path, h, w, PNG_COLOR_TYPE_GRAY, bytes, nullptr);
}

void write_png_palette(const std::string& path, const std::vector<std::uint8_t>& indices,
                       std::int64_t height, std::int64_t width,
                       const std::vector<std::array<std::uint8_t, 3>>& palette) {
    if (static_cast<std::int64_t>(indices.size()) != height * width) {
        throw std::invalid_argument("write_png_palette: index count mismatch");
    }
    write_rows(path, height, width, PNG_COLOR_TYPE_PALETTE, indices, &palette);
}

namespace {

struct PngReader {
    png_structp png = nullptr;
    png_infop info = nullptr;
    FilePtr fp;

    explicit PngReader(const std::string& path) : fp(std::fopen(path.c_str(), "rb")) {
        if (!fp) throw std::runtime_error("png_io: cannot open for reading: " + path);
        png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        info = png_create_info_struct(png);
        if (!png || !info) throw std::runtime_error("png_io: reader allocation failed");
        if (setjmp(png_jmpbuf(png))) {
            throw std::runtime_error("png_io: read failed: " + path);
        }
        png_init_io(png, fp.get());
        png_read_info(png, info);
    }
    ~PngReader() { png_destroy_read_struct(&png, &info, nullptr); }
};

}  // namespace

Tensor read_png_rgb(const std::string& path) {
    PngReader r(path);
    if (setjmp(png_jmpbuf(r.png))) throw std::runtime_error("png_io: read failed: " + path);

    png_set_expand(r.png);  // palette -> rgb, gray -> 8 bit
    png_set_strip_16(r.png);
    png_set_strip_alpha(r.png);
    png_set_gray_to_rgb(r.png);
    png_read_update_info(r.png, r.info);

    const std::int64_t h = png_get_image_height(r.png, r.info);
    const std::int64_t w = png_get_image_width(r.png, r.info);
    const std::size_t stride = png_get_rowbytes(r.png, r.info);
    std::vector<std::uint8_t> raw(static_cast<std::size_t>(h) * stride);
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));
    for (std::int64_t y = 0; y < h; ++y) rows[static_cast<std::size_t>(y)] = raw.data() + y * stride;
    png_read_image(r.png, rows.data());

    Tensor img({h, w, 3});
    for (std::int64_t y = 0; y < h; ++y) {
        const std::uint8_t* row = raw.data() + y * stride;
        for (std::int64_t x = 0; x < w; ++x) {
            for (std::int64_t c = 0; c < 3; ++c) {
                img.at3(y, x, c) = static_cast<double>(row[x * 3 + c]) / 255.0;
            }
        }
    }
    return img;
}

std::vector<std::uint8_t> read_png_indices(const std::string& path, std::int64_t& height,
                                           std::int64_t& width) {
    PngReader r(path);
    if (setjmp(png_jmpbuf(r.png))) throw std::runtime_error("png_io: read failed: " + path);

    const int color_type = png_get_color_type(r.png, r.info);
    if (color_type != PNG_COLOR_TYPE_PALETTE && color_type != PNG_COLOR_TYPE_GRAY) {
        throw std::runtime_error("png_io: mask PNG must be palette or grayscale: " + path);
    }
    if (png_get_bit_depth(r.png, r.info) < 8) png_set_packing(r.png);
    png_set_strip_16(r.png);
    png_read_update_info(r.png, r.info);

    height = png_get_image_height(r.png, r.info);
    width = png_get_image_width(r.png, r.info);
    const std::size_t stride = png_get_rowbytes(r.png, r.info);
    std::vector<std::uint8_t> raw(static_cast<std::size_t>(height) * stride);
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    for (std::int64_t y = 0; y < height; ++y) rows[static_cast<std::size_t>(y)] = raw.data() + y * stride;
    png_read_image(r.png, rows.data());

    std::vector<std::uint8_t> out(static_cast<std::size_t>(height * width));
    for (std::int64_t y = 0; y < height; ++y) {
        const std::uint8_t* row = raw.data() + y * stride;
        for (std::int64_t x = 0; x < width; ++x) out[static_cast<std::size_t>(y * width + x)] = row[x];
    }
    return out;
}

}  // namespace semformer
