#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "semformer/tensor.hpp"

namespace semformer {

// RGB image, values clamped to [0,1] and rounded to 8 bit. img: (H, W, 3).
void write_png_rgb(const std::string& path, const Tensor& img);

// Grayscale, byte value floor(255 * v) with v clamped to [0,1]. img: (H, W).
void write_png_gray(const std::string& path, const Tensor& img);

// Palette-indexed PNG (VOC-style masks).
void write_png_palette(const std::string& path, const std::vector<std::uint8_t>& indices,
                       std::int64_t height, std::int64_t width,
                       const std::vector<std::array<std::uint8_t, 3>>& palette);

// Any color PNG -> (H, W, 3) in [0,1].
Tensor read_png_rgb(const std::string& path);

// Palette PNG -> raw indices; 8-bit grayscale -> byte values.
std::vector<std::uint8_t> read_png_indices(const std::string& path, std::int64_t& height,
                                           std::int64_t& width);

}  // namespace semformer
