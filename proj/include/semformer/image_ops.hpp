#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "semformer/tensor.hpp"

namespace semformer {

// Plain (non-differentiable) image helpers shared by dataset augmentation
// and evaluation. Bilinear sampling uses half-pixel centers, matching the
// differentiable upsample op.
Tensor resize_bilinear_hwc(const Tensor& img, std::int64_t out_h, std::int64_t out_w);
Tensor resize_bilinear_plane(const Tensor& plane, std::int64_t out_h, std::int64_t out_w);
std::vector<std::uint8_t> resize_nearest_mask(const std::vector<std::uint8_t>& mask,
                                              std::int64_t h, std::int64_t w, std::int64_t out_h,
                                              std::int64_t out_w);

// Minimal .npy (version 1.0) writer; float64, C order.
void write_npy(const std::string& path, const Tensor& t);

}  // namespace semformer
