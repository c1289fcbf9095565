#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "semformer/tensor.hpp"

namespace semformer {

struct SegMetrics {
    std::vector<double> per_class_iou;  // length K+1, index 0 = background; NaN when undefined
    double miou = 0.0;                  // mean over classes with a defined IoU
    double fp_rate = 0.0;               // foreground false positives / total pixels
    double fn_rate = 0.0;               // foreground false negatives / total pixels
};

// fused: (K, H, W) maps already at image resolution (upsample beforehand).
// Absent classes (label 0) never win; a synthetic background channel holds
// the constant tau_bg. Output values: 0 = background, c+1 = class c.
std::vector<std::uint8_t> pseudo_mask(const Tensor& fused, const std::vector<int>& label,
                                      double tau_bg);

// Entry (g, p) counts pixels with ground truth g predicted p; both in
// {0..K}. Out-of-range values raise an error naming the pixel.
Tensor confusion(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& gt,
                 std::int64_t num_classes);

// IoU_c = TP/(TP+FP+FN) per class incl. background; mIoU over defined
// classes; FP/FN rates over foreground classes, normalized by total pixels.
SegMetrics metrics_from_confusion(const Tensor& conf);

// K per-class grayscale PNGs (floor(255*v)) plus one palette-indexed
// pseudo-mask PNG; returns the written file count (always K+1).
std::size_t export_maps(const Tensor& fused, const std::vector<int>& label, double tau_bg,
                        const std::string& dir, const std::string& image_id);

// K-channel float array as .npy.
void export_maps_npy(const Tensor& fused, const std::string& dir, const std::string& image_id);

}  // namespace semformer
