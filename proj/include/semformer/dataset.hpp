#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "semformer/rng.hpp"
#include "semformer/tensor.hpp"

namespace semformer {

// Image-level training sample. gt_mask (0 = background, c+1 = class c) is
// evaluation-only and never read by training code.
struct LabeledImage {
    std::string id;
    Tensor pixels;             // (H, W, 3) in [0,1]
    std::vector<int> label;    // multi-hot, length K
    std::vector<std::uint8_t> gt_mask;  // H*W values in {0..K}; empty when absent

    std::int64_t height() const { return pixels.dim(0); }
    std::int64_t width() const { return pixels.dim(1); }
    bool has_mask() const { return !gt_mask.empty(); }
    std::vector<int> present_classes() const;
};

struct DatasetSpec {
    std::int64_t num_images = 200;
    std::int64_t image_size = 64;
    std::int64_t num_classes = 3;
    std::int64_t shapes_min = 1;
    std::int64_t shapes_max = 3;
    std::int64_t patch_size = 8;  // image_size must divide by this
    std::uint64_t seed = 0;

    void validate() const;
};

enum class ShapeKind { Circle, Square, Triangle, Diamond, Cross, Ring };

struct ClassStyle {
    ShapeKind kind;
    std::array<double, 3> color;
    const char* name;
};

// Fixed palette: class identity is a (shape, color) pair.
const std::vector<ClassStyle>& class_palette();

// Exact rasterization predicate; the ground-truth mask is this same set.
// size is the full extent of the shape (diameter / side / bar length).
bool shape_covers(ShapeKind kind, std::int64_t cy, std::int64_t cx, std::int64_t size,
                  std::int64_t y, std::int64_t x);

// Deterministic given spec.seed. Each image contains shapes_min..shapes_max
// non-overlapping shapes from distinct classes on a textured background.
std::vector<LabeledImage> generate_synthetic(const DatasetSpec& spec);

// VOC-style layout: images/<id>.png, labels.txt, optional masks/<id>.png,
// <split>.txt listing ids. Mask palette: 0 -> black, c+1 -> class color.
void export_voc_style(const std::vector<LabeledImage>& images, const std::string& root_dir,
                      const std::string& split);
std::vector<LabeledImage> load_voc_style(const std::string& root_dir, const std::string& split);

// Random scale, crop to crop_size x crop_size, horizontal flip. The label is
// preserved; the mask, when present, is transformed identically. A scale
// that would make the image smaller than the crop is raised to the minimum.
LabeledImage augment(const LabeledImage& img, double scale_min, double scale_max,
                     std::int64_t crop_size, double flip_prob, Rng& rng);

}  // namespace semformer
