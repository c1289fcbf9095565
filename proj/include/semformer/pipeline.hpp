#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "semformer/config.hpp"
#include "semformer/dataset.hpp"
#include "semformer/evaluator.hpp"
#include "semformer/segnet.hpp"
#include "semformer/trainer.hpp"

namespace semformer {

// Inference products for one image at the network's native map resolution.
struct InferenceResult {
    Tensor maps;       // M, (K, h', w')
    Tensor attention;  // A', (K, h', w')
    Tensor fused;      // M * A', (K, h', w')
};

InferenceResult infer_image(const SegNet& net, const Tensor& pixels_hwc);

// (K, h, w) -> (K, H, W) per-channel bilinear.
Tensor upsample_maps(const Tensor& maps, std::int64_t out_h, std::int64_t out_w);

struct EvalOutcome {
    SegMetrics metrics;
    Tensor total_confusion;
    std::int64_t images_evaluated = 0;
};

// Pseudo-masks from (optionally CRA-fused) maps vs. ground truth across a
// dataset. Images lacking a mask are skipped. use_cra=false evaluates raw M.
EvalOutcome evaluate_dataset(const SegNet& net, const std::vector<LabeledImage>& images,
                             double tau_bg, bool use_cra);

// All-background baseline over the same images (lower bound for sanity).
EvalOutcome evaluate_all_background(const std::vector<LabeledImage>& images,
                                    std::int64_t num_classes);

struct AblateRow {
    std::string label;
    double miou = 0.0;
    std::map<std::string, double> final_losses;
    bool finite = false;
};

// Table-3-style grid: CF always on, CB/AS/AC over all 8 combinations.
// Each row trains with seed = cfg.seed + row index and evaluates pseudo-masks.
std::vector<AblateRow> ablate_loss_flags(const std::vector<LabeledImage>& train_images,
                                         const std::vector<LabeledImage>& eval_images,
                                         const Caae& caae, const TrainConfig& base,
                                         const std::string& work_dir);

// AS-scale grid (sigma values retrain).
std::vector<AblateRow> ablate_sigma(const std::vector<LabeledImage>& train_images,
                                    const std::vector<LabeledImage>& eval_images, const Caae& caae,
                                    const TrainConfig& base, const std::vector<double>& sigmas,
                                    const std::string& work_dir);

// U grid: trains once, evaluates the class-relative attention readout for
// every U in [1, depth].
std::vector<AblateRow> ablate_cra_blocks(const std::vector<LabeledImage>& train_images,
                                         const std::vector<LabeledImage>& eval_images,
                                         const Caae& caae, const TrainConfig& base,
                                         const std::string& work_dir);

void write_ablate_csv(const std::vector<AblateRow>& rows, const std::string& path);

}  // namespace semformer
