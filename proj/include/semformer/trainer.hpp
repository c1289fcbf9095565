#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "semformer/caae.hpp"
#include "semformer/checkpoint.hpp"
#include "semformer/config.hpp"
#include "semformer/dataset.hpp"
#include "semformer/segnet.hpp"

namespace semformer {

// base_lr * (1 - iter/max_iter)^power. iter > max_iter clamps to 0 with a
// warning on stderr.
double poly_lr(std::int64_t iter, std::int64_t max_iter, double base_lr, double power);

// SGD with momentum, weight decay, and optional global-norm gradient
// clipping (clip = 0 disables).
class SgdOptimizer {
public:
    SgdOptimizer(double momentum, double weight_decay, double grad_clip);

    void init(const std::vector<std::pair<std::string, Tensor*>>& params);
    void step(const std::vector<std::pair<std::string, Tensor*>>& params,
              const std::vector<Tensor>& grads, double lr);

    std::vector<Tensor>& velocity() { return velocity_; }

private:
    double momentum_;
    double weight_decay_;
    double grad_clip_;
    std::vector<Tensor> velocity_;
};

// Thrown when a training step produces a non-finite loss; the last good
// checkpoint has already been written when this escapes train_*.
struct TrainAbort : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Model construction from config (seeded, deterministic).
Caae build_caae(const TrainConfig& cfg);
SegNet build_segnet(const TrainConfig& cfg);

// Checkpoint <-> model weight transfer.
void store_model(Checkpoint& ckpt, std::vector<std::pair<std::string, Tensor*>> params);
void restore_model(const Checkpoint& ckpt, std::vector<std::pair<std::string, Tensor*>> params);

// Stage 1: minimizes ss + recon by SGD over the dataset; freezes S by
// construction (the returned checkpoint is the single source of CAAE
// weights afterwards). Writes <out_dir>/caae.ckpt and caae_metrics.csv.
Checkpoint train_caae(const std::vector<LabeledImage>& dataset, const TrainConfig& cfg,
                      const std::string& out_dir);

// Stage 2: minimizes the enabled subset of CF/CB/AS/AC/SS' against the
// frozen CAAE. Verifies the CAAE weight hash every epoch and fails hard on
// drift. Writes <out_dir>/seg.ckpt and seg_metrics.csv.
Checkpoint train_seg(const std::vector<LabeledImage>& dataset, const Caae& caae,
                     const TrainConfig& cfg, const std::string& out_dir);

Caae caae_from_checkpoint(const Checkpoint& ckpt);
SegNet segnet_from_checkpoint(const Checkpoint& ckpt);

// (H, W, 3) -> (H*W, 3) view used to feed images into the networks.
inline Tensor image_matrix(const Tensor& hwc) {
    return hwc.reshaped({hwc.dim(0) * hwc.dim(1), 3});
}

}  // namespace semformer
