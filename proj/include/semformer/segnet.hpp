#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "semformer/autodiff.hpp"
#include "semformer/backbone.hpp"
#include "semformer/caae.hpp"
#include "semformer/tensor.hpp"

namespace semformer {

struct SegNetConfig {
    BackboneConfig backbone;       // num_class_tokens = num_classes
    std::int64_t num_classes = 3;  // K
    std::int64_t class_dim = 16;   // D, must match the CAAE
    std::int64_t cra_blocks = 4;   // U, number of last blocks averaged for attention maps
    double sigma = 0.075;          // activation suppression scale
    bool pair_averaged_cross = false;  // wrap the cross term in the outer 1/C as well

    std::int64_t map_h() const { return backbone.patches_h(); }
    std::int64_t map_w() const { return backbone.patches_w(); }
    void validate() const;
};

// Segmentation network: ViT backbone with K class tokens. Patch tokens are
// projected per pixel into K sigmoid activation maps; class tokens carry
// per-class embeddings for the similarity loss and the class-relative
// attention readout.
struct SegNet {
    SegNetConfig cfg;
    Backbone backbone;
    Tensor w_patch;                // (d', K), bias-free
    std::vector<Tensor> w_class;   // K matrices (d', D), bias-free

    void init(const SegNetConfig& config, Rng& rng);
    std::vector<std::pair<std::string, Tensor*>> named_params();
};

struct BoundSegNet {
    const SegNet* model = nullptr;
    BoundBackbone backbone;
    ad::Var w_patch;
    std::vector<ad::Var> w_class;
    std::vector<ad::Var> flat;
};

BoundSegNet bind(const SegNet& model, bool trainable);

// --- Operations ---

// M = sigmoid(t_patch W_patch)^T, kept as (K, h'*w').
ad::Var activation_maps(const ad::Var& patch_tokens, const ad::Var& w_patch);

// Class-relative attention A': slice class-token-to-patch attention from the
// last U head-averaged records, average, then min-max normalize per class
// over spatial positions. Constant rows map to zero. Returns (K, h'*w').
Tensor class_relative_attention(const std::vector<Tensor>& mean_attn_per_block, std::int64_t U,
                                std::int64_t num_classes);

// Fused map = M * A' elementwise.
Tensor fuse(const Tensor& maps, const Tensor& attention);

struct ComplementaryPair {
    ad::Var upsampled_map;  // M'_c, (H*W) column
    ad::Var foreground;     // I_F = M'_c * I, (H*W, 3)
    ad::Var background;     // I_B = I - I_F, exact complement
};

// map_c: one class channel as (h', w'); image: (H*W, 3). The map is
// bilinearly upsampled to (image_h, image_w) unless already that size.
ComplementaryPair complementary_pair(const ad::Var& image, const ad::Var& map_c,
                                     std::int64_t image_h, std::int64_t image_w);

// Eq-form adversarial losses over per-probe embedding matrices. embeddings[i]
// is the full (K, D) CAAE embedding of the probe image built for class
// present[i]; the own term uses row present[i], cross terms use rows
// present[j] of the same matrix.
ad::Var cf_loss(const std::vector<ad::Var>& fg_embeddings, const ad::Var& semantics,
                const std::vector<std::int64_t>& present, bool pair_averaged_cross,
                double eps = kSimEps);
ad::Var cb_loss(const std::vector<ad::Var>& bg_embeddings, const ad::Var& semantics,
                const std::vector<std::int64_t>& present, bool pair_averaged_cross,
                double eps = kSimEps);

// sigma-scaled mean activation.
ad::Var as_loss(const ad::Var& maps, double sigma);

// N_c = max over other channels; single class -> zeros.
ad::Var background_maps(const ad::Var& maps);
Tensor background_maps(const Tensor& maps);

// Mean over present classes and pixels of (M_c + N_c - 1)^2.
ad::Var ac_loss(const ad::Var& maps, const std::vector<std::int64_t>& present);

// BCE over similarities of relu(t_class_c W_class_c) against frozen S.
ad::Var seg_ss_loss(const ad::Var& class_tokens, const std::vector<ad::Var>& w_class,
                    const ad::Var& semantics, const std::vector<int>& label,
                    double eps = kSimEps);

struct SegLossBundle {
    ad::Var cf, cb, as_, ac, ss_prime;  // nullptr when the flag is off
    ad::Var total;
    double sigma = 0.0;
    std::int64_t available_classes = 0;

    double term(const ad::Var& v) const { return v ? v->value[0] : 0.0; }
};

struct SegLossFlags {
    bool cf = true, cb = true, as_ = true, ac = true, ss_prime = true;
};

// Forward pass products needed by training and inference.
struct SegForward {
    BackboneActivations acts;
    ad::Var class_tokens;  // (K, d')
    ad::Var patch_tokens;  // (h'w', d')
    ad::Var maps;          // M, (K, h'w')
};

SegForward seg_forward(const BoundSegNet& bs, const ad::Var& image);

// Builds every enabled loss term against the frozen CAAE and sums them.
// Throws std::runtime_error naming the offending term if any is non-finite.
SegLossBundle seg_total_loss(const BoundSegNet& bs, const SegForward& fwd, const BoundCaae& caae,
                             const ad::Var& image, const std::vector<int>& label,
                             const SegLossFlags& flags);

}  // namespace semformer
