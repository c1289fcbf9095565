#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "semformer/autodiff.hpp"
#include "semformer/rng.hpp"
#include "semformer/tensor.hpp"

namespace semformer {

// Minimal ViT-style backbone shared by the autoencoder and the segmentation
// network. Pre-norm blocks (LN -> MHSA -> residual, LN -> MLP -> residual),
// learnable 1-D position embeddings per token slot, final LayerNorm.
struct BackboneConfig {
    std::int64_t image_size = 64;   // square input, pixels
    std::int64_t patch_size = 8;
    std::int64_t embed_dim = 64;
    std::int64_t depth = 4;
    std::int64_t heads = 4;
    std::int64_t mlp_ratio = 4;
    std::int64_t num_class_tokens = 0;

    std::int64_t patches_h() const { return image_size / patch_size; }
    std::int64_t patches_w() const { return image_size / patch_size; }
    std::int64_t n_patches() const { return patches_h() * patches_w(); }
    std::int64_t n_tokens() const { return num_class_tokens + n_patches(); }
    std::int64_t head_dim() const { return embed_dim / heads; }

    // Throws std::invalid_argument on violated invariants.
    void validate() const;
};

struct BlockWeights {
    Tensor ln1_gamma, ln1_beta;
    Tensor w_qkv, b_qkv;  // (d, 3d), (3d)
    Tensor w_out, b_out;  // (d, d), (d)
    Tensor ln2_gamma, ln2_beta;
    Tensor w_fc1, b_fc1;  // (d, mlp*d), (mlp*d)
    Tensor w_fc2, b_fc2;  // (mlp*d, d), (d)
};

struct Backbone {
    BackboneConfig cfg;
    Tensor patch_w, patch_b;  // (P*P*3, d), (d)
    Tensor class_tokens;      // (num_class_tokens, d); empty when 0
    Tensor pos_emb;           // (n_tokens, d)
    std::vector<BlockWeights> blocks;
    Tensor ln_f_gamma, ln_f_beta;

    void init(const BackboneConfig& config, Rng& rng);
    std::vector<std::pair<std::string, Tensor*>> named_params(const std::string& prefix);
};

// Weight leaves bound into one autodiff graph. Create one per training step.
struct BoundBlock {
    ad::Var ln1_gamma, ln1_beta, w_qkv, b_qkv, w_out, b_out;
    ad::Var ln2_gamma, ln2_beta, w_fc1, b_fc1, w_fc2, b_fc2;
};

struct BoundBackbone {
    const Backbone* model = nullptr;
    ad::Var patch_w, patch_b, class_tokens, pos_emb;
    std::vector<BoundBlock> blocks;
    ad::Var ln_f_gamma, ln_f_beta;
    // Same order as Backbone::named_params.
    std::vector<ad::Var> flat;
};

BoundBackbone bind(const Backbone& model, bool trainable);

// Leaf creation for a single block, appending to flat in declaration order.
BoundBlock bind_block(const BlockWeights& b, bool trainable, std::vector<ad::Var>& flat);

struct BlockForwardOut {
    ad::Var tokens;
    std::vector<ad::Var> head_probs;  // per head (N, N) attention probabilities
};

// Pre-norm transformer block: LN -> MHSA -> residual, LN -> MLP -> residual.
BlockForwardOut transformer_block_forward(const BoundBlock& b, const ad::Var& x,
                                          std::int64_t heads);

struct BackboneActivations {
    ad::Var tokens;                           // (n_tokens, d), after final LN
    std::vector<std::vector<ad::Var>> attn;   // [block][head] -> (N, N) row-stochastic
};

// tokens must already include class tokens and position embeddings.
BackboneActivations backbone_forward_tokens(const BoundBackbone& bb, const ad::Var& tokens);

// Affine projection of flattened P x P x 3 patches, raster order.
// image: (H*W, 3) pixel rows.
ad::Var patchify(const ad::Var& image, const BackboneConfig& cfg, const ad::Var& proj_w,
                 const ad::Var& proj_b);

// patchify + class-token prepend + position embedding + blocks.
BackboneActivations backbone_forward_image(const BoundBackbone& bb, const ad::Var& image);

// Arithmetic mean over the head axis of one block's attention records.
Tensor mean_head_attention(const std::vector<std::vector<ad::Var>>& attn, std::int64_t block);
Tensor mean_head_attention(const std::vector<Tensor>& heads);

}  // namespace semformer
