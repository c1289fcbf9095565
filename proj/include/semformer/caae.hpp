#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "semformer/autodiff.hpp"
#include "semformer/backbone.hpp"
#include "semformer/rng.hpp"
#include "semformer/tensor.hpp"

namespace semformer {

enum class TokenMerge { Sum, Mean, Max };

TokenMerge token_merge_from_string(const std::string& s);
std::string to_string(TokenMerge m);

// Similarity/log epsilon guard used by every cosine-based loss.
inline constexpr double kSimEps = 1e-7;

struct CaaeConfig {
    BackboneConfig encoder;        // num_class_tokens stays 0
    std::int64_t decoder_depth = 2;
    std::int64_t num_classes = 3;  // K
    std::int64_t class_dim = 16;   // D
    TokenMerge merge = TokenMerge::Sum;

    void validate() const;
};

// Asymmetric reconstruction decoder: fresh position embeddings, transformer
// blocks, FC readout to P*P*3 patches tiled in raster order.
struct CaaeDecoder {
    Tensor pos_emb;  // (n_patches, d)
    std::vector<BlockWeights> blocks;
    Tensor ln_f_gamma, ln_f_beta;
    Tensor fc_w, fc_b;  // (d, P*P*3), (P*P*3)
};

// Class-Aware AutoEncoder. Encoder tokens are projected to primary tokens
// T = relu(t_L W1), reduced over the token axis into per-class embeddings E,
// compared against learned class semantics S = relu(W_S), and run through
// the decoder for image reconstruction.
struct Caae {
    CaaeConfig cfg;
    Backbone encoder;
    Tensor w1;   // (d, K*D), bias-free
    Tensor w_s;  // (K, D)
    Tensor w2;   // (K*D, d), bias-free
    CaaeDecoder decoder;

    void init(const CaaeConfig& config, Rng& rng);
    std::vector<std::pair<std::string, Tensor*>> named_params();
};

struct BoundCaae {
    const Caae* model = nullptr;
    BoundBackbone encoder;
    ad::Var w1, w_s, w2;
    ad::Var dec_pos_emb;
    std::vector<BoundBlock> dec_blocks;
    ad::Var dec_ln_f_gamma, dec_ln_f_beta, dec_fc_w, dec_fc_b;
    std::vector<ad::Var> flat;  // same order as Caae::named_params
};

BoundCaae bind(const Caae& model, bool trainable);

// --- Operations (Tensor shapes follow the module contract) ---

// T = relu(t_L W1), kept as (hw, K*D); logically (hw, K, D).
ad::Var primary_tokens(const ad::Var& t_L, const ad::Var& w1);

// E[c,d] = reduce over token axis of T; (K, D).
ad::Var reduce_to_embeddings(const ad::Var& primary, std::int64_t num_classes,
                             std::int64_t class_dim, TokenMerge mode);

// S = relu(W_S).
ad::Var class_semantics(const ad::Var& w_s);

// a^T b / (|a||b| + eps); returns 0 when both inputs are zero.
ad::Var cosine_sim(const ad::Var& a, const ad::Var& b, double eps = kSimEps);
double cosine_sim(const Tensor& a, const Tensor& b, double eps = kSimEps);

// BCE over per-class similarities, each clamped to [eps, 1-eps] before log.
ad::Var bce_over_sims(const std::vector<ad::Var>& sims, const std::vector<int>& label,
                      double eps = kSimEps);

ad::Var ss_loss(const ad::Var& embeddings, const ad::Var& semantics,
                const std::vector<int>& label, double eps = kSimEps);

// t'_L = reshape(T, (hw, K*D)) W2.
ad::Var recover_tokens(const ad::Var& primary, const ad::Var& w2);

// Decoder forward: recovered tokens -> (H*W, 3) image.
ad::Var reconstruct(const BoundCaae& bc, const ad::Var& recovered);

// Mean over all pixels/channels of squared error.
ad::Var recon_loss(const ad::Var& image, const ad::Var& recon);

ad::Var caae_loss(const ad::Var& ss, const ad::Var& recon);

struct CaaeForward {
    ad::Var encoder_tokens;  // t_L
    ad::Var primary;         // T
    ad::Var embeddings;      // E
    ad::Var semantics;       // S
    ad::Var ss;              // similarity loss
    ad::Var recon_image;     // I_recon, empty when with_reconstruction=false
    ad::Var recon;           // reconstruction loss
    ad::Var total;
};

CaaeForward caae_forward(const BoundCaae& bc, const ad::Var& image, const std::vector<int>& label,
                         bool with_reconstruction = true);

// Encoder + primary tokens + reduction only; the stage-2 embedding probe.
ad::Var caae_embed(const BoundCaae& bc, const ad::Var& image);

}  // namespace semformer
