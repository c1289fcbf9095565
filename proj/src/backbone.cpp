#include "semformer/backbone.hpp"

#include <cmath>
#include <stdexcept>

namespace semformer {

using ad::Var;

void BackboneConfig::validate() const {
    if (image_size <= 0 || patch_size <= 0 || image_size % patch_size != 0) {
        throw std::invalid_argument("BackboneConfig: image_size must be a positive multiple of patch_size");
    }
    if (embed_dim <= 0 || heads <= 0 || embed_dim % heads != 0) {
        throw std::invalid_argument("BackboneConfig: embed_dim must be divisible by heads");
    }
    if (depth < 1) throw std::invalid_argument("BackboneConfig: depth must be >= 1");
    if (mlp_ratio < 1) throw std::invalid_argument("BackboneConfig: mlp_ratio must be >= 1");
    if (num_class_tokens < 0) throw std::invalid_argument("BackboneConfig: negative class token count");
}

namespace {

Tensor normal_init(std::vector<std::int64_t> shape, Rng& rng, double stddev = 0.02) {
    Tensor t(std::move(shape));
    for (double& v : t.vec()) v = rng.normal(0.0, stddev);
    return t;
}

}  // namespace

void Backbone::init(const BackboneConfig& config, Rng& rng) {
    cfg = config;
    const std::int64_t d = cfg.embed_dim;
    const std::int64_t patch_dim = cfg.patch_size * cfg.patch_size * 3;

    patch_w = normal_init({patch_dim, d}, rng);
    patch_b = Tensor::zeros({d});
    if (cfg.num_class_tokens > 0) {
        class_tokens = normal_init({cfg.num_class_tokens, d}, rng);
    } else {
        class_tokens = Tensor();
    }
    pos_emb = normal_init({cfg.n_tokens(), d}, rng);

    blocks.clear();
    blocks.reserve(static_cast<std::size_t>(cfg.depth));
    for (std::int64_t l = 0; l < cfg.depth; ++l) {
        BlockWeights b;
        b.ln1_gamma = Tensor::full({d}, 1.0);
        b.ln1_beta = Tensor::zeros({d});
        b.w_qkv = normal_init({d, 3 * d}, rng);
        b.b_qkv = Tensor::zeros({3 * d});
        b.w_out = normal_init({d, d}, rng);
        b.b_out = Tensor::zeros({d});
        b.ln2_gamma = Tensor::full({d}, 1.0);
        b.ln2_beta = Tensor::zeros({d});
        b.w_fc1 = normal_init({d, cfg.mlp_ratio * d}, rng);
        b.b_fc1 = Tensor::zeros({cfg.mlp_ratio * d});
        b.w_fc2 = normal_init({cfg.mlp_ratio * d, d}, rng);
        b.b_fc2 = Tensor::zeros({d});
        blocks.push_back(std::move(b));
    }
    ln_f_gamma = Tensor::full({d}, 1.0);
    ln_f_beta = Tensor::zeros({d});
}

std::vector<std::pair<std::string, Tensor*>> Backbone::named_params(const std::string& prefix) {
    std::vector<std::pair<std::string, Tensor*>> out;
    out.emplace_back(prefix + "patch_w", &patch_w);
    out.emplace_back(prefix + "patch_b", &patch_b);
    if (cfg.num_class_tokens > 0) out.emplace_back(prefix + "class_tokens", &class_tokens);
    out.emplace_back(prefix + "pos_emb", &pos_emb);
    for (std::size_t l = 0; l < blocks.size(); ++l) {
        const std::string bp = prefix + "block" + std::to_string(l) + ".";
        BlockWeights& b = blocks[l];
        out.emplace_back(bp + "ln1_gamma", &b.ln1_gamma);
        out.emplace_back(bp + "ln1_beta", &b.ln1_beta);
        out.emplace_back(bp + "w_qkv", &b.w_qkv);
        out.emplace_back(bp + "b_qkv", &b.b_qkv);
        out.emplace_back(bp + "w_out", &b.w_out);
        out.emplace_back(bp + "b_out", &b.b_out);
        out.emplace_back(bp + "ln2_gamma", &b.ln2_gamma);
        out.emplace_back(bp + "ln2_beta", &b.ln2_beta);
        out.emplace_back(bp + "w_fc1", &b.w_fc1);
        out.emplace_back(bp + "b_fc1", &b.b_fc1);
        out.emplace_back(bp + "w_fc2", &b.w_fc2);
        out.emplace_back(bp + "b_fc2", &b.b_fc2);
    }
    out.emplace_back(prefix + "ln_f_gamma", &ln_f_gamma);
    out.emplace_back(prefix + "ln_f_beta", &ln_f_beta);
    return out;
}

BoundBlock bind_block(const BlockWeights& b, bool trainable, std::vector<Var>& flat) {
    auto mk = [&](const Tensor& t) {
        Var v = ad::leaf(t, trainable);
        flat.push_back(v);
        return v;
    };
    BoundBlock bd;
    bd.ln1_gamma = mk(b.ln1_gamma);
    bd.ln1_beta = mk(b.ln1_beta);
    bd.w_qkv = mk(b.w_qkv);
    bd.b_qkv = mk(b.b_qkv);
    bd.w_out = mk(b.w_out);
    bd.b_out = mk(b.b_out);
    bd.ln2_gamma = mk(b.ln2_gamma);
    bd.ln2_beta = mk(b.ln2_beta);
    bd.w_fc1 = mk(b.w_fc1);
    bd.b_fc1 = mk(b.b_fc1);
    bd.w_fc2 = mk(b.w_fc2);
    bd.b_fc2 = mk(b.b_fc2);
    return bd;
}

BoundBackbone bind(const Backbone& model, bool trainable) {
    BoundBackbone bb;
    bb.model = &model;
    auto mk = [&](const Tensor& t) {
        Var v = ad::leaf(t, trainable);
        bb.flat.push_back(v);
        return v;
    };
    bb.patch_w = mk(model.patch_w);
    bb.patch_b = mk(model.patch_b);
    if (model.cfg.num_class_tokens > 0) bb.class_tokens = mk(model.class_tokens);
    bb.pos_emb = mk(model.pos_emb);
    for (const BlockWeights& b : model.blocks) {
        bb.blocks.push_back(bind_block(b, trainable, bb.flat));
    }
    bb.ln_f_gamma = mk(model.ln_f_gamma);
    bb.ln_f_beta = mk(model.ln_f_beta);
    return bb;
}

BlockForwardOut transformer_block_forward(const BoundBlock& b, const Var& x, std::int64_t heads) {
    const std::int64_t d = x->value.cols();
    const std::int64_t head_dim = d / heads;
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

    Var xn = ad::layer_norm(x, b.ln1_gamma, b.ln1_beta);
    Var qkv = ad::add_row_broadcast(ad::matmul(xn, b.w_qkv), b.b_qkv);
    Var q = ad::slice_cols(qkv, 0, d);
    Var k = ad::slice_cols(qkv, d, 2 * d);
    Var v = ad::slice_cols(qkv, 2 * d, 3 * d);

    std::vector<Var> head_probs;
    std::vector<Var> head_outs;
    head_probs.reserve(static_cast<std::size_t>(heads));
    head_outs.reserve(static_cast<std::size_t>(heads));
    for (std::int64_t h = 0; h < heads; ++h) {
        Var qh = ad::slice_cols(q, h * head_dim, (h + 1) * head_dim);
        Var kh = ad::slice_cols(k, h * head_dim, (h + 1) * head_dim);
        Var vh = ad::slice_cols(v, h * head_dim, (h + 1) * head_dim);
        Var scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), att_scale);
        Var probs = ad::softmax_rows(scores);
        head_probs.push_back(probs);
        head_outs.push_back(ad::matmul(probs, vh));
    }
    Var attn_out = heads == 1 ? head_outs[0] : ad::concat_cols(head_outs);
    attn_out = ad::add_row_broadcast(ad::matmul(attn_out, b.w_out), b.b_out);
    Var x1 = ad::add(x, attn_out);

    Var x1n = ad::layer_norm(x1, b.ln2_gamma, b.ln2_beta);
    Var h1 = ad::gelu(ad::add_row_broadcast(ad::matmul(x1n, b.w_fc1), b.b_fc1));
    Var h2 = ad::add_row_broadcast(ad::matmul(h1, b.w_fc2), b.b_fc2);
    return {ad::add(x1, h2), std::move(head_probs)};
}

BackboneActivations backbone_forward_tokens(const BoundBackbone& bb, const Var& tokens) {
    BackboneActivations out;
    Var x = tokens;
    for (const BoundBlock& b : bb.blocks) {
        BlockForwardOut bo = transformer_block_forward(b, x, bb.model->cfg.heads);
        x = bo.tokens;
        out.attn.push_back(std::move(bo.head_probs));
    }
    if (!bb.blocks.empty()) {
        x = ad::layer_norm(x, bb.ln_f_gamma, bb.ln_f_beta);
    }
    out.tokens = x;
    return out;
}

Var patchify(const Var& image, const BackboneConfig& cfg, const Var& proj_w, const Var& proj_b) {
    const std::int64_t hw = cfg.image_size * cfg.image_size;
    if (image->value.rank() != 2 || image->value.rows() != hw || image->value.cols() != 3) {
        throw std::invalid_argument("patchify: expected (" + std::to_string(hw) +
                                    ", 3) pixel tensor, got " + image->value.shape_str());
    }
    Var patches = ad::extract_patches(image, cfg.image_size, cfg.image_size, cfg.patch_size);
    return ad::add_row_broadcast(ad::matmul(patches, proj_w), proj_b);
}

BackboneActivations backbone_forward_image(const BoundBackbone& bb, const Var& image) {
    const BackboneConfig& cfg = bb.model->cfg;
    Var tokens = patchify(image, cfg, bb.patch_w, bb.patch_b);
    if (cfg.num_class_tokens > 0) {
        tokens = ad::concat_rows({bb.class_tokens, tokens});
    }
    tokens = ad::add(tokens, bb.pos_emb);
    return backbone_forward_tokens(bb, tokens);
}

Tensor mean_head_attention(const std::vector<std::vector<Var>>& attn, std::int64_t block) {
    if (block < 0 || block >= static_cast<std::int64_t>(attn.size())) {
        throw std::invalid_argument("mean_head_attention: block index out of range");
    }
    std::vector<Tensor> heads;
    heads.reserve(attn[static_cast<std::size_t>(block)].size());
    for (const Var& h : attn[static_cast<std::size_t>(block)]) heads.push_back(h->value);
    return mean_head_attention(heads);
}

Tensor mean_head_attention(const std::vector<Tensor>& heads) {
    if (heads.empty()) throw std::invalid_argument("mean_head_attention: no heads");
    Tensor mean = heads[0];
    for (std::size_t h = 1; h < heads.size(); ++h) mean.add_scaled(heads[h], 1.0);
    const double inv = 1.0 / static_cast<double>(heads.size());
    for (double& v : mean.vec()) v *= inv;
    return mean;
}

}  // namespace semformer
