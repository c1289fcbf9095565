#include "semformer/caae.hpp"

#include <cmath>
#include <stdexcept>

namespace semformer {

using ad::Var;

TokenMerge token_merge_from_string(const std::string& s) {
    if (s == "sum") return TokenMerge::Sum;
    if (s == "mean") return TokenMerge::Mean;
    if (s == "max") return TokenMerge::Max;
    throw std::invalid_argument("unknown token_merge mode: " + s);
}

std::string to_string(TokenMerge m) {
    switch (m) {
        case TokenMerge::Sum: return "sum";
        case TokenMerge::Mean: return "mean";
        case TokenMerge::Max: return "max";
    }
    return "sum";
}

void CaaeConfig::validate() const {
    encoder.validate();
    if (encoder.num_class_tokens != 0) {
        throw std::invalid_argument("CaaeConfig: encoder must not carry class tokens");
    }
    if (num_classes < 1 || class_dim < 1) {
        throw std::invalid_argument("CaaeConfig: num_classes and class_dim must be positive");
    }
    if (decoder_depth < 0) throw std::invalid_argument("CaaeConfig: negative decoder depth");
}

namespace {
Tensor normal_init(std::vector<std::int64_t> shape, Rng& rng, double stddev = 0.02) {
    Tensor t(std::move(shape));
    for (double& v : t.vec()) v = rng.normal(0.0, stddev);
    return t;
}

BlockWeights init_block(std::int64_t d, std::int64_t mlp_ratio, Rng& rng) {
    BlockWeights b;
    b.ln1_gamma = Tensor::full({d}, 1.0);
    b.ln1_beta = Tensor::zeros({d});
    b.w_qkv = normal_init({d, 3 * d}, rng);
    b.b_qkv = Tensor::zeros({3 * d});
    b.w_out = normal_init({d, d}, rng);
    b.b_out = Tensor::zeros({d});
    b.ln2_gamma = Tensor::full({d}, 1.0);
    b.ln2_beta = Tensor::zeros({d});
    b.w_fc1 = normal_init({d, mlp_ratio * d}, rng);
    b.b_fc1 = Tensor::zeros({mlp_ratio * d});
    b.w_fc2 = normal_init({mlp_ratio * d, d}, rng);
    b.b_fc2 = Tensor::zeros({d});
    return b;
}
}  // namespace

void Caae::init(const CaaeConfig& config, Rng& rng) {
    config.validate();
    cfg = config;
    encoder.init(cfg.encoder, rng);
    const std::int64_t d = cfg.encoder.embed_dim;
    const std::int64_t kd = cfg.num_classes * cfg.class_dim;
    w1 = normal_init({d, kd}, rng);
    w_s = normal_init({cfg.num_classes, cfg.class_dim}, rng);
    w2 = normal_init({kd, d}, rng);

    decoder.pos_emb = normal_init({cfg.encoder.n_patches(), d}, rng);
    decoder.blocks.clear();
    for (std::int64_t l = 0; l < cfg.decoder_depth; ++l) {
        decoder.blocks.push_back(init_block(d, cfg.encoder.mlp_ratio, rng));
    }
    decoder.ln_f_gamma = Tensor::full({d}, 1.0);
    decoder.ln_f_beta = Tensor::zeros({d});
    const std::int64_t patch_dim = cfg.encoder.patch_size * cfg.encoder.patch_size * 3;
    decoder.fc_w = normal_init({d, patch_dim}, rng);
    decoder.fc_b = Tensor::zeros({patch_dim});
}

std::vector<std::pair<std::string, Tensor*>> Caae::named_params() {
    auto out = encoder.named_params("encoder.");
    out.emplace_back("w1", &w1);
    out.emplace_back("w_s", &w_s);
    out.emplace_back("w2", &w2);
    out.emplace_back("decoder.pos_emb", &decoder.pos_emb);
    for (std::size_t l = 0; l < decoder.blocks.size(); ++l) {
        const std::string bp = "decoder.block" + std::to_string(l) + ".";
        BlockWeights& b = decoder.blocks[l];
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
    out.emplace_back("decoder.ln_f_gamma", &decoder.ln_f_gamma);
    out.emplace_back("decoder.ln_f_beta", &decoder.ln_f_beta);
    out.emplace_back("decoder.fc_w", &decoder.fc_w);
    out.emplace_back("decoder.fc_b", &decoder.fc_b);
    return out;
}

BoundCaae bind(const Caae& model, bool trainable) {
    BoundCaae bc;
    bc.model = &model;
    bc.encoder = bind(model.encoder, trainable);
    bc.flat = bc.encoder.flat;
    auto mk = [&](const Tensor& t) {
        Var v = ad::leaf(t, trainable);
        bc.flat.push_back(v);
        return v;
    };
    bc.w1 = mk(model.w1);
    bc.w_s = mk(model.w_s);
    bc.w2 = mk(model.w2);
    bc.dec_pos_emb = mk(model.decoder.pos_emb);
    for (const BlockWeights& b : model.decoder.blocks) {
        bc.dec_blocks.push_back(bind_block(b, trainable, bc.flat));
    }
    bc.dec_ln_f_gamma = mk(model.decoder.ln_f_gamma);
    bc.dec_ln_f_beta = mk(model.decoder.ln_f_beta);
    bc.dec_fc_w = mk(model.decoder.fc_w);
    bc.dec_fc_b = mk(model.decoder.fc_b);
    return bc;
}

Var primary_tokens(const Var& t_L, const Var& w1) {
    return ad::relu(ad::matmul(t_L, w1));
}

Var reduce_to_embeddings(const Var& primary, std::int64_t num_classes, std::int64_t class_dim,
                         TokenMerge mode) {
    if (primary->value.cols() != num_classes * class_dim) {
        throw std::invalid_argument("reduce_to_embeddings: K*D mismatch with primary tokens");
    }
    Var reduced;
    switch (mode) {
        case TokenMerge::Sum: reduced = ad::sum_rows(primary); break;
        case TokenMerge::Mean: reduced = ad::mean_rows(primary); break;
        case TokenMerge::Max: reduced = ad::max_rows(primary); break;
    }
    return ad::reshape(reduced, {num_classes, class_dim});
}

Var class_semantics(const Var& w_s) { return ad::relu(w_s); }

Var cosine_sim(const Var& a, const Var& b, double eps) {
    Var num = ad::dot(a, b);
    Var na = ad::sqrt_op(ad::sum_all(ad::square(a)));
    Var nb = ad::sqrt_op(ad::sum_all(ad::square(b)));
    return ad::div_scalar(num, ad::mul(na, nb), eps);
}

double cosine_sim(const Tensor& a, const Tensor& b, double eps) {
    check_same_shape(a, b, "cosine_sim");
    double num = 0.0, na = 0.0, nb = 0.0;
    const std::int64_t n = a.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        num += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return num / (std::sqrt(na) * std::sqrt(nb) + eps);
}

// BCE over clamped per-class similarity; shared by ss_loss and the
// segmentation network's class-token similarity loss.
Var bce_over_sims(const std::vector<Var>& sims, const std::vector<int>& label, double eps) {
    const std::size_t k = sims.size();
    if (label.size() != k) throw std::invalid_argument("bce_over_sims: label length mismatch");
    std::vector<Var> terms;
    terms.reserve(k);
    for (std::size_t c = 0; c < k; ++c) {
        Var s = ad::clamp(sims[c], eps, 1.0 - eps);
        if (label[c]) {
            terms.push_back(ad::neg(ad::log_op(s)));
        } else {
            terms.push_back(ad::neg(ad::log_op(ad::add_scalar(ad::neg(s), 1.0))));
        }
    }
    return ad::scale(ad::add_scalars(terms), 1.0 / static_cast<double>(k));
}

Var ss_loss(const Var& embeddings, const Var& semantics, const std::vector<int>& label,
            double eps) {
    const std::int64_t k = embeddings->value.rows();
    if (static_cast<std::int64_t>(label.size()) != k) {
        throw std::invalid_argument("ss_loss: label length != K");
    }
    std::vector<Var> sims;
    sims.reserve(static_cast<std::size_t>(k));
    for (std::int64_t c = 0; c < k; ++c) {
        Var ec = ad::slice_rows(embeddings, c, c + 1);
        Var sc = ad::slice_rows(semantics, c, c + 1);
        sims.push_back(cosine_sim(ec, sc, eps));
    }
    return bce_over_sims(sims, label, eps);
}

Var recover_tokens(const Var& primary, const Var& w2) {
    return ad::matmul(primary, w2);
}

Var reconstruct(const BoundCaae& bc, const Var& recovered) {
    const BackboneConfig& enc = bc.model->cfg.encoder;
    Var x = ad::add(recovered, bc.dec_pos_emb);
    for (const BoundBlock& b : bc.dec_blocks) {
        x = transformer_block_forward(b, x, enc.heads).tokens;
    }
    if (!bc.dec_blocks.empty()) {
        x = ad::layer_norm(x, bc.dec_ln_f_gamma, bc.dec_ln_f_beta);
    }
    Var patches = ad::add_row_broadcast(ad::matmul(x, bc.dec_fc_w), bc.dec_fc_b);
    return ad::tile_patches(patches, enc.image_size, enc.image_size, enc.patch_size);
}

Var recon_loss(const Var& image, const Var& recon) {
    check_same_shape(image->value, recon->value, "recon_loss");
    return ad::mean_all(ad::square(ad::sub(image, recon)));
}

Var caae_loss(const Var& ss, const Var& recon) { return ad::add(ss, recon); }

CaaeForward caae_forward(const BoundCaae& bc, const Var& image, const std::vector<int>& label,
                         bool with_reconstruction) {
    const CaaeConfig& cfg = bc.model->cfg;
    CaaeForward out;
    BackboneActivations acts = backbone_forward_image(bc.encoder, image);
    out.encoder_tokens = acts.tokens;
    out.primary = primary_tokens(out.encoder_tokens, bc.w1);
    out.embeddings = reduce_to_embeddings(out.primary, cfg.num_classes, cfg.class_dim, cfg.merge);
    out.semantics = class_semantics(bc.w_s);
    out.ss = ss_loss(out.embeddings, out.semantics, label);
    if (with_reconstruction) {
        Var recovered = recover_tokens(out.primary, bc.w2);
        out.recon_image = reconstruct(bc, recovered);
        out.recon = recon_loss(image, out.recon_image);
        out.total = caae_loss(out.ss, out.recon);
    } else {
        out.recon = ad::constant(Tensor::scalar(0.0));
        out.total = out.ss;
    }
    return out;
}

Var caae_embed(const BoundCaae& bc, const Var& image) {
    const CaaeConfig& cfg = bc.model->cfg;
    BackboneActivations acts = backbone_forward_image(bc.encoder, image);
    Var primary = primary_tokens(acts.tokens, bc.w1);
    return reduce_to_embeddings(primary, cfg.num_classes, cfg.class_dim, cfg.merge);
}

}  // namespace semformer
