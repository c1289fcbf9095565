#include "semformer/segnet.hpp"

#include <cmath>
#include <stdexcept>

namespace semformer {

using ad::Var;

void SegNetConfig::validate() const {
    backbone.validate();
    if (backbone.num_class_tokens != num_classes) {
        throw std::invalid_argument("SegNetConfig: backbone must carry K class tokens");
    }
    if (cra_blocks < 1 || cra_blocks > backbone.depth) {
        throw std::invalid_argument("SegNetConfig: cra_blocks must be in [1, depth]");
    }
    if (sigma <= 0.0) throw std::invalid_argument("SegNetConfig: sigma must be positive");
    if (class_dim < 1) throw std::invalid_argument("SegNetConfig: class_dim must be positive");
}

void SegNet::init(const SegNetConfig& config, Rng& rng) {
    config.validate();
    cfg = config;
    backbone.init(cfg.backbone, rng);
    const std::int64_t d = cfg.backbone.embed_dim;
    w_patch = Tensor({d, cfg.num_classes});
    for (double& v : w_patch.vec()) v = rng.normal(0.0, 0.02);
    w_class.clear();
    for (std::int64_t c = 0; c < cfg.num_classes; ++c) {
        Tensor w({d, cfg.class_dim});
        for (double& v : w.vec()) v = rng.normal(0.0, 0.02);
        w_class.push_back(std::move(w));
    }
}

std::vector<std::pair<std::string, Tensor*>> SegNet::named_params() {
    auto out = backbone.named_params("backbone.");
    out.emplace_back("w_patch", &w_patch);
    for (std::size_t c = 0; c < w_class.size(); ++c) {
        out.emplace_back("w_class" + std::to_string(c), &w_class[c]);
    }
    return out;
}

BoundSegNet bind(const SegNet& model, bool trainable) {
    BoundSegNet bs;
    bs.model = &model;
    bs.backbone = bind(model.backbone, trainable);
    bs.flat = bs.backbone.flat;
    auto mk = [&](const Tensor& t) {
        Var v = ad::leaf(t, trainable);
        bs.flat.push_back(v);
        return v;
    };
    bs.w_patch = mk(model.w_patch);
    for (const Tensor& w : model.w_class) bs.w_class.push_back(mk(w));
    return bs;
}

Var activation_maps(const Var& patch_tokens, const Var& w_patch) {
    return ad::transpose(ad::sigmoid(ad::matmul(patch_tokens, w_patch)));
}

Tensor class_relative_attention(const std::vector<Tensor>& mean_attn_per_block, std::int64_t U,
                                std::int64_t num_classes) {
    const std::int64_t blocks = static_cast<std::int64_t>(mean_attn_per_block.size());
    if (U < 1 || U > blocks) {
        throw std::invalid_argument("class_relative_attention: U out of range");
    }
    const std::int64_t n = mean_attn_per_block.back().rows();
    const std::int64_t spatial = n - num_classes;
    if (spatial <= 0) {
        throw std::invalid_argument("class_relative_attention: no patch tokens in record");
    }
    Tensor acc({num_classes, spatial});
    for (std::int64_t l = blocks - U; l < blocks; ++l) {
        const Tensor& a = mean_attn_per_block[static_cast<std::size_t>(l)];
        if (a.rows() != n || a.cols() != n) {
            throw std::invalid_argument("class_relative_attention: inconsistent record shape");
        }
        for (std::int64_t c = 0; c < num_classes; ++c)
            for (std::int64_t s = 0; s < spatial; ++s) acc(c, s) += a(c, num_classes + s);
    }
    const double inv_u = 1.0 / static_cast<double>(U);
    for (double& v : acc.vec()) v *= inv_u;

    // per-class min-max over spatial positions; constant row -> zeros
    for (std::int64_t c = 0; c < num_classes; ++c) {
        double lo = acc(c, 0), hi = acc(c, 0);
        for (std::int64_t s = 1; s < spatial; ++s) {
            lo = std::min(lo, acc(c, s));
            hi = std::max(hi, acc(c, s));
        }
        const double range = hi - lo;
        if (range < 1e-12) {
            for (std::int64_t s = 0; s < spatial; ++s) acc(c, s) = 0.0;
        } else {
            for (std::int64_t s = 0; s < spatial; ++s) acc(c, s) = (acc(c, s) - lo) / range;
        }
    }
    return acc;
}

Tensor fuse(const Tensor& maps, const Tensor& attention) {
    check_same_shape(maps, attention, "fuse");
    Tensor out = maps;
    const std::int64_t n = out.numel();
    for (std::int64_t i = 0; i < n; ++i) out[i] *= attention[i];
    return out;
}

ComplementaryPair complementary_pair(const Var& image, const Var& map_c, std::int64_t image_h,
                                     std::int64_t image_w) {
    if (image->value.rank() != 2 || image->value.cols() != 3) {
        throw std::invalid_argument("complementary_pair: image must be (H*W, 3)");
    }
    if (image->value.rows() != image_h * image_w) {
        throw std::invalid_argument("complementary_pair: pixel count mismatch");
    }
    if (map_c->value.rank() != 2) {
        throw std::invalid_argument("complementary_pair: map must be 2-D");
    }
    Var m = map_c;
    if (m->value.dim(0) != image_h || m->value.dim(1) != image_w) {
        m = ad::bilinear_upsample(m, image_h, image_w);
    }
    ComplementaryPair pair;
    pair.upsampled_map = ad::reshape(m, {image_h * image_w, 1});
    pair.foreground = ad::mul_col_broadcast(image, pair.upsampled_map);
    pair.background = ad::sub(image, pair.foreground);
    return pair;
}

namespace {

// own-term plus cross-term scaffolding shared by CF and CB.
Var adversarial_pair_loss(const std::vector<Var>& embeddings, const Var& semantics,
                          const std::vector<std::int64_t>& present, bool own_is_one_minus,
                          bool pair_averaged_cross, double eps) {
    const std::size_t count = present.size();
    if (count == 0) throw std::invalid_argument("adversarial loss: no present classes");
    if (embeddings.size() != count) {
        throw std::invalid_argument("adversarial loss: one embedding matrix per present class");
    }
    std::vector<Var> own_terms;
    std::vector<Var> cross_terms;
    for (std::size_t i = 0; i < count; ++i) {
        const std::int64_t c = present[i];
        Var e_own = ad::slice_rows(embeddings[i], c, c + 1);
        Var s_own = ad::slice_rows(semantics, c, c + 1);
        Var sim_own = cosine_sim(e_own, s_own, eps);
        own_terms.push_back(own_is_one_minus ? ad::add_scalar(ad::neg(sim_own), 1.0) : sim_own);
        for (std::size_t j = 0; j < count; ++j) {
            if (j == i) continue;
            const std::int64_t cx = present[j];
            Var e_cross = ad::slice_rows(embeddings[i], cx, cx + 1);
            Var s_cross = ad::slice_rows(semantics, cx, cx + 1);
            Var sim_cross = cosine_sim(e_cross, s_cross, eps);
            cross_terms.push_back(own_is_one_minus ? sim_cross
                                                   : ad::add_scalar(ad::neg(sim_cross), 1.0));
        }
    }
    const double c_count = static_cast<double>(count);
    Var loss = ad::scale(ad::add_scalars(own_terms), 1.0 / c_count);
    if (!cross_terms.empty()) {
        double denom = std::max(c_count - 1.0, 1.0);
        if (pair_averaged_cross) denom *= c_count;
        loss = ad::add(loss, ad::scale(ad::add_scalars(cross_terms), 1.0 / denom));
    }
    return loss;
}

}  // namespace

Var cf_loss(const std::vector<Var>& fg_embeddings, const Var& semantics,
            const std::vector<std::int64_t>& present, bool pair_averaged_cross, double eps) {
    return adversarial_pair_loss(fg_embeddings, semantics, present, /*own_is_one_minus=*/true,
                                 pair_averaged_cross, eps);
}

Var cb_loss(const std::vector<Var>& bg_embeddings, const Var& semantics,
            const std::vector<std::int64_t>& present, bool pair_averaged_cross, double eps) {
    return adversarial_pair_loss(bg_embeddings, semantics, present, /*own_is_one_minus=*/false,
                                 pair_averaged_cross, eps);
}

Var as_loss(const Var& maps, double sigma) {
    if (sigma <= 0.0) throw std::invalid_argument("as_loss: sigma must be positive");
    return ad::scale(ad::mean_all(maps), sigma);
}

Var background_maps(const Var& maps) { return ad::rowwise_max_excluding(maps); }

Tensor background_maps(const Tensor& maps) {
    const std::int64_t k = maps.rows();
    const std::int64_t s = maps.cols();
    Tensor out({k, s});
    for (std::int64_t c = 0; c < k; ++c) {
        for (std::int64_t j = 0; j < s; ++j) {
            double best = 0.0;
            bool any = false;
            for (std::int64_t o = 0; o < k; ++o) {
                if (o == c) continue;
                if (!any || maps(o, j) > best) {
                    best = maps(o, j);
                    any = true;
                }
            }
            out(c, j) = any ? best : 0.0;
        }
    }
    return out;
}

Var ac_loss(const Var& maps, const std::vector<std::int64_t>& present) {
    if (present.empty()) throw std::invalid_argument("ac_loss: no present classes");
    const std::int64_t spatial = maps->value.cols();
    Var n = background_maps(maps);
    std::vector<Var> terms;
    terms.reserve(present.size());
    for (std::int64_t c : present) {
        Var m_c = ad::slice_rows(maps, c, c + 1);
        Var n_c = ad::slice_rows(n, c, c + 1);
        Var resid = ad::add_scalar(ad::add(m_c, n_c), -1.0);
        terms.push_back(ad::sum_all(ad::square(resid)));
    }
    const double denom = static_cast<double>(present.size()) * static_cast<double>(spatial);
    return ad::scale(ad::add_scalars(terms), 1.0 / denom);
}

Var seg_ss_loss(const Var& class_tokens, const std::vector<Var>& w_class, const Var& semantics,
                const std::vector<int>& label, double eps) {
    const std::int64_t k = class_tokens->value.rows();
    if (static_cast<std::int64_t>(w_class.size()) != k ||
        static_cast<std::int64_t>(label.size()) != k) {
        throw std::invalid_argument("seg_ss_loss: K mismatch");
    }
    std::vector<Var> sims;
    sims.reserve(static_cast<std::size_t>(k));
    for (std::int64_t c = 0; c < k; ++c) {
        Var t_c = ad::slice_rows(class_tokens, c, c + 1);
        Var e_c = ad::relu(ad::matmul(t_c, w_class[static_cast<std::size_t>(c)]));
        Var s_c = ad::slice_rows(semantics, c, c + 1);
        sims.push_back(cosine_sim(e_c, s_c, eps));
    }
    return bce_over_sims(sims, label, eps);
}

SegForward seg_forward(const BoundSegNet& bs, const Var& image) {
    const SegNetConfig& cfg = bs.model->cfg;
    SegForward out;
    out.acts = backbone_forward_image(bs.backbone, image);
    const std::int64_t k = cfg.num_classes;
    const std::int64_t n = cfg.backbone.n_tokens();
    out.class_tokens = ad::slice_rows(out.acts.tokens, 0, k);
    out.patch_tokens = ad::slice_rows(out.acts.tokens, k, n);
    out.maps = activation_maps(out.patch_tokens, bs.w_patch);
    return out;
}

SegLossBundle seg_total_loss(const BoundSegNet& bs, const SegForward& fwd, const BoundCaae& caae,
                             const Var& image, const std::vector<int>& label,
                             const SegLossFlags& flags) {
    const SegNetConfig& cfg = bs.model->cfg;
    std::vector<std::int64_t> present;
    for (std::size_t c = 0; c < label.size(); ++c) {
        if (label[c]) present.push_back(static_cast<std::int64_t>(c));
    }
    if (present.empty()) throw std::invalid_argument("seg_total_loss: image has no present class");

    SegLossBundle bundle;
    bundle.sigma = cfg.sigma;
    bundle.available_classes = static_cast<std::int64_t>(present.size());

    Var semantics = class_semantics(caae.w_s);

    if (flags.cf || flags.cb) {
        std::vector<Var> fg_embeddings;
        std::vector<Var> bg_embeddings;
        const std::int64_t img_hw = cfg.backbone.image_size;
        for (std::int64_t c : present) {
            Var map_c = ad::reshape(ad::slice_rows(fwd.maps, c, c + 1), {cfg.map_h(), cfg.map_w()});
            ComplementaryPair pair = complementary_pair(image, map_c, img_hw, img_hw);
            if (flags.cf) fg_embeddings.push_back(caae_embed(caae, pair.foreground));
            if (flags.cb) bg_embeddings.push_back(caae_embed(caae, pair.background));
        }
        if (flags.cf) {
            bundle.cf = cf_loss(fg_embeddings, semantics, present, cfg.pair_averaged_cross);
        }
        if (flags.cb) {
            bundle.cb = cb_loss(bg_embeddings, semantics, present, cfg.pair_averaged_cross);
        }
    }
    if (flags.as_) bundle.as_ = as_loss(fwd.maps, cfg.sigma);
    if (flags.ac) bundle.ac = ac_loss(fwd.maps, present);
    if (flags.ss_prime) {
        bundle.ss_prime = seg_ss_loss(fwd.class_tokens, bs.w_class, semantics, label);
    }

    std::vector<Var> parts;
    auto push = [&](const Var& v, const char* name) {
        if (!v) return;
        if (!v->value.all_finite()) {
            throw std::runtime_error(std::string("seg_total_loss: non-finite term ") + name);
        }
        parts.push_back(v);
    };
    push(bundle.cf, "cf");
    push(bundle.cb, "cb");
    push(bundle.as_, "as");
    push(bundle.ac, "ac");
    push(bundle.ss_prime, "ss_prime");
    bundle.total = ad::add_scalars(parts);
    return bundle;
}

}  // namespace semformer
