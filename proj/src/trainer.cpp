#include "semformer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>

namespace fs = std::filesystem;

namespace semformer {

double poly_lr(std::int64_t iter, std::int64_t max_iter, double base_lr, double power) {
    if (iter < 0 || max_iter < 1) throw std::invalid_argument("poly_lr: bad iteration bounds");
    if (iter > max_iter) {
        std::cerr << "poly_lr: iteration " << iter << " beyond max_iter " << max_iter
                  << ", clamping lr to 0\n";
        return 0.0;
    }
    const double frac = 1.0 - static_cast<double>(iter) / static_cast<double>(max_iter);
    return base_lr * std::pow(frac, power);
}

SgdOptimizer::SgdOptimizer(double momentum, double weight_decay, double grad_clip)
    : momentum_(momentum), weight_decay_(weight_decay), grad_clip_(grad_clip) {}

void SgdOptimizer::init(const std::vector<std::pair<std::string, Tensor*>>& params) {
    velocity_.clear();
    velocity_.reserve(params.size());
    for (const auto& [name, t] : params) velocity_.push_back(Tensor::zeros(t->shape()));
}

void SgdOptimizer::step(const std::vector<std::pair<std::string, Tensor*>>& params,
                        const std::vector<Tensor>& grads, double lr) {
    if (params.size() != grads.size() || params.size() != velocity_.size()) {
        throw std::invalid_argument("SgdOptimizer: parameter/gradient count mismatch");
    }
    double clip_scale = 1.0;
    if (grad_clip_ > 0.0) {
        double sq = 0.0;
        for (const Tensor& g : grads) {
            for (double v : g.vec()) sq += v * v;
        }
        const double norm = std::sqrt(sq);
        if (norm > grad_clip_) clip_scale = grad_clip_ / norm;
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor* w = params[i].second;
        const Tensor& g = grads[i];
        Tensor& v = velocity_[i];
        const std::int64_t n = w->numel();
        for (std::int64_t j = 0; j < n; ++j) {
            const double grad = g[j] * clip_scale + weight_decay_ * (*w)[j];
            v[j] = momentum_ * v[j] + grad;
            (*w)[j] -= lr * v[j];
        }
    }
}

Caae build_caae(const TrainConfig& cfg) {
    CaaeConfig cc;
    cc.encoder.image_size = cfg.crop_size;
    cc.encoder.patch_size = cfg.patch_size;
    cc.encoder.embed_dim = cfg.enc_dim;
    cc.encoder.depth = cfg.enc_depth;
    cc.encoder.heads = cfg.enc_heads;
    cc.encoder.mlp_ratio = cfg.mlp_ratio;
    cc.encoder.num_class_tokens = 0;
    cc.decoder_depth = cfg.dec_depth;
    cc.num_classes = cfg.num_classes;
    cc.class_dim = cfg.class_dim;
    cc.merge = token_merge_from_string(cfg.token_merge);
    Rng rng(cfg.seed ^ 0x5eedc0deull);
    Caae model;
    model.init(cc, rng);
    return model;
}

SegNet build_segnet(const TrainConfig& cfg) {
    SegNetConfig sc;
    sc.backbone.image_size = cfg.crop_size;
    sc.backbone.patch_size = cfg.patch_size;
    sc.backbone.embed_dim = cfg.seg_dim;
    sc.backbone.depth = cfg.seg_depth;
    sc.backbone.heads = cfg.seg_heads;
    sc.backbone.mlp_ratio = cfg.mlp_ratio;
    sc.backbone.num_class_tokens = cfg.num_classes;
    sc.num_classes = cfg.num_classes;
    sc.class_dim = cfg.class_dim;
    sc.cra_blocks = cfg.cra_blocks;
    sc.sigma = cfg.sigma;
    sc.pair_averaged_cross = cfg.pair_averaged_cross;
    Rng rng(cfg.seed ^ 0x5e6e37c0deull);
    SegNet model;
    model.init(sc, rng);
    return model;
}

void store_model(Checkpoint& ckpt, std::vector<std::pair<std::string, Tensor*>> params) {
    for (const auto& [name, t] : params) ckpt.tensors.emplace_back(name, *t);
}

void restore_model(const Checkpoint& ckpt, std::vector<std::pair<std::string, Tensor*>> params) {
    for (auto& [name, t] : params) {
        const Tensor* src = ckpt.find(name);
        if (!src) throw std::runtime_error("checkpoint: missing tensor '" + name + "'");
        if (!src->same_shape(*t)) {
            throw std::runtime_error("checkpoint: shape mismatch for '" + name + "': stored " +
                                     src->shape_str() + " vs model " + t->shape_str());
        }
        *t = *src;
    }
}

namespace {

struct EpochStats {
    std::map<std::string, double> sums;
    std::int64_t count = 0;

    void add(const std::string& term, double v) { sums[term] += v; }
    void bump(std::int64_t n) { count += n; }
    void flush(std::int64_t epoch, std::vector<MetricEntry>& log) const {
        for (const auto& [term, sum] : sums) {
            log.push_back({epoch, term, sum / static_cast<double>(std::max<std::int64_t>(count, 1))});
        }
    }
};

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

std::vector<Tensor> collect_grads(const std::vector<ad::Var>& flat) {
    std::vector<Tensor> grads;
    grads.reserve(flat.size());
    for (const ad::Var& v : flat) grads.push_back(v->grad_or_zero());
    return grads;
}

struct Snapshot {
    std::vector<Tensor> weights;
    std::vector<Tensor> velocity;

    static Snapshot take(const std::vector<std::pair<std::string, Tensor*>>& params,
                         const SgdOptimizer& opt) {
        Snapshot s;
        for (const auto& [name, t] : params) s.weights.push_back(*t);
        s.velocity = const_cast<SgdOptimizer&>(opt).velocity();
        return s;
    }
    void restore(const std::vector<std::pair<std::string, Tensor*>>& params,
                 SgdOptimizer& opt) const {
        for (std::size_t i = 0; i < params.size(); ++i) *params[i].second = weights[i];
        opt.velocity() = velocity;
    }
};

Checkpoint make_checkpoint(const std::string& stage, const TrainConfig& cfg,
                           std::int64_t iteration, const std::vector<MetricEntry>& log,
                           const Rng& rng,
                           std::vector<std::pair<std::string, Tensor*>> params,
                           SgdOptimizer& opt) {
    Checkpoint ckpt;
    ckpt.stage = stage;
    ckpt.iteration = iteration;
    ckpt.config = cfg;
    ckpt.metric_log = log;
    ckpt.rng_state = rng.serialize();
    store_model(ckpt, params);
    for (std::size_t i = 0; i < params.size(); ++i) {
        ckpt.tensors.emplace_back("opt/" + params[i].first, opt.velocity()[i]);
    }
    return ckpt;
}

void restore_optimizer(const Checkpoint& ckpt,
                       const std::vector<std::pair<std::string, Tensor*>>& params,
                       SgdOptimizer& opt) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Tensor* v = ckpt.find("opt/" + params[i].first);
        if (v) opt.velocity()[i] = *v;
    }
}

}  // namespace

Checkpoint train_caae(const std::vector<LabeledImage>& dataset, const TrainConfig& cfg,
                      const std::string& out_dir) {
    cfg.validate();
    if (dataset.empty()) throw std::invalid_argument("train_caae: empty dataset");
    fs::create_directories(out_dir);

    Caae model = build_caae(cfg);
    auto params = model.named_params();
    SgdOptimizer opt(cfg.momentum, cfg.weight_decay, cfg.grad_clip);
    opt.init(params);
    Rng rng(cfg.seed);

    const std::int64_t n = static_cast<std::int64_t>(dataset.size());
    const std::int64_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const std::int64_t max_iter = cfg.epochs * steps_per_epoch;
    std::int64_t iteration = 0;
    std::int64_t start_epoch = 0;
    std::vector<MetricEntry> log;

    if (!cfg.resume.empty()) {
        const Checkpoint prev = load_checkpoint(cfg.resume);
        if (prev.stage != "caae") throw std::runtime_error("resume: checkpoint stage mismatch");
        restore_model(prev, params);
        restore_optimizer(prev, params, opt);
        rng.deserialize(prev.rng_state);
        iteration = prev.iteration;
        start_epoch = iteration / steps_per_epoch;
        log = prev.metric_log;
    }

    const std::string ckpt_path = (fs::path(out_dir) / "caae.ckpt").string();
    const std::string csv_path = (fs::path(out_dir) / "caae_metrics.csv").string();
    Snapshot last_good = Snapshot::take(params, opt);
    std::int64_t last_good_iter = iteration;

    for (std::int64_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        const auto order = shuffled_indices(dataset.size(), rng);
        EpochStats stats;
        for (std::int64_t step = 0; step < steps_per_epoch; ++step) {
            const std::int64_t lo = step * cfg.batch_size;
            const std::int64_t hi = std::min<std::int64_t>(lo + cfg.batch_size, n);
            if (lo >= hi) break;

            BoundCaae bound = bind(model, /*trainable=*/true);
            std::vector<ad::Var> totals;
            double batch_ss = 0.0, batch_recon = 0.0;
            for (std::int64_t i = lo; i < hi; ++i) {
                const LabeledImage& raw = dataset[order[static_cast<std::size_t>(i)]];
                LabeledImage img =
                    augment(raw, cfg.scale_min, cfg.scale_max, cfg.crop_size, cfg.flip_prob, rng);
                ad::Var pixels = ad::constant(image_matrix(img.pixels));
                CaaeForward fwd = caae_forward(bound, pixels, img.label);
                totals.push_back(fwd.total);
                batch_ss += fwd.ss->value[0];
                batch_recon += fwd.recon->value[0];
            }
            const double inv_b = 1.0 / static_cast<double>(hi - lo);
            ad::Var batch_loss = ad::scale(ad::add_scalars(totals), inv_b);

            if (!batch_loss->value.all_finite()) {
                last_good.restore(params, opt);
                Checkpoint ckpt = make_checkpoint("caae", cfg, last_good_iter, log, rng, params, opt);
                save_checkpoint(ckpt, ckpt_path);
                write_metric_csv(log, csv_path);
                throw TrainAbort("train_caae: non-finite loss at iteration " +
                                 std::to_string(iteration) + "; last good checkpoint written");
            }

            ad::backward(batch_loss);
            const double lr = poly_lr(iteration, max_iter, cfg.base_lr, cfg.poly_power);
            opt.step(params, collect_grads(bound.flat), lr);
            ++iteration;

            stats.add("ss", batch_ss);
            stats.add("recon", batch_recon);
            stats.bump(hi - lo);
        }
        stats.flush(epoch + 1, log);
        last_good = Snapshot::take(params, opt);
        last_good_iter = iteration;

        Checkpoint ckpt = make_checkpoint("caae", cfg, iteration, log, rng, params, opt);
        save_checkpoint(ckpt, ckpt_path);
        write_metric_csv(log, csv_path);
    }

    return load_checkpoint(ckpt_path);
}

Checkpoint train_seg(const std::vector<LabeledImage>& dataset, const Caae& caae,
                     const TrainConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    if (dataset.empty()) throw std::invalid_argument("train_seg: empty dataset");
    if (caae.cfg.num_classes != cfg.num_classes || caae.cfg.class_dim != cfg.class_dim) {
        throw std::invalid_argument("train_seg: CAAE checkpoint disagrees with config on K or D");
    }
    fs::create_directories(out_dir);

    // the frozen reference: any drift is an invariant breach
    auto caae_params = const_cast<Caae&>(caae).named_params();
    const std::uint64_t caae_hash = hash_tensors(caae_params);

    SegNet model = build_segnet(cfg);
    auto params = model.named_params();
    SgdOptimizer opt(cfg.momentum, cfg.weight_decay, cfg.grad_clip);
    opt.init(params);
    Rng rng(cfg.seed + 1);

    const SegLossFlags flags{cfg.loss_cf, cfg.loss_cb, cfg.loss_as, cfg.loss_ac, cfg.loss_ss};
    const std::int64_t n = static_cast<std::int64_t>(dataset.size());
    const std::int64_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const std::int64_t max_iter = cfg.epochs * steps_per_epoch;
    std::int64_t iteration = 0;
    std::int64_t start_epoch = 0;
    std::vector<MetricEntry> log;

    if (!cfg.resume.empty()) {
        const Checkpoint prev = load_checkpoint(cfg.resume);
        if (prev.stage != "seg") throw std::runtime_error("resume: checkpoint stage mismatch");
        restore_model(prev, params);
        restore_optimizer(prev, params, opt);
        rng.deserialize(prev.rng_state);
        iteration = prev.iteration;
        start_epoch = iteration / steps_per_epoch;
        log = prev.metric_log;
    }

    const std::string ckpt_path = (fs::path(out_dir) / "seg.ckpt").string();
    const std::string csv_path = (fs::path(out_dir) / "seg_metrics.csv").string();
    Snapshot last_good = Snapshot::take(params, opt);
    std::int64_t last_good_iter = iteration;

    for (std::int64_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        const auto order = shuffled_indices(dataset.size(), rng);
        EpochStats stats;
        for (std::int64_t step = 0; step < steps_per_epoch; ++step) {
            const std::int64_t lo = step * cfg.batch_size;
            const std::int64_t hi = std::min<std::int64_t>(lo + cfg.batch_size, n);
            if (lo >= hi) break;

            BoundSegNet bound = bind(model, /*trainable=*/true);
            BoundCaae frozen = bind(caae, /*trainable=*/false);
            std::vector<ad::Var> totals;
            try {
                for (std::int64_t i = lo; i < hi; ++i) {
                    const LabeledImage& raw = dataset[order[static_cast<std::size_t>(i)]];
                    LabeledImage img = augment(raw, cfg.scale_min, cfg.scale_max, cfg.crop_size,
                                               cfg.flip_prob, rng);
                    ad::Var pixels = ad::constant(image_matrix(img.pixels));
                    SegForward fwd = seg_forward(bound, pixels);
                    SegLossBundle bundle =
                        seg_total_loss(bound, fwd, frozen, pixels, img.label, flags);
                    totals.push_back(bundle.total);
                    stats.add("cf", bundle.term(bundle.cf));
                    stats.add("cb", bundle.term(bundle.cb));
                    stats.add("as", bundle.term(bundle.as_));
                    stats.add("ac", bundle.term(bundle.ac));
                    stats.add("ss_prime", bundle.term(bundle.ss_prime));
                    stats.add("total", bundle.total->value[0]);
                }
            } catch (const std::runtime_error& e) {
                last_good.restore(params, opt);
                Checkpoint ckpt = make_checkpoint("seg", cfg, last_good_iter, log, rng, params, opt);
                save_checkpoint(ckpt, ckpt_path);
                write_metric_csv(log, csv_path);
                throw TrainAbort(std::string("train_seg: ") + e.what() +
                                 "; last good checkpoint written");
            }
            const double inv_b = 1.0 / static_cast<double>(hi - lo);
            ad::Var batch_loss = ad::scale(ad::add_scalars(totals), inv_b);

            ad::backward(batch_loss);
            const double lr = poly_lr(iteration, max_iter, cfg.base_lr, cfg.poly_power);
            opt.step(params, collect_grads(bound.flat), lr);
            ++iteration;
            stats.bump(hi - lo);
        }
        stats.flush(epoch + 1, log);

        if (hash_tensors(caae_params) != caae_hash) {
            throw std::logic_error("train_seg: frozen CAAE weights changed during epoch " +
                                   std::to_string(epoch + 1));
        }
        last_good = Snapshot::take(params, opt);
        last_good_iter = iteration;

        Checkpoint ckpt = make_checkpoint("seg", cfg, iteration, log, rng, params, opt);
        save_checkpoint(ckpt, ckpt_path);
        write_metric_csv(log, csv_path);
    }

    return load_checkpoint(ckpt_path);
}

Caae caae_from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.stage != "caae") throw std::runtime_error("caae_from_checkpoint: stage mismatch");
    Caae model = build_caae(ckpt.config);
    restore_model(ckpt, model.named_params());
    return model;
}

SegNet segnet_from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.stage != "seg") throw std::runtime_error("segnet_from_checkpoint: stage mismatch");
    SegNet model = build_segnet(ckpt.config);
    restore_model(ckpt, model.named_params());
    return model;
}

}  // namespace semformer
