#include "semformer/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "semformer/image_ops.hpp"

namespace fs = std::filesystem;

namespace semformer {

InferenceResult infer_image(const SegNet& net, const Tensor& pixels_hwc) {
    const SegNetConfig& cfg = net.cfg;
    Tensor pixels = pixels_hwc;
    if (pixels.dim(0) != cfg.backbone.image_size || pixels.dim(1) != cfg.backbone.image_size) {
        pixels = resize_bilinear_hwc(pixels, cfg.backbone.image_size, cfg.backbone.image_size);
    }
    BoundSegNet bound = bind(net, /*trainable=*/false);
    SegForward fwd = seg_forward(bound, ad::constant(image_matrix(pixels)));

    std::vector<Tensor> mean_attn;
    mean_attn.reserve(fwd.acts.attn.size());
    for (std::size_t l = 0; l < fwd.acts.attn.size(); ++l) {
        mean_attn.push_back(mean_head_attention(fwd.acts.attn, static_cast<std::int64_t>(l)));
    }
    InferenceResult out;
    const std::int64_t k = cfg.num_classes;
    const std::int64_t h = cfg.map_h(), w = cfg.map_w();
    out.maps = fwd.maps->value.reshaped({k, h, w});
    out.attention =
        class_relative_attention(mean_attn, cfg.cra_blocks, k).reshaped({k, h, w});
    out.fused = fuse(out.maps, out.attention);
    return out;
}

Tensor upsample_maps(const Tensor& maps, std::int64_t out_h, std::int64_t out_w) {
    if (maps.rank() != 3) throw std::invalid_argument("upsample_maps: expected (K, h, w)");
    const std::int64_t k = maps.dim(0), h = maps.dim(1), w = maps.dim(2);
    Tensor out({k, out_h, out_w});
    for (std::int64_t c = 0; c < k; ++c) {
        Tensor plane({h, w});
        std::copy(maps.data() + c * h * w, maps.data() + (c + 1) * h * w, plane.data());
        Tensor up = resize_bilinear_plane(plane, out_h, out_w);
        std::copy(up.data(), up.data() + out_h * out_w, out.data() + c * out_h * out_w);
    }
    return out;
}

EvalOutcome evaluate_dataset(const SegNet& net, const std::vector<LabeledImage>& images,
                             double tau_bg, bool use_cra) {
    const std::int64_t k = net.cfg.num_classes;
    EvalOutcome out;
    out.total_confusion = Tensor({k + 1, k + 1});
    for (const LabeledImage& img : images) {
        if (!img.has_mask()) continue;
        InferenceResult inf = infer_image(net, img.pixels);
        const Tensor& chosen = use_cra ? inf.fused : inf.maps;
        Tensor full = upsample_maps(chosen, img.height(), img.width());
        const auto pred = pseudo_mask(full, img.label, tau_bg);
        Tensor conf = confusion(pred, img.gt_mask, k);
        out.total_confusion.add_scaled(conf, 1.0);
        ++out.images_evaluated;
    }
    if (out.images_evaluated == 0) {
        throw std::runtime_error("evaluate_dataset: no images carry ground-truth masks");
    }
    out.metrics = metrics_from_confusion(out.total_confusion);
    return out;
}

EvalOutcome evaluate_all_background(const std::vector<LabeledImage>& images,
                                    std::int64_t num_classes) {
    EvalOutcome out;
    out.total_confusion = Tensor({num_classes + 1, num_classes + 1});
    for (const LabeledImage& img : images) {
        if (!img.has_mask()) continue;
        std::vector<std::uint8_t> pred(img.gt_mask.size(), 0);
        out.total_confusion.add_scaled(confusion(pred, img.gt_mask, num_classes), 1.0);
        ++out.images_evaluated;
    }
    if (out.images_evaluated == 0) {
        throw std::runtime_error("evaluate_all_background: no masks");
    }
    out.metrics = metrics_from_confusion(out.total_confusion);
    return out;
}

namespace {

std::map<std::string, double> final_epoch_losses(const std::vector<MetricEntry>& log) {
    std::int64_t last = 0;
    for (const MetricEntry& e : log) last = std::max(last, e.epoch);
    std::map<std::string, double> out;
    for (const MetricEntry& e : log) {
        if (e.epoch == last) out[e.term] = e.value;
    }
    return out;
}

bool all_finite(const std::map<std::string, double>& m) {
    for (const auto& [k, v] : m) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

AblateRow run_one(const std::vector<LabeledImage>& train_images,
                  const std::vector<LabeledImage>& eval_images, const Caae& caae,
                  TrainConfig cfg, const std::string& label, const std::string& work_dir) {
    AblateRow row;
    row.label = label;
    const std::string dir = (fs::path(work_dir) / label).string();
    try {
        Checkpoint ckpt = train_seg(train_images, caae, cfg, dir);
        row.final_losses = final_epoch_losses(ckpt.metric_log);
        SegNet net = segnet_from_checkpoint(ckpt);
        EvalOutcome eval = evaluate_dataset(net, eval_images, cfg.tau_bg, cfg.use_cra);
        row.miou = eval.metrics.miou;
        row.finite = all_finite(row.final_losses) && std::isfinite(row.miou);
    } catch (const TrainAbort&) {
        row.finite = false;
    }
    return row;
}

}  // namespace

std::vector<AblateRow> ablate_loss_flags(const std::vector<LabeledImage>& train_images,
                                         const std::vector<LabeledImage>& eval_images,
                                         const Caae& caae, const TrainConfig& base,
                                         const std::string& work_dir) {
    std::vector<AblateRow> rows;
    std::int64_t index = 0;
    for (int cb = 0; cb <= 1; ++cb) {
        for (int as = 0; as <= 1; ++as) {
            for (int ac = 0; ac <= 1; ++ac) {
                TrainConfig cfg = base;
                cfg.loss_cf = true;
                cfg.loss_cb = cb != 0;
                cfg.loss_as = as != 0;
                cfg.loss_ac = ac != 0;
                cfg.seed = base.seed + static_cast<std::uint64_t>(index);
                std::string label = "cf";
                if (cb) label += "+cb";
                if (as) label += "+as";
                if (ac) label += "+ac";
                rows.push_back(run_one(train_images, eval_images, caae, cfg, label, work_dir));
                ++index;
            }
        }
    }
    return rows;
}

std::vector<AblateRow> ablate_sigma(const std::vector<LabeledImage>& train_images,
                                    const std::vector<LabeledImage>& eval_images, const Caae& caae,
                                    const TrainConfig& base, const std::vector<double>& sigmas,
                                    const std::string& work_dir) {
    std::vector<AblateRow> rows;
    std::int64_t index = 0;
    for (double sigma : sigmas) {
        TrainConfig cfg = base;
        cfg.sigma = sigma;
        cfg.seed = base.seed + static_cast<std::uint64_t>(index);
        std::ostringstream label;
        label << "sigma" << sigma;
        rows.push_back(run_one(train_images, eval_images, caae, cfg, label.str(), work_dir));
        ++index;
    }
    return rows;
}

std::vector<AblateRow> ablate_cra_blocks(const std::vector<LabeledImage>& train_images,
                                         const std::vector<LabeledImage>& eval_images,
                                         const Caae& caae, const TrainConfig& base,
                                         const std::string& work_dir) {
    // U only changes the attention readout, so one training run covers the
    // whole grid; each row evaluates a different window.
    std::vector<AblateRow> rows;
    TrainConfig cfg = base;
    const std::string dir = (fs::path(work_dir) / "cra_grid").string();
    Checkpoint ckpt = train_seg(train_images, caae, cfg, dir);
    const auto losses = final_epoch_losses(ckpt.metric_log);
    for (std::int64_t u = 1; u <= base.seg_depth; ++u) {
        AblateRow row;
        row.label = "u" + std::to_string(u);
        row.final_losses = losses;
        Checkpoint with_u = ckpt;
        with_u.config.cra_blocks = u;
        SegNet net = segnet_from_checkpoint(with_u);
        EvalOutcome eval = evaluate_dataset(net, eval_images, cfg.tau_bg, /*use_cra=*/true);
        row.miou = eval.metrics.miou;
        row.finite = all_finite(losses) && std::isfinite(row.miou);
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_ablate_csv(const std::vector<AblateRow>& rows, const std::string& path) {
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("write_ablate_csv: cannot open " + path);
    // union of loss terms across rows for a stable header
    std::vector<std::string> terms;
    for (const AblateRow& r : rows) {
        for (const auto& [k, v] : r.final_losses) {
            if (std::find(terms.begin(), terms.end(), k) == terms.end()) terms.push_back(k);
        }
    }
    std::sort(terms.begin(), terms.end());
    out << "label,miou,finite";
    for (const auto& t : terms) out << "," << t;
    out << "\n";
    out.precision(17);
    for (const AblateRow& r : rows) {
        out << r.label << "," << r.miou << "," << (r.finite ? 1 : 0);
        for (const auto& t : terms) {
            auto it = r.final_losses.find(t);
            out << ",";
            if (it != r.final_losses.end()) out << it->second;
        }
        out << "\n";
    }
}

}  // namespace semformer
