#include "semformer/evaluator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <limits>
#include <stdexcept>

#include "semformer/dataset.hpp"
#include "semformer/image_ops.hpp"
#include "semformer/png_io.hpp"

namespace fs = std::filesystem;

namespace semformer {

std::vector<std::uint8_t> pseudo_mask(const Tensor& fused, const std::vector<int>& label,
                                      double tau_bg) {
    if (fused.rank() != 3) throw std::invalid_argument("pseudo_mask: expected (K, H, W)");
    if (tau_bg < 0.0 || tau_bg > 1.0) throw std::invalid_argument("pseudo_mask: tau_bg in [0,1]");
    const std::int64_t k = fused.dim(0);
    if (static_cast<std::int64_t>(label.size()) != k) {
        throw std::invalid_argument("pseudo_mask: label length != K");
    }
    const std::int64_t h = fused.dim(1), w = fused.dim(2);
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(h * w));
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            double best = tau_bg;  // synthetic background channel
            std::int64_t arg = 0;
            for (std::int64_t c = 0; c < k; ++c) {
                if (!label[static_cast<std::size_t>(c)]) continue;  // suppressed
                const double v = fused.at3(c, y, x);
                if (v > best) {
                    best = v;
                    arg = c + 1;
                }
            }
            mask[static_cast<std::size_t>(y * w + x)] = static_cast<std::uint8_t>(arg);
        }
    }
    return mask;
}

Tensor confusion(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& gt,
                 std::int64_t num_classes) {
    if (pred.size() != gt.size()) throw std::invalid_argument("confusion: size mismatch");
    const std::int64_t side = num_classes + 1;
    Tensor conf({side, side});
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const std::int64_t p = pred[i];
        const std::int64_t g = gt[i];
        if (p > num_classes || g > num_classes) {
            throw std::invalid_argument("confusion: out-of-range label at pixel " +
                                        std::to_string(i) + " (gt=" + std::to_string(g) +
                                        ", pred=" + std::to_string(p) + ")");
        }
        conf(g, p) += 1.0;
    }
    return conf;
}

SegMetrics metrics_from_confusion(const Tensor& conf) {
    if (conf.rank() != 2 || conf.rows() != conf.cols()) {
        throw std::invalid_argument("metrics_from_confusion: square matrix expected");
    }
    const std::int64_t side = conf.rows();
    double total = conf.sum();
    if (total <= 0.0) throw std::invalid_argument("metrics_from_confusion: empty confusion matrix");

    SegMetrics m;
    m.per_class_iou.assign(static_cast<std::size_t>(side),
                           std::numeric_limits<double>::quiet_NaN());
    double iou_sum = 0.0;
    std::int64_t defined = 0;
    double fp_fg = 0.0, fn_fg = 0.0;
    for (std::int64_t c = 0; c < side; ++c) {
        const double tp = conf(c, c);
        double fp = 0.0, fn = 0.0;
        for (std::int64_t o = 0; o < side; ++o) {
            if (o == c) continue;
            fp += conf(o, c);  // predicted c, truly o
            fn += conf(c, o);  // truly c, predicted o
        }
        const double denom = tp + fp + fn;
        if (denom > 0.0) {
            m.per_class_iou[static_cast<std::size_t>(c)] = tp / denom;
            iou_sum += tp / denom;
            ++defined;
        }
        if (c > 0) {  // foreground classes only
            fp_fg += fp;
            fn_fg += fn;
        }
    }
    if (defined == 0) throw std::invalid_argument("metrics_from_confusion: no defined class IoU");
    m.miou = iou_sum / static_cast<double>(defined);
    m.fp_rate = fp_fg / total;
    m.fn_rate = fn_fg / total;
    return m;
}

std::size_t export_maps(const Tensor& fused, const std::vector<int>& label, double tau_bg,
                        const std::string& dir, const std::string& image_id) {
    if (fused.rank() != 3) throw std::invalid_argument("export_maps: expected (K, H, W)");
    fs::create_directories(dir);
    const std::int64_t k = fused.dim(0);
    const std::int64_t h = fused.dim(1), w = fused.dim(2);

    std::size_t written = 0;
    for (std::int64_t c = 0; c < k; ++c) {
        Tensor plane({h, w});
        for (std::int64_t i = 0; i < h * w; ++i) plane[i] = fused[c * h * w + i];
        write_png_gray((fs::path(dir) / (image_id + "_class" + std::to_string(c) + ".png")).string(),
                       plane);
        ++written;
    }

    const auto mask = pseudo_mask(fused, label, tau_bg);
    std::vector<std::array<std::uint8_t, 3>> palette;
    palette.push_back({0, 0, 0});
    const auto& styles = class_palette();
    for (std::int64_t c = 0; c < k; ++c) {
        const auto& col = styles[static_cast<std::size_t>(c) % styles.size()].color;
        palette.push_back({static_cast<std::uint8_t>(std::lround(col[0] * 255)),
                           static_cast<std::uint8_t>(std::lround(col[1] * 255)),
                           static_cast<std::uint8_t>(std::lround(col[2] * 255))});
    }
    write_png_palette((fs::path(dir) / (image_id + "_mask.png")).string(), mask, h, w, palette);
    ++written;
    return written;
}

void export_maps_npy(const Tensor& fused, const std::string& dir, const std::string& image_id) {
    fs::create_directories(dir);
    write_npy((fs::path(dir) / (image_id + "_maps.npy")).string(), fused);
}

}  // namespace semformer
