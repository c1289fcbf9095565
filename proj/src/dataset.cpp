#include "semformer/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "semformer/image_ops.hpp"
#include "semformer/png_io.hpp"

namespace fs = std::filesystem;

namespace semformer {

std::vector<int> LabeledImage::present_classes() const {
    std::vector<int> out;
    for (std::size_t c = 0; c < label.size(); ++c) {
        if (label[c]) out.push_back(static_cast<int>(c));
    }
    return out;
}

void DatasetSpec::validate() const {
    if (num_images < 0) throw std::invalid_argument("DatasetSpec: negative image count");
    if (num_classes < 2) throw std::invalid_argument("DatasetSpec: need at least 2 classes");
    if (num_classes > static_cast<std::int64_t>(class_palette().size())) {
        throw std::invalid_argument("DatasetSpec: num_classes exceeds palette size " +
                                    std::to_string(class_palette().size()));
    }
    if (shapes_min < 1 || shapes_max < shapes_min) {
        throw std::invalid_argument("DatasetSpec: invalid shapes-per-image range");
    }
    if (patch_size < 1 || image_size % patch_size != 0) {
        throw std::invalid_argument("DatasetSpec: image_size not divisible by patch size");
    }
    if (image_size < 16) throw std::invalid_argument("DatasetSpec: image_size too small");
}

const std::vector<ClassStyle>& class_palette() {
    // Background texture stays in muted grays; these stay saturated.
    static const std::vector<ClassStyle> palette = {
        {ShapeKind::Circle, {0.85, 0.10, 0.10}, "red_circle"},
        {ShapeKind::Square, {0.10, 0.75, 0.15}, "green_square"},
        {ShapeKind::Triangle, {0.15, 0.25, 0.90}, "blue_triangle"},
        {ShapeKind::Diamond, {0.90, 0.85, 0.10}, "yellow_diamond"},
        {ShapeKind::Cross, {0.85, 0.10, 0.80}, "magenta_cross"},
        {ShapeKind::Ring, {0.10, 0.80, 0.80}, "cyan_ring"},
    };
    return palette;
}

bool shape_covers(ShapeKind kind, std::int64_t cy, std::int64_t cx, std::int64_t size,
                  std::int64_t y, std::int64_t x) {
    const std::int64_t half = size / 2;
    const std::int64_t dy = y - cy;
    const std::int64_t dx = x - cx;
    switch (kind) {
        case ShapeKind::Circle:
            return dy * dy + dx * dx <= half * half;
        case ShapeKind::Square:
            // side = size, anchored so exactly size*size pixels are covered
            return y >= cy - half && y < cy - half + size && x >= cx - half && x < cx - half + size;
        case ShapeKind::Triangle: {
            // upright isoceles, apex at cy-half, base at cy+half
            const std::int64_t t = y - (cy - half);
            if (t < 0 || t >= size) return false;
            const std::int64_t halfwidth = (t * half) / std::max<std::int64_t>(size - 1, 1);
            return std::llabs(dx) <= halfwidth;
        }
        case ShapeKind::Diamond:
            return std::llabs(dy) + std::llabs(dx) <= half;
        case ShapeKind::Cross: {
            const std::int64_t bar = std::max<std::int64_t>(half / 2, 1);
            const bool horiz = std::llabs(dy) <= bar && std::llabs(dx) <= half;
            const bool vert = std::llabs(dx) <= bar && std::llabs(dy) <= half;
            return horiz || vert;
        }
        case ShapeKind::Ring: {
            const std::int64_t inner = half / 2;
            const std::int64_t d2 = dy * dy + dx * dx;
            return d2 <= half * half && d2 > inner * inner;
        }
    }
    return false;
}

namespace {

struct PlacedShape {
    int class_id;
    std::int64_t cy, cx, size;
};

bool boxes_overlap(const PlacedShape& a, const PlacedShape& b) {
    const std::int64_t gap = 1;
    const std::int64_t ra = a.size / 2 + gap;
    const std::int64_t rb = b.size / 2;
    return std::llabs(a.cy - b.cy) <= ra + rb && std::llabs(a.cx - b.cx) <= ra + rb;
}

void paint_background(Tensor& img, Rng& rng) {
    const std::int64_t h = img.dim(0), w = img.dim(1);
    const double base = rng.uniform(0.35, 0.55);
    const double gx = rng.uniform(-0.08, 0.08);
    const double gy = rng.uniform(-0.08, 0.08);
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            const double ramp = base + gx * (static_cast<double>(x) / w) +
                                gy * (static_cast<double>(y) / h);
            for (std::int64_t c = 0; c < 3; ++c) {
                const double noise = rng.uniform(-0.05, 0.05);
                img.at3(y, x, c) = std::min(1.0, std::max(0.0, ramp + noise));
            }
        }
    }
}

}  // namespace

std::vector<LabeledImage> generate_synthetic(const DatasetSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    const auto& palette = class_palette();
    const std::int64_t n = spec.image_size;

    std::vector<LabeledImage> out;
    out.reserve(static_cast<std::size_t>(spec.num_images));
    for (std::int64_t idx = 0; idx < spec.num_images; ++idx) {
        LabeledImage img;
        {
            std::ostringstream id;
            id << std::setfill('0');
            id.width(6);
            id << idx;
            img.id = id.str();
        }
        img.pixels = Tensor({n, n, 3});
        paint_background(img.pixels, rng);
        img.label.assign(static_cast<std::size_t>(spec.num_classes), 0);
        img.gt_mask.assign(static_cast<std::size_t>(n * n), 0);

        const std::int64_t want = rng.uniform_int(spec.shapes_min, spec.shapes_max);
        std::vector<int> classes(static_cast<std::size_t>(spec.num_classes));
        for (std::size_t c = 0; c < classes.size(); ++c) classes[c] = static_cast<int>(c);
        // Fisher-Yates prefix: distinct classes per image
        for (std::size_t i = 0; i < classes.size(); ++i) {
            const std::size_t j =
                i + static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(classes.size() - i - 1)));
            std::swap(classes[i], classes[j]);
        }

        std::vector<PlacedShape> placed;
        for (std::int64_t s = 0; s < want; ++s) {
            const int cls = classes[static_cast<std::size_t>(s)];
            const std::int64_t size_lo = std::max<std::int64_t>(n / 5, 8);
            const std::int64_t size_hi = std::max<std::int64_t>(n / 3, size_lo + 1);
            bool ok = false;
            PlacedShape cand{cls, 0, 0, 0};
            for (int tries = 0; tries < 100 && !ok; ++tries) {
                cand.size = rng.uniform_int(size_lo, size_hi);
                const std::int64_t margin = cand.size / 2 + 2;
                cand.cy = rng.uniform_int(margin, n - 1 - margin);
                cand.cx = rng.uniform_int(margin, n - 1 - margin);
                ok = true;
                for (const PlacedShape& p : placed) {
                    if (boxes_overlap(cand, p)) {
                        ok = false;
                        break;
                    }
                }
            }
            if (!ok) continue;  // crowded image: draw fewer shapes
            placed.push_back(cand);
        }
        if (placed.empty()) {
            // guarantee at least one object; center placement always fits
            placed.push_back({classes[0], n / 2, n / 2, std::max<std::int64_t>(n / 4, 8)});
        }

        for (const PlacedShape& p : placed) {
            const ClassStyle& style = palette[static_cast<std::size_t>(p.class_id)];
            const double jr = rng.uniform(-0.04, 0.04);
            const double jg = rng.uniform(-0.04, 0.04);
            const double jb = rng.uniform(-0.04, 0.04);
            img.label[static_cast<std::size_t>(p.class_id)] = 1;
            for (std::int64_t y = 0; y < n; ++y) {
                for (std::int64_t x = 0; x < n; ++x) {
                    if (!shape_covers(style.kind, p.cy, p.cx, p.size, y, x)) continue;
                    img.pixels.at3(y, x, 0) = std::min(1.0, std::max(0.0, style.color[0] + jr));
                    img.pixels.at3(y, x, 1) = std::min(1.0, std::max(0.0, style.color[1] + jg));
                    img.pixels.at3(y, x, 2) = std::min(1.0, std::max(0.0, style.color[2] + jb));
                    img.gt_mask[static_cast<std::size_t>(y * n + x)] =
                        static_cast<std::uint8_t>(p.class_id + 1);
                }
            }
        }
        out.push_back(std::move(img));
    }
    return out;
}

namespace {
std::vector<std::array<std::uint8_t, 3>> mask_palette(std::int64_t num_classes) {
    std::vector<std::array<std::uint8_t, 3>> pal;
    pal.push_back({0, 0, 0});
    const auto& styles = class_palette();
    for (std::int64_t c = 0; c < num_classes; ++c) {
        const auto& col = styles[static_cast<std::size_t>(c)].color;
        pal.push_back({static_cast<std::uint8_t>(std::lround(col[0] * 255)),
                       static_cast<std::uint8_t>(std::lround(col[1] * 255)),
                       static_cast<std::uint8_t>(std::lround(col[2] * 255))});
    }
    return pal;
}
}  // namespace

void export_voc_style(const std::vector<LabeledImage>& images, const std::string& root_dir,
                      const std::string& split) {
    fs::create_directories(fs::path(root_dir) / "images");
    bool any_mask = false;
    for (const auto& img : images) any_mask |= img.has_mask();
    if (any_mask) fs::create_directories(fs::path(root_dir) / "masks");

    // labels.txt is shared across splits: merge with existing rows and
    // rewrite sorted so repeated exports are byte-identical.
    std::map<std::string, std::vector<int>> label_rows;
    const fs::path labels_path = fs::path(root_dir) / "labels.txt";
    if (fs::exists(labels_path)) {
        std::ifstream existing(labels_path);
        std::string line;
        while (std::getline(existing, line)) {
            if (line.empty()) continue;
            std::istringstream is(line);
            std::string id;
            is >> id;
            std::vector<int> flags;
            int f;
            while (is >> f) flags.push_back(f);
            label_rows[id] = std::move(flags);
        }
    }

    std::ofstream list(fs::path(root_dir) / (split + ".txt"));
    if (!list) throw std::runtime_error("export_voc_style: cannot write " + root_dir);
    for (const auto& img : images) {
        write_png_rgb((fs::path(root_dir) / "images" / (img.id + ".png")).string(), img.pixels);
        list << img.id << "\n";
        label_rows[img.id] = img.label;
        if (img.has_mask()) {
            write_png_palette((fs::path(root_dir) / "masks" / (img.id + ".png")).string(),
                              img.gt_mask, img.height(), img.width(),
                              mask_palette(static_cast<std::int64_t>(img.label.size())));
        }
    }
    std::ofstream labels(labels_path);
    if (!labels) throw std::runtime_error("export_voc_style: cannot write " + labels_path.string());
    for (const auto& [id, flags] : label_rows) {
        labels << id;
        for (int f : flags) labels << " " << f;
        labels << "\n";
    }
}

std::vector<LabeledImage> load_voc_style(const std::string& root_dir, const std::string& split) {
    const fs::path root(root_dir);
    const fs::path list_path = root / (split + ".txt");
    if (!fs::exists(list_path)) {
        throw std::runtime_error("load_voc_style: missing list file " + list_path.string());
    }
    const fs::path labels_path = root / "labels.txt";
    if (!fs::exists(labels_path)) {
        throw std::runtime_error("load_voc_style: missing label file " + labels_path.string());
    }

    std::ifstream labels(labels_path);
    std::string line;
    std::size_t k = 0;
    std::unordered_map<std::string, std::vector<int>> label_map;
    while (std::getline(labels, line)) {
        if (line.empty()) continue;
        std::istringstream is(line);
        std::string id;
        is >> id;
        std::vector<int> flags;
        int f;
        while (is >> f) flags.push_back(f);
        if (k == 0) k = flags.size();
        if (flags.empty() || flags.size() != k) {
            throw std::runtime_error("load_voc_style: label row for '" + id +
                                     "' has wrong vector length in " + labels_path.string());
        }
        label_map[id] = std::move(flags);
    }

    std::vector<LabeledImage> out;
    std::ifstream list(list_path);
    while (std::getline(list, line)) {
        if (line.empty()) continue;
        LabeledImage img;
        img.id = line;
        const fs::path img_path = root / "images" / (img.id + ".png");
        if (!fs::exists(img_path)) {
            throw std::runtime_error("load_voc_style: missing image " + img_path.string());
        }
        img.pixels = read_png_rgb(img_path.string());
        auto it = label_map.find(img.id);
        if (it == label_map.end()) {
            throw std::runtime_error("load_voc_style: no label row for id '" + img.id + "' in " +
                                     labels_path.string());
        }
        img.label = it->second;
        const fs::path mask_path = root / "masks" / (img.id + ".png");
        if (fs::exists(mask_path)) {
            std::int64_t mh = 0, mw = 0;
            img.gt_mask = read_png_indices(mask_path.string(), mh, mw);
            if (mh != img.height() || mw != img.width()) {
                throw std::runtime_error("load_voc_style: mask size mismatch for " +
                                         mask_path.string());
            }
        }
        out.push_back(std::move(img));
    }
    return out;
}

LabeledImage augment(const LabeledImage& img, double scale_min, double scale_max,
                     std::int64_t crop_size, double flip_prob, Rng& rng) {
    const std::int64_t h = img.height();
    const std::int64_t w = img.width();
    const double s = rng.uniform(scale_min, scale_max);
    std::int64_t nh = static_cast<std::int64_t>(std::llround(s * static_cast<double>(h)));
    std::int64_t nw = static_cast<std::int64_t>(std::llround(s * static_cast<double>(w)));
    // documented behavior: never scale below the crop size
    if (nh < crop_size || nw < crop_size) {
        const double up = std::max(static_cast<double>(crop_size) / std::max(nh, std::int64_t{1}),
                                   static_cast<double>(crop_size) / std::max(nw, std::int64_t{1}));
        nh = std::max(crop_size, static_cast<std::int64_t>(std::llround(nh * up)));
        nw = std::max(crop_size, static_cast<std::int64_t>(std::llround(nw * up)));
    }

    LabeledImage out;
    out.id = img.id;
    out.label = img.label;
    Tensor scaled = resize_bilinear_hwc(img.pixels, nh, nw);
    std::vector<std::uint8_t> scaled_mask;
    if (img.has_mask()) scaled_mask = resize_nearest_mask(img.gt_mask, h, w, nh, nw);

    const std::int64_t oy = rng.uniform_int(0, nh - crop_size);
    const std::int64_t ox = rng.uniform_int(0, nw - crop_size);
    const bool flip = rng.bernoulli(flip_prob);

    out.pixels = Tensor({crop_size, crop_size, 3});
    if (img.has_mask()) out.gt_mask.assign(static_cast<std::size_t>(crop_size * crop_size), 0);
    for (std::int64_t y = 0; y < crop_size; ++y) {
        for (std::int64_t x = 0; x < crop_size; ++x) {
            const std::int64_t sx = flip ? ox + crop_size - 1 - x : ox + x;
            for (std::int64_t c = 0; c < 3; ++c) {
                out.pixels.at3(y, x, c) = scaled.at3(oy + y, sx, c);
            }
            if (img.has_mask()) {
                out.gt_mask[static_cast<std::size_t>(y * crop_size + x)] =
                    scaled_mask[static_cast<std::size_t>((oy + y) * nw + sx)];
            }
        }
    }
    return out;
}

}  // namespace semformer
