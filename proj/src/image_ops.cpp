#include "semformer/image_ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace semformer {

namespace {
struct Tap {
    std::int64_t lo, hi;
    double frac;
};

Tap tap_for(std::int64_t out_i, std::int64_t in_n, std::int64_t out_n) {
    const double scale = static_cast<double>(in_n) / static_cast<double>(out_n);
    double f = (static_cast<double>(out_i) + 0.5) * scale - 0.5;
    f = std::max(0.0, std::min(f, static_cast<double>(in_n - 1)));
    Tap t;
    t.lo = static_cast<std::int64_t>(std::floor(f));
    t.hi = std::min(t.lo + 1, in_n - 1);
    t.frac = f - static_cast<double>(t.lo);
    return t;
}
}  // namespace

Tensor resize_bilinear_hwc(const Tensor& img, std::int64_t out_h, std::int64_t out_w) {
    if (img.rank() != 3) throw std::invalid_argument("resize_bilinear_hwc: expected (H, W, C)");
    const std::int64_t h = img.dim(0), w = img.dim(1), c = img.dim(2);
    if (h == out_h && w == out_w) return img;
    Tensor out({out_h, out_w, c});
    for (std::int64_t oi = 0; oi < out_h; ++oi) {
        const Tap ty = tap_for(oi, h, out_h);
        for (std::int64_t oj = 0; oj < out_w; ++oj) {
            const Tap tx = tap_for(oj, w, out_w);
            for (std::int64_t ch = 0; ch < c; ++ch) {
                const double v00 = img.at3(ty.lo, tx.lo, ch);
                const double v01 = img.at3(ty.lo, tx.hi, ch);
                const double v10 = img.at3(ty.hi, tx.lo, ch);
                const double v11 = img.at3(ty.hi, tx.hi, ch);
                out.at3(oi, oj, ch) = (1 - ty.frac) * ((1 - tx.frac) * v00 + tx.frac * v01) +
                                      ty.frac * ((1 - tx.frac) * v10 + tx.frac * v11);
            }
        }
    }
    return out;
}

Tensor resize_bilinear_plane(const Tensor& plane, std::int64_t out_h, std::int64_t out_w) {
    if (plane.rank() != 2) throw std::invalid_argument("resize_bilinear_plane: expected (H, W)");
    const std::int64_t h = plane.dim(0), w = plane.dim(1);
    if (h == out_h && w == out_w) return plane;
    Tensor out({out_h, out_w});
    for (std::int64_t oi = 0; oi < out_h; ++oi) {
        const Tap ty = tap_for(oi, h, out_h);
        for (std::int64_t oj = 0; oj < out_w; ++oj) {
            const Tap tx = tap_for(oj, w, out_w);
            out(oi, oj) = (1 - ty.frac) * ((1 - tx.frac) * plane(ty.lo, tx.lo) +
                                           tx.frac * plane(ty.lo, tx.hi)) +
                          ty.frac * ((1 - tx.frac) * plane(ty.hi, tx.lo) +
                                     tx.frac * plane(ty.hi, tx.hi));
        }
    }
    return out;
}

std::vector<std::uint8_t> resize_nearest_mask(const std::vector<std::uint8_t>& mask,
                                              std::int64_t h, std::int64_t w, std::int64_t out_h,
                                              std::int64_t out_w) {
    if (static_cast<std::int64_t>(mask.size()) != h * w) {
        throw std::invalid_argument("resize_nearest_mask: size mismatch");
    }
    if (h == out_h && w == out_w) return mask;
    std::vector<std::uint8_t> out(static_cast<std::size_t>(out_h * out_w));
    for (std::int64_t oi = 0; oi < out_h; ++oi) {
        std::int64_t si = (oi * h + h / 2) / out_h;
        si = std::min(si, h - 1);
        for (std::int64_t oj = 0; oj < out_w; ++oj) {
            std::int64_t sj = (oj * w + w / 2) / out_w;
            sj = std::min(sj, w - 1);
            out[static_cast<std::size_t>(oi * out_w + oj)] =
                mask[static_cast<std::size_t>(si * w + sj)];
        }
    }
    return out;
}

void write_npy(const std::string& path, const Tensor& t) {
    std::ostringstream header;
    header << "{'descr': '<f8', 'fortran_order': False, 'shape': (";
    for (std::size_t i = 0; i < t.rank(); ++i) {
        header << t.dim(i);
        if (t.rank() == 1 || i + 1 < t.rank()) header << ",";
        if (i + 1 < t.rank()) header << " ";
    }
    header << "), }";
    std::string h = header.str();
    const std::size_t base = 10 + h.size() + 1;  // magic+version+len + header + newline
    const std::size_t pad = (64 - base % 64) % 64;
    h.append(pad, ' ');
    h.push_back('\n');

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_npy: cannot open " + path);
    const char magic[] = "\x93NUMPY";
    out.write(magic, 6);
    const char version[2] = {1, 0};
    out.write(version, 2);
    const std::uint16_t hlen = static_cast<std::uint16_t>(h.size());
    out.write(reinterpret_cast<const char*>(&hlen), 2);
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.numel() * static_cast<std::int64_t>(sizeof(double))));
    if (!out) throw std::runtime_error("write_npy: write failed " + path);
}

}  // namespace semformer
