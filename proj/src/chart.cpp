#include "semformer/chart.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "semformer/png_io.hpp"
#include "semformer/tensor.hpp"

namespace semformer {

namespace {

// 5x7 glyphs for the characters charts actually use.
struct Glyph {
    char ch;
    std::uint8_t rows[7];  // 5 low bits per row, MSB-left
};

const Glyph kFont[] = {
    {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
    {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
    {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
    {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
    {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
    {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
    {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
    {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
    {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
    {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
    {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F}},
    {'%', {0x19, 0x19, 0x02, 0x04, 0x08, 0x13, 0x13}},
    {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
    {'a', {0x00, 0x00, 0x0E, 0x01, 0x0F, 0x11, 0x0F}},
    {'b', {0x10, 0x10, 0x1E, 0x11, 0x11, 0x11, 0x1E}},
    {'c', {0x00, 0x00, 0x0E, 0x11, 0x10, 0x11, 0x0E}},
    {'d', {0x01, 0x01, 0x0F, 0x11, 0x11, 0x11, 0x0F}},
    {'e', {0x00, 0x00, 0x0E, 0x11, 0x1F, 0x10, 0x0E}},
    {'f', {0x06, 0x08, 0x1C, 0x08, 0x08, 0x08, 0x08}},
    {'g', {0x00, 0x0F, 0x11, 0x0F, 0x01, 0x11, 0x0E}},
    {'h', {0x10, 0x10, 0x1E, 0x11, 0x11, 0x11, 0x11}},
    {'i', {0x04, 0x00, 0x0C, 0x04, 0x04, 0x04, 0x0E}},
    {'j', {0x02, 0x00, 0x06, 0x02, 0x02, 0x12, 0x0C}},
    {'k', {0x10, 0x10, 0x12, 0x14, 0x18, 0x14, 0x12}},
    {'l', {0x0C, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'m', {0x00, 0x00, 0x1A, 0x15, 0x15, 0x15, 0x15}},
    {'n', {0x00, 0x00, 0x1E, 0x11, 0x11, 0x11, 0x11}},
    {'o', {0x00, 0x00, 0x0E, 0x11, 0x11, 0x11, 0x0E}},
    {'p', {0x00, 0x1E, 0x11, 0x1E, 0x10, 0x10, 0x10}},
    {'q', {0x00, 0x0F, 0x11, 0x0F, 0x01, 0x01, 0x01}},
    {'r', {0x00, 0x00, 0x16, 0x19, 0x10, 0x10, 0x10}},
    {'s', {0x00, 0x00, 0x0F, 0x10, 0x0E, 0x01, 0x1E}},
    {'t', {0x08, 0x08, 0x1C, 0x08, 0x08, 0x09, 0x06}},
    {'u', {0x00, 0x00, 0x11, 0x11, 0x11, 0x13, 0x0D}},
    {'v', {0x00, 0x00, 0x11, 0x11, 0x11, 0x0A, 0x04}},
    {'w', {0x00, 0x00, 0x11, 0x11, 0x15, 0x15, 0x0A}},
    {'x', {0x00, 0x00, 0x11, 0x0A, 0x04, 0x0A, 0x11}},
    {'y', {0x00, 0x11, 0x11, 0x0F, 0x01, 0x11, 0x0E}},
    {'z', {0x00, 0x00, 0x1F, 0x02, 0x04, 0x08, 0x1F}},
};

const std::uint8_t* glyph_rows(char c) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    for (const Glyph& g : kFont) {
        if (g.ch == c) return g.rows;
    }
    return nullptr;
}

struct Canvas {
    std::int64_t w, h;
    Tensor img;  // (h, w, 3)

    Canvas(std::int64_t width, std::int64_t height) : w(width), h(height), img({height, width, 3}) {
        img.fill(1.0);
    }
    void set(std::int64_t y, std::int64_t x, const std::array<double, 3>& c) {
        if (y < 0 || y >= h || x < 0 || x >= w) return;
        for (int i = 0; i < 3; ++i) img.at3(y, x, i) = c[static_cast<std::size_t>(i)];
    }
    void line(std::int64_t y0, std::int64_t x0, std::int64_t y1, std::int64_t x1,
              const std::array<double, 3>& c) {
        const std::int64_t dx = std::llabs(x1 - x0), dy = -std::llabs(y1 - y0);
        const std::int64_t sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
        std::int64_t err = dx + dy;
        while (true) {
            set(y0, x0, c);
            if (x0 == x1 && y0 == y1) break;
            const std::int64_t e2 = 2 * err;
            if (e2 >= dy) {
                err += dy;
                x0 += sx;
            }
            if (e2 <= dx) {
                err += dx;
                y0 += sy;
            }
        }
    }
    void rect_fill(std::int64_t y0, std::int64_t x0, std::int64_t y1, std::int64_t x1,
                   const std::array<double, 3>& c) {
        for (std::int64_t y = std::max<std::int64_t>(y0, 0); y <= std::min(y1, h - 1); ++y)
            for (std::int64_t x = std::max<std::int64_t>(x0, 0); x <= std::min(x1, w - 1); ++x)
                set(y, x, c);
    }
    void text(std::int64_t y, std::int64_t x, const std::string& s,
              const std::array<double, 3>& c) {
        for (char ch : s) {
            const std::uint8_t* rows = glyph_rows(ch);
            if (rows) {
                for (int r = 0; r < 7; ++r)
                    for (int b = 0; b < 5; ++b)
                        if (rows[r] & (1 << (4 - b))) set(y + r, x + b, c);
            }
            x += 6;
        }
    }
};

const std::array<double, 3> kBlack{0.1, 0.1, 0.1};
const std::array<double, 3> kGray{0.82, 0.82, 0.82};
const std::array<std::array<double, 3>, 8> kSeriesColors{{
    {0.85, 0.20, 0.20},
    {0.15, 0.45, 0.80},
    {0.15, 0.65, 0.25},
    {0.80, 0.55, 0.10},
    {0.55, 0.25, 0.70},
    {0.10, 0.65, 0.65},
    {0.75, 0.30, 0.55},
    {0.40, 0.40, 0.40},
}};

std::string fmt_tick(double v) {
    std::ostringstream os;
    if (std::abs(v) >= 100 || v == std::floor(v)) {
        os << static_cast<long long>(std::llround(v));
    } else {
        os.precision(3);
        os << v;
    }
    return os.str();
}

}  // namespace

void render_line_chart(const std::string& path, const std::string& title,
                       const std::vector<Series>& series, std::int64_t width,
                       std::int64_t height) {
    Canvas cv(width, height);
    const std::int64_t ml = 70, mr = 20, mt = 30, mb = 40;
    const std::int64_t px0 = ml, px1 = width - mr, py0 = mt, py1 = height - mb;

    double xmin = std::numeric_limits<double>::max(), xmax = std::numeric_limits<double>::lowest();
    double ymin = xmin, ymax = xmax;
    for (const Series& s : series) {
        for (double v : s.x) {
            xmin = std::min(xmin, v);
            xmax = std::max(xmax, v);
        }
        for (double v : s.y) {
            ymin = std::min(ymin, v);
            ymax = std::max(ymax, v);
        }
    }
    if (series.empty() || xmin > xmax) {
        xmin = 0;
        xmax = 1;
        ymin = 0;
        ymax = 1;
    }
    if (ymax - ymin < 1e-12) ymax = ymin + 1.0;
    if (xmax - xmin < 1e-12) xmax = xmin + 1.0;

    auto map_x = [&](double v) {
        return px0 + static_cast<std::int64_t>((v - xmin) / (xmax - xmin) * (px1 - px0));
    };
    auto map_y = [&](double v) {
        return py1 - static_cast<std::int64_t>((v - ymin) / (ymax - ymin) * (py1 - py0));
    };

    for (int i = 0; i <= 4; ++i) {
        const double vy = ymin + (ymax - ymin) * i / 4.0;
        const std::int64_t y = map_y(vy);
        cv.line(y, px0, y, px1, kGray);
        cv.text(y - 3, 8, fmt_tick(vy), kBlack);
        const double vx = xmin + (xmax - xmin) * i / 4.0;
        const std::int64_t x = map_x(vx);
        cv.text(py1 + 8, x - 8, fmt_tick(vx), kBlack);
    }
    cv.line(py0, px0, py1, px0, kBlack);
    cv.line(py1, px0, py1, px1, kBlack);
    cv.text(10, px0, title, kBlack);

    std::int64_t legend_y = py0 + 6;
    for (std::size_t si = 0; si < series.size(); ++si) {
        const auto& color = kSeriesColors[si % kSeriesColors.size()];
        const Series& s = series[si];
        for (std::size_t i = 1; i < s.x.size(); ++i) {
            cv.line(map_y(s.y[i - 1]), map_x(s.x[i - 1]), map_y(s.y[i]), map_x(s.x[i]), color);
        }
        cv.rect_fill(legend_y, px1 - 140, legend_y + 6, px1 - 132, color);
        cv.text(legend_y, px1 - 126, s.name, kBlack);
        legend_y += 12;
    }
    write_png_rgb(path, cv.img);
}

void render_bar_chart(const std::string& path, const std::string& title,
                      const std::vector<std::string>& labels, const std::vector<double>& values,
                      std::int64_t width, std::int64_t height) {
    Canvas cv(width, height);
    const std::int64_t ml = 70, mr = 20, mt = 30, mb = 90;
    const std::int64_t px0 = ml, px1 = width - mr, py0 = mt, py1 = height - mb;

    double ymax = 0.0;
    for (double v : values) ymax = std::max(ymax, v);
    if (ymax <= 0.0) ymax = 1.0;

    auto map_y = [&](double v) {
        return py1 - static_cast<std::int64_t>(v / ymax * (py1 - py0));
    };
    for (int i = 0; i <= 4; ++i) {
        const double vy = ymax * i / 4.0;
        const std::int64_t y = map_y(vy);
        cv.line(y, px0, y, px1, kGray);
        cv.text(y - 3, 8, fmt_tick(vy), kBlack);
    }
    cv.line(py0, px0, py1, px0, kBlack);
    cv.line(py1, px0, py1, px1, kBlack);
    cv.text(10, px0, title, kBlack);

    const std::size_t n = values.size();
    if (n > 0) {
        const std::int64_t slot = (px1 - px0) / static_cast<std::int64_t>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& color = kSeriesColors[i % kSeriesColors.size()];
            const std::int64_t x0 = px0 + static_cast<std::int64_t>(i) * slot + slot / 6;
            const std::int64_t x1 = px0 + static_cast<std::int64_t>(i + 1) * slot - slot / 6;
            cv.rect_fill(map_y(values[i]), x0, py1 - 1, x1, color);
            if (i < labels.size()) {
                // vertical-ish label: print up to 12 chars below the bar
                cv.text(py1 + 10 + static_cast<std::int64_t>(i % 2) * 12, x0 - 4,
                        labels[i].substr(0, 14), kBlack);
            }
        }
    }
    write_png_rgb(path, cv.img);
}

}  // namespace semformer
