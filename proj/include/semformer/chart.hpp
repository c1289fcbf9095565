#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace semformer {

// Minimal raster chart renderer for loss curves and IoU bars. No external
// plotting dependency; output is an RGB PNG with a 5x7 bitmap font.
struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

void render_line_chart(const std::string& path, const std::string& title,
                       const std::vector<Series>& series, std::int64_t width = 900,
                       std::int64_t height = 540);

void render_bar_chart(const std::string& path, const std::string& title,
                      const std::vector<std::string>& labels, const std::vector<double>& values,
                      std::int64_t width = 900, std::int64_t height = 540);

}  // namespace semformer
