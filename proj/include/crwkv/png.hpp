#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace crwkv {

// RGB image: bytes on disk, reals in [0,1] in memory (h*w*3, row-major).
struct Image {
    std::int64_t h = 0;
    std::int64_t w = 0;
    std::vector<float> px;

    Image() = default;
    Image(std::int64_t hh, std::int64_t ww)
        : h(hh), w(ww), px(static_cast<std::size_t>(hh * ww * 3), 0.0f) {}

    float& at(std::int64_t y, std::int64_t x, int c) {
        return px[static_cast<std::size_t>((y * w + x) * 3 + c)];
    }
    float at(std::int64_t y, std::int64_t x, int c) const {
        return px[static_cast<std::size_t>((y * w + x) * 3 + c)];
    }
};

// 8-bit PNG I/O (color types 0/2/6 on read, RGB written). 16-bit depth and
// palette images are rejected with an explicit error naming the path.
Image load_png(const std::string& path);
void save_png(const Image& img, const std::string& path);

}  // namespace crwkv
