#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace slidekit {

// Minimal PNG support for the formats the toolkit emits and consumes:
// 8/16-bit grayscale and 8-bit RGB, non-interlaced. Samples are kept as
// uint16 regardless of depth (8-bit values occupy 0..255).
struct PngImage {
    int width = 0;
    int height = 0;
    int channels = 1;   // 1 = gray, 3 = rgb
    int bit_depth = 8;  // 8 or 16
    std::vector<uint16_t> samples;  // row-major, channel-interleaved
};

PngImage read_png(const std::string& path);
void write_png(const std::string& path, const PngImage& img);

}  // namespace slidekit
