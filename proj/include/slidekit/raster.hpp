#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "slidekit/common.hpp"

namespace slidekit {

struct ChannelStats {
    double mean = 0.0;
    double stddev = 0.0;  // population
};

// A 2-D image with 1-4 channels, stored planar: data[(c*height + y)*width + x].
// Immutable after construction; concurrent reads are safe.
struct Raster {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<float> data;
    std::vector<ChannelStats> stats;

    float at(int y, int x, int c = 0) const {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }
    size_t pixel_count() const { return static_cast<size_t>(width) * height; }
};

// Per-pixel class ids, 0 = background, 1 = landslide.
struct Mask {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> data;

    uint8_t at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }
};

// Builds a raster from planar float data and computes per-channel stats.
Raster make_raster(int width, int height, int channels, std::vector<float> data);

// Recomputes `stats` from `data` (population standard deviation).
void compute_stats(Raster& r);

// Loads a PNG (8/16-bit gray or 8-bit RGB) or a raw .slkr blob, chosen by
// file magic. Stats are computed over all pixels.
Raster load_raster(const std::string& path);

// PNG when the path ends in .png (requires integral samples within the
// target depth), raw .slkr otherwise. Raw round-trips are bit-exact.
void save_raster(const std::string& path, const Raster& r);

// Per-channel zero mean, unit variance; channels with zero spread map to
// all-zeros. Idempotent up to floating point.
Raster standardize(const Raster& r);

// Single-channel image -> binary mask via the >= 128 rule.
Mask load_mask(const std::string& path);
void save_mask(const std::string& path, const Mask& m);

}  // namespace slidekit
