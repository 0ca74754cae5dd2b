#include "slidekit/synthgen.hpp"

#include <cmath>
#include <json.hpp>

#include "slidekit/rng.hpp"

namespace slidekit {

namespace {

// Layered value noise: bilinear interpolation of per-octave lattices whose
// cell size doubles per octave. Coarse octaves carry the most amplitude, so
// the texture stays dominated by structure above the noise frequency.
std::vector<float> value_noise(int width, int height, int octaves, uint64_t seed) {
    std::vector<float> out(static_cast<size_t>(width) * height, 0.0f);
    for (int o = 0; o < octaves; ++o) {
        const int cell = 4 << o;
        const double amp = std::pow(0.6, octaves - 1 - o);
        const int gw = width / cell + 2;
        const int gh = height / cell + 2;
        RandomStream rng = RandomStream::substream(seed, static_cast<uint64_t>(o));
        std::vector<float> lattice(static_cast<size_t>(gw) * gh);
        for (float& v : lattice) {
            v = static_cast<float>(rng.uniform(-1.0, 1.0));
        }
        for (int y = 0; y < height; ++y) {
            const int gy = y / cell;
            const float fy = static_cast<float>(y % cell) / cell;
            for (int x = 0; x < width; ++x) {
                const int gx = x / cell;
                const float fx = static_cast<float>(x % cell) / cell;
                const float v00 = lattice[static_cast<size_t>(gy) * gw + gx];
                const float v01 = lattice[static_cast<size_t>(gy) * gw + gx + 1];
                const float v10 = lattice[static_cast<size_t>(gy + 1) * gw + gx];
                const float v11 = lattice[static_cast<size_t>(gy + 1) * gw + gx + 1];
                const float top = v00 + (v01 - v00) * fx;
                const float bot = v10 + (v11 - v10) * fx;
                out[static_cast<size_t>(y) * width + x] += static_cast<float>(amp) * (top + (bot - top) * fy);
            }
        }
    }
    return out;
}

std::vector<float> box_blur(const std::vector<float>& src, int width, int height, int radius) {
    std::vector<float> out(src.size());
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            float acc = 0.0f;
            int n = 0;
            for (int dy = -radius; dy <= radius; ++dy) {
                const int sy = y + dy;
                if (sy < 0 || sy >= height) continue;
                for (int dx = -radius; dx <= radius; ++dx) {
                    const int sx = x + dx;
                    if (sx < 0 || sx >= width) continue;
                    acc += src[static_cast<size_t>(sy) * width + sx];
                    ++n;
                }
            }
            out[static_cast<size_t>(y) * width + x] = acc / n;
        }
    }
    return out;
}

struct Blob {
    double cx, cy, rx, ry, angle;
};

}  // namespace

Scene generate_scene(const SceneSpec& spec) {
    if (spec.width < 1 || spec.height < 1) {
        throw DataError("generate_scene: zero-area scene");
    }
    if (spec.blob_count < 0) {
        throw DataError("generate_scene: blob_count must be >= 0");
    }
    if (spec.blob_count > 0) {
        if (spec.blob_radius_min < 2 || spec.blob_radius_max < spec.blob_radius_min) {
            throw DataError("generate_scene: blob radii must satisfy 2 <= min <= max");
        }
        if (spec.blob_radius_max > std::min(spec.width, spec.height) / 2) {
            throw DataError("generate_scene: blobs cannot fit (radius > min dim / 2)");
        }
    }
    if (spec.texture_octaves < 1) {
        throw DataError("generate_scene: texture_octaves must be >= 1");
    }

    std::vector<float> texture = value_noise(spec.width, spec.height, spec.texture_octaves, spec.seed);

    double mean = 0.0;
    for (float v : texture) mean += v;
    mean /= static_cast<double>(texture.size());
    double var = 0.0;
    for (float v : texture) var += (v - mean) * (v - mean);
    const double bg_std = std::sqrt(var / static_cast<double>(texture.size()));

    // blob geometry; rejection keeps centers apart so supports rarely merge
    RandomStream geo = RandomStream::substream(spec.seed, 0x42u);
    std::vector<Blob> blobs;
    for (int b = 0; b < spec.blob_count; ++b) {
        Blob candidate{};
        bool placed = false;
        for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
            const double rx = geo.uniform(spec.blob_radius_min, spec.blob_radius_max);
            const double ry = geo.uniform(spec.blob_radius_min, spec.blob_radius_max);
            const double margin = std::max(rx, ry);
            candidate = Blob{geo.uniform(margin, spec.width - margin),
                             geo.uniform(margin, spec.height - margin), rx, ry,
                             geo.uniform(0.0, 3.14159265358979323846)};
            placed = true;
            for (const Blob& prev : blobs) {
                const double d = std::hypot(candidate.cx - prev.cx, candidate.cy - prev.cy);
                if (d < std::max(candidate.rx, candidate.ry) + std::max(prev.rx, prev.ry)) {
                    placed = false;
                    break;
                }
            }
        }
        blobs.push_back(candidate);  // accepted as-is after too many rejections
    }

    // Anomalies alter texture statistics: the base is smoothed and brightened
    // and gains fine-grained speckle that the background octaves never
    // produce. The speckle scale matches the denoising-noise scale, so a
    // noise-removal model reconstructs blob interiors poorly.
    const std::vector<float> smoothed = box_blur(texture, spec.width, spec.height, 2);
    const float shift = static_cast<float>(0.6 * spec.contrast * bg_std);
    const float speckle_amp = static_cast<float>(0.6 * spec.contrast * bg_std);
    RandomStream speckle = RandomStream::substream(spec.seed, 0x5Bu);

    Mask mask;
    mask.width = spec.width;
    mask.height = spec.height;
    mask.data.assign(texture.size(), 0);
    for (const Blob& blob : blobs) {
        const double c = std::cos(blob.angle), s = std::sin(blob.angle);
        const int y0 = std::max(0, static_cast<int>(blob.cy - std::max(blob.rx, blob.ry)) - 1);
        const int y1 = std::min(spec.height - 1, static_cast<int>(blob.cy + std::max(blob.rx, blob.ry)) + 1);
        const int x0 = std::max(0, static_cast<int>(blob.cx - std::max(blob.rx, blob.ry)) - 1);
        const int x1 = std::min(spec.width - 1, static_cast<int>(blob.cx + std::max(blob.rx, blob.ry)) + 1);
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const double dx = x - blob.cx, dy = y - blob.cy;
                const double u = (c * dx + s * dy) / blob.rx;
                const double v = (-s * dx + c * dy) / blob.ry;
                if (u * u + v * v <= 1.0) {
                    const size_t i = static_cast<size_t>(y) * spec.width + x;
                    texture[i] = smoothed[i] + shift +
                                 speckle_amp * static_cast<float>(speckle.uniform(-1.0, 1.0));
                    mask.data[i] = 1;
                }
            }
        }
    }

    Scene scene;
    scene.raster = make_raster(spec.width, spec.height, 1, std::move(texture));
    scene.mask = std::move(mask);
    return scene;
}

std::string scene_spec_to_json(const SceneSpec& spec) {
    nlohmann::json j;
    j["width"] = spec.width;
    j["height"] = spec.height;
    j["texture_octaves"] = spec.texture_octaves;
    j["blob_count"] = spec.blob_count;
    j["blob_radius_min"] = spec.blob_radius_min;
    j["blob_radius_max"] = spec.blob_radius_max;
    j["contrast"] = spec.contrast;
    j["seed"] = spec.seed;
    return j.dump(2) + "\n";
}

}  // namespace slidekit
