#pragma once

#include <string>
#include <vector>

#include "slidekit/model.hpp"
#include "slidekit/objective.hpp"
#include "slidekit/patching.hpp"
#include "slidekit/raster.hpp"

namespace slidekit {

enum class Provenance { anomaly_ssim, anomaly_residual, seg_prob, patch_prob };

std::string to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

// Per-pixel scores in [0,1] aligned to a source raster.
struct ScoreMap {
    int width = 0;
    int height = 0;
    std::vector<float> values;
    Provenance provenance = Provenance::anomaly_ssim;

    float at(int y, int x) const { return values[static_cast<size_t>(y) * width + x]; }
};

enum class Blend { average, hann };

// Per-patch 1-D blend profile; strictly positive so every covered pixel
// carries weight. Exposed for the weight-normalization property tests.
std::vector<float> blend_profile(int patch_size, Blend blend);

// Accumulated (unnormalized) per-pixel blend weight for a grid; every pixel
// of the source must end up > 0 for stride <= patch_size.
std::vector<float> accumulate_blend_weights(const PatchGrid& g, Blend blend);

// Sliding-window denoiser reconstruction over a pad_reflect grid; the model
// sees clean patches (no injected noise) and overlaps are blend-weighted.
Raster reconstruct_full(const Model& model, const Raster& r, int patch_size, int stride,
                        Blend blend = Blend::average, int threads = 1);

// anomaly_ssim: (1 - per-pixel SSIM)/2 clamped to [0,1];
// anomaly_residual: |x - recon| rescaled by the map's own max.
ScoreMap anomaly_map(const Raster& x, const Raster& recon, Provenance mode, const SsimConfig& cfg);

// class 1 iff score >= t, t in [0,1].
Mask threshold(const ScoreMap& sm, double t);

// Patch probability painted over each cell footprint, overlaps averaged.
ScoreMap classify_raster(const Model& model, const Raster& r, const PatchGrid& g, int threads = 1);

// Sliding-window class-1 softmax probability, blend-weighted like
// reconstruct_full.
ScoreMap segment_raster(const Model& model, const Raster& r, int patch_size, int stride,
                        Blend blend = Blend::average, int threads = 1);

// 16-bit grayscale PNG (score x 65535) plus a JSON sidecar at <path>.json.
void save_scoremap(const std::string& path, const ScoreMap& sm, const std::string& source,
                   const std::string& params_json = "{}");
ScoreMap load_scoremap(const std::string& path);

}  // namespace slidekit
