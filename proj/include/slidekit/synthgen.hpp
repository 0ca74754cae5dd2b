#pragma once

#include <cstdint>

#include "slidekit/raster.hpp"

namespace slidekit {

// Procedural terrain-texture scene with elliptical anomaly blobs. The mask
// marks exactly the injected blob support.
struct SceneSpec {
    int width = 512;
    int height = 512;
    int texture_octaves = 4;
    int blob_count = 8;
    int blob_radius_min = 8;
    int blob_radius_max = 16;
    double contrast = 1.5;  // brightness shift inside blobs, in background stds
    uint64_t seed = 0;
};

struct Scene {
    Raster raster;
    Mask mask;
};

Scene generate_scene(const SceneSpec& spec);

std::string scene_spec_to_json(const SceneSpec& spec);

}  // namespace slidekit
