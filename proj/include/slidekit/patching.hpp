#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "slidekit/raster.hpp"
#include "slidekit/tensor.hpp"

namespace slidekit {

enum class BorderPolicy { drop_partial, pad_reflect };

// Deterministic tiling of a raster into fixed-size square cells. Cells are
// listed row-major; under pad_reflect the trailing cells may extend past the
// source bounds and sample it mirrored.
struct PatchGrid {
    int source_width = 0;
    int source_height = 0;
    int patch_size = 0;
    int stride = 0;
    BorderPolicy border = BorderPolicy::drop_partial;
    std::vector<std::pair<int, int>> cells;  // (row_origin, col_origin)
};

PatchGrid make_grid(int width, int height, int patch_size, int stride, BorderPolicy border);

// Patch as a [C,P,P] tensor; out-of-bounds pixels are mirror-reflected
// (edge-inclusive, so it is defined even for 1-pixel sources).
Tensor extract_patch(const Raster& r, const PatchGrid& g, int cell);

// Mask cell with the same reflection rule, for segmentation targets.
Mask extract_mask_patch(const Mask& m, const PatchGrid& g, int cell);

// Fraction of class-1 pixels sampled by the cell, in [0,1].
double landslide_coverage(const Mask& m, const PatchGrid& g, int cell);

// Cells with coverage strictly below the threshold, original order.
std::vector<int> filter_unsupervised(const Mask& m, const PatchGrid& g, double threshold = 0.5);

// 1 iff coverage >= positive_threshold.
int patch_label(const Mask& m, const PatchGrid& g, int cell, double positive_threshold = 0.01);

struct SplitAssignment {
    std::vector<int> train_indices;
    std::vector<int> test_indices;
    uint64_t seed = 0;
    double ratio = 0.5;
};

// random_cells: seeded uniform permutation, first floor(ratio*n) cells train.
// contiguous_block: the leading row-major block trains (spatial halves);
// the seed is recorded but unused.
enum class SplitMode { random_cells, contiguous_block };

SplitAssignment split(const PatchGrid& g, double ratio, uint64_t seed,
                      SplitMode mode = SplitMode::random_cells);

std::string split_to_json(const SplitAssignment& s);
SplitAssignment split_from_json(const std::string& text);

}  // namespace slidekit
