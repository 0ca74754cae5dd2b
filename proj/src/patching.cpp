#include "slidekit/patching.hpp"

#include <json.hpp>
#include <numeric>

#include "slidekit/rng.hpp"

namespace slidekit {

namespace {

// edge-inclusive mirror: ...2,1,0 | 0,1,2,...,n-1 | n-1,...
int reflect_index(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * n;
    int m = i % period;
    if (m < 0) m += period;
    return m < n ? m : period - 1 - m;
}

int axis_cells(int dim, int patch, int stride, BorderPolicy border) {
    if (border == BorderPolicy::drop_partial) {
        return dim >= patch ? (dim - patch) / stride + 1 : 0;
    }
    return dim <= patch ? 1 : (dim - patch + stride - 1) / stride + 1;
}

}  // namespace

PatchGrid make_grid(int width, int height, int patch_size, int stride, BorderPolicy border) {
    if (patch_size < 1 || stride < 1) {
        throw DataError("make_grid: patch_size and stride must be >= 1");
    }
    if (width < 1 || height < 1) {
        throw DataError("make_grid: zero-area source");
    }
    PatchGrid g;
    g.source_width = width;
    g.source_height = height;
    g.patch_size = patch_size;
    g.stride = stride;
    g.border = border;

    const int rows = axis_cells(height, patch_size, stride, border);
    const int cols = axis_cells(width, patch_size, stride, border);
    if (rows == 0 || cols == 0) {
        throw DataError("make_grid: empty grid (patch larger than raster under drop_partial)");
    }
    g.cells.reserve(static_cast<size_t>(rows) * cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            g.cells.emplace_back(r * stride, c * stride);
        }
    }
    return g;
}

Tensor extract_patch(const Raster& r, const PatchGrid& g, int cell) {
    if (cell < 0 || static_cast<size_t>(cell) >= g.cells.size()) {
        throw DataError("extract_patch: cell index out of range");
    }
    if (r.width != g.source_width || r.height != g.source_height) {
        throw DataError("extract_patch: raster dims do not match grid");
    }
    const auto [row0, col0] = g.cells[static_cast<size_t>(cell)];
    const int p = g.patch_size;
    std::vector<real> out(static_cast<size_t>(r.channels) * p * p);
    const size_t plane = r.pixel_count();
    for (int c = 0; c < r.channels; ++c) {
        const float* src = &r.data[c * plane];
        real* dst = &out[static_cast<size_t>(c) * p * p];
        for (int y = 0; y < p; ++y) {
            const int sy = reflect_index(row0 + y, r.height);
            for (int x = 0; x < p; ++x) {
                const int sx = reflect_index(col0 + x, r.width);
                dst[static_cast<size_t>(y) * p + x] =
                    static_cast<real>(src[static_cast<size_t>(sy) * r.width + sx]);
            }
        }
    }
    return Tensor::from_values({r.channels, p, p}, std::move(out));
}

Mask extract_mask_patch(const Mask& m, const PatchGrid& g, int cell) {
    if (cell < 0 || static_cast<size_t>(cell) >= g.cells.size()) {
        throw DataError("extract_mask_patch: cell index out of range");
    }
    if (m.width != g.source_width || m.height != g.source_height) {
        throw DataError("extract_mask_patch: mask dims do not match grid");
    }
    const auto [row0, col0] = g.cells[static_cast<size_t>(cell)];
    const int p = g.patch_size;
    Mask out;
    out.width = p;
    out.height = p;
    out.data.resize(static_cast<size_t>(p) * p);
    for (int y = 0; y < p; ++y) {
        const int sy = reflect_index(row0 + y, m.height);
        for (int x = 0; x < p; ++x) {
            const int sx = reflect_index(col0 + x, m.width);
            out.data[static_cast<size_t>(y) * p + x] = m.data[static_cast<size_t>(sy) * m.width + sx];
        }
    }
    return out;
}

double landslide_coverage(const Mask& m, const PatchGrid& g, int cell) {
    if (cell < 0 || static_cast<size_t>(cell) >= g.cells.size()) {
        throw DataError("landslide_coverage: cell index out of range");
    }
    if (m.width != g.source_width || m.height != g.source_height) {
        throw DataError("landslide_coverage: mask dims do not match grid");
    }
    const auto [row0, col0] = g.cells[static_cast<size_t>(cell)];
    const int p = g.patch_size;
    int64_t count = 0;
    for (int y = 0; y < p; ++y) {
        const int sy = reflect_index(row0 + y, m.height);
        for (int x = 0; x < p; ++x) {
            const int sx = reflect_index(col0 + x, m.width);
            count += m.data[static_cast<size_t>(sy) * m.width + sx];
        }
    }
    return static_cast<double>(count) / (static_cast<double>(p) * p);
}

std::vector<int> filter_unsupervised(const Mask& m, const PatchGrid& g, double threshold) {
    std::vector<int> keep;
    for (int i = 0; i < static_cast<int>(g.cells.size()); ++i) {
        if (landslide_coverage(m, g, i) < threshold) {
            keep.push_back(i);
        }
    }
    return keep;
}

int patch_label(const Mask& m, const PatchGrid& g, int cell, double positive_threshold) {
    return landslide_coverage(m, g, cell) >= positive_threshold ? 1 : 0;
}

SplitAssignment split(const PatchGrid& g, double ratio, uint64_t seed, SplitMode mode) {
    if (g.cells.empty()) {
        throw DataError("split: empty grid");
    }
    if (!(ratio > 0.0 && ratio < 1.0)) {
        throw DataError("split: ratio must be in (0,1)");
    }
    const int n = static_cast<int>(g.cells.size());
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    if (mode == SplitMode::random_cells) {
        RandomStream rng(seed);
        rng.shuffle(order);
    }

    SplitAssignment s;
    s.seed = seed;
    s.ratio = ratio;
    const int n_train = static_cast<int>(std::floor(ratio * n));
    s.train_indices.assign(order.begin(), order.begin() + n_train);
    s.test_indices.assign(order.begin() + n_train, order.end());
    return s;
}

std::string split_to_json(const SplitAssignment& s) {
    nlohmann::json j;
    j["seed"] = s.seed;
    j["ratio"] = s.ratio;
    j["train"] = s.train_indices;
    j["test"] = s.test_indices;
    return j.dump(2) + "\n";
}

SplitAssignment split_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(std::string("split: invalid JSON: ") + e.what());
    }
    SplitAssignment s;
    try {
        s.seed = j.at("seed").get<uint64_t>();
        s.ratio = j.at("ratio").get<double>();
        s.train_indices = j.at("train").get<std::vector<int>>();
        s.test_indices = j.at("test").get<std::vector<int>>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("split: missing field: ") + e.what());
    }
    return s;
}

}  // namespace slidekit
