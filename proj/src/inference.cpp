#include "slidekit/inference.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <thread>

#include "slidekit/ops.hpp"
#include "slidekit/png.hpp"

namespace slidekit {

namespace {

// Runs fn(i) over [0, n); results must not depend on execution order.
void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    threads = std::max(1, std::min(threads, n));
    if (threads == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(threads));
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            for (int i = t; i < n; i += threads) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

float softmax_p1(real l0, real l1) {
    const real m = std::max(l0, l1);
    const real e0 = std::exp(l0 - m), e1 = std::exp(l1 - m);
    return static_cast<float>(e1 / (e0 + e1));
}

}  // namespace

std::string to_string(Provenance p) {
    switch (p) {
        case Provenance::anomaly_ssim: return "anomaly_ssim";
        case Provenance::anomaly_residual: return "anomaly_residual";
        case Provenance::seg_prob: return "seg_prob";
        case Provenance::patch_prob: return "patch_prob";
    }
    return "anomaly_ssim";
}

Provenance provenance_from_string(const std::string& s) {
    if (s == "anomaly_ssim") return Provenance::anomaly_ssim;
    if (s == "anomaly_residual") return Provenance::anomaly_residual;
    if (s == "seg_prob") return Provenance::seg_prob;
    if (s == "patch_prob") return Provenance::patch_prob;
    throw DataError("unknown provenance: " + s);
}

std::vector<float> blend_profile(int patch_size, Blend blend) {
    std::vector<float> w(static_cast<size_t>(patch_size), 1.0f);
    if (blend == Blend::hann) {
        for (int i = 0; i < patch_size; ++i) {
            // offset by half a pixel so edge weights stay strictly positive
            w[static_cast<size_t>(i)] = static_cast<float>(
                0.5 - 0.5 * std::cos(2.0 * 3.14159265358979323846 * (i + 0.5) / patch_size));
        }
    }
    return w;
}

std::vector<float> accumulate_blend_weights(const PatchGrid& g, Blend blend) {
    const std::vector<float> prof = blend_profile(g.patch_size, blend);
    std::vector<float> wsum(static_cast<size_t>(g.source_width) * g.source_height, 0.0f);
    for (const auto& [row0, col0] : g.cells) {
        for (int y = 0; y < g.patch_size; ++y) {
            const int sy = row0 + y;
            if (sy < 0 || sy >= g.source_height) continue;
            for (int x = 0; x < g.patch_size; ++x) {
                const int sx = col0 + x;
                if (sx < 0 || sx >= g.source_width) continue;
                wsum[static_cast<size_t>(sy) * g.source_width + sx] += prof[y] * prof[x];
            }
        }
    }
    return wsum;
}

Raster reconstruct_full(const Model& model, const Raster& r, int patch_size, int stride, Blend blend,
                        int threads) {
    if (model.spec.kind != ModelKind::denoiser) {
        throw DataError("reconstruct_full: model is not a denoiser");
    }
    if (r.width < patch_size || r.height < patch_size) {
        throw DataError("reconstruct_full: raster smaller than patch_size");
    }
    if (stride < 1 || stride > patch_size) {
        throw DataError("reconstruct_full: stride must be in [1, patch_size]");
    }
    const PatchGrid g = make_grid(r.width, r.height, patch_size, stride, BorderPolicy::pad_reflect);
    const int n_cells = static_cast<int>(g.cells.size());

    std::vector<std::vector<real>> outputs(static_cast<size_t>(n_cells));
    parallel_for(n_cells, threads, [&](int i) {
        NoGradGuard no_grad;
        outputs[static_cast<size_t>(i)] = forward(model, extract_patch(r, g, i)).values();
    });

    const std::vector<float> prof = blend_profile(patch_size, blend);
    const size_t plane = r.pixel_count();
    std::vector<double> accum(plane * r.channels, 0.0);
    std::vector<double> wsum(plane, 0.0);
    for (int i = 0; i < n_cells; ++i) {
        const auto [row0, col0] = g.cells[static_cast<size_t>(i)];
        const std::vector<real>& pred = outputs[static_cast<size_t>(i)];
        for (int y = 0; y < patch_size; ++y) {
            const int sy = row0 + y;
            if (sy >= r.height) continue;
            for (int x = 0; x < patch_size; ++x) {
                const int sx = col0 + x;
                if (sx >= r.width) continue;
                const double wgt = static_cast<double>(prof[y]) * prof[x];
                const size_t px = static_cast<size_t>(sy) * r.width + sx;
                wsum[px] += wgt;
                for (int c = 0; c < r.channels; ++c) {
                    accum[c * plane + px] +=
                        wgt * pred[(static_cast<size_t>(c) * patch_size + y) * patch_size + x];
                }
            }
        }
    }

    std::vector<float> data(plane * r.channels);
    for (size_t px = 0; px < plane; ++px) {
        for (int c = 0; c < r.channels; ++c) {
            data[c * plane + px] = static_cast<float>(accum[c * plane + px] / wsum[px]);
        }
    }
    return make_raster(r.width, r.height, r.channels, std::move(data));
}

ScoreMap anomaly_map(const Raster& x, const Raster& recon, Provenance mode, const SsimConfig& cfg) {
    if (x.width != recon.width || x.height != recon.height || x.channels != recon.channels) {
        throw DataError("anomaly_map: dimension mismatch");
    }
    ScoreMap sm;
    sm.width = x.width;
    sm.height = x.height;
    sm.provenance = mode;
    const size_t plane = x.pixel_count();
    sm.values.assign(plane, 0.0f);

    if (mode == Provenance::anomaly_ssim) {
        NoGradGuard no_grad;
        std::vector<real> xv(x.data.begin(), x.data.end());
        std::vector<real> rv(recon.data.begin(), recon.data.end());
        Tensor xt = Tensor::from_values({x.channels, x.height, x.width}, std::move(xv));
        Tensor rt = Tensor::from_values({x.channels, x.height, x.width}, std::move(rv));
        const Tensor map = ssim(xt, rt, cfg).map;
        const int cm = map.dim(0);
        for (size_t i = 0; i < plane; ++i) {
            double s = 0.0;
            for (int c = 0; c < cm; ++c) {
                s += static_cast<double>(map.values()[c * plane + i]);
            }
            s /= cm;
            sm.values[i] = static_cast<float>(std::clamp((1.0 - s) / 2.0, 0.0, 1.0));
        }
    } else if (mode == Provenance::anomaly_residual) {
        float max_v = 0.0f;
        for (size_t i = 0; i < plane; ++i) {
            float s = 0.0f;
            for (int c = 0; c < x.channels; ++c) {
                s += std::abs(x.data[c * plane + i] - recon.data[c * plane + i]);
            }
            s /= static_cast<float>(x.channels);
            sm.values[i] = s;
            max_v = std::max(max_v, s);
        }
        if (max_v > 0.0f) {
            for (float& v : sm.values) v /= max_v;
        } else {
            std::fill(sm.values.begin(), sm.values.end(), 0.0f);
        }
    } else {
        throw DataError("anomaly_map: mode must be anomaly_ssim or anomaly_residual");
    }
    return sm;
}

Mask threshold(const ScoreMap& sm, double t) {
    if (!(t >= 0.0 && t <= 1.0)) {
        throw DataError("threshold: t must be in [0,1]");
    }
    Mask m;
    m.width = sm.width;
    m.height = sm.height;
    m.data.resize(sm.values.size());
    for (size_t i = 0; i < sm.values.size(); ++i) {
        m.data[i] = sm.values[i] >= t ? 1 : 0;
    }
    return m;
}

ScoreMap classify_raster(const Model& model, const Raster& r, const PatchGrid& g, int threads) {
    if (model.spec.kind != ModelKind::patch_classifier) {
        throw DataError("classify_raster: model is not a patch classifier");
    }
    if (g.cells.empty()) {
        throw DataError("classify_raster: empty grid");
    }
    const int n_cells = static_cast<int>(g.cells.size());
    std::vector<float> probs(static_cast<size_t>(n_cells));
    parallel_for(n_cells, threads, [&](int i) {
        NoGradGuard no_grad;
        probs[static_cast<size_t>(i)] = static_cast<float>(forward(model, extract_patch(r, g, i)).item());
    });

    const size_t plane = r.pixel_count();
    std::vector<float> acc(plane, 0.0f);
    std::vector<int> cover(plane, 0);
    for (int i = 0; i < n_cells; ++i) {
        const auto [row0, col0] = g.cells[static_cast<size_t>(i)];
        for (int y = 0; y < g.patch_size; ++y) {
            const int sy = row0 + y;
            if (sy >= r.height) continue;
            for (int x = 0; x < g.patch_size; ++x) {
                const int sx = col0 + x;
                if (sx >= r.width) continue;
                acc[static_cast<size_t>(sy) * r.width + sx] += probs[static_cast<size_t>(i)];
                cover[static_cast<size_t>(sy) * r.width + sx] += 1;
            }
        }
    }
    ScoreMap sm;
    sm.width = r.width;
    sm.height = r.height;
    sm.provenance = Provenance::patch_prob;
    sm.values.resize(plane);
    for (size_t i = 0; i < plane; ++i) {
        sm.values[i] = cover[i] ? acc[i] / static_cast<float>(cover[i]) : 0.0f;
    }
    return sm;
}

ScoreMap segment_raster(const Model& model, const Raster& r, int patch_size, int stride, Blend blend,
                        int threads) {
    if (model.spec.kind != ModelKind::segmenter) {
        throw DataError("segment_raster: model is not a segmenter");
    }
    if (r.width < patch_size || r.height < patch_size) {
        throw DataError("segment_raster: raster smaller than patch_size");
    }
    if (stride < 1 || stride > patch_size) {
        throw DataError("segment_raster: stride must be in [1, patch_size]");
    }
    const PatchGrid g = make_grid(r.width, r.height, patch_size, stride, BorderPolicy::pad_reflect);
    const int n_cells = static_cast<int>(g.cells.size());

    std::vector<std::vector<float>> prob_maps(static_cast<size_t>(n_cells));
    parallel_for(n_cells, threads, [&](int i) {
        NoGradGuard no_grad;
        const Tensor logits = forward(model, extract_patch(r, g, i));
        const size_t pp = static_cast<size_t>(patch_size) * patch_size;
        std::vector<float> p(pp);
        for (size_t j = 0; j < pp; ++j) {
            p[j] = softmax_p1(logits.values()[j], logits.values()[pp + j]);
        }
        prob_maps[static_cast<size_t>(i)] = std::move(p);
    });

    const std::vector<float> prof = blend_profile(patch_size, blend);
    const size_t plane = r.pixel_count();
    std::vector<double> acc(plane, 0.0);
    std::vector<double> wsum(plane, 0.0);
    for (int i = 0; i < n_cells; ++i) {
        const auto [row0, col0] = g.cells[static_cast<size_t>(i)];
        const std::vector<float>& p = prob_maps[static_cast<size_t>(i)];
        for (int y = 0; y < patch_size; ++y) {
            const int sy = row0 + y;
            if (sy >= r.height) continue;
            for (int x = 0; x < patch_size; ++x) {
                const int sx = col0 + x;
                if (sx >= r.width) continue;
                const double wgt = static_cast<double>(prof[y]) * prof[x];
                const size_t px = static_cast<size_t>(sy) * r.width + sx;
                acc[px] += wgt * p[static_cast<size_t>(y) * patch_size + x];
                wsum[px] += wgt;
            }
        }
    }
    ScoreMap sm;
    sm.width = r.width;
    sm.height = r.height;
    sm.provenance = Provenance::seg_prob;
    sm.values.resize(plane);
    for (size_t i = 0; i < plane; ++i) {
        sm.values[i] = static_cast<float>(std::clamp(acc[i] / wsum[i], 0.0, 1.0));
    }
    return sm;
}

void save_scoremap(const std::string& path, const ScoreMap& sm, const std::string& source,
                   const std::string& params_json) {
    PngImage img;
    img.width = sm.width;
    img.height = sm.height;
    img.channels = 1;
    img.bit_depth = 16;
    img.samples.resize(sm.values.size());
    for (size_t i = 0; i < sm.values.size(); ++i) {
        const float v = std::clamp(sm.values[i], 0.0f, 1.0f);
        img.samples[i] = static_cast<uint16_t>(std::lround(v * 65535.0));
    }
    write_png(path, img);

    nlohmann::json j;
    j["provenance"] = to_string(sm.provenance);
    j["source"] = source;
    j["params"] = nlohmann::json::parse(params_json, nullptr, false);
    if (j["params"].is_discarded()) {
        j["params"] = nlohmann::json::object();
    }
    atomic_write_file(path + ".json", j.dump(2) + "\n");
}

ScoreMap load_scoremap(const std::string& path) {
    const PngImage img = read_png(path);
    if (img.channels != 1) {
        throw DataError("scoremap must be single-channel: " + path);
    }
    ScoreMap sm;
    sm.width = img.width;
    sm.height = img.height;
    sm.values.resize(img.samples.size());
    const float denom = img.bit_depth == 16 ? 65535.0f : 255.0f;
    for (size_t i = 0; i < img.samples.size(); ++i) {
        sm.values[i] = static_cast<float>(img.samples[i]) / denom;
    }
    std::FILE* f = std::fopen((path + ".json").c_str(), "rb");
    if (f) {
        std::fseek(f, 0, SEEK_END);
        const long sz = std::ftell(f);
        std::fseek(f, 0, SEEK_SET);
        std::string text(sz > 0 ? static_cast<size_t>(sz) : 0, '\0');
        if (!text.empty() && std::fread(text.data(), 1, text.size(), f) != text.size()) {
            text.clear();
        }
        std::fclose(f);
        const auto j = nlohmann::json::parse(text, nullptr, false);
        if (!j.is_discarded() && j.contains("provenance")) {
            sm.provenance = provenance_from_string(j["provenance"].get<std::string>());
        }
    }
    return sm;
}

}  // namespace slidekit
