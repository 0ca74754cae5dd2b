#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "slidekit/inference.hpp"
#include "slidekit/ops.hpp"

using namespace slidekit;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "slidekit_infer_tests";
    fs::create_directories(dir);
    return (dir / name).string();
}

ModelSpec spec_of(ModelKind kind, int depth, int width, int channels, uint64_t seed) {
    ModelSpec s;
    s.kind = kind;
    s.depth = depth;
    s.base_width = width;
    s.in_channels = channels;
    s.seed = seed;
    if (kind == ModelKind::segmenter) {
        s.dilation_rates = {1, 2};
    }
    return s;
}

void zero_all_params(Model& m) {
    for (auto& [name, t] : m.params) {
        std::fill(t.mutable_values().begin(), t.mutable_values().end(), real(0));
    }
}

// denoiser that copies its input: single tap through the skip path,
// valid for inputs that stay positive through the relus
Model identity_denoiser() {
    Model m = build_denoiser(spec_of(ModelKind::denoiser, 1, 4, 1, 0));
    zero_all_params(m);
    auto tap = [&](const std::string& name, int out_ch, int in_ch) {
        Tensor& w = m.params.at(name);
        const int cin = w.dim(1), k = w.dim(2);
        const int center = k / 2;
        w.mutable_values()[((static_cast<size_t>(out_ch) * cin + in_ch) * k + center) * k + center] =
            real(1);
    };
    tap("enc0.conv1.w", 0, 0);
    tap("enc0.conv2.w", 0, 0);
    // decoder concat order is (upsampled, skip): skip channel 0 sits at
    // index bottleneck_width = 8
    tap("dec0.conv1.w", 0, 8);
    tap("dec0.conv2.w", 0, 0);
    tap("out.conv.w", 0, 0);
    return m;
}

Raster positive_ramp(int w, int h) {
    std::vector<float> data(static_cast<size_t>(w) * h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            data[static_cast<size_t>(y) * w + x] = 1.0f + 0.01f * y + 0.003f * x;
        }
    }
    return make_raster(w, h, 1, std::move(data));
}

}  // namespace

TEST_CASE("blend weights are strictly positive and cover every pixel") {
    for (Blend blend : {Blend::average, Blend::hann}) {
        for (int stride : {8, 12, 16}) {
            const PatchGrid g = make_grid(40, 24, 16, stride, BorderPolicy::pad_reflect);
            const std::vector<float> wsum = accumulate_blend_weights(g, blend);
            for (float v : wsum) {
                CHECK(v > 0.0f);
            }
        }
    }
}

TEST_CASE("reconstruct_full at stride=patch equals tile-wise concatenation") {
    Model m = build_denoiser(spec_of(ModelKind::denoiser, 1, 4, 1, 3));
    const Raster r = positive_ramp(32, 32);
    const Raster out = reconstruct_full(m, r, 16, 16, Blend::average);
    REQUIRE(out.width == 32);
    REQUIRE(out.height == 32);

    const PatchGrid g = make_grid(32, 32, 16, 16, BorderPolicy::pad_reflect);
    NoGradGuard no_grad;
    for (int i = 0; i < static_cast<int>(g.cells.size()); ++i) {
        const Tensor pred = forward(m, extract_patch(r, g, i));
        const auto [r0, c0] = g.cells[static_cast<size_t>(i)];
        for (int y = 0; y < 16; ++y) {
            for (int x = 0; x < 16; ++x) {
                CHECK(out.at(r0 + y, c0 + x) ==
                      doctest::Approx(pred.values()[static_cast<size_t>(y) * 16 + x]).epsilon(1e-6));
            }
        }
    }
}

TEST_CASE("identity-behaving denoiser reconstructs the input") {
    const Model m = identity_denoiser();
    const Raster r = positive_ramp(48, 40);
    for (Blend blend : {Blend::average, Blend::hann}) {
        const Raster out = reconstruct_full(m, r, 16, 8, blend);
        for (size_t i = 0; i < r.data.size(); ++i) {
            CHECK(std::abs(out.data[i] - r.data[i]) < 1e-5f);
        }
    }
}

TEST_CASE("average and hann agree on single-cover regions") {
    Model m = build_denoiser(spec_of(ModelKind::denoiser, 1, 4, 1, 4));
    const Raster r = positive_ramp(32, 32);
    const Raster avg = reconstruct_full(m, r, 16, 16, Blend::average);
    const Raster hann = reconstruct_full(m, r, 16, 16, Blend::hann);
    for (size_t i = 0; i < avg.data.size(); ++i) {
        CHECK(avg.data[i] == doctest::Approx(hann.data[i]).epsilon(1e-6));
    }
}

TEST_CASE("reconstruct_full is deterministic across thread counts") {
    Model m = build_denoiser(spec_of(ModelKind::denoiser, 1, 4, 1, 5));
    const Raster r = positive_ramp(48, 48);
    const Raster t1 = reconstruct_full(m, r, 16, 8, Blend::hann, 1);
    const Raster t4 = reconstruct_full(m, r, 16, 8, Blend::hann, 4);
    CHECK(t1.data == t4.data);
}

TEST_CASE("reconstruct_full validates raster and stride") {
    Model m = build_denoiser(spec_of(ModelKind::denoiser, 1, 4, 1, 6));
    const Raster small = positive_ramp(8, 8);
    CHECK_THROWS_AS(reconstruct_full(m, small, 16, 16, Blend::average), DataError);
    const Raster ok = positive_ramp(32, 32);
    CHECK_THROWS_AS(reconstruct_full(m, ok, 16, 20, Blend::average), DataError);
}

TEST_CASE("anomaly_map: identical reconstruction scores zero") {
    const Raster r = positive_ramp(32, 32);
    SsimConfig cfg;
    for (Provenance mode : {Provenance::anomaly_ssim, Provenance::anomaly_residual}) {
        const ScoreMap sm = anomaly_map(r, r, mode, cfg);
        CHECK(sm.provenance == mode);
        for (float v : sm.values) {
            CHECK(v == doctest::Approx(0.0).epsilon(1e-6));
        }
    }
}

TEST_CASE("anomaly_map localizes an injected bright square") {
    std::vector<float> base(64 * 64, 1.0f);
    Raster recon = make_raster(64, 64, 1, base);
    std::vector<float> with_square(base);
    for (int y = 24; y < 32; ++y) {
        for (int x = 40; x < 48; ++x) {
            with_square[static_cast<size_t>(y) * 64 + x] = 3.0f;
        }
    }
    const Raster x_in = make_raster(64, 64, 1, with_square);
    SsimConfig cfg;
    cfg.dynamic_range = 2;
    for (Provenance mode : {Provenance::anomaly_ssim, Provenance::anomaly_residual}) {
        const ScoreMap sm = anomaly_map(x_in, recon, mode, cfg);
        float best = -1.0f;
        int best_x = -1, best_y = -1;
        for (int y = 0; y < 64; ++y) {
            for (int x = 0; x < 64; ++x) {
                if (sm.at(y, x) > best) {
                    best = sm.at(y, x);
                    best_x = x;
                    best_y = y;
                }
            }
        }
        CHECK(best_y >= 24);
        CHECK(best_y < 32);
        CHECK(best_x >= 40);
        CHECK(best_x < 48);
    }
}

TEST_CASE("anomaly_map scores stay in [0,1] on random pairs") {
    SsimConfig cfg;
    cfg.dynamic_range = 2;
    for (uint64_t s = 0; s < 5; ++s) {
        const auto a = oracles::random_values(32 * 32, 600 + s);
        const auto b = oracles::random_values(32 * 32, 700 + s);
        const Raster ra = make_raster(32, 32, 1, std::vector<float>(a.begin(), a.end()));
        const Raster rb = make_raster(32, 32, 1, std::vector<float>(b.begin(), b.end()));
        for (Provenance mode : {Provenance::anomaly_ssim, Provenance::anomaly_residual}) {
            for (float v : anomaly_map(ra, rb, mode, cfg).values) {
                CHECK(v >= 0.0f);
                CHECK(v <= 1.0f);
            }
        }
    }
}

TEST_CASE("threshold basics and monotonicity") {
    ScoreMap sm;
    sm.width = 4;
    sm.height = 1;
    sm.values = {0.0f, 0.25f, 0.75f, 1.0f};
    CHECK(threshold(sm, 0.0).data == std::vector<uint8_t>{1, 1, 1, 1});
    CHECK(threshold(sm, 1.0).data == std::vector<uint8_t>{0, 0, 0, 1});
    CHECK_THROWS_AS(threshold(sm, 1.5), DataError);

    // mask(t2) subset of mask(t1) for t1 < t2
    ScoreMap rnd;
    rnd.width = 16;
    rnd.height = 16;
    {
        const auto v = oracles::random_values(256, 42, 0.0, 1.0);
        rnd.values.assign(v.begin(), v.end());
    }
    for (double t1 = 0.0; t1 < 1.0; t1 += 0.2) {
        const Mask m1 = threshold(rnd, t1);
        const Mask m2 = threshold(rnd, t1 + 0.2);
        for (size_t i = 0; i < m1.data.size(); ++i) {
            CHECK(m2.data[i] <= m1.data[i]);
        }
    }
}

TEST_CASE("classify_raster: constant model paints a uniform map") {
    Model m = build_patch_classifier(spec_of(ModelKind::patch_classifier, 1, 4, 1, 7));
    zero_all_params(m);
    m.params.at("head.dense.b").mutable_values()[0] = real(0.4);
    const Raster r = positive_ramp(32, 32);
    const PatchGrid g = make_grid(32, 32, 16, 16, BorderPolicy::pad_reflect);
    const ScoreMap sm = classify_raster(m, r, g);
    const float expected = 1.0f / (1.0f + std::exp(-0.4f));
    CHECK(sm.provenance == Provenance::patch_prob);
    for (float v : sm.values) {
        CHECK(v == doctest::Approx(expected).epsilon(1e-6));
    }
}

TEST_CASE("classify_raster paints blocky cells and averages overlaps") {
    // stem passes the input through channel 0; the head scales the patch
    // mean, so bright cells score high and dark cells low
    Model m = build_patch_classifier(spec_of(ModelKind::patch_classifier, 1, 4, 1, 8));
    zero_all_params(m);
    Tensor& stem = m.params.at("stem.conv.w");
    stem.mutable_values()[(0 * 1 + 0) * 9 + 4] = real(1);  // center tap
    m.params.at("head.dense.w").mutable_values()[0] = real(50);

    // checkerboard of bright (2.0) and dark (0.02) 16x16 cells
    std::vector<float> data(32 * 32);
    for (int y = 0; y < 32; ++y) {
        for (int x = 0; x < 32; ++x) {
            const bool bright = ((y / 16) + (x / 16)) % 2 == 0;
            data[static_cast<size_t>(y) * 32 + x] = bright ? 2.0f : 0.02f;
        }
    }
    const Raster r = make_raster(32, 32, 1, std::move(data));

    const PatchGrid g = make_grid(32, 32, 16, 16, BorderPolicy::drop_partial);
    const ScoreMap sm = classify_raster(m, r, g);
    NoGradGuard no_grad;
    for (int i = 0; i < 4; ++i) {
        const float prob = static_cast<float>(forward(m, extract_patch(r, g, i)).item());
        const auto [r0, c0] = g.cells[static_cast<size_t>(i)];
        for (int y = 0; y < 16; ++y) {
            for (int x = 0; x < 16; ++x) {
                CHECK(sm.at(r0 + y, c0 + x) == prob);
            }
        }
    }

    // overlapping grid: covered pixels average the covering cells
    const PatchGrid go = make_grid(32, 32, 16, 8, BorderPolicy::drop_partial);
    const ScoreMap smo = classify_raster(m, r, go);
    std::vector<float> probs;
    for (int i = 0; i < static_cast<int>(go.cells.size()); ++i) {
        probs.push_back(static_cast<float>(forward(m, extract_patch(r, go, i)).item()));
    }
    // pixel (8, 8) is covered by cells with origins {0,8}x{0,8}
    float acc = 0.0f;
    int cover = 0;
    for (int i = 0; i < static_cast<int>(go.cells.size()); ++i) {
        const auto [r0, c0] = go.cells[static_cast<size_t>(i)];
        if (r0 <= 8 && 8 < r0 + 16 && c0 <= 8 && 8 < c0 + 16) {
            acc += probs[static_cast<size_t>(i)];
            ++cover;
        }
    }
    CHECK(smo.at(8, 8) == doctest::Approx(acc / cover).epsilon(1e-6));
}

TEST_CASE("segment_raster: symmetric logits give a uniform 0.5 map") {
    Model m = build_segmenter(spec_of(ModelKind::segmenter, 1, 4, 1, 9));
    zero_all_params(m);
    const Raster r = positive_ramp(32, 32);
    const ScoreMap sm = segment_raster(m, r, 16, 8);
    CHECK(sm.provenance == Provenance::seg_prob);
    for (float v : sm.values) {
        CHECK(v == doctest::Approx(0.5).epsilon(1e-6));
    }
}

TEST_CASE("segment_raster at stride=patch equals per-patch softmax") {
    Model m = build_segmenter(spec_of(ModelKind::segmenter, 1, 4, 1, 10));
    const Raster r = positive_ramp(32, 32);
    const ScoreMap sm = segment_raster(m, r, 16, 16);
    const PatchGrid g = make_grid(32, 32, 16, 16, BorderPolicy::pad_reflect);
    NoGradGuard no_grad;
    for (int i = 0; i < static_cast<int>(g.cells.size()); ++i) {
        const Tensor logits = forward(m, extract_patch(r, g, i));
        const auto [r0, c0] = g.cells[static_cast<size_t>(i)];
        for (int y = 0; y < 16; ++y) {
            for (int x = 0; x < 16; ++x) {
                const real l0 = logits.values()[static_cast<size_t>(y) * 16 + x];
                const real l1 = logits.values()[256 + static_cast<size_t>(y) * 16 + x];
                const float p1 = static_cast<float>(1.0 / (1.0 + std::exp(double(l0 - l1))));
                CHECK(sm.at(r0 + y, c0 + x) == doctest::Approx(p1).epsilon(1e-5));
            }
        }
    }
}

TEST_CASE("blended segmentation is continuous across seams on smooth input") {
    Model m = build_segmenter(spec_of(ModelKind::segmenter, 1, 4, 1, 11));
    const Raster r = positive_ramp(64, 64);
    const ScoreMap sm = segment_raster(m, r, 16, 8, Blend::hann);

    // seams sit at multiples of the stride
    float max_seam_jump = 0.0f, max_interior_jump = 0.0f;
    for (int y = 0; y < 64; ++y) {
        for (int x = 1; x < 64; ++x) {
            const float jump = std::abs(sm.at(y, x) - sm.at(y, x - 1));
            if (x % 8 == 0) {
                max_seam_jump = std::max(max_seam_jump, jump);
            } else {
                max_interior_jump = std::max(max_interior_jump, jump);
            }
        }
    }
    CHECK(max_seam_jump <= max_interior_jump);
}

TEST_CASE("scoremap save/load round trip with sidecar") {
    ScoreMap sm;
    sm.width = 8;
    sm.height = 4;
    sm.provenance = Provenance::seg_prob;
    sm.values.resize(32);
    for (size_t i = 0; i < 32; ++i) {
        sm.values[i] = static_cast<float>(i) / 31.0f;
    }
    const std::string path = temp_path("score.png");
    save_scoremap(path, sm, "scene.png", "{\"stride\": 8}");
    const ScoreMap back = load_scoremap(path);
    CHECK(back.width == 8);
    CHECK(back.height == 4);
    CHECK(back.provenance == Provenance::seg_prob);
    for (size_t i = 0; i < 32; ++i) {
        CHECK(std::abs(back.values[i] - sm.values[i]) < 1.0f / 65535.0f);
    }
}

TEST_CASE("kind checks reject the wrong model family") {
    Model den = build_denoiser(spec_of(ModelKind::denoiser, 1, 4, 1, 12));
    const Raster r = positive_ramp(32, 32);
    const PatchGrid g = make_grid(32, 32, 16, 16, BorderPolicy::pad_reflect);
    CHECK_THROWS_AS(classify_raster(den, r, g), DataError);
    CHECK_THROWS_AS(segment_raster(den, r, 16, 8), DataError);
    Model cls = build_patch_classifier(spec_of(ModelKind::patch_classifier, 1, 4, 1, 13));
    CHECK_THROWS_AS(reconstruct_full(cls, r, 16, 8, Blend::average), DataError);
}
