#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "slidekit/patching.hpp"
#include "slidekit/synthgen.hpp"
#include "slidekit/training.hpp"

using namespace slidekit;

namespace {

ModelSpec tiny_denoiser(uint64_t seed) {
    ModelSpec s;
    s.kind = ModelKind::denoiser;
    s.depth = 1;
    s.base_width = 4;
    s.in_channels = 1;
    s.seed = seed;
    return s;
}

// standardized texture patches from a blob-free synthetic scene
std::vector<Tensor> texture_patches(int count, int side, uint64_t seed) {
    SceneSpec spec;
    spec.width = side * count;
    spec.height = side;
    spec.blob_count = 0;
    spec.texture_octaves = 3;
    spec.seed = seed;
    const Scene scene = generate_scene(spec);
    const Raster std_scene = standardize(scene.raster);
    const PatchGrid g = make_grid(std_scene.width, std_scene.height, side, side,
                                  BorderPolicy::drop_partial);
    std::vector<Tensor> out;
    for (int i = 0; i < count; ++i) {
        out.push_back(extract_patch(std_scene, g, i));
    }
    return out;
}

double window_mean(const std::vector<real>& v, size_t begin, size_t count) {
    double s = 0.0;
    for (size_t i = begin; i < begin + count; ++i) {
        s += v[i];
    }
    return s / static_cast<double>(count);
}

}  // namespace

TEST_CASE("sample_noise: zeros at sigma 0, deterministic per counter") {
    const Tensor z0 = sample_noise({2, 3, 3}, {0, 9}, 4);
    for (real v : z0.values()) {
        CHECK(v == real(0));
    }
    const NoiseSpec spec{1, 42};
    const Tensor a = sample_noise({1, 4, 4}, spec, 7);
    const Tensor b = sample_noise({1, 4, 4}, spec, 7);
    const Tensor c = sample_noise({1, 4, 4}, spec, 8);
    CHECK(a.values() == b.values());
    CHECK(a.values() != c.values());
}

TEST_CASE("sample_noise statistics over a million draws") {
    const Tensor z = sample_noise({1000000}, {1, 2024}, 0);
    double mean = 0.0;
    for (real v : z.values()) {
        mean += v;
    }
    mean /= 1e6;
    double var = 0.0;
    for (real v : z.values()) {
        var += (v - mean) * (v - mean);
    }
    const double stddev = std::sqrt(var / 1e6);
    CHECK(mean > -0.01);
    CHECK(mean < 0.01);
    CHECK(stddev > 0.99);
    CHECK(stddev < 1.01);
}

TEST_CASE("adam first step moves each coordinate by about the learning rate") {
    std::map<std::string, Tensor> params;
    params["w"] = Tensor::from_values({4}, {real(1), real(-2), real(0.5), real(3)})
                      .set_requires_grad(true);
    Tensor g = Tensor::from_values({4}, {real(0.02), real(-1.5), real(0.001), real(4)});
    backward(sum(mul(params.at("w"), g)));

    const std::vector<real> before = params.at("w").values();
    AdamState st;
    adam_step(params, st);
    CHECK(st.step == 1);
    for (size_t i = 0; i < 4; ++i) {
        const double delta = std::abs(params.at("w").values()[i] - before[i]);
        CHECK(delta == doctest::Approx(st.cfg.learning_rate).epsilon(1e-3));
        // sign: parameters move against the gradient
        const double sign = params.at("w").values()[i] - before[i];
        CHECK(sign * g.values()[i] < 0);
    }
}

TEST_CASE("adam leaves parameters unchanged under zero gradients") {
    std::map<std::string, Tensor> params;
    params["w"] = Tensor::from_values({3}, {real(1), real(2), real(3)}).set_requires_grad(true);
    backward(sum(mul(params.at("w"), Tensor::zeros({3}))));
    const std::vector<real> before = params.at("w").values();
    AdamState st;
    adam_step(params, st);
    CHECK(params.at("w").values() == before);
}

TEST_CASE("adam aborts on non-finite gradients with diagnostics") {
    std::map<std::string, Tensor> params;
    params["layer.w"] = Tensor::from_values({2}, {real(1), real(2)}).set_requires_grad(true);
    Tensor bad = Tensor::from_values({2}, {std::numeric_limits<real>::quiet_NaN(), real(1)});
    backward(sum(mul(params.at("layer.w"), bad)));
    try {
        AdamState st;
        adam_step(params, st);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("layer.w") != std::string::npos);
        CHECK(msg.find("step") != std::string::npos);
    }
}

TEST_CASE("train_denoiser: smoothed loss decreases on texture patches") {
    const std::vector<Tensor> patches = texture_patches(64, 16, 31);
    TrainOptions opt;
    opt.epochs = 25;  // 8 steps per epoch -> 200 steps
    opt.batch = 8;
    opt.shuffle_seed = 5;
    AdamState adam;
    auto [model, report] =
        train_denoiser(build_denoiser(tiny_denoiser(1)), patches, {1, 17}, opt, adam, SsimConfig{});
    REQUIRE(report.loss_history.size() == 200);
    const double first = window_mean(report.loss_history, 0, 20);
    const double last = window_mean(report.loss_history, 180, 20);
    CHECK(last < first);
}

TEST_CASE("train_denoiser is deterministic given the seed bundle") {
    const std::vector<Tensor> patches = texture_patches(8, 16, 32);
    TrainOptions opt;
    opt.epochs = 3;
    opt.batch = 4;
    opt.shuffle_seed = 9;
    auto [m1, r1] =
        train_denoiser(build_denoiser(tiny_denoiser(2)), patches, {1, 18}, opt, AdamState{}, SsimConfig{});
    auto [m2, r2] =
        train_denoiser(build_denoiser(tiny_denoiser(2)), patches, {1, 18}, opt, AdamState{}, SsimConfig{});
    CHECK(r1.loss_history == r2.loss_history);
    for (const auto& [name, t] : m1.params) {
        CHECK(t.values() == m2.params.at(name).values());
    }
}

TEST_CASE("train_denoiser rejects an empty patch list") {
    CHECK_THROWS_AS(
        train_denoiser(build_denoiser(tiny_denoiser(3)), {}, {1, 0}, TrainOptions{}, AdamState{},
                       SsimConfig{}),
        DataError);
}

TEST_CASE("denoiser loss recomputes from the observer log (noise-injection objective)") {
    const std::vector<Tensor> patches = texture_patches(6, 16, 33);
    TrainOptions opt;
    opt.epochs = 2;
    opt.batch = 3;
    opt.shuffle_seed = 21;

    std::vector<DenoiserStep> log;
    auto [model, report] = train_denoiser(build_denoiser(tiny_denoiser(4)), patches, {1, 19}, opt,
                                          AdamState{}, SsimConfig{},
                                          [&](const DenoiserStep& s) { log.push_back(s); });
    REQUIRE(log.size() == report.loss_history.size());

    SsimConfig cfg;
    cfg.dynamic_range = resolve_dynamic_range(patches);
    for (const DenoiserStep& step : log) {
        Model replica = build_denoiser(tiny_denoiser(4));
        for (auto& [name, t] : replica.params) {
            t.mutable_values() = step.params.at(name);
        }
        NoGradGuard no_grad;
        double total = 0.0;
        for (size_t i = 0; i < step.inputs.size(); ++i) {
            const Tensor& x = step.inputs[i];
            Tensor noisy = add(x, step.noise[i]);
            total += ssim_loss(x, forward(replica, noisy), cfg).item();
        }
        const double recomputed = total / static_cast<double>(step.inputs.size());
        CHECK(std::abs(recomputed - static_cast<double>(step.loss)) < 1e-6);
    }
}

TEST_CASE("sigma 0 degenerates to plain autoencoding") {
    const std::vector<Tensor> patches = texture_patches(4, 16, 34);
    TrainOptions opt;
    opt.epochs = 1;
    opt.batch = 4;
    std::vector<DenoiserStep> log;
    train_denoiser(build_denoiser(tiny_denoiser(5)), patches, {0, 20}, opt, AdamState{}, SsimConfig{},
                   [&](const DenoiserStep& s) { log.push_back(s); });
    REQUIRE(!log.empty());
    for (const Tensor& z : log[0].noise) {
        for (real v : z.values()) {
            CHECK(v == real(0));
        }
    }
}

TEST_CASE("train_classifier separates a bright/dark toy set") {
    std::vector<Tensor> patches;
    std::vector<int> labels;
    for (int i = 0; i < 16; ++i) {
        const real base = i % 2 == 0 ? real(1) : real(-1);
        Tensor noise = oracles::random_tensor({1, 16, 16}, 100 + i, -0.2, 0.2);
        std::vector<real> v(noise.values());
        for (real& x : v) {
            x += base;
        }
        patches.push_back(Tensor::from_values({1, 16, 16}, std::move(v)));
        labels.push_back(i % 2 == 0 ? 1 : 0);
    }

    ModelSpec spec;
    spec.kind = ModelKind::patch_classifier;
    spec.depth = 1;
    spec.base_width = 4;
    spec.in_channels = 1;
    spec.seed = 41;
    TrainOptions opt;
    opt.epochs = 50;  // 2 steps/epoch -> 100 steps
    opt.batch = 8;
    opt.shuffle_seed = 3;
    auto [model, report] = train_classifier(build_patch_classifier(spec), patches, labels, opt,
                                            AdamState{});
    REQUIRE(report.loss_history.size() == 100);

    NoGradGuard no_grad;
    int correct = 0;
    for (size_t i = 0; i < patches.size(); ++i) {
        const int pred = forward(model, patches[i]).item() >= real(0.5) ? 1 : 0;
        correct += pred == labels[i] ? 1 : 0;
    }
    CHECK(correct == static_cast<int>(patches.size()));
}

TEST_CASE("train_classifier warns on a single-class set and plateaus near ln 2 on noise") {
    std::vector<Tensor> patches;
    std::vector<int> labels;
    for (int i = 0; i < 16; ++i) {
        patches.push_back(oracles::random_tensor({1, 16, 16}, 200 + i));
        labels.push_back(1);
    }
    ModelSpec spec;
    spec.kind = ModelKind::patch_classifier;
    spec.depth = 1;
    spec.base_width = 4;
    spec.in_channels = 1;
    spec.seed = 42;
    TrainOptions opt;
    opt.epochs = 1;
    opt.batch = 8;
    auto [m1, r1] = train_classifier(build_patch_classifier(spec), patches, labels, opt, AdamState{});
    REQUIRE(!r1.warnings.empty());

    // 50% label noise: the achievable loss floor is ln 2
    RandomStream rng(77);
    for (size_t i = 0; i < labels.size(); ++i) {
        labels[i] = rng.uniform() < 0.5 ? 0 : 1;
    }
    labels[0] = 0;
    labels[1] = 1;  // keep both classes present
    TrainOptions opt2;
    opt2.epochs = 30;
    opt2.batch = 8;
    opt2.shuffle_seed = 6;
    auto [m2, r2] = train_classifier(build_patch_classifier(spec), patches, labels, opt2, AdamState{});
    const double tail = window_mean(r2.loss_history, r2.loss_history.size() - 20, 20);
    CHECK(std::abs(tail - std::log(2.0)) < 0.1);
}

TEST_CASE("train_segmenter learns a vertical split") {
    std::vector<Tensor> patches;
    std::vector<Mask> masks;
    for (int i = 0; i < 8; ++i) {
        Tensor noise = oracles::random_tensor({1, 16, 16}, 300 + i, -0.3, 0.3);
        std::vector<real> v(noise.values());
        Mask m;
        m.width = 16;
        m.height = 16;
        m.data.assign(256, 0);
        for (int y = 0; y < 16; ++y) {
            for (int x = 8; x < 16; ++x) {
                v[static_cast<size_t>(y) * 16 + x] += real(1.5);
                m.data[static_cast<size_t>(y) * 16 + x] = 1;
            }
        }
        patches.push_back(Tensor::from_values({1, 16, 16}, std::move(v)));
        masks.push_back(std::move(m));
    }

    ModelSpec spec;
    spec.kind = ModelKind::segmenter;
    spec.depth = 1;
    spec.base_width = 4;
    spec.in_channels = 1;
    spec.dilation_rates = {1, 2};
    spec.seed = 55;
    TrainOptions opt;
    opt.epochs = 300;
    opt.batch = 8;
    opt.shuffle_seed = 8;
    auto [model, report] = train_segmenter(build_segmenter(spec), patches, masks, opt, AdamState{});
    REQUIRE(report.loss_history.size() == 300);

    NoGradGuard no_grad;
    int correct = 0, total = 0;
    for (size_t i = 0; i < patches.size(); ++i) {
        const Tensor logits = forward(model, patches[i]);
        for (int p = 0; p < 256; ++p) {
            const int pred = logits.values()[256 + p] > logits.values()[p] ? 1 : 0;
            correct += pred == masks[i].data[static_cast<size_t>(p)] ? 1 : 0;
            ++total;
        }
    }
    CHECK(static_cast<double>(correct) / total >= 0.95);
}

TEST_CASE("train_segmenter on all-background masks converges to background") {
    std::vector<Tensor> patches;
    std::vector<Mask> masks;
    for (int i = 0; i < 4; ++i) {
        patches.push_back(oracles::random_tensor({1, 16, 16}, 400 + i));
        Mask m;
        m.width = 16;
        m.height = 16;
        m.data.assign(256, 0);
        masks.push_back(std::move(m));
    }
    ModelSpec spec;
    spec.kind = ModelKind::segmenter;
    spec.depth = 1;
    spec.base_width = 4;
    spec.in_channels = 1;
    spec.dilation_rates = {1};
    spec.seed = 56;
    TrainOptions opt;
    opt.epochs = 50;
    opt.batch = 4;
    auto [model, report] = train_segmenter(build_segmenter(spec), patches, masks, opt, AdamState{});
    REQUIRE(!report.warnings.empty());

    NoGradGuard no_grad;
    const Tensor logits = forward(model, patches[0]);
    int background_votes = 0;
    for (int p = 0; p < 256; ++p) {
        background_votes += logits.values()[p] >= logits.values()[256 + p] ? 1 : 0;
    }
    CHECK(background_votes > 128 + 64);
}

TEST_CASE("report serializes to JSON") {
    TrainReport r;
    r.loss_history = {real(0.5), real(0.25)};
    r.epochs = 2;
    r.seed = 7;
    const std::string j = report_to_json(r);
    CHECK(j.find("loss_history") != std::string::npos);
    CHECK(j.find("0.25") != std::string::npos);
}
