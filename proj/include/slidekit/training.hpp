#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "slidekit/model.hpp"
#include "slidekit/objective.hpp"
#include "slidekit/raster.hpp"
#include "slidekit/tensor.hpp"

namespace slidekit {

// Gaussian noise source; (seed, counter) fully determines a draw.
struct NoiseSpec {
    real sigma = real(1);
    uint64_t seed = 0;
};

Tensor sample_noise(const std::vector<int>& shape, const NoiseSpec& spec, uint64_t counter = 0);

struct AdamConfig {
    real learning_rate = real(1e-3);
    real beta1 = real(0.9);
    real beta2 = real(0.999);
    real epsilon = real(1e-8);
};

struct AdamState {
    AdamConfig cfg;
    int64_t step = 0;
    std::map<std::string, std::vector<real>> m;
    std::map<std::string, std::vector<real>> v;
};

// Standard bias-corrected Adam update over the parameter map, reading the
// gradients left by backward(). Aborts with diagnostics on non-finite
// gradients.
void adam_step(std::map<std::string, Tensor>& params, AdamState& state);

struct TrainOptions {
    int epochs = 10;
    int batch = 8;
    uint64_t shuffle_seed = 0;
};

struct TrainReport {
    std::vector<real> loss_history;  // one entry per optimization step
    int epochs = 0;
    double wall_time = 0.0;
    uint64_t seed = 0;
    std::vector<std::string> warnings;
};

// Per-step record handed to an observer: everything needed to recompute the
// executed loss independently (inputs, drawn noise, parameters in use).
struct DenoiserStep {
    int step = 0;
    real loss = 0;
    std::vector<Tensor> inputs;
    std::vector<Tensor> noise;
    std::map<std::string, std::vector<real>> params;
};
using DenoiserObserver = std::function<void(const DenoiserStep&)>;

// Denoising objective: per step draw fresh z, minimize
// ssim_loss(x, forward(model, x + z)). Patches must be pre-filtered by
// filter_unsupervised and standardized. The SSIM dynamic range is resolved
// from the clean patch set.
std::pair<Model, TrainReport> train_denoiser(const Model& model, const std::vector<Tensor>& patches,
                                             const NoiseSpec& noise, const TrainOptions& opt,
                                             AdamState adam, SsimConfig ssim_cfg,
                                             const DenoiserObserver& observer = {});

// Binary cross-entropy over patch labels from patch_label.
std::pair<Model, TrainReport> train_classifier(const Model& model, const std::vector<Tensor>& patches,
                                               const std::vector<int>& labels,
                                               const TrainOptions& opt, AdamState adam);

// Pixel-wise softmax cross-entropy against mask patches.
std::pair<Model, TrainReport> train_segmenter(const Model& model, const std::vector<Tensor>& patches,
                                              const std::vector<Mask>& masks, const TrainOptions& opt,
                                              AdamState adam);

std::string report_to_json(const TrainReport& r);

}  // namespace slidekit
