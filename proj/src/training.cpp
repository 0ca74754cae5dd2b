#include "slidekit/training.hpp"

#include <chrono>
#include <cmath>
#include <json.hpp>
#include <numeric>

#include "slidekit/ops.hpp"
#include "slidekit/rng.hpp"

namespace slidekit {

namespace {

Model clone_trainable(const Model& m) {
    Model out;
    out.spec = m.spec;
    out.topology = m.topology;
    for (const auto& [name, t] : m.params) {
        out.params[name] = t.clone().set_requires_grad(true);
    }
    return out;
}

std::map<std::string, std::vector<real>> snapshot_params(const Model& m) {
    std::map<std::string, std::vector<real>> snap;
    for (const auto& [name, t] : m.params) {
        snap[name] = t.values();
    }
    return snap;
}

std::vector<std::vector<int>> epoch_batches(size_t n, int batch, uint64_t shuffle_seed, int epoch) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    RandomStream rng = RandomStream::substream(shuffle_seed, static_cast<uint64_t>(epoch));
    rng.shuffle(order);
    std::vector<std::vector<int>> batches;
    for (size_t i = 0; i < n; i += static_cast<size_t>(batch)) {
        batches.emplace_back(order.begin() + i,
                             order.begin() + std::min(n, i + static_cast<size_t>(batch)));
    }
    return batches;
}

real finish_step(Model& model, AdamState& adam, const Tensor& loss, TrainReport& report) {
    const real loss_v = loss.item();
    if (!std::isfinite(static_cast<double>(loss_v))) {
        throw NumericError("training diverged: non-finite loss at step " +
                           std::to_string(report.loss_history.size()));
    }
    backward(loss);
    adam_step(model.params, adam);
    report.loss_history.push_back(loss_v);
    return loss_v;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

Tensor sample_noise(const std::vector<int>& shape, const NoiseSpec& spec, uint64_t counter) {
    if (spec.sigma < 0) {
        throw DataError("sample_noise: sigma must be >= 0");
    }
    const size_t n = shape_numel(shape);
    std::vector<real> v(n, real(0));
    if (spec.sigma > 0) {
        RandomStream rng = RandomStream::substream(spec.seed, counter);
        for (real& x : v) {
            x = static_cast<real>(rng.gaussian(static_cast<double>(spec.sigma)));
        }
    }
    return Tensor::from_values(shape, std::move(v));
}

void adam_step(std::map<std::string, Tensor>& params, AdamState& state) {
    state.step += 1;
    const double b1 = state.cfg.beta1, b2 = state.cfg.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));

    for (auto& [name, t] : params) {
        const std::vector<real>& g = t.grad();
        if (g.size() != t.size()) {
            throw DataError("adam_step: no gradient for parameter " + name);
        }
        std::vector<real>& m = state.m[name];
        std::vector<real>& v = state.v[name];
        if (m.empty()) m.assign(t.size(), real(0));
        if (v.empty()) v.assign(t.size(), real(0));

        std::vector<real>& p = t.mutable_values();
        for (size_t i = 0; i < p.size(); ++i) {
            const real gi = g[i];
            if (!std::isfinite(static_cast<double>(gi))) {
                throw NumericError("non-finite gradient in parameter " + name + " at step " +
                                   std::to_string(state.step));
            }
            m[i] = static_cast<real>(b1 * m[i] + (1.0 - b1) * gi);
            v[i] = static_cast<real>(b2 * v[i] + (1.0 - b2) * gi * gi);
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            p[i] -= static_cast<real>(state.cfg.learning_rate * m_hat /
                                      (std::sqrt(v_hat) + state.cfg.epsilon));
        }
    }
}

std::pair<Model, TrainReport> train_denoiser(const Model& model, const std::vector<Tensor>& patches,
                                             const NoiseSpec& noise, const TrainOptions& opt,
                                             AdamState adam, SsimConfig ssim_cfg,
                                             const DenoiserObserver& observer) {
    if (patches.empty()) {
        throw DataError("train_denoiser: empty patch list");
    }
    const auto t0 = std::chrono::steady_clock::now();
    Model trained = clone_trainable(model);
    TrainReport report;
    report.epochs = opt.epochs;
    report.seed = opt.shuffle_seed;

    ssim_cfg.dynamic_range = resolve_dynamic_range(patches);

    uint64_t draw_counter = 0;
    int step = 0;
    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        for (const auto& batch : epoch_batches(patches.size(), opt.batch, opt.shuffle_seed, epoch)) {
            DenoiserStep record;
            if (observer) {
                record.step = step;
                record.params = snapshot_params(trained);
            }
            Tensor total;
            for (int idx : batch) {
                const Tensor& x = patches[static_cast<size_t>(idx)];
                Tensor z = sample_noise(x.shape(), noise, draw_counter++);
                Tensor loss_i = ssim_loss(x, forward(trained, add(x, z)), ssim_cfg);
                total = total.defined() ? add(total, loss_i) : loss_i;
                if (observer) {
                    record.inputs.push_back(x);
                    record.noise.push_back(z);
                }
            }
            Tensor loss = mul_scalar(total, real(1) / static_cast<real>(batch.size()));
            record.loss = finish_step(trained, adam, loss, report);
            if (observer) {
                observer(record);
            }
            ++step;
        }
    }
    report.wall_time = seconds_since(t0);
    return {std::move(trained), std::move(report)};
}

std::pair<Model, TrainReport> train_classifier(const Model& model, const std::vector<Tensor>& patches,
                                               const std::vector<int>& labels,
                                               const TrainOptions& opt, AdamState adam) {
    if (patches.empty()) {
        throw DataError("train_classifier: empty patch list");
    }
    if (patches.size() != labels.size()) {
        throw DataError("train_classifier: patch/label count mismatch");
    }
    const auto t0 = std::chrono::steady_clock::now();
    Model trained = clone_trainable(model);
    TrainReport report;
    report.epochs = opt.epochs;
    report.seed = opt.shuffle_seed;

    const bool has_pos = std::find(labels.begin(), labels.end(), 1) != labels.end();
    const bool has_neg = std::find(labels.begin(), labels.end(), 0) != labels.end();
    if (!has_pos || !has_neg) {
        report.warnings.push_back("single-class training set");
    }

    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        for (const auto& batch : epoch_batches(patches.size(), opt.batch, opt.shuffle_seed, epoch)) {
            Tensor total;
            for (int idx : batch) {
                Tensor prob = forward(trained, patches[static_cast<size_t>(idx)]);
                Tensor loss_i = bce(prob, static_cast<real>(labels[static_cast<size_t>(idx)]));
                total = total.defined() ? add(total, loss_i) : loss_i;
            }
            Tensor loss = mul_scalar(total, real(1) / static_cast<real>(batch.size()));
            finish_step(trained, adam, loss, report);
        }
    }
    report.wall_time = seconds_since(t0);
    return {std::move(trained), std::move(report)};
}

std::pair<Model, TrainReport> train_segmenter(const Model& model, const std::vector<Tensor>& patches,
                                              const std::vector<Mask>& masks, const TrainOptions& opt,
                                              AdamState adam) {
    if (patches.empty()) {
        throw DataError("train_segmenter: empty patch list");
    }
    if (patches.size() != masks.size()) {
        throw DataError("train_segmenter: patch/mask count mismatch");
    }
    const auto t0 = std::chrono::steady_clock::now();
    Model trained = clone_trainable(model);
    TrainReport report;
    report.epochs = opt.epochs;
    report.seed = opt.shuffle_seed;

    bool any_fg = false;
    for (const Mask& m : masks) {
        for (uint8_t v : m.data) {
            if (v) {
                any_fg = true;
                break;
            }
        }
        if (any_fg) break;
    }
    if (!any_fg) {
        report.warnings.push_back("single-class training set");
    }

    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        for (const auto& batch : epoch_batches(patches.size(), opt.batch, opt.shuffle_seed, epoch)) {
            Tensor total;
            for (int idx : batch) {
                Tensor logits = forward(trained, patches[static_cast<size_t>(idx)]);
                Tensor loss_i = pixel_cross_entropy(logits, masks[static_cast<size_t>(idx)]);
                total = total.defined() ? add(total, loss_i) : loss_i;
            }
            Tensor loss = mul_scalar(total, real(1) / static_cast<real>(batch.size()));
            finish_step(trained, adam, loss, report);
        }
    }
    report.wall_time = seconds_since(t0);
    return {std::move(trained), std::move(report)};
}

std::string report_to_json(const TrainReport& r) {
    nlohmann::json j;
    j["loss_history"] = r.loss_history;
    j["epochs"] = r.epochs;
    j["wall_time"] = r.wall_time;
    j["seed"] = r.seed;
    j["warnings"] = r.warnings;
    return j.dump(2) + "\n";
}

}  // namespace slidekit
