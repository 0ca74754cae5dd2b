#include "slidekit/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "slidekit/evaluation.hpp"
#include "slidekit/model.hpp"
#include "slidekit/patching.hpp"
#include "slidekit/rng.hpp"
#include "slidekit/synthgen.hpp"
#include "slidekit/training.hpp"

namespace slidekit::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// seed lanes for deriving the per-purpose seed bundle from one user seed
enum : uint64_t { kLaneInit = 1, kLaneNoise = 2, kLaneShuffle = 3, kLaneSplit = 4 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

json read_json_file(const std::string& path, const char* what) {
    std::ifstream in(path);
    if (!in) {
        throw DataError(std::string("cannot read ") + what + ": " + path);
    }
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) {
        throw DataError(std::string("invalid JSON in ") + what + ": " + path);
    }
    return j;
}

// Config precedence is defaults < config file < flags: config entries become
// synthetic flags placed before the real ones, and every option takes the
// last occurrence. Must run after all options are registered so unknown
// keys are rejected.
std::vector<std::string> config_args(const CLI::App& app, const std::vector<std::string>& args) {
    std::string config_path;
    for (size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            config_path = args[i + 1];
        } else if (args[i].rfind("--config=", 0) == 0) {
            config_path = args[i].substr(9);
        }
    }
    std::vector<std::string> out;
    if (config_path.empty()) {
        return out;
    }
    const json cfg = read_json_file(config_path, "config");
    if (!cfg.is_object()) {
        throw UsageError("config must be a JSON object: " + config_path);
    }
    for (const auto& [key, value] : cfg.items()) {
        if (key == "config") {
            throw UsageError("config files cannot nest \"config\"");
        }
        if (!app.get_option_no_throw("--" + key)) {
            throw UsageError("unknown config key \"" + key + "\" in " + config_path);
        }
        const std::string text = value.is_string() ? value.get<std::string>() : value.dump();
        out.push_back("--" + key + "=" + text);
    }
    return out;
}

// Returns false when help was requested (nothing further to do).
bool parse_args(CLI::App& app, const std::vector<std::string>& args) {
    std::vector<std::string> full = config_args(app, args);
    full.insert(full.end(), args.begin(), args.end());
    std::reverse(full.begin(), full.end());
    try {
        app.parse(full);
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return false;
    }
    return true;
}

void require_opt(const std::string& value, const char* flag) {
    if (value.empty()) {
        throw UsageError(std::string(flag) + " is required");
    }
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw DataError("cannot create directory " + dir + ": " + ec.message());
    }
}

void write_run_log(const std::string& path, const std::string& command, const json& resolved) {
    json j;
    j["command"] = command;
    j["config"] = resolved;
    atomic_write_file(path, j.dump(2) + "\n");
}

int resolve_threads(int threads) {
    if (threads >= 1) {
        return threads;
    }
    return 1;
}

BorderPolicy border_from_string(const std::string& s) {
    if (s == "drop" || s == "drop_partial") return BorderPolicy::drop_partial;
    if (s == "reflect" || s == "pad_reflect") return BorderPolicy::pad_reflect;
    throw UsageError("border must be drop|reflect");
}

SplitMode split_mode_from_string(const std::string& s) {
    if (s == "random") return SplitMode::random_cells;
    if (s == "contiguous") return SplitMode::contiguous_block;
    throw UsageError("split mode must be random|contiguous");
}

Blend blend_from_string(const std::string& s) {
    if (s == "average") return Blend::average;
    if (s == "hann") return Blend::hann;
    throw UsageError("blend must be average|hann");
}

std::string grid_to_json(const PatchGrid& g) {
    json j;
    j["width"] = g.source_width;
    j["height"] = g.source_height;
    j["patch"] = g.patch_size;
    j["stride"] = g.stride;
    j["border"] = g.border == BorderPolicy::drop_partial ? "drop_partial" : "pad_reflect";
    json cells = json::array();
    for (const auto& [r, c] : g.cells) {
        cells.push_back({r, c});
    }
    j["cells"] = cells;
    return j.dump() + "\n";
}

PatchGrid grid_from_json_file(const std::string& path) {
    const json j = read_json_file(path, "grid");
    try {
        return make_grid(j.at("width").get<int>(), j.at("height").get<int>(),
                         j.at("patch").get<int>(), j.at("stride").get<int>(),
                         border_from_string(j.at("border").get<std::string>()));
    } catch (const json::exception& e) {
        throw DataError(std::string("invalid grid file: ") + e.what());
    }
}

void check_mask_dims(const Raster& r, const Mask& m) {
    if (r.width != m.width || r.height != m.height) {
        throw DataError("mask dimensions do not match the scene");
    }
}

// ---------------------------------------------------------------- synth --

int cmd_synth(const std::vector<std::string>& args) {
    SceneSpec spec;
    std::string out_dir;
    std::string config;
    bool raw = false;

    CLI::App app{"generate a synthetic scene with ground truth"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--width", spec.width);
    app.add_option("--height", spec.height);
    app.add_option("--octaves", spec.texture_octaves);
    app.add_option("--blobs", spec.blob_count);
    app.add_option("--radius-min", spec.blob_radius_min);
    app.add_option("--radius-max", spec.blob_radius_max);
    app.add_option("--contrast", spec.contrast);
    app.add_option("--seed", spec.seed);
    app.add_flag("--raw", raw, "also write the exact float raster (scene.slkr)");
    app.add_option("--config", config, "JSON config file");
    if (!parse_args(app, args)) return 0;
    require_opt(out_dir, "--out");

    const Scene scene = generate_scene(spec);
    ensure_dir(out_dir);

    // PNG needs integer samples: min/max scale to 16-bit
    Raster png_r = scene.raster;
    float lo = png_r.data[0], hi = png_r.data[0];
    for (float v : png_r.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const float span = hi > lo ? hi - lo : 1.0f;
    for (float& v : png_r.data) {
        v = std::round((v - lo) / span * 65535.0f);
    }
    compute_stats(png_r);

    save_raster(out_dir + "/scene.png", png_r);
    save_mask(out_dir + "/mask.png", scene.mask);
    if (raw) {
        save_raster(out_dir + "/scene.slkr", scene.raster);
    }
    atomic_write_file(out_dir + "/scene.json", scene_spec_to_json(spec));

    json resolved{{"out", out_dir},          {"width", spec.width},
                  {"height", spec.height},   {"octaves", spec.texture_octaves},
                  {"blobs", spec.blob_count},{"radius_min", spec.blob_radius_min},
                  {"radius_max", spec.blob_radius_max}, {"contrast", spec.contrast},
                  {"seed", spec.seed},       {"raw", raw}};
    write_run_log(out_dir + "/run.json", "synth", resolved);
    return 0;
}

// ----------------------------------------------------------------- tile --

int cmd_tile(const std::vector<std::string>& args) {
    std::string scene_path, out_dir, border = "drop", config;
    int patch = 64, stride = 64;

    CLI::App app{"tile a raster into patch files"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.add_option("--scene", scene_path, "input raster");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--patch", patch);
    app.add_option("--stride", stride);
    app.add_option("--border", border, "drop|reflect");
    app.add_option("--config", config);
    if (!parse_args(app, args)) return 0;
    require_opt(scene_path, "--scene");
    require_opt(out_dir, "--out");

    const Raster r = load_raster(scene_path);
    const PatchGrid g = make_grid(r.width, r.height, patch, stride, border_from_string(border));
    ensure_dir(out_dir);
    atomic_write_file(out_dir + "/grid.json", grid_to_json(g));
    for (int i = 0; i < static_cast<int>(g.cells.size()); ++i) {
        const Tensor t = extract_patch(r, g, i);
        std::vector<float> vals(t.values().begin(), t.values().end());
        const Raster pr = make_raster(patch, patch, r.channels, std::move(vals));
        char name[64];
        std::snprintf(name, sizeof(name), "/patch_%05d.slkr", i);
        save_raster(out_dir + name, pr);
    }

    json resolved{{"scene", scene_path}, {"out", out_dir},     {"patch", patch},
                  {"stride", stride},    {"border", border},   {"cells", g.cells.size()}};
    write_run_log(out_dir + "/run.json", "tile", resolved);
    return 0;
}

// ---------------------------------------------------------------- split --

int cmd_split(const std::vector<std::string>& args) {
    std::string grid_path, out_path, mode = "random", config;
    int cells = 0;
    double ratio = 0.5;
    uint64_t seed = 0;

    CLI::App app{"assign cells to train/test"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.add_option("--grid", grid_path, "grid.json from `tile`");
    app.add_option("--cells", cells, "cell count (alternative to --grid)");
    app.add_option("--ratio", ratio);
    app.add_option("--seed", seed);
    app.add_option("--mode", mode, "random|contiguous");
    app.add_option("--out", out_path, "split JSON output");
    app.add_option("--config", config);
    if (!parse_args(app, args)) return 0;
    require_opt(out_path, "--out");

    PatchGrid g;
    if (!grid_path.empty()) {
        g = grid_from_json_file(grid_path);
    } else if (cells > 0) {
        g = make_grid(cells, 1, 1, 1, BorderPolicy::drop_partial);
    } else {
        throw UsageError("one of --grid or --cells is required");
    }
    const SplitAssignment s = split(g, ratio, seed, split_mode_from_string(mode));
    atomic_write_file(out_path, split_to_json(s));

    json resolved{{"grid", grid_path}, {"cells", g.cells.size()}, {"ratio", ratio},
                  {"seed", seed},      {"mode", mode},            {"out", out_path}};
    write_run_log(out_path + ".run.json", "split", resolved);
    return 0;
}

// -------------------------------------------------------------- training --

struct TrainCommon {
    std::string scene_path, mask_path, out_path, report_path, config;
    int patch = 64, stride = 64, depth = 3, width = 16, epochs = 10, batch = 8;
    double lr = 1e-3;
    uint64_t seed = 0;
    int threads = 1;  // training compute is single-threaded by contract
};

void add_train_options(CLI::App& app, TrainCommon& o) {
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.add_option("--scene", o.scene_path, "input raster");
    app.add_option("--mask", o.mask_path, "ground-truth mask");
    app.add_option("--out", o.out_path, "model output (.slkm)");
    app.add_option("--report", o.report_path, "training report JSON");
    app.add_option("--patch", o.patch);
    app.add_option("--stride", o.stride);
    app.add_option("--depth", o.depth);
    app.add_option("--width", o.width);
    app.add_option("--epochs", o.epochs);
    app.add_option("--batch", o.batch);
    app.add_option("--lr", o.lr);
    app.add_option("--seed", o.seed);
    app.add_option("--threads", o.threads, "accepted for interface symmetry; the training loop "
                                           "itself always runs single-threaded")
        ->envname("SLIDEKIT_THREADS");
    app.add_option("--config", o.config);
}

void require_train_options(const TrainCommon& o) {
    require_opt(o.scene_path, "--scene");
    require_opt(o.mask_path, "--mask");
    require_opt(o.out_path, "--out");
}

json train_resolved(const TrainCommon& o) {
    return json{{"scene", o.scene_path}, {"mask", o.mask_path}, {"out", o.out_path},
                {"report", o.report_path}, {"patch", o.patch},  {"stride", o.stride},
                {"depth", o.depth},        {"width", o.width},  {"epochs", o.epochs},
                {"batch", o.batch},        {"lr", o.lr},        {"seed", o.seed}};
}

void finish_training(const TrainCommon& o, const std::string& command, const Model& trained,
                     const TrainReport& report, json resolved) {
    save_model(o.out_path, trained);
    if (!o.report_path.empty()) {
        atomic_write_file(o.report_path, report_to_json(report));
    }
    for (const std::string& w : report.warnings) {
        std::cerr << "warning: " << w << "\n";
    }
    write_run_log(o.out_path + ".run.json", command, std::move(resolved));
    std::printf("%s: %zu steps, final loss %.6f\n", command.c_str(), report.loss_history.size(),
                report.loss_history.empty() ? 0.0 : static_cast<double>(report.loss_history.back()));
}

int cmd_train_anomaly(const std::vector<std::string>& args) {
    TrainCommon o;
    double sigma = 1.0, filter_threshold = 0.5;

    CLI::App app{"train the denoising anomaly detector"};
    add_train_options(app, o);
    app.add_option("--sigma", sigma, "noise standard deviation");
    app.add_option("--filter-threshold", filter_threshold, "coverage filter cutoff");
    if (!parse_args(app, args)) return 0;
    require_train_options(o);

    const Raster scene = standardize(load_raster(o.scene_path));
    const Mask mask = load_mask(o.mask_path);
    check_mask_dims(scene, mask);
    const PatchGrid grid =
        make_grid(scene.width, scene.height, o.patch, o.stride, BorderPolicy::drop_partial);

    const std::vector<int> kept = filter_unsupervised(mask, grid, filter_threshold);
    if (kept.empty()) {
        throw DataError("no training patches remain after the landslide-coverage filter "
                        "(kept cells must have coverage < " +
                        std::to_string(filter_threshold) + ")");
    }
    std::vector<Tensor> patches;
    patches.reserve(kept.size());
    for (int idx : kept) {
        patches.push_back(extract_patch(scene, grid, idx));
    }

    ModelSpec spec;
    spec.kind = ModelKind::denoiser;
    spec.in_channels = scene.channels;
    spec.base_width = o.width;
    spec.depth = o.depth;
    spec.seed = derive_seed(o.seed, kLaneInit);

    NoiseSpec noise{static_cast<real>(sigma), derive_seed(o.seed, kLaneNoise)};
    TrainOptions topt{o.epochs, o.batch, derive_seed(o.seed, kLaneShuffle)};
    AdamState adam;
    adam.cfg.learning_rate = static_cast<real>(o.lr);

    auto [trained, report] = train_denoiser(build_denoiser(spec), patches, noise, topt, adam, {});
    json resolved = train_resolved(o);
    resolved["sigma"] = sigma;
    resolved["filter_threshold"] = filter_threshold;
    resolved["train_patches"] = kept.size();
    finish_training(o, "train-anomaly", trained, report, std::move(resolved));
    return 0;
}

int cmd_train_patch(const std::vector<std::string>& args) {
    TrainCommon o;
    double ratio = 0.5, pos_threshold = 0.01;
    std::string split_out, split_mode = "random";

    CLI::App app{"train the patch-level binary classifier"};
    add_train_options(app, o);
    app.add_option("--ratio", ratio, "train fraction");
    app.add_option("--pos-threshold", pos_threshold, "coverage for a positive patch label");
    app.add_option("--split-mode", split_mode, "random|contiguous");
    app.add_option("--split-out", split_out, "where to write the split JSON");
    if (!parse_args(app, args)) return 0;
    require_train_options(o);

    const Raster scene = standardize(load_raster(o.scene_path));
    const Mask mask = load_mask(o.mask_path);
    check_mask_dims(scene, mask);
    const PatchGrid grid =
        make_grid(scene.width, scene.height, o.patch, o.stride, BorderPolicy::drop_partial);
    const SplitAssignment assignment =
        split(grid, ratio, derive_seed(o.seed, kLaneSplit), split_mode_from_string(split_mode));

    std::vector<Tensor> patches;
    std::vector<int> labels;
    for (int idx : assignment.train_indices) {
        patches.push_back(extract_patch(scene, grid, idx));
        labels.push_back(patch_label(mask, grid, idx, pos_threshold));
    }

    ModelSpec spec;
    spec.kind = ModelKind::patch_classifier;
    spec.in_channels = scene.channels;
    spec.base_width = o.width;
    spec.depth = o.depth;
    spec.seed = derive_seed(o.seed, kLaneInit);

    TrainOptions topt{o.epochs, o.batch, derive_seed(o.seed, kLaneShuffle)};
    AdamState adam;
    adam.cfg.learning_rate = static_cast<real>(o.lr);

    auto [trained, report] = train_classifier(build_patch_classifier(spec), patches, labels, topt, adam);
    if (split_out.empty()) {
        split_out = o.out_path + ".split.json";
    }
    atomic_write_file(split_out, split_to_json(assignment));
    json resolved = train_resolved(o);
    resolved["ratio"] = ratio;
    resolved["pos_threshold"] = pos_threshold;
    resolved["split_out"] = split_out;
    finish_training(o, "train-patch", trained, report, std::move(resolved));
    return 0;
}

int cmd_train_seg(const std::vector<std::string>& args) {
    TrainCommon o;
    o.depth = 2;
    double ratio = 0.5;
    std::string split_out, split_mode = "random";
    std::string dilations_text = "1,2,4";

    CLI::App app{"train the pixel-wise segmenter"};
    add_train_options(app, o);
    app.add_option("--ratio", ratio, "train fraction");
    app.add_option("--dilations", dilations_text, "comma-separated bottleneck dilation rates");
    app.add_option("--split-mode", split_mode, "random|contiguous");
    app.add_option("--split-out", split_out, "where to write the split JSON");
    if (!parse_args(app, args)) return 0;
    require_train_options(o);

    std::vector<int> dilations;
    {
        std::string token;
        for (char c : dilations_text + ",") {
            if (c == ',') {
                if (!token.empty()) {
                    dilations.push_back(std::stoi(token));
                    token.clear();
                }
            } else {
                token += c;
            }
        }
        if (dilations.empty()) {
            throw UsageError("--dilations must list at least one rate");
        }
    }

    const Raster scene = standardize(load_raster(o.scene_path));
    const Mask mask = load_mask(o.mask_path);
    check_mask_dims(scene, mask);
    const PatchGrid grid =
        make_grid(scene.width, scene.height, o.patch, o.stride, BorderPolicy::drop_partial);
    const SplitAssignment assignment =
        split(grid, ratio, derive_seed(o.seed, kLaneSplit), split_mode_from_string(split_mode));

    std::vector<Tensor> patches;
    std::vector<Mask> targets;
    for (int idx : assignment.train_indices) {
        patches.push_back(extract_patch(scene, grid, idx));
        targets.push_back(extract_mask_patch(mask, grid, idx));
    }

    ModelSpec spec;
    spec.kind = ModelKind::segmenter;
    spec.in_channels = scene.channels;
    spec.base_width = o.width;
    spec.depth = o.depth;
    spec.dilation_rates = dilations;
    spec.seed = derive_seed(o.seed, kLaneInit);

    TrainOptions topt{o.epochs, o.batch, derive_seed(o.seed, kLaneShuffle)};
    AdamState adam;
    adam.cfg.learning_rate = static_cast<real>(o.lr);

    auto [trained, report] = train_segmenter(build_segmenter(spec), patches, targets, topt, adam);
    if (split_out.empty()) {
        split_out = o.out_path + ".split.json";
    }
    atomic_write_file(split_out, split_to_json(assignment));
    json resolved = train_resolved(o);
    resolved["ratio"] = ratio;
    resolved["dilations"] = dilations;
    resolved["split_out"] = split_out;
    finish_training(o, "train-seg", trained, report, std::move(resolved));
    return 0;
}

// ---------------------------------------------------------------- infer --

int cmd_infer(const std::vector<std::string>& args) {
    std::string model_path, scene_path, out_path, mode = "anomaly", blend = "average", config;
    int patch = 64, stride = 32, threads = 1;

    CLI::App app{"whole-raster prediction"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.add_option("--model", model_path);
    app.add_option("--scene", scene_path);
    app.add_option("--out", out_path, "score map PNG output");
    app.add_option("--mode", mode, "anomaly|anomaly-residual|seg|patch");
    app.add_option("--patch", patch);
    app.add_option("--stride", stride);
    app.add_option("--blend", blend, "average|hann");
    app.add_option("--threads", threads)->envname("SLIDEKIT_THREADS");
    app.add_option("--config", config);
    if (!parse_args(app, args)) return 0;
    require_opt(model_path, "--model");
    require_opt(scene_path, "--scene");
    require_opt(out_path, "--out");

    const Model model = load_model(model_path);
    const Raster scene = standardize(load_raster(scene_path));
    const int nthreads = resolve_threads(threads);

    ScoreMap sm;
    if (mode == "anomaly" || mode == "anomaly-residual") {
        const Raster recon =
            reconstruct_full(model, scene, patch, stride, blend_from_string(blend), nthreads);
        SsimConfig cfg;
        float lo = scene.data[0], hi = scene.data[0];
        for (float v : scene.data) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        cfg.dynamic_range = std::max(static_cast<real>(hi - lo), real(1e-3));
        sm = anomaly_map(scene, recon, mode == "anomaly" ? Provenance::anomaly_ssim
                                                         : Provenance::anomaly_residual, cfg);
    } else if (mode == "seg") {
        sm = segment_raster(model, scene, patch, stride, blend_from_string(blend), nthreads);
    } else if (mode == "patch") {
        const PatchGrid g =
            make_grid(scene.width, scene.height, patch, stride, BorderPolicy::pad_reflect);
        sm = classify_raster(model, scene, g, nthreads);
    } else {
        throw UsageError("mode must be anomaly|anomaly-residual|seg|patch");
    }

    json params{{"mode", mode},   {"patch", patch},     {"stride", stride},
                {"blend", blend}, {"model", model_path}};
    save_scoremap(out_path, sm, scene_path, params.dump());

    json resolved = params;
    resolved["scene"] = scene_path;
    resolved["out"] = out_path;
    resolved["threads"] = nthreads;
    write_run_log(out_path + ".run.json", "infer", resolved);
    return 0;
}

// ----------------------------------------------------------------- eval --

int cmd_eval(const std::vector<std::string>& args) {
    std::string score_path, pred_path, truth_path, model_path, scene_path, mask_path, split_path;
    std::string out_path, config;
    double thr = 0.5, pos_threshold = 0.01;
    int sweep_steps = 0, patch = 64, stride = 64;

    CLI::App app{"evaluate predictions against ground truth"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.add_option("--score", score_path, "score map PNG (pixel mode)");
    app.add_option("--pred", pred_path, "predicted mask PNG (pixel mode)");
    app.add_option("--truth", truth_path, "ground-truth mask PNG");
    app.add_option("--threshold", thr, "cutoff for --score");
    app.add_option("--sweep", sweep_steps, "evaluate N evenly spaced cutoffs");
    app.add_option("--model", model_path, "classifier model (patch mode)");
    app.add_option("--scene", scene_path, "scene raster (patch mode)");
    app.add_option("--mask", mask_path, "ground-truth mask (patch mode)");
    app.add_option("--split", split_path, "split JSON (patch mode)");
    app.add_option("--patch", patch);
    app.add_option("--stride", stride);
    app.add_option("--pos-threshold", pos_threshold);
    app.add_option("--out", out_path, "report JSON output");
    app.add_option("--config", config);
    if (!parse_args(app, args)) return 0;

    EvalReport report;
    json extra;

    if (!model_path.empty()) {
        if (scene_path.empty() || mask_path.empty() || split_path.empty()) {
            throw UsageError("patch mode needs --scene, --mask and --split");
        }
        const Model model = load_model(model_path);
        const Raster scene = standardize(load_raster(scene_path));
        const Mask mask = load_mask(mask_path);
        check_mask_dims(scene, mask);
        const PatchGrid grid =
            make_grid(scene.width, scene.height, patch, stride, BorderPolicy::drop_partial);
        std::ifstream in(split_path);
        if (!in) {
            throw DataError("cannot read split: " + split_path);
        }
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        const SplitAssignment assignment = split_from_json(text);
        std::vector<int> labels(grid.cells.size());
        for (int i = 0; i < static_cast<int>(grid.cells.size()); ++i) {
            labels[static_cast<size_t>(i)] = patch_label(mask, grid, i, pos_threshold);
        }
        report = evaluate_patch_classifier(model, scene, grid, assignment.test_indices, labels);
        std::cout << format_table(report, "patch-classifier");
    } else if (!pred_path.empty()) {
        if (truth_path.empty()) {
            throw UsageError("--pred needs --truth");
        }
        const Mask pred = load_mask(pred_path);
        const Mask truth = load_mask(truth_path);
        const IouResult iou = mean_iou(pred, truth);
        report.mean_iou = iou.mean;
        report.per_class_iou[0] = iou.per_class[0];
        report.per_class_iou[1] = iou.per_class[1];
        report.threshold = 0.5;
        report.population = static_cast<int64_t>(pred.data.size());
        std::cout << format_table(report, "mask");
    } else if (!score_path.empty()) {
        if (truth_path.empty()) {
            throw UsageError("--score needs --truth");
        }
        const ScoreMap sm = load_scoremap(score_path);
        const Mask truth = load_mask(truth_path);
        if (sweep_steps > 0) {
            const SweepResult sweep = sweep_threshold(sm, truth, sweep_steps);
            thr = sweep.best_t;
            json curve = json::array();
            for (const SweepPoint& p : sweep.curve) {
                curve.push_back({{"t", p.t},
                                 {"mean_iou", p.mean_iou ? json(*p.mean_iou) : json(nullptr)},
                                 {"iou_fg", p.iou_foreground ? json(*p.iou_foreground) : json(nullptr)}});
            }
            extra["sweep"] = {{"steps", sweep_steps},
                              {"best_t", sweep.best_t},
                              {"curve", std::move(curve)}};
        }
        if (!(thr >= 0.0 && thr <= 1.0)) {
            throw UsageError("threshold must be in [0,1]");
        }
        const IouResult iou = mean_iou(threshold(sm, thr), truth);
        report.mean_iou = iou.mean;
        report.per_class_iou[0] = iou.per_class[0];
        report.per_class_iou[1] = iou.per_class[1];
        report.threshold = thr;
        report.population = static_cast<int64_t>(sm.values.size());
        std::cout << format_table(report, sweep_steps > 0 ? "score (best t)" : "score");
    } else {
        throw UsageError("one of --model, --pred or --score is required");
    }

    if (!out_path.empty()) {
        json j = json::parse(report_to_json(report));
        for (auto& [k, v] : extra.items()) {
            j[k] = v;
        }
        atomic_write_file(out_path, j.dump(2) + "\n");
        write_run_log(out_path + ".run.json", "eval",
                      json{{"score", score_path}, {"pred", pred_path}, {"truth", truth_path},
                           {"model", model_path}, {"threshold", thr},  {"sweep", sweep_steps},
                           {"out", out_path}});
    }
    return 0;
}

// ---------------------------------------------------------------- render --

int cmd_render(const std::vector<std::string>& args) {
    std::string scene_path, score_path, out_path, palette = "red", config;
    double thr = 0.5;

    CLI::App app{"overlay a score map on the scene"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.add_option("--scene", scene_path);
    app.add_option("--score", score_path);
    app.add_option("--out", out_path, "overlay PNG output");
    app.add_option("--threshold", thr);
    app.add_option("--palette", palette, "red|magenta|cyan");
    app.add_option("--config", config);
    if (!parse_args(app, args)) return 0;
    require_opt(scene_path, "--scene");
    require_opt(score_path, "--score");
    require_opt(out_path, "--out");

    if (!(thr >= 0.0 && thr <= 1.0)) {
        throw UsageError("threshold must be in [0,1]");
    }
    const Raster scene = load_raster(scene_path);
    const ScoreMap sm = load_scoremap(score_path);
    write_png(out_path, make_overlay(scene, sm, thr, palette));
    write_run_log(out_path + ".run.json", "render",
                  json{{"scene", scene_path}, {"score", score_path}, {"threshold", thr},
                       {"palette", palette},  {"out", out_path}});
    return 0;
}

}  // namespace

PngImage make_overlay(const Raster& r, const ScoreMap& sm, double t, const std::string& palette) {
    if (r.width != sm.width || r.height != sm.height) {
        throw DataError("render: scene and score map dimensions differ");
    }
    uint8_t tint[3];
    if (palette == "red") {
        tint[0] = 255; tint[1] = 0; tint[2] = 0;
    } else if (palette == "magenta") {
        tint[0] = 255; tint[1] = 0; tint[2] = 255;
    } else if (palette == "cyan") {
        tint[0] = 0; tint[1] = 255; tint[2] = 255;
    } else {
        throw DataError("render: palette must be red|magenta|cyan");
    }

    // grayscale base: channel-mean scaled to 0..255 over the scene span
    const size_t plane = r.pixel_count();
    std::vector<float> gray(plane, 0.0f);
    for (size_t i = 0; i < plane; ++i) {
        float s = 0.0f;
        for (int c = 0; c < r.channels; ++c) {
            s += r.data[c * plane + i];
        }
        gray[i] = s / static_cast<float>(r.channels);
    }
    float lo = gray[0], hi = gray[0];
    for (float v : gray) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const float span = hi > lo ? hi - lo : 1.0f;

    const Mask hot = threshold(sm, t);
    PngImage img;
    img.width = r.width;
    img.height = r.height + kLegendHeight;
    img.channels = 3;
    img.bit_depth = 8;
    img.samples.assign(static_cast<size_t>(img.width) * img.height * 3, 0);
    for (size_t i = 0; i < plane; ++i) {
        const uint8_t g = static_cast<uint8_t>(std::lround((gray[i] - lo) / span * 255.0f));
        uint16_t* px = &img.samples[i * 3];
        if (hot.data[i]) {
            for (int c = 0; c < 3; ++c) {
                px[c] = static_cast<uint16_t>(std::lround(0.5 * g + 0.5 * tint[c]));
            }
        } else {
            px[0] = px[1] = px[2] = g;
        }
    }
    // legend strip: plain swatch left, detection tint right
    for (int y = r.height; y < img.height; ++y) {
        for (int x = 0; x < r.width; ++x) {
            uint16_t* px = &img.samples[(static_cast<size_t>(y) * img.width + x) * 3];
            if (x < r.width / 2) {
                px[0] = px[1] = px[2] = 128;
            } else {
                for (int c = 0; c < 3; ++c) {
                    px[c] = static_cast<uint16_t>(std::lround(0.5 * 128 + 0.5 * tint[c]));
                }
            }
        }
    }
    return img;
}

int run(const std::vector<std::string>& args) {
    static const char* kUsage =
        "usage: slidekit <command> [options]\n"
        "commands:\n"
        "  synth          generate a synthetic scene with ground truth\n"
        "  tile           tile a raster into patch files\n"
        "  split          assign cells to train/test\n"
        "  train-anomaly  train the denoising anomaly detector\n"
        "  train-patch    train the patch-level binary classifier\n"
        "  train-seg      train the pixel-wise segmenter\n"
        "  infer          whole-raster prediction (score map)\n"
        "  eval           evaluate predictions against ground truth\n"
        "  render         overlay a score map on the scene\n"
        "run `slidekit <command> --help` for options.\n";

    if (args.empty()) {
        std::cerr << kUsage;
        return 1;
    }
    const std::string cmd = args[0];
    if (cmd == "--help" || cmd == "-h" || cmd == "help") {
        std::cout << kUsage;
        return 0;
    }
    const std::vector<std::string> rest(args.begin() + 1, args.end());

    try {
        if (cmd == "synth") return cmd_synth(rest);
        if (cmd == "tile") return cmd_tile(rest);
        if (cmd == "split") return cmd_split(rest);
        if (cmd == "train-anomaly") return cmd_train_anomaly(rest);
        if (cmd == "train-patch") return cmd_train_patch(rest);
        if (cmd == "train-seg") return cmd_train_seg(rest);
        if (cmd == "infer") return cmd_infer(rest);
        if (cmd == "eval") return cmd_eval(rest);
        if (cmd == "render") return cmd_render(rest);
        std::cerr << "unknown command: " << cmd << "\n" << kUsage;
        return 1;
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace slidekit::cli
