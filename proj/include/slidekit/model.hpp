#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "slidekit/tensor.hpp"

namespace slidekit {

enum class ModelKind { patch_classifier, segmenter, denoiser };

std::string to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);

struct ModelSpec {
    ModelKind kind = ModelKind::denoiser;
    int in_channels = 1;
    int base_width = 16;
    int depth = 3;
    std::vector<int> dilation_rates;  // segmenter only
    uint64_t seed = 0;
};

// An ordered parameterized computation. Parameters are named leaf tensors;
// map order (lexicographic) is the deterministic iteration order used by the
// optimizer and the file format. Initialization draws follow construction
// order under the spec seed.
struct Model {
    ModelSpec spec;
    std::map<std::string, Tensor> params;
    std::vector<std::string> topology;
};

Model build_model(const ModelSpec& spec);
Model build_denoiser(const ModelSpec& spec);
Model build_patch_classifier(const ModelSpec& spec);
Model build_segmenter(const ModelSpec& spec);

// Denoiser -> [C,P,P] linear output; classifier -> [1] probability;
// segmenter -> [2,P,P] logits. Input side must be divisible by 2^depth.
Tensor forward(const Model& m, const Tensor& input);

size_t param_count(const Model& m);

// Marks all parameters as not requiring gradients (shared, read-only use).
void freeze(Model& m);

// Parallel 3x3 convolutions at the given dilation rates, outputs summed.
Tensor dilated_conv_sum(const Tensor& input, const std::vector<Tensor>& kernels,
                        const std::vector<Tensor>& biases, const std::vector<int>& rates);

// Model file: magic "SLKM", format version u16, JSON spec block, then named
// little-endian f32 parameter blobs. Round-trips are bit-exact.
void save_model(const std::string& path, const Model& m);
Model load_model(const std::string& path);

}  // namespace slidekit
