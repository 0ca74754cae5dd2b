#include "slidekit/model.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <json.hpp>

#include "slidekit/common.hpp"
#include "slidekit/ops.hpp"
#include "slidekit/rng.hpp"

namespace slidekit {

namespace {

constexpr char kMagic[4] = {'S', 'L', 'K', 'M'};
constexpr uint16_t kFormatVersion = 1;

void validate_spec(const ModelSpec& spec) {
    if (spec.depth < 1) {
        throw DataError("model spec: depth must be >= 1");
    }
    if (spec.base_width < 4) {
        throw DataError("model spec: base_width must be >= 4");
    }
    if (spec.in_channels < 1 || spec.in_channels > 4) {
        throw DataError("model spec: in_channels must be 1-4");
    }
}

// He fan-in initialization; draws happen in construction order.
Tensor init_conv(RandomStream& rng, int cout, int cin, int k) {
    const double std = std::sqrt(2.0 / (static_cast<double>(cin) * k * k));
    std::vector<real> w(static_cast<size_t>(cout) * cin * k * k);
    for (real& v : w) {
        v = static_cast<real>(rng.gaussian(std));
    }
    return Tensor::from_values({cout, cin, k, k}, std::move(w)).set_requires_grad(true);
}

Tensor init_dense(RandomStream& rng, int m, int n) {
    const double std = std::sqrt(2.0 / static_cast<double>(n));
    std::vector<real> w(static_cast<size_t>(m) * n);
    for (real& v : w) {
        v = static_cast<real>(rng.gaussian(std));
    }
    return Tensor::from_values({m, n}, std::move(w)).set_requires_grad(true);
}

Tensor zero_bias(int n) { return Tensor::zeros({n}).set_requires_grad(true); }

void add_conv(Model& m, RandomStream& rng, const std::string& name, int cout, int cin, int k) {
    m.params[name + ".w"] = init_conv(rng, cout, cin, k);
    m.params[name + ".b"] = zero_bias(cout);
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%s: conv %dx%d %d->%d", name.c_str(), k, k, cin, cout);
    m.topology.emplace_back(buf);
}

const Tensor& P(const Model& m, const std::string& name) {
    const auto it = m.params.find(name);
    if (it == m.params.end()) {
        throw DataError("model parameter missing: " + name);
    }
    return it->second;
}

Tensor conv_layer(const Model& m, const std::string& name, const Tensor& x, int dilation = 1,
                  int padding = -1) {
    const Tensor& w = P(m, name + ".w");
    const int k = w.dim(2);
    if (padding < 0) {
        padding = dilation * (k - 1) / 2;  // same-size for odd k
    }
    return conv2d(x, w, P(m, name + ".b"), 1, dilation, padding);
}

void put_u16le(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v));
    out.push_back(static_cast<uint8_t>(v >> 8));
}

void put_u32le(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 24));
}

struct Reader {
    const std::vector<uint8_t>& bytes;
    size_t pos = 0;

    void need(size_t n) const {
        if (pos + n > bytes.size()) {
            throw DataError("corrupted model file (truncated)");
        }
    }
    uint16_t u16() {
        need(2);
        const uint16_t v = uint16_t(bytes[pos]) | (uint16_t(bytes[pos + 1]) << 8);
        pos += 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        const uint32_t v = uint32_t(bytes[pos]) | (uint32_t(bytes[pos + 1]) << 8) |
                           (uint32_t(bytes[pos + 2]) << 16) | (uint32_t(bytes[pos + 3]) << 24);
        pos += 4;
        return v;
    }
    std::string str(size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(&bytes[pos]), n);
        pos += n;
        return s;
    }
};

}  // namespace

std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::patch_classifier: return "patch_classifier";
        case ModelKind::segmenter: return "segmenter";
        case ModelKind::denoiser: return "denoiser";
    }
    return "denoiser";
}

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "patch_classifier") return ModelKind::patch_classifier;
    if (s == "segmenter") return ModelKind::segmenter;
    if (s == "denoiser") return ModelKind::denoiser;
    throw DataError("unknown model kind: " + s);
}

Model build_model(const ModelSpec& spec) {
    switch (spec.kind) {
        case ModelKind::denoiser: return build_denoiser(spec);
        case ModelKind::patch_classifier: return build_patch_classifier(spec);
        case ModelKind::segmenter: return build_segmenter(spec);
    }
    throw DataError("unknown model kind");
}

Model build_denoiser(const ModelSpec& spec) {
    validate_spec(spec);
    if (spec.kind != ModelKind::denoiser) {
        throw DataError("build_denoiser: spec kind mismatch");
    }
    Model m;
    m.spec = spec;
    RandomStream rng(spec.seed);

    int prev = spec.in_channels;
    for (int i = 0; i < spec.depth; ++i) {
        const int w = spec.base_width << i;
        add_conv(m, rng, "enc" + std::to_string(i) + ".conv1", w, prev, 3);
        add_conv(m, rng, "enc" + std::to_string(i) + ".conv2", w, w, 3);
        prev = w;
    }
    const int wb = spec.base_width << spec.depth;
    add_conv(m, rng, "bottleneck.conv1", wb, prev, 3);
    add_conv(m, rng, "bottleneck.conv2", wb, wb, 3);
    prev = wb;
    for (int i = spec.depth - 1; i >= 0; --i) {
        const int w = spec.base_width << i;
        add_conv(m, rng, "dec" + std::to_string(i) + ".conv1", w, prev + w, 3);
        add_conv(m, rng, "dec" + std::to_string(i) + ".conv2", w, w, 3);
        prev = w;
    }
    add_conv(m, rng, "out.conv", spec.in_channels, prev, 1);
    return m;
}

Model build_patch_classifier(const ModelSpec& spec) {
    validate_spec(spec);
    if (spec.kind != ModelKind::patch_classifier) {
        throw DataError("build_patch_classifier: spec kind mismatch");
    }
    Model m;
    m.spec = spec;
    RandomStream rng(spec.seed);

    add_conv(m, rng, "stem.conv", spec.base_width, spec.in_channels, 3);
    for (int i = 0; i < spec.depth; ++i) {
        add_conv(m, rng, "block" + std::to_string(i) + ".conv1", spec.base_width, spec.base_width, 3);
        add_conv(m, rng, "block" + std::to_string(i) + ".conv2", spec.base_width, spec.base_width, 3);
    }
    m.params["head.dense.w"] = init_dense(rng, 1, spec.base_width);
    m.params["head.dense.b"] = zero_bias(1);
    m.topology.emplace_back("head.dense: " + std::to_string(spec.base_width) + "->1");
    return m;
}

Model build_segmenter(const ModelSpec& spec) {
    validate_spec(spec);
    if (spec.kind != ModelKind::segmenter) {
        throw DataError("build_segmenter: spec kind mismatch");
    }
    if (spec.dilation_rates.empty()) {
        throw DataError("build_segmenter: dilation_rates must be non-empty");
    }
    for (int r : spec.dilation_rates) {
        if (r < 1) {
            throw DataError("build_segmenter: dilation rates must be >= 1");
        }
    }
    Model m;
    m.spec = spec;
    RandomStream rng(spec.seed);

    int prev = spec.in_channels;
    for (int i = 0; i < spec.depth; ++i) {
        const int w = spec.base_width << i;
        add_conv(m, rng, "enc" + std::to_string(i) + ".conv1", w, prev, 3);
        add_conv(m, rng, "enc" + std::to_string(i) + ".conv2", w, w, 3);
        prev = w;
    }
    const int wb = spec.base_width << spec.depth;
    for (int r : spec.dilation_rates) {
        add_conv(m, rng, "bottleneck.dil" + std::to_string(r), wb, prev, 3);
    }
    prev = wb;
    for (int i = spec.depth - 1; i >= 0; --i) {
        const int w = spec.base_width << i;
        add_conv(m, rng, "dec" + std::to_string(i) + ".conv1", w, prev + w, 3);
        add_conv(m, rng, "dec" + std::to_string(i) + ".conv2", w, w, 3);
        prev = w;
    }
    add_conv(m, rng, "out.conv", 2, prev, 1);
    return m;
}

Tensor dilated_conv_sum(const Tensor& input, const std::vector<Tensor>& kernels,
                        const std::vector<Tensor>& biases, const std::vector<int>& rates) {
    if (kernels.size() != rates.size() || biases.size() != rates.size() || rates.empty()) {
        throw DataError("dilated_conv_sum: branch count mismatch");
    }
    Tensor acc;
    for (size_t i = 0; i < rates.size(); ++i) {
        const int k = kernels[i].dim(2);
        Tensor branch = conv2d(input, kernels[i], biases[i], 1, rates[i], rates[i] * (k - 1) / 2);
        acc = acc.defined() ? add(acc, branch) : branch;
    }
    return acc;
}

namespace {

Tensor forward_denoiser(const Model& m, const Tensor& input) {
    Tensor cur = input;
    std::vector<Tensor> skips;
    for (int i = 0; i < m.spec.depth; ++i) {
        cur = relu(conv_layer(m, "enc" + std::to_string(i) + ".conv1", cur));
        cur = relu(conv_layer(m, "enc" + std::to_string(i) + ".conv2", cur));
        skips.push_back(cur);
        cur = maxpool2d(cur, 2);
    }
    cur = relu(conv_layer(m, "bottleneck.conv1", cur));
    cur = relu(conv_layer(m, "bottleneck.conv2", cur));
    for (int i = m.spec.depth - 1; i >= 0; --i) {
        cur = upsample_nearest(cur, 2);
        cur = concat_channels(cur, skips[static_cast<size_t>(i)]);
        cur = relu(conv_layer(m, "dec" + std::to_string(i) + ".conv1", cur));
        cur = relu(conv_layer(m, "dec" + std::to_string(i) + ".conv2", cur));
    }
    return conv_layer(m, "out.conv", cur);  // linear output
}

Tensor forward_classifier(const Model& m, const Tensor& input) {
    Tensor cur = relu(conv_layer(m, "stem.conv", input));
    for (int i = 0; i < m.spec.depth; ++i) {
        Tensor branch = conv_layer(m, "block" + std::to_string(i) + ".conv1", cur);
        branch = conv_layer(m, "block" + std::to_string(i) + ".conv2", relu(branch));
        cur = relu(add(cur, branch));
        cur = maxpool2d(cur, 2);
    }
    Tensor logit = dense(global_avg_pool(cur), P(m, "head.dense.w"), P(m, "head.dense.b"));
    return sigmoid(logit);
}

Tensor forward_segmenter(const Model& m, const Tensor& input) {
    Tensor cur = input;
    std::vector<Tensor> skips;
    for (int i = 0; i < m.spec.depth; ++i) {
        cur = relu(conv_layer(m, "enc" + std::to_string(i) + ".conv1", cur));
        cur = relu(conv_layer(m, "enc" + std::to_string(i) + ".conv2", cur));
        skips.push_back(cur);
        cur = maxpool2d(cur, 2);
    }
    std::vector<Tensor> kernels, biases;
    for (int r : m.spec.dilation_rates) {
        kernels.push_back(P(m, "bottleneck.dil" + std::to_string(r) + ".w"));
        biases.push_back(P(m, "bottleneck.dil" + std::to_string(r) + ".b"));
    }
    cur = relu(dilated_conv_sum(cur, kernels, biases, m.spec.dilation_rates));
    for (int i = m.spec.depth - 1; i >= 0; --i) {
        cur = upsample_nearest(cur, 2);
        cur = concat_channels(cur, skips[static_cast<size_t>(i)]);
        cur = relu(conv_layer(m, "dec" + std::to_string(i) + ".conv1", cur));
        cur = relu(conv_layer(m, "dec" + std::to_string(i) + ".conv2", cur));
    }
    return conv_layer(m, "out.conv", cur);  // 2-class logits
}

}  // namespace

Tensor forward(const Model& m, const Tensor& input) {
    if (input.shape().size() != 3 || input.dim(0) != m.spec.in_channels) {
        throw DataError("forward: input must be [" + std::to_string(m.spec.in_channels) + ",P,P]");
    }
    const int h = input.dim(1), w = input.dim(2);
    const int div = 1 << m.spec.depth;
    if (h != w || h % div != 0 || h / div < 1) {
        throw DataError("forward: patch side must be square and divisible by 2^depth");
    }
    switch (m.spec.kind) {
        case ModelKind::denoiser: return forward_denoiser(m, input);
        case ModelKind::patch_classifier: return forward_classifier(m, input);
        case ModelKind::segmenter: return forward_segmenter(m, input);
    }
    throw DataError("unknown model kind");
}

size_t param_count(const Model& m) {
    size_t n = 0;
    for (const auto& [name, t] : m.params) {
        n += t.size();
    }
    return n;
}

void freeze(Model& m) {
    for (auto& [name, t] : m.params) {
        t.set_requires_grad(false);
    }
}

void save_model(const std::string& path, const Model& m) {
    nlohmann::json j;
    j["kind"] = to_string(m.spec.kind);
    j["in_channels"] = m.spec.in_channels;
    j["base_width"] = m.spec.base_width;
    j["depth"] = m.spec.depth;
    j["dilation_rates"] = m.spec.dilation_rates;
    j["seed"] = m.spec.seed;
    const std::string spec_json = j.dump();

    std::vector<uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u16le(out, kFormatVersion);
    put_u32le(out, static_cast<uint32_t>(spec_json.size()));
    out.insert(out.end(), spec_json.begin(), spec_json.end());
    put_u32le(out, static_cast<uint32_t>(m.params.size()));
    for (const auto& [name, t] : m.params) {
        put_u16le(out, static_cast<uint16_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        out.push_back(static_cast<uint8_t>(t.shape().size()));
        for (int d : t.shape()) {
            put_u32le(out, static_cast<uint32_t>(d));
        }
        for (real v : t.values()) {
            const float f = static_cast<float>(v);
            uint32_t u;
            std::memcpy(&u, &f, 4);
            put_u32le(out, u);
        }
    }
    atomic_write_file(path, out.data(), out.size());
}

Model load_model(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) {
        throw DataError("unreadable file: " + path);
    }
    std::fseek(f, 0, SEEK_END);
    const long sz = std::ftell(f);
    std::fseek(f, 0, SEEK_SET);
    std::vector<uint8_t> bytes(sz > 0 ? static_cast<size_t>(sz) : 0);
    if (!bytes.empty() && std::fread(bytes.data(), 1, bytes.size(), f) != bytes.size()) {
        std::fclose(f);
        throw DataError("unreadable file: " + path);
    }
    std::fclose(f);

    Reader r{bytes};
    r.need(4);
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw DataError("not a model file (bad magic): " + path);
    }
    r.pos = 4;
    const uint16_t version = r.u16();
    if (version != kFormatVersion) {
        throw DataError("unsupported model format version " + std::to_string(version));
    }
    const uint32_t json_len = r.u32();
    const std::string spec_json = r.str(json_len);

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(spec_json);
    } catch (const nlohmann::json::parse_error&) {
        throw DataError("corrupted model file (bad spec block)");
    }
    ModelSpec spec;
    try {
        spec.kind = model_kind_from_string(j.at("kind").get<std::string>());
        spec.in_channels = j.at("in_channels").get<int>();
        spec.base_width = j.at("base_width").get<int>();
        spec.depth = j.at("depth").get<int>();
        spec.dilation_rates = j.at("dilation_rates").get<std::vector<int>>();
        spec.seed = j.at("seed").get<uint64_t>();
    } catch (const nlohmann::json::exception&) {
        throw DataError("corrupted model file (incomplete spec block)");
    }

    Model m = build_model(spec);
    const uint32_t n_params = r.u32();
    if (n_params != m.params.size()) {
        throw DataError("corrupted model file (parameter count mismatch)");
    }
    for (uint32_t i = 0; i < n_params; ++i) {
        const uint16_t name_len = r.u16();
        const std::string name = r.str(name_len);
        const auto it = m.params.find(name);
        if (it == m.params.end()) {
            throw DataError("corrupted model file (unknown parameter " + name + ")");
        }
        r.need(1);
        const int ndim = bytes[r.pos++];
        std::vector<int> dims(static_cast<size_t>(ndim));
        for (int d = 0; d < ndim; ++d) {
            dims[static_cast<size_t>(d)] = static_cast<int>(r.u32());
        }
        if (dims != it->second.shape()) {
            throw DataError("corrupted model file (shape mismatch for " + name + ")");
        }
        std::vector<real>& dst = it->second.mutable_values();
        for (size_t e = 0; e < dst.size(); ++e) {
            const uint32_t u = r.u32();
            float v;
            std::memcpy(&v, &u, 4);
            dst[e] = static_cast<real>(v);
        }
    }
    freeze(m);
    return m;
}

}  // namespace slidekit
