#include "slidekit/raster.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>

#include "slidekit/png.hpp"

namespace slidekit {

namespace {

constexpr char kRawMagic[4] = {'S', 'L', 'K', 'R'};

void put_u32le(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 24));
}

uint32_t get_u32le(const uint8_t* p) {
    return uint32_t(p[0]) | (uint32_t(p[1]) << 8) | (uint32_t(p[2]) << 16) | (uint32_t(p[3]) << 24);
}

bool has_png_magic(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) {
        throw DataError("unreadable file: " + path);
    }
    uint8_t head[4] = {0, 0, 0, 0};
    const size_t n = std::fread(head, 1, 4, f);
    std::fclose(f);
    if (n < 4) {
        throw DataError("unreadable file (too short): " + path);
    }
    if (std::memcmp(head, kRawMagic, 4) == 0) {
        return false;
    }
    return head[0] == 137 && head[1] == 'P';
}

Raster load_raw(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) {
        throw DataError("unreadable file: " + path);
    }
    std::vector<uint8_t> bytes;
    std::fseek(f, 0, SEEK_END);
    const long sz = std::ftell(f);
    std::fseek(f, 0, SEEK_SET);
    bytes.resize(sz > 0 ? static_cast<size_t>(sz) : 0);
    if (!bytes.empty() && std::fread(bytes.data(), 1, bytes.size(), f) != bytes.size()) {
        std::fclose(f);
        throw DataError("unreadable file: " + path);
    }
    std::fclose(f);

    if (bytes.size() < 16 || std::memcmp(bytes.data(), kRawMagic, 4) != 0) {
        throw DataError("unreadable file (bad raw header): " + path);
    }
    const uint32_t w = get_u32le(&bytes[4]);
    const uint32_t h = get_u32le(&bytes[8]);
    const uint32_t c = get_u32le(&bytes[12]);
    if (w == 0 || h == 0) {
        throw DataError("zero-area image: " + path);
    }
    if (c < 1 || c > 4) {
        throw DataError("channel count out of range (1-4): " + path);
    }
    const size_t n = static_cast<size_t>(w) * h * c;
    if (bytes.size() != 16 + n * 4) {
        throw DataError("unreadable file (truncated raw data): " + path);
    }
    std::vector<float> data(n);
    for (size_t i = 0; i < n; ++i) {
        uint32_t u = get_u32le(&bytes[16 + i * 4]);
        float v;
        std::memcpy(&v, &u, 4);
        data[i] = v;
    }
    return make_raster(static_cast<int>(w), static_cast<int>(h), static_cast<int>(c), std::move(data));
}

void save_raw(const std::string& path, const Raster& r) {
    std::vector<uint8_t> out;
    out.reserve(16 + r.data.size() * 4);
    out.insert(out.end(), kRawMagic, kRawMagic + 4);
    put_u32le(out, static_cast<uint32_t>(r.width));
    put_u32le(out, static_cast<uint32_t>(r.height));
    put_u32le(out, static_cast<uint32_t>(r.channels));
    for (float v : r.data) {
        uint32_t u;
        std::memcpy(&u, &v, 4);
        put_u32le(out, u);
    }
    atomic_write_file(path, out.data(), out.size());
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

Raster make_raster(int width, int height, int channels, std::vector<float> data) {
    if (width < 1 || height < 1) {
        throw DataError("zero-area image");
    }
    if (channels < 1 || channels > 4) {
        throw DataError("channel count out of range (1-4)");
    }
    if (data.size() != static_cast<size_t>(width) * height * channels) {
        throw DataError("raster data length does not match dimensions");
    }
    Raster r;
    r.width = width;
    r.height = height;
    r.channels = channels;
    r.data = std::move(data);
    compute_stats(r);
    return r;
}

void compute_stats(Raster& r) {
    r.stats.assign(r.channels, {});
    const size_t plane = r.pixel_count();
    for (int c = 0; c < r.channels; ++c) {
        const float* p = &r.data[c * plane];
        double sum = 0.0;
        for (size_t i = 0; i < plane; ++i) sum += p[i];
        const double mean = sum / static_cast<double>(plane);
        double var = 0.0;
        for (size_t i = 0; i < plane; ++i) {
            const double d = p[i] - mean;
            var += d * d;
        }
        var /= static_cast<double>(plane);
        r.stats[c].mean = mean;
        r.stats[c].stddev = std::sqrt(var);
        if (!std::isfinite(r.stats[c].mean) || !std::isfinite(r.stats[c].stddev)) {
            throw NumericError("non-finite raster statistics");
        }
    }
}

Raster load_raster(const std::string& path) {
    if (!has_png_magic(path)) {
        return load_raw(path);
    }
    const PngImage img = read_png(path);
    const size_t plane = static_cast<size_t>(img.width) * img.height;
    std::vector<float> data(plane * img.channels);
    // interleaved -> planar
    for (size_t i = 0; i < plane; ++i) {
        for (int c = 0; c < img.channels; ++c) {
            data[c * plane + i] = static_cast<float>(img.samples[i * img.channels + c]);
        }
    }
    return make_raster(img.width, img.height, img.channels, std::move(data));
}

void save_raster(const std::string& path, const Raster& r) {
    if (!ends_with(path, ".png")) {
        save_raw(path, r);
        return;
    }
    if (r.channels != 1 && r.channels != 3) {
        throw DataError("PNG output supports 1 or 3 channels; use .slkr");
    }
    float max_v = 0.0f;
    bool integral = true;
    for (float v : r.data) {
        if (v < 0.0f || v != std::floor(v)) {
            integral = false;
            break;
        }
        max_v = std::max(max_v, v);
    }
    if (!integral || max_v > 65535.0f) {
        throw DataError("PNG output requires integer samples in 0..65535; use .slkr");
    }
    PngImage img;
    img.width = r.width;
    img.height = r.height;
    img.channels = r.channels;
    img.bit_depth = max_v > 255.0f ? 16 : 8;
    const size_t plane = r.pixel_count();
    img.samples.resize(plane * r.channels);
    for (size_t i = 0; i < plane; ++i) {
        for (int c = 0; c < r.channels; ++c) {
            img.samples[i * r.channels + c] = static_cast<uint16_t>(r.data[c * plane + i]);
        }
    }
    write_png(path, img);
}

Raster standardize(const Raster& r) {
    Raster out;
    out.width = r.width;
    out.height = r.height;
    out.channels = r.channels;
    out.data.resize(r.data.size());
    const size_t plane = r.pixel_count();
    for (int c = 0; c < r.channels; ++c) {
        const ChannelStats& s = r.stats[c];
        const float* src = &r.data[c * plane];
        float* dst = &out.data[c * plane];
        if (s.stddev == 0.0) {
            std::memset(dst, 0, plane * sizeof(float));
            continue;
        }
        const float mean = static_cast<float>(s.mean);
        const float inv = static_cast<float>(1.0 / s.stddev);
        for (size_t i = 0; i < plane; ++i) {
            dst[i] = (src[i] - mean) * inv;
        }
    }
    compute_stats(out);
    return out;
}

Mask load_mask(const std::string& path) {
    const PngImage img = read_png(path);
    if (img.channels != 1) {
        throw DataError("mask must be single-channel: " + path);
    }
    Mask m;
    m.width = img.width;
    m.height = img.height;
    m.data.resize(img.samples.size());
    for (size_t i = 0; i < img.samples.size(); ++i) {
        m.data[i] = img.samples[i] >= 128 ? 1 : 0;
    }
    return m;
}

void save_mask(const std::string& path, const Mask& m) {
    PngImage img;
    img.width = m.width;
    img.height = m.height;
    img.channels = 1;
    img.bit_depth = 8;
    img.samples.resize(m.data.size());
    for (size_t i = 0; i < m.data.size(); ++i) {
        img.samples[i] = m.data[i] ? 255 : 0;
    }
    write_png(path, img);
}

}  // namespace slidekit
