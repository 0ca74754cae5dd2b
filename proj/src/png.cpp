#include "slidekit/png.hpp"

#include <zlib.h>

#include <cstdio>
#include <cstring>

#include "slidekit/common.hpp"

namespace slidekit {

namespace {

const uint8_t kSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};

void put_u32be(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

uint32_t get_u32be(const uint8_t* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

void append_chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& payload) {
    put_u32be(out, static_cast<uint32_t>(payload.size()));
    const size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    uint32_t crc = crc32(0, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start));
    put_u32be(out, crc);
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a);
    const int pb = std::abs(p - b);
    const int pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

std::vector<uint8_t> read_file(const std::string& path) {
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
    return bytes;
}

}  // namespace

PngImage read_png(const std::string& path) {
    const std::vector<uint8_t> bytes = read_file(path);
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kSignature, 8) != 0) {
        throw DataError("unreadable file (not a PNG): " + path);
    }

    PngImage img;
    int color_type = -1;
    std::vector<uint8_t> idat;
    bool saw_ihdr = false, saw_iend = false;

    size_t pos = 8;
    while (pos + 12 <= bytes.size()) {
        const uint32_t len = get_u32be(&bytes[pos]);
        if (pos + 12 + len > bytes.size()) {
            throw DataError("unreadable file (truncated chunk): " + path);
        }
        const char* type = reinterpret_cast<const char*>(&bytes[pos + 4]);
        const uint8_t* payload = &bytes[pos + 8];
        const uint32_t stored_crc = get_u32be(&bytes[pos + 8 + len]);
        const uint32_t actual_crc = crc32(0, &bytes[pos + 4], len + 4);
        if (stored_crc != actual_crc) {
            throw DataError("unreadable file (chunk CRC mismatch): " + path);
        }

        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) {
                throw DataError("unreadable file (bad IHDR): " + path);
            }
            img.width = static_cast<int>(get_u32be(payload));
            img.height = static_cast<int>(get_u32be(payload + 4));
            img.bit_depth = payload[8];
            color_type = payload[9];
            const int interlace = payload[12];
            if (img.width <= 0 || img.height <= 0) {
                throw DataError("zero-area image: " + path);
            }
            if (img.bit_depth != 8 && img.bit_depth != 16) {
                throw DataError("unsupported bit depth " + std::to_string(img.bit_depth) + ": " + path);
            }
            if (color_type != 0 && color_type != 2) {
                throw DataError("unsupported PNG color type " + std::to_string(color_type) +
                                " (grayscale or RGB required): " + path);
            }
            if (interlace != 0) {
                throw DataError("interlaced PNG not supported: " + path);
            }
            img.channels = (color_type == 2) ? 3 : 1;
            saw_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            saw_iend = true;
            break;
        }
        // ancillary chunks are skipped
        pos += 12 + len;
    }
    if (!saw_ihdr || !saw_iend || idat.empty()) {
        throw DataError("unreadable file (missing PNG chunks): " + path);
    }

    const size_t bytes_per_sample = img.bit_depth / 8;
    const size_t row_bytes = static_cast<size_t>(img.width) * img.channels * bytes_per_sample;
    const size_t raw_size = static_cast<size_t>(img.height) * (row_bytes + 1);

    std::vector<uint8_t> raw(raw_size);
    uLongf dest_len = static_cast<uLongf>(raw_size);
    const int zrc = uncompress(raw.data(), &dest_len, idat.data(), static_cast<uLong>(idat.size()));
    if (zrc != Z_OK || dest_len != raw_size) {
        throw DataError("unreadable file (corrupt image data): " + path);
    }

    // undo per-row filters
    const size_t bpp = img.channels * bytes_per_sample;  // filter unit
    std::vector<uint8_t> prev(row_bytes, 0);
    std::vector<uint8_t> cur(row_bytes);
    img.samples.resize(static_cast<size_t>(img.width) * img.height * img.channels);

    for (int y = 0; y < img.height; ++y) {
        const uint8_t* src = &raw[static_cast<size_t>(y) * (row_bytes + 1)];
        const uint8_t filter = src[0];
        std::memcpy(cur.data(), src + 1, row_bytes);
        switch (filter) {
            case 0:
                break;
            case 1:  // sub
                for (size_t i = bpp; i < row_bytes; ++i) cur[i] = uint8_t(cur[i] + cur[i - bpp]);
                break;
            case 2:  // up
                for (size_t i = 0; i < row_bytes; ++i) cur[i] = uint8_t(cur[i] + prev[i]);
                break;
            case 3:  // average
                for (size_t i = 0; i < row_bytes; ++i) {
                    const int left = i >= bpp ? cur[i - bpp] : 0;
                    cur[i] = uint8_t(cur[i] + ((left + prev[i]) >> 1));
                }
                break;
            case 4:  // paeth
                for (size_t i = 0; i < row_bytes; ++i) {
                    const int left = i >= bpp ? cur[i - bpp] : 0;
                    const int upleft = i >= bpp ? prev[i - bpp] : 0;
                    cur[i] = uint8_t(cur[i] + paeth(left, prev[i], upleft));
                }
                break;
            default:
                throw DataError("unreadable file (bad filter type): " + path);
        }
        uint16_t* dst = &img.samples[static_cast<size_t>(y) * img.width * img.channels];
        if (img.bit_depth == 8) {
            for (size_t i = 0; i < row_bytes; ++i) dst[i] = cur[i];
        } else {
            for (size_t i = 0; i < row_bytes; i += 2) {
                dst[i / 2] = static_cast<uint16_t>((cur[i] << 8) | cur[i + 1]);
            }
        }
        std::swap(prev, cur);
    }
    return img;
}

void write_png(const std::string& path, const PngImage& img) {
    if (img.width <= 0 || img.height <= 0) {
        throw DataError("zero-area image: " + path);
    }
    if (img.bit_depth != 8 && img.bit_depth != 16) {
        throw DataError("unsupported bit depth for PNG write");
    }
    if (img.channels != 1 && img.channels != 3) {
        throw DataError("PNG write supports 1 or 3 channels");
    }
    const size_t expected = static_cast<size_t>(img.width) * img.height * img.channels;
    if (img.samples.size() != expected) {
        throw DataError("PNG sample buffer size mismatch");
    }

    const size_t bytes_per_sample = img.bit_depth / 8;
    const size_t row_bytes = static_cast<size_t>(img.width) * img.channels * bytes_per_sample;
    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(img.height) * (row_bytes + 1));
    for (int y = 0; y < img.height; ++y) {
        raw.push_back(0);  // filter type 0 per row
        const uint16_t* src = &img.samples[static_cast<size_t>(y) * img.width * img.channels];
        if (img.bit_depth == 8) {
            for (size_t i = 0; i < row_bytes; ++i) raw.push_back(static_cast<uint8_t>(src[i]));
        } else {
            for (size_t i = 0; i < row_bytes / 2; ++i) {
                raw.push_back(static_cast<uint8_t>(src[i] >> 8));
                raw.push_back(static_cast<uint8_t>(src[i] & 0xFF));
            }
        }
    }

    uLongf comp_cap = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> comp(comp_cap);
    if (compress2(comp.data(), &comp_cap, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK) {
        throw DataError("PNG compression failed");
    }
    comp.resize(comp_cap);

    std::vector<uint8_t> out(kSignature, kSignature + 8);
    std::vector<uint8_t> ihdr;
    put_u32be(ihdr, static_cast<uint32_t>(img.width));
    put_u32be(ihdr, static_cast<uint32_t>(img.height));
    ihdr.push_back(static_cast<uint8_t>(img.bit_depth));
    ihdr.push_back(img.channels == 3 ? 2 : 0);  // color type
    ihdr.push_back(0);                          // compression
    ihdr.push_back(0);                          // filter method
    ihdr.push_back(0);                          // no interlace
    append_chunk(out, "IHDR", ihdr);
    append_chunk(out, "IDAT", comp);
    append_chunk(out, "IEND", {});

    atomic_write_file(path, out.data(), out.size());
}

}  // namespace slidekit
