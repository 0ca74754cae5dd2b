#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>

#include "oracles.hpp"
#include "slidekit/png.hpp"
#include "slidekit/raster.hpp"

using namespace slidekit;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "slidekit_raster_tests";
    fs::create_directories(dir);
    return (dir / name).string();
}

void write_bytes(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    REQUIRE(f != nullptr);
    std::fwrite(bytes.data(), 1, bytes.size(), f);
    std::fclose(f);
}

// 4x4 gray PNG with one row per filter type 1-4, produced by an external
// encoder; pins the unfilter paths against a second implementation.
const std::vector<uint8_t> kFilteredPng = {
    0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a, 0x00, 0x00, 0x00, 0x0d, 0x49, 0x48, 0x44,
    0x52, 0x00, 0x00, 0x00, 0x04, 0x00, 0x00, 0x00, 0x04, 0x08, 0x00, 0x00, 0x00, 0x00, 0x8c,
    0x9a, 0xc1, 0xa2, 0x00, 0x00, 0x00, 0x19, 0x49, 0x44, 0x41, 0x54, 0x78, 0xda, 0x63, 0x64,
    0x60, 0x66, 0x66, 0x66, 0x12, 0x00, 0x02, 0x66, 0x09, 0x2e, 0x2e, 0x2e, 0x16, 0x01, 0x20,
    0x17, 0x00, 0x06, 0x2d, 0x00, 0xa3, 0xff, 0xf1, 0xe0, 0x58, 0x00, 0x00, 0x00, 0x00, 0x49,
    0x45, 0x4e, 0x44, 0xae, 0x42, 0x60, 0x82};

}  // namespace

TEST_CASE("png round trip is bit exact for 8-bit gray") {
    PngImage img;
    img.width = 2;
    img.height = 2;
    img.channels = 1;
    img.bit_depth = 8;
    img.samples = {0, 85, 170, 255};
    const std::string path = temp_path("rt8.png");
    write_png(path, img);
    const PngImage back = read_png(path);
    CHECK(back.width == 2);
    CHECK(back.height == 2);
    CHECK(back.bit_depth == 8);
    CHECK(back.samples == img.samples);
}

TEST_CASE("png round trip is bit exact for 16-bit gray and 8-bit rgb") {
    PngImage img;
    img.width = 3;
    img.height = 2;
    img.channels = 1;
    img.bit_depth = 16;
    img.samples = {0, 1, 65535, 32768, 12345, 54321};
    const std::string p16 = temp_path("rt16.png");
    write_png(p16, img);
    CHECK(read_png(p16).samples == img.samples);

    PngImage rgb;
    rgb.width = 2;
    rgb.height = 1;
    rgb.channels = 3;
    rgb.bit_depth = 8;
    rgb.samples = {255, 0, 0, 0, 128, 255};
    const std::string prgb = temp_path("rt_rgb.png");
    write_png(prgb, rgb);
    const PngImage back = read_png(prgb);
    CHECK(back.channels == 3);
    CHECK(back.samples == rgb.samples);
}

TEST_CASE("decoder handles all scanline filter types") {
    const std::string path = temp_path("filtered.png");
    write_bytes(path, kFilteredPng);
    const PngImage img = read_png(path);
    REQUIRE(img.width == 4);
    REQUIRE(img.height == 4);
    const std::vector<uint16_t> expected = {0, 3, 6, 9, 16, 19, 22, 25, 32, 35, 38, 41, 48, 51, 54, 57};
    CHECK(img.samples == expected);
}

TEST_CASE("load_raster computes stats: 2x2 gray quartet") {
    PngImage img;
    img.width = 2;
    img.height = 2;
    img.channels = 1;
    img.bit_depth = 8;
    img.samples = {0, 85, 170, 255};
    const std::string path = temp_path("quartet.png");
    write_png(path, img);

    const Raster r = load_raster(path);
    CHECK(r.width == 2);
    CHECK(r.height == 2);
    CHECK(r.channels == 1);
    CHECK(r.stats[0].mean == doctest::Approx(127.5));
}

TEST_CASE("load_raster on a 1x1 black pixel") {
    PngImage img;
    img.width = 1;
    img.height = 1;
    img.channels = 1;
    img.bit_depth = 8;
    img.samples = {0};
    const std::string path = temp_path("black.png");
    write_png(path, img);
    const Raster r = load_raster(path);
    CHECK(r.stats[0].mean == 0.0);
    CHECK(r.stats[0].stddev == 0.0);
}

TEST_CASE("truncated file is an unreadable-file error") {
    const std::string path = temp_path("trunc.png");
    std::vector<uint8_t> bytes(kFilteredPng.begin(), kFilteredPng.begin() + 30);
    write_bytes(path, bytes);
    CHECK_THROWS_AS(load_raster(path), DataError);
    CHECK_THROWS_AS(load_raster(temp_path("does_not_exist.png")), DataError);
}

TEST_CASE("raster png round trip is bit exact at 8- and 16-bit depths") {
    // integer-valued rasters; depth is chosen from the value range
    std::vector<float> v8 = {0, 17, 128, 255, 3, 99};
    const Raster r8 = make_raster(3, 2, 1, v8);
    const std::string p8 = temp_path("r8.png");
    save_raster(p8, r8);
    CHECK(load_raster(p8).data == v8);

    std::vector<float> v16 = {0, 256, 65535, 1024, 40000, 7};
    const Raster r16 = make_raster(2, 3, 1, v16);
    const std::string p16 = temp_path("r16.png");
    save_raster(p16, r16);
    CHECK(load_raster(p16).data == v16);
}

TEST_CASE("raw slkr round trip is bit exact for arbitrary floats") {
    std::vector<float> data = {0.0f, -1.5f, 3.14159f, 1e-20f, -6.5e7f, 0.1f};
    const Raster r = make_raster(3, 1, 2, data);
    const std::string path = temp_path("blob.slkr");
    save_raster(path, r);
    const Raster back = load_raster(path);
    CHECK(back.width == 3);
    CHECK(back.height == 1);
    CHECK(back.channels == 2);
    CHECK(back.data == data);
}

TEST_CASE("png save of a float raster requires integral samples") {
    const Raster r = make_raster(2, 1, 1, {0.5f, 1.0f});
    CHECK_THROWS_AS(save_raster(temp_path("frac.png"), r), DataError);
}

TEST_CASE("standardize: constant image maps to zeros") {
    const Raster r = make_raster(2, 2, 1, {7.0f, 7.0f, 7.0f, 7.0f});
    const Raster s = standardize(r);
    for (float v : s.data) {
        CHECK(v == 0.0f);
    }
}

TEST_CASE("standardize: {0,2} maps to {-1,+1}") {
    const Raster r = make_raster(2, 1, 1, {0.0f, 2.0f});
    const Raster s = standardize(r);
    CHECK(s.data[0] == doctest::Approx(-1.0));
    CHECK(s.data[1] == doctest::Approx(1.0));
}

TEST_CASE("standardize is idempotent and normalizes every channel") {
    const auto vals = oracles::random_values(32 * 32 * 3, 99, 0.0, 255.0);
    std::vector<float> data(vals.begin(), vals.end());
    const Raster r = make_raster(32, 32, 3, data);
    const Raster s = standardize(r);
    for (int c = 0; c < 3; ++c) {
        CHECK(std::abs(s.stats[c].mean) < 1e-6);
        CHECK(std::abs(s.stats[c].stddev - 1.0) < 1e-6);
    }
    const Raster s2 = standardize(s);
    for (size_t i = 0; i < s.data.size(); ++i) {
        CHECK(std::abs(s2.data[i] - s.data[i]) < 1e-6f);
    }
}

TEST_CASE("load_mask thresholds at 128 and rejects multi-channel input") {
    PngImage img;
    img.width = 4;
    img.height = 1;
    img.channels = 1;
    img.bit_depth = 8;
    img.samples = {0, 255, 127, 128};
    const std::string path = temp_path("mask.png");
    write_png(path, img);
    const Mask m = load_mask(path);
    CHECK(m.data == std::vector<uint8_t>{0, 1, 0, 1});

    PngImage rgb;
    rgb.width = 1;
    rgb.height = 1;
    rgb.channels = 3;
    rgb.bit_depth = 8;
    rgb.samples = {1, 2, 3};
    const std::string p3 = temp_path("mask_rgb.png");
    write_png(p3, rgb);
    CHECK_THROWS_AS(load_mask(p3), DataError);
}

TEST_CASE("mask save/load round trip") {
    Mask m;
    m.width = 3;
    m.height = 2;
    m.data = {0, 1, 1, 0, 0, 1};
    const std::string path = temp_path("mask_rt.png");
    save_mask(path, m);
    const Mask back = load_mask(path);
    CHECK(back.data == m.data);
}

TEST_CASE("make_raster validates dimensions and channel count") {
    CHECK_THROWS_AS(make_raster(0, 1, 1, {}), DataError);
    CHECK_THROWS_AS(make_raster(1, 1, 5, std::vector<float>(5, 0.0f)), DataError);
    CHECK_THROWS_AS(make_raster(2, 2, 1, {1.0f}), DataError);
}
