#pragma once

#include <string>
#include <vector>

#include "slidekit/inference.hpp"
#include "slidekit/png.hpp"
#include "slidekit/raster.hpp"

namespace slidekit::cli {

// Dispatches a subcommand; args exclude the program name.
// Exit status: 0 success, 1 usage error, 2 data error, 3 numeric failure.
int run(const std::vector<std::string>& args);

// Grayscale base with score >= t tinted at alpha 0.5, legend strip appended
// below the image. The tinted pixel set equals threshold(sm, t) exactly.
PngImage make_overlay(const Raster& r, const ScoreMap& sm, double t, const std::string& palette);

constexpr int kLegendHeight = 16;

}  // namespace slidekit::cli
