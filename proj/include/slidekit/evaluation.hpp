#pragma once

#include <optional>
#include <string>
#include <vector>

#include "slidekit/inference.hpp"
#include "slidekit/model.hpp"
#include "slidekit/patching.hpp"
#include "slidekit/raster.hpp"

namespace slidekit {

struct ConfusionCounts {
    int64_t tp = 0;
    int64_t fp = 0;
    int64_t tn = 0;
    int64_t fn = 0;
    int64_t total() const { return tp + fp + tn + fn; }
};

ConfusionCounts confusion(const std::vector<int>& pred, const std::vector<int>& truth);

struct PrfMetrics {
    std::optional<double> accuracy;
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> f1;
};

double f1_score(double precision, double recall);

// accuracy=(tp+tn)/total, precision=tp/(tp+fp), recall=tp/(tp+fn),
// f1=2pr/(p+r); 0/0 cases are reported as undefined.
PrfMetrics prf(const ConfusionCounts& c);

struct IouResult {
    std::optional<double> mean;
    std::optional<double> per_class[2];  // background, foreground
};

// IoU per class; a class absent from both masks is skipped, and the mean is
// taken over classes whose union is non-empty.
IouResult mean_iou(const Mask& pred, const Mask& truth);

struct SweepPoint {
    double t = 0.0;
    std::optional<double> mean_iou;
    std::optional<double> iou_background;
    std::optional<double> iou_foreground;
};

struct SweepResult {
    std::vector<SweepPoint> curve;
    double best_t = 0.0;  // smallest t on ties
    std::optional<double> best_mean_iou;
};

// Evaluates threshold() at `steps` evenly spaced cutoffs in [0,1].
SweepResult sweep_threshold(const ScoreMap& sm, const Mask& truth, int steps);

struct EvalReport {
    PrfMetrics prf;
    std::optional<double> mean_iou;
    std::optional<double> per_class_iou[2];
    double threshold = 0.5;
    int64_t population = 0;
};

// Probabilities cut at 0.5 over the test cells -> confusion -> prf.
EvalReport evaluate_patch_classifier(const Model& model, const Raster& r, const PatchGrid& g,
                                     const std::vector<int>& test_indices,
                                     const std::vector<int>& labels);

std::string report_to_json(const EvalReport& r);

// Aligned plain-text table; patch reports mirror the accuracy/F1/precision/
// recall layout, pixel reports the mean-IoU layout.
std::string format_table(const EvalReport& r, const std::string& row_label);

}  // namespace slidekit
