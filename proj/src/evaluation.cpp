#include "slidekit/evaluation.hpp"

#include <cinttypes>
#include <cstdio>
#include <json.hpp>

#include "slidekit/ops.hpp"

namespace slidekit {

namespace {

nlohmann::json opt_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::string fmt_opt(const std::optional<double>& v, bool percent = false) {
    if (!v) return "n/a";
    char buf[32];
    if (percent) {
        std::snprintf(buf, sizeof(buf), "%.1f", *v * 100.0);
    } else {
        std::snprintf(buf, sizeof(buf), "%.4f", *v);
    }
    return buf;
}

}  // namespace

ConfusionCounts confusion(const std::vector<int>& pred, const std::vector<int>& truth) {
    if (pred.size() != truth.size()) {
        throw DataError("confusion: length mismatch");
    }
    ConfusionCounts c;
    for (size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] != 0 && pred[i] != 1) {
            throw DataError("confusion: labels must be 0 or 1");
        }
        if (truth[i] != 0 && truth[i] != 1) {
            throw DataError("confusion: labels must be 0 or 1");
        }
        if (pred[i] == 1) {
            truth[i] == 1 ? ++c.tp : ++c.fp;
        } else {
            truth[i] == 1 ? ++c.fn : ++c.tn;
        }
    }
    return c;
}

double f1_score(double precision, double recall) {
    return 2.0 * precision * recall / (precision + recall);
}

PrfMetrics prf(const ConfusionCounts& c) {
    if (c.total() == 0) {
        throw DataError("prf: empty population");
    }
    PrfMetrics m;
    m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
    if (c.tp + c.fp > 0) {
        m.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    }
    if (c.tp + c.fn > 0) {
        m.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    }
    if (m.precision && m.recall && (*m.precision + *m.recall) > 0.0) {
        m.f1 = f1_score(*m.precision, *m.recall);
    }
    return m;
}

IouResult mean_iou(const Mask& pred, const Mask& truth) {
    if (pred.width != truth.width || pred.height != truth.height) {
        throw DataError("mean_iou: dimension mismatch");
    }
    int64_t inter[2] = {0, 0};
    int64_t uni[2] = {0, 0};
    for (size_t i = 0; i < pred.data.size(); ++i) {
        const int p = pred.data[i] ? 1 : 0;
        const int t = truth.data[i] ? 1 : 0;
        for (int c = 0; c < 2; ++c) {
            const bool in_p = (p == c), in_t = (t == c);
            inter[c] += (in_p && in_t) ? 1 : 0;
            uni[c] += (in_p || in_t) ? 1 : 0;
        }
    }
    IouResult r;
    double sum = 0.0;
    int present = 0;
    for (int c = 0; c < 2; ++c) {
        if (uni[c] > 0) {
            r.per_class[c] = static_cast<double>(inter[c]) / static_cast<double>(uni[c]);
            sum += *r.per_class[c];
            ++present;
        }
    }
    if (present > 0) {
        r.mean = sum / present;
    }
    return r;
}

SweepResult sweep_threshold(const ScoreMap& sm, const Mask& truth, int steps) {
    if (steps < 2) {
        throw DataError("sweep_threshold: steps must be >= 2");
    }
    if (sm.width != truth.width || sm.height != truth.height) {
        throw DataError("sweep_threshold: dimension mismatch");
    }
    SweepResult out;
    out.curve.reserve(static_cast<size_t>(steps));
    for (int i = 0; i < steps; ++i) {
        const double t = static_cast<double>(i) / (steps - 1);
        const IouResult iou = mean_iou(threshold(sm, t), truth);
        SweepPoint pt;
        pt.t = t;
        pt.mean_iou = iou.mean;
        pt.iou_background = iou.per_class[0];
        pt.iou_foreground = iou.per_class[1];
        if (pt.mean_iou && (!out.best_mean_iou || *pt.mean_iou > *out.best_mean_iou)) {
            out.best_mean_iou = pt.mean_iou;
            out.best_t = t;
        }
        out.curve.push_back(pt);
    }
    return out;
}

EvalReport evaluate_patch_classifier(const Model& model, const Raster& r, const PatchGrid& g,
                                     const std::vector<int>& test_indices,
                                     const std::vector<int>& labels) {
    if (test_indices.empty()) {
        throw DataError("evaluate_patch_classifier: empty test split");
    }
    if (labels.size() != g.cells.size()) {
        throw DataError("evaluate_patch_classifier: labels must cover every cell");
    }
    NoGradGuard no_grad;
    std::vector<int> pred, truth;
    pred.reserve(test_indices.size());
    truth.reserve(test_indices.size());
    for (int idx : test_indices) {
        const real p = forward(model, extract_patch(r, g, idx)).item();
        pred.push_back(p >= real(0.5) ? 1 : 0);
        truth.push_back(labels[static_cast<size_t>(idx)]);
    }
    EvalReport rep;
    rep.prf = prf(confusion(pred, truth));
    rep.threshold = 0.5;
    rep.population = static_cast<int64_t>(test_indices.size());
    return rep;
}

std::string report_to_json(const EvalReport& r) {
    nlohmann::json j;
    j["accuracy"] = opt_json(r.prf.accuracy);
    j["precision"] = opt_json(r.prf.precision);
    j["recall"] = opt_json(r.prf.recall);
    j["f1"] = opt_json(r.prf.f1);
    j["mean_iou"] = opt_json(r.mean_iou);
    j["per_class_iou"] = {opt_json(r.per_class_iou[0]), opt_json(r.per_class_iou[1])};
    j["threshold"] = r.threshold;
    j["population"] = r.population;
    return j.dump(2) + "\n";
}

std::string format_table(const EvalReport& r, const std::string& row_label) {
    char buf[512];
    std::string out;
    if (r.prf.accuracy) {
        std::snprintf(buf, sizeof(buf), "%-24s %12s %10s %10s %8s\n", "run", "Accuracy (%)",
                      "F1 Score", "Precision", "Recall");
        out += buf;
        std::snprintf(buf, sizeof(buf), "%-24s %12s %10s %10s %8s\n", row_label.c_str(),
                      fmt_opt(r.prf.accuracy, true).c_str(), fmt_opt(r.prf.f1).c_str(),
                      fmt_opt(r.prf.precision).c_str(), fmt_opt(r.prf.recall).c_str());
        out += buf;
    }
    if (r.mean_iou || r.per_class_iou[0] || r.per_class_iou[1]) {
        std::snprintf(buf, sizeof(buf), "%-24s %9s %8s %8s %10s\n", "run", "Mean IOU", "IoU bg",
                      "IoU fg", "threshold");
        out += buf;
        std::snprintf(buf, sizeof(buf), "%-24s %9s %8s %8s %10.4f\n", row_label.c_str(),
                      fmt_opt(r.mean_iou).c_str(), fmt_opt(r.per_class_iou[0]).c_str(),
                      fmt_opt(r.per_class_iou[1]).c_str(), r.threshold);
        out += buf;
    }
    std::snprintf(buf, sizeof(buf), "population: %" PRId64 "\n", r.population);
    out += buf;
    return out;
}

}  // namespace slidekit
