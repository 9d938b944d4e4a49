#include "nvtk/evalkit.hpp"

#include <algorithm>
#include <cmath>

namespace nvtk::evalkit {

RocCurve roc(const std::vector<ScoredSample>& scores) {
    if (scores.empty()) throw NumericError("roc: empty score set");
    std::size_t positives = 0;
    for (const auto& s : scores) {
        if (!std::isfinite(s.score)) throw ValidationError("roc: non-finite score");
        positives += s.label ? 1 : 0;
    }
    const std::size_t negatives = scores.size() - positives;
    if (positives == 0 || negatives == 0)
        throw NumericError("roc: both classes required, got a single-class input");

    std::vector<ScoredSample> sorted = scores;
    std::sort(sorted.begin(), sorted.end(),
              [](const ScoredSample& a, const ScoredSample& b) { return a.score > b.score; });

    RocCurve curve;
    curve.points.push_back({0.0, 0.0});
    std::size_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < sorted.size()) {
        const double v = sorted[i].score;
        // consume the whole tie group so ties become one diagonal segment
        while (i < sorted.size() && sorted[i].score == v) {
            if (sorted[i].label)
                ++tp;
            else
                ++fp;
            ++i;
        }
        curve.points.push_back({double(fp) / double(negatives), double(tp) / double(positives)});
    }
    return curve;
}

double auc(const RocCurve& curve) {
    double area = 0.0;
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
        const auto& a = curve.points[i - 1];
        const auto& b = curve.points[i];
        area += (b.fpr - a.fpr) * 0.5 * (a.tpr + b.tpr);
    }
    return area;
}

double eer(const RocCurve& curve) {
    // f = fpr - fnr = fpr + tpr - 1 goes from -1 at (0,0) to +1 at (1,1)
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
        const auto& a = curve.points[i - 1];
        const auto& b = curve.points[i];
        const double fa = a.fpr + a.tpr - 1.0;
        const double fb = b.fpr + b.tpr - 1.0;
        if (fb < 0.0) continue;
        if (fb == 0.0) return b.fpr;
        const double denom = (b.fpr - a.fpr) + (b.tpr - a.tpr);
        const double t = denom != 0.0 ? -fa / denom : 0.0;
        return a.fpr + t * (b.fpr - a.fpr);
    }
    return curve.points.empty() ? 0.0 : curve.points.back().fpr;
}

std::vector<ScoredSample> frame_level(const std::vector<io::ScalarMap>& maps,
                                      const std::vector<std::uint8_t>& frame_labels) {
    if (maps.size() != frame_labels.size())
        throw ValidationError("frame_level: map count does not match label count");
    std::vector<ScoredSample> out;
    out.reserve(maps.size());
    for (std::size_t f = 0; f < maps.size(); ++f) {
        double score = 0.0;
        for (float v : maps[f].values) score = std::max(score, double(v));
        out.push_back({score, frame_labels[f] != 0});
    }
    return out;
}

std::vector<PixelOutcome> pixel_level(const std::vector<std::vector<std::uint8_t>>& detections,
                                      const std::vector<std::vector<std::uint8_t>>& ground_truth) {
    if (detections.size() != ground_truth.size())
        throw ValidationError("pixel_level: frame count mismatch");
    std::vector<PixelOutcome> out;
    out.reserve(detections.size());
    for (std::size_t f = 0; f < detections.size(); ++f) {
        const auto& det = detections[f];
        const auto& gt = ground_truth[f];
        if (det.size() != gt.size()) throw ValidationError("pixel_level: mask size mismatch at frame " +
                                                           std::to_string(f));
        std::size_t gt_count = 0, covered = 0, det_count = 0;
        for (std::size_t i = 0; i < gt.size(); ++i) {
            const bool g = gt[i] != 0;
            const bool d = det[i] != 0;
            gt_count += g;
            det_count += d;
            covered += (g && d);
        }
        if (gt_count > 0) {
            // coverage >= 40%, evaluated exactly in integers
            out.push_back(5 * covered >= 2 * gt_count ? PixelOutcome::TruePositive
                                                      : PixelOutcome::FalsePositive);
        } else {
            out.push_back(det_count > 0 ? PixelOutcome::FalsePositive : PixelOutcome::Excluded);
        }
    }
    return out;
}

NormalizeResult normalize_signal(const std::vector<double>& values) {
    if (values.empty()) throw ValidationError("normalize_signal: empty signal");
    double max = 0.0;
    for (double v : values) {
        if (!std::isfinite(v)) throw ValidationError("normalize_signal: non-finite value");
        max = std::max(max, v);
    }
    NormalizeResult result;
    if (max <= 0.0) {
        result.values = values;
        result.all_zero = true;
        return result;
    }
    result.values.reserve(values.size());
    for (double v : values) result.values.push_back(v / max);
    return result;
}

double calibrate_threshold(const std::vector<double>& normal_signal, double percentile) {
    if (normal_signal.empty()) throw ValidationError("calibrate_threshold: empty signal");
    if (percentile < 0.0 || percentile > 100.0)
        throw ConfigError("calibrate_threshold: percentile must be in [0,100]");
    std::vector<double> sorted = normal_signal;
    std::sort(sorted.begin(), sorted.end());
    // nearest-rank definition
    std::size_t rank = static_cast<std::size_t>(std::ceil(percentile / 100.0 * double(sorted.size())));
    rank = std::clamp<std::size_t>(rank, 1, sorted.size());
    return sorted[rank - 1];
}

} // namespace nvtk::evalkit
