#pragma once

#include <cstdint>
#include <vector>

#include "nvtk/io.hpp"

// ROC/AUC/EER metrics plus the frame-level and pixel-level detection
// protocols. Scores are oriented so that larger means more abnormal and
// label true marks an abnormal ground-truth item.

namespace nvtk::evalkit {

struct ScoredSample {
    double score = 0.0;
    bool label = false;
};

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
};

struct RocCurve {
    std::vector<RocPoint> points; // from (0,0) to (1,1), both rates non-decreasing
};

// Threshold sweep over unique scores; tied scores collapse into one segment.
// Throws NumericError when only one class is present.
RocCurve roc(const std::vector<ScoredSample>& scores);

double auc(const RocCurve& curve);

// Operating point where fpr equals 1-tpr, linearly interpolated between the
// bracketing curve points.
double eer(const RocCurve& curve);

// Frame score = max cell value; one scored sample per frame.
std::vector<ScoredSample> frame_level(const std::vector<io::ScalarMap>& maps,
                                      const std::vector<std::uint8_t>& frame_labels);

enum class PixelOutcome { TruePositive, FalsePositive, Excluded };

// A frame with abnormal ground truth counts as a true positive only when the
// detection covers at least 40% of the abnormal pixels; otherwise it is a
// false positive. Frames with empty ground truth and empty detection are
// excluded from positive accounting.
std::vector<PixelOutcome> pixel_level(const std::vector<std::vector<std::uint8_t>>& detections,
                                      const std::vector<std::vector<std::uint8_t>>& ground_truth);

struct NormalizeResult {
    std::vector<double> values;
    bool all_zero = false; // input had no positive mass; returned unchanged
};

// Per-video max normalization into [0,1].
NormalizeResult normalize_signal(const std::vector<double>& values);

// Nearest-rank percentile of a normal-run signal.
double calibrate_threshold(const std::vector<double>& normal_signal, double percentile);

} // namespace nvtk::evalkit
