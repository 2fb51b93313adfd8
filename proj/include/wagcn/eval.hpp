#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "wagcn/data.hpp"

namespace wagcn {

// Segment scores repeated kFramesPerSegment times, truncated to frame_count,
// and tail-padded with the last segment's score when the video has more
// frames than 16 * T_full.
std::vector<double> expand_scores(const std::vector<double>& segment_scores,
                                  std::size_t frame_count);

// 0/1 per frame from the record's anomaly intervals.
std::vector<int> frame_labels(std::size_t frame_count,
                              const std::vector<std::pair<std::size_t, std::size_t>>& intervals);

struct RocCurve {
    // parallel arrays; point i is (fpr[i], tpr[i]) reached at threshold[i]
    // (predict positive iff score >= threshold). Point 0 is (0,0) at +inf.
    std::vector<double> fpr, tpr, thresholds;
};

struct EvalResult {
    double auc = 0.0;
    std::size_t num_frames = 0;
    std::size_t num_positive_frames = 0;
    RocCurve roc;
};

// Threshold sweep with equal scores grouped into one step; AUC by trapezoidal
// integration (exactly the Mann-Whitney pairwise statistic).
EvalResult roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Frame-level evaluation over a whole test set: expand every video's segment
// scores, build frame labels, concatenate in manifest order, run roc_auc.
EvalResult dataset_eval(const DatasetManifest& manifest,
                        const std::map<std::string, std::vector<double>>& segment_scores);

// Per-video curve export: CSV rows (frame, score, ground_truth) after frame
// expansion. Scores are printed with 17 significant digits so re-parsing
// reproduces them exactly.
void export_curve_csv(const std::string& path, const std::vector<double>& segment_scores,
                      const std::vector<std::pair<std::size_t, std::size_t>>& intervals,
                      std::size_t frame_count);

struct CurveData {
    std::vector<double> scores;
    std::vector<int> ground_truth;
};
CurveData read_curve_csv(const std::string& path);

// Single-file SVG rendering: score polyline over shaded ground-truth spans.
void export_curve_svg(const std::string& path, const std::string& video_id,
                      const std::vector<double>& frame_scores,
                      const std::vector<int>& frame_gt);

} // namespace wagcn
