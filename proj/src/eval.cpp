#include "wagcn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "wagcn/errors.hpp"

namespace wagcn {

std::vector<double> expand_scores(const std::vector<double>& segment_scores,
                                  std::size_t frame_count) {
    if (frame_count == 0) throw validation_error("expand_scores: frame_count must be >= 1");
    if (segment_scores.empty())
        throw validation_error("expand_scores: no segment scores for a non-empty video");

    std::vector<double> frames(frame_count);
    for (std::size_t f = 0; f < frame_count; ++f) {
        const std::size_t seg = f / kFramesPerSegment;
        frames[f] = seg < segment_scores.size() ? segment_scores[seg] : segment_scores.back();
    }
    return frames;
}

std::vector<int> frame_labels(std::size_t frame_count,
                              const std::vector<std::pair<std::size_t, std::size_t>>& intervals) {
    std::vector<int> labels(frame_count, 0);
    for (const auto& [start, end] : intervals) {
        if (start >= end || end > frame_count)
            throw validation_error("frame_labels: interval [" + std::to_string(start) + ", " +
                                   std::to_string(end) + ") outside frame range " +
                                   std::to_string(frame_count));
        for (std::size_t f = start; f < end; ++f) labels[f] = 1;
    }
    return labels;
}

EvalResult roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw validation_error("roc_auc: " + std::to_string(scores.size()) + " scores vs " +
                               std::to_string(labels.size()) + " labels");
    if (scores.empty()) throw validation_error("roc_auc: empty input");

    std::size_t pos = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1)
            throw validation_error("roc_auc: label at index " + std::to_string(i) +
                                   " must be 0 or 1");
        if (!std::isfinite(scores[i]))
            throw validation_error("roc_auc: non-finite score at index " + std::to_string(i));
        pos += static_cast<std::size_t>(labels[i]);
    }
    const std::size_t neg = labels.size() - pos;
    if (pos == 0 || neg == 0)
        throw validation_error("roc_auc: metric undefined with a single class (got " +
                               std::to_string(pos) + " positive / " + std::to_string(neg) +
                               " negative)");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    EvalResult res;
    res.num_frames = scores.size();
    res.num_positive_frames = pos;
    res.roc.fpr.push_back(0.0);
    res.roc.tpr.push_back(0.0);
    res.roc.thresholds.push_back(std::numeric_limits<double>::infinity());

    // Integer tp/fp counts stay exact in doubles; one curve point per distinct
    // score; trapezoids accumulate the raw pair count, normalized at the end.
    double tp = 0.0, fp = 0.0, auc_raw = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        const double threshold = scores[order[i]];
        double dtp = 0.0, dfp = 0.0;
        while (i < order.size() && scores[order[i]] == threshold) {
            if (labels[order[i]] == 1) dtp += 1.0;
            else dfp += 1.0;
            ++i;
        }
        auc_raw += dfp * (tp + dtp / 2.0);
        tp += dtp;
        fp += dfp;
        res.roc.fpr.push_back(fp / static_cast<double>(neg));
        res.roc.tpr.push_back(tp / static_cast<double>(pos));
        res.roc.thresholds.push_back(threshold);
    }
    res.auc = auc_raw / (static_cast<double>(pos) * static_cast<double>(neg));
    return res;
}

EvalResult dataset_eval(const DatasetManifest& manifest,
                        const std::map<std::string, std::vector<double>>& segment_scores) {
    if (manifest.records.empty()) throw validation_error("dataset_eval: empty manifest");

    std::vector<double> all_scores;
    std::vector<int> all_labels;
    for (const auto& rec : manifest.records) {
        auto it = segment_scores.find(rec.id);
        if (it == segment_scores.end())
            throw validation_error("dataset_eval: no scores for video " + rec.id);
        auto frames = expand_scores(it->second, rec.frame_count);
        auto labels = frame_labels(rec.frame_count, rec.anomaly_intervals);
        all_scores.insert(all_scores.end(), frames.begin(), frames.end());
        all_labels.insert(all_labels.end(), labels.begin(), labels.end());
    }
    return roc_auc(all_scores, all_labels);
}

void export_curve_csv(const std::string& path, const std::vector<double>& segment_scores,
                      const std::vector<std::pair<std::size_t, std::size_t>>& intervals,
                      std::size_t frame_count) {
    const auto frames = expand_scores(segment_scores, frame_count);
    const auto gt = frame_labels(frame_count, intervals);

    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io_error("cannot open " + path + " for writing");
    out << "frame,score,ground_truth\n";
    char buf[64];
    for (std::size_t f = 0; f < frames.size(); ++f) {
        std::snprintf(buf, sizeof buf, "%.17g", frames[f]);
        out << f << ',' << buf << ',' << gt[f] << "\n";
    }
    if (!out) throw io_error("write failed for " + path);
}

CurveData read_curve_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open curve file " + path);

    std::string line;
    if (!std::getline(in, line) || line != "frame,score,ground_truth")
        throw format_error(path + ": missing curve CSV header");

    CurveData data;
    std::size_t expected_frame = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::size_t c1 = line.find(',');
        std::size_t c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
        if (c2 == std::string::npos)
            throw format_error(path + ": malformed row \"" + line + "\"");
        const std::size_t frame = std::strtoull(line.c_str(), nullptr, 10);
        if (frame != expected_frame)
            throw format_error(path + ": frame " + std::to_string(frame) + " out of order");
        data.scores.push_back(std::strtod(line.c_str() + c1 + 1, nullptr));
        data.ground_truth.push_back(std::atoi(line.c_str() + c2 + 1));
        ++expected_frame;
    }
    return data;
}

void export_curve_svg(const std::string& path, const std::string& video_id,
                      const std::vector<double>& frame_scores,
                      const std::vector<int>& frame_gt) {
    if (frame_scores.empty() || frame_scores.size() != frame_gt.size())
        throw validation_error("export_curve_svg: empty or mismatched inputs");

    const double width = 880.0, height = 260.0;
    const double ml = 50.0, mr = 20.0, mt = 30.0, mb = 34.0;
    const double pw = width - ml - mr, ph = height - mt - mb;
    const std::size_t n = frame_scores.size();
    auto xat = [&](std::size_t f) {
        return ml + (n == 1 ? pw / 2 : pw * static_cast<double>(f) / static_cast<double>(n - 1));
    };
    auto yat = [&](double s) { return mt + ph * (1.0 - std::min(1.0, std::max(0.0, s))); };

    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io_error("cannot open " + path + " for writing");
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"" << ml << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"13\">"
        << video_id << "</text>\n";

    // shaded ground-truth spans
    std::size_t f = 0;
    while (f < n) {
        if (frame_gt[f] == 1) {
            std::size_t start = f;
            while (f < n && frame_gt[f] == 1) ++f;
            out << "<rect x=\"" << xat(start) << "\" y=\"" << mt << "\" width=\""
                << (xat(f - 1) - xat(start)) << "\" height=\"" << ph
                << "\" fill=\"#fbb\" opacity=\"0.6\"/>\n";
        } else {
            ++f;
        }
    }

    out << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
        << "\" fill=\"none\" stroke=\"#999\"/>\n"
        << "<text x=\"8\" y=\"" << yat(1.0) + 4 << "\" font-family=\"sans-serif\""
        << " font-size=\"11\">1.0</text>\n"
        << "<text x=\"8\" y=\"" << yat(0.0) + 4 << "\" font-family=\"sans-serif\""
        << " font-size=\"11\">0.0</text>\n"
        << "<text x=\"" << ml + pw / 2 - 18 << "\" y=\"" << height - 10
        << "\" font-family=\"sans-serif\" font-size=\"11\">frame</text>\n";

    out << "<polyline fill=\"none\" stroke=\"#1565c0\" stroke-width=\"1.4\" points=\"";
    for (std::size_t i = 0; i < n; ++i) {
        if (i) out << ' ';
        out << xat(i) << ',' << yat(frame_scores[i]);
    }
    out << "\"/>\n</svg>\n";
    if (!out) throw io_error("write failed for " + path);
}

} // namespace wagcn
