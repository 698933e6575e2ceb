#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shiftdet/box.hpp"
#include "shiftdet/postprocess.hpp"

namespace shiftdet {

/// Ground truth of one evaluated frame. Labels are class ids 1..C.
struct FrameTruth {
  std::vector<Box> boxes;
  std::vector<int> labels;
};

/// Detections of one class sorted by descending score with their TP flags.
struct ClassMatches {
  std::vector<double> scores;
  std::vector<char> true_positive;
  int num_gt = 0;
};

/// VOC matching. Detections of each class are taken in descending score
/// order (stable); each claims the unmatched same-class ground truth of its
/// frame with the highest IoU if that IoU >= iou_threshold, otherwise it is
/// a false positive. Result index c-1 holds class c.
std::vector<ClassMatches> match_detections(std::span<const Detection> detections, std::span<const FrameTruth> truth,
                                           int num_classes, double iou_threshold = 0.5);

enum class ApMethod { all_points, eleven_point };

struct PrPoint {
  double recall = 0;
  double precision = 0;
};

std::vector<PrPoint> pr_curve(std::span<const char> true_positive_sorted, int num_gt);

/// Area under the precision envelope. nullopt when there is neither ground
/// truth nor a detection; 0 when there are detections but no ground truth.
std::optional<double> average_precision(std::span<const char> true_positive_sorted, int num_gt,
                                        ApMethod method = ApMethod::all_points);

/// Rows are ground-truth classes 1..C; columns are predicted classes 1..C
/// followed by a final false-negative column.
struct ConfusionMatrix {
  int num_classes = 0;
  std::vector<std::int64_t> counts;

  std::int64_t at(int row, int col) const {
    return counts[static_cast<std::size_t>(row * (num_classes + 1) + col)];
  }
  std::int64_t row_sum(int row) const;
  std::int64_t total() const;
};

/// For each ground truth, its best-IoU detection in the same frame among
/// detections scoring at least `score_threshold`. IoU >= iou_threshold: the
/// (true class, predicted class) cell; otherwise, or with no detection, the
/// false-negative column.
ConfusionMatrix confusion_matrix(std::span<const Detection> detections, std::span<const FrameTruth> truth,
                                 int num_classes, double iou_threshold = 0.5, double score_threshold = 0.5);

struct FallMetrics {
  std::int64_t tp = 0, tn = 0, fp = 0, fn = 0;
  std::optional<double> sensitivity;  // percent
  std::optional<double> specificity;  // percent
  std::optional<double> accuracy;     // percent
};

/// Frame-level fall metrics from per-frame predicted and actual fall flags.
FallMetrics fall_metrics(std::span<const char> predicted_fall, std::span<const char> actual_fall);

/// Mean of the defined per-class APs (0 when none is defined).
double mean_ap(std::span<const std::optional<double>> per_class_ap);

double frame_map(std::span<const Detection> detections, std::span<const FrameTruth> truth, int num_classes,
                 double iou_threshold = 0.5, ApMethod method = ApMethod::all_points);

struct EvalOptions {
  double iou_threshold = 0.5;
  ApMethod method = ApMethod::all_points;
  double confusion_score_threshold = 0.5;
};

struct MetricsReport {
  static constexpr int kSchemaVersion = 1;

  std::vector<std::string> class_names;
  std::vector<std::optional<double>> per_class_ap;
  std::vector<int> per_class_gt;
  double map = 0;
  std::vector<std::vector<PrPoint>> pr_curves;
  ConfusionMatrix confusion;
  std::optional<FallMetrics> fall;
  std::int64_t frames = 0;
  std::int64_t detections = 0;

  std::string to_text() const;
  /// Line-delimited JSON records, one per metric group.
  std::string to_records() const;
  static MetricsReport from_records(const std::string& text);
};

/// Every metric for a set of frames. Fall metrics are filled in when the
/// vocabulary is exactly two classes and one of them is named "fall".
MetricsReport build_report(std::span<const Detection> detections, std::span<const FrameTruth> truth,
                           const std::vector<std::string>& class_names, const EvalOptions& options = {});

}  // namespace shiftdet
