#include "shiftdet/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "shiftdet/tensor.hpp"

namespace shiftdet {

namespace {

void check_frame(const Detection& d, std::size_t frames) {
  if (d.frame_index < 0 || static_cast<std::size_t>(d.frame_index) >= frames) {
    throw ContractError("detection references frame " + std::to_string(d.frame_index) + " of " +
                        std::to_string(frames));
  }
}

}  // namespace

std::vector<ClassMatches> match_detections(std::span<const Detection> detections, std::span<const FrameTruth> truth,
                                           int num_classes, double iou_threshold) {
  std::vector<ClassMatches> out(static_cast<std::size_t>(num_classes));
  for (const auto& frame : truth) {
    for (int label : frame.labels) {
      if (label < 1 || label > num_classes) throw ContractError("ground truth class out of range");
      ++out[static_cast<std::size_t>(label - 1)].num_gt;
    }
  }
  for (int c = 1; c <= num_classes; ++c) {
    std::vector<const Detection*> dets;
    for (const auto& d : detections) {
      check_frame(d, truth.size());
      if (d.class_id == c) dets.push_back(&d);
    }
    std::stable_sort(dets.begin(), dets.end(), [](const Detection* a, const Detection* b) { return a->score > b->score; });
    std::vector<std::vector<char>> used(truth.size());
    for (std::size_t f = 0; f < truth.size(); ++f) used[f].assign(truth[f].boxes.size(), 0);
    auto& m = out[static_cast<std::size_t>(c - 1)];
    for (const Detection* d : dets) {
      const auto& frame = truth[static_cast<std::size_t>(d->frame_index)];
      double best = -1.0;
      int arg = -1;
      for (std::size_t g = 0; g < frame.boxes.size(); ++g) {
        if (frame.labels[g] != c || used[static_cast<std::size_t>(d->frame_index)][g]) continue;
        const double o = iou(d->box, frame.boxes[g]);
        if (o > best) {
          best = o;
          arg = static_cast<int>(g);
        }
      }
      const bool tp = arg >= 0 && best >= iou_threshold;
      if (tp) used[static_cast<std::size_t>(d->frame_index)][static_cast<std::size_t>(arg)] = 1;
      m.scores.push_back(d->score);
      m.true_positive.push_back(tp ? 1 : 0);
    }
  }
  return out;
}

std::vector<PrPoint> pr_curve(std::span<const char> true_positive_sorted, int num_gt) {
  std::vector<PrPoint> curve;
  curve.reserve(true_positive_sorted.size());
  double tp = 0, fp = 0;
  for (char flag : true_positive_sorted) {
    (flag ? tp : fp) += 1.0;
    curve.push_back({num_gt > 0 ? tp / num_gt : 0.0, tp / (tp + fp)});
  }
  return curve;
}

std::optional<double> average_precision(std::span<const char> true_positive_sorted, int num_gt, ApMethod method) {
  if (num_gt < 0) throw ContractError("average_precision: negative ground-truth count");
  if (num_gt == 0) {
    if (true_positive_sorted.empty()) return std::nullopt;
    return 0.0;
  }
  const auto curve = pr_curve(true_positive_sorted, num_gt);
  if (method == ApMethod::eleven_point) {
    double sum = 0.0;
    for (int i = 0; i <= 10; ++i) {
      const double t = i / 10.0;
      double best = 0.0;
      for (const auto& p : curve) {
        if (p.recall >= t) best = std::max(best, p.precision);
      }
      sum += best;
    }
    return sum / 11.0;
  }
  std::vector<double> recall{0.0}, precision{0.0};
  for (const auto& p : curve) {
    recall.push_back(p.recall);
    precision.push_back(p.precision);
  }
  recall.push_back(1.0);
  precision.push_back(0.0);
  for (std::size_t i = precision.size() - 1; i-- > 0;) precision[i] = std::max(precision[i], precision[i + 1]);
  double ap = 0.0;
  for (std::size_t i = 1; i < recall.size(); ++i) {
    if (recall[i] != recall[i - 1]) ap += (recall[i] - recall[i - 1]) * precision[i];
  }
  return ap;
}

std::int64_t ConfusionMatrix::row_sum(int row) const {
  std::int64_t s = 0;
  for (int c = 0; c <= num_classes; ++c) s += at(row, c);
  return s;
}

std::int64_t ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

ConfusionMatrix confusion_matrix(std::span<const Detection> detections, std::span<const FrameTruth> truth,
                                 int num_classes, double iou_threshold, double score_threshold) {
  ConfusionMatrix m{num_classes, std::vector<std::int64_t>(static_cast<std::size_t>(num_classes * (num_classes + 1)), 0)};
  std::vector<std::vector<const Detection*>> by_frame(truth.size());
  for (const auto& d : detections) {
    check_frame(d, truth.size());
    if (d.score >= score_threshold) by_frame[static_cast<std::size_t>(d.frame_index)].push_back(&d);
  }
  for (std::size_t f = 0; f < truth.size(); ++f) {
    for (std::size_t g = 0; g < truth[f].boxes.size(); ++g) {
      const int row = truth[f].labels[g] - 1;
      if (row < 0 || row >= num_classes) throw ContractError("ground truth class out of range");
      const Detection* best = nullptr;
      double best_iou = -1.0;
      for (const Detection* d : by_frame[f]) {
        const double o = iou(d->box, truth[f].boxes[g]);
        if (o > best_iou || (o == best_iou && best && d->score > best->score)) {
          best_iou = o;
          best = d;
        }
      }
      int col = num_classes;
      if (best && best_iou >= iou_threshold) col = best->class_id - 1;
      ++m.counts[static_cast<std::size_t>(row * (num_classes + 1) + col)];
    }
  }
  return m;
}

FallMetrics fall_metrics(std::span<const char> predicted_fall, std::span<const char> actual_fall) {
  if (predicted_fall.size() != actual_fall.size()) throw ContractError("fall_metrics: length mismatch");
  FallMetrics m;
  for (std::size_t i = 0; i < actual_fall.size(); ++i) {
    if (actual_fall[i]) {
      (predicted_fall[i] ? m.tp : m.fn) += 1;
    } else {
      (predicted_fall[i] ? m.fp : m.tn) += 1;
    }
  }
  if (m.tp + m.fn > 0) m.sensitivity = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn) * 100.0;
  if (m.tn + m.fp > 0) m.specificity = static_cast<double>(m.tn) / static_cast<double>(m.tn + m.fp) * 100.0;
  const auto all = m.tp + m.tn + m.fp + m.fn;
  if (all > 0) m.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(all) * 100.0;
  return m;
}

double mean_ap(std::span<const std::optional<double>> per_class_ap) {
  double sum = 0.0;
  int n = 0;
  for (const auto& ap : per_class_ap) {
    if (ap) {
      sum += *ap;
      ++n;
    }
  }
  return n ? sum / n : 0.0;
}

double frame_map(std::span<const Detection> detections, std::span<const FrameTruth> truth, int num_classes,
                 double iou_threshold, ApMethod method) {
  const auto matches = match_detections(detections, truth, num_classes, iou_threshold);
  std::vector<std::optional<double>> aps;
  for (const auto& m : matches) aps.push_back(average_precision(m.true_positive, m.num_gt, method));
  return mean_ap(aps);
}

MetricsReport build_report(std::span<const Detection> detections, std::span<const FrameTruth> truth,
                           const std::vector<std::string>& class_names, const EvalOptions& options) {
  const int c = static_cast<int>(class_names.size());
  MetricsReport r;
  r.class_names = class_names;
  r.frames = static_cast<std::int64_t>(truth.size());
  r.detections = static_cast<std::int64_t>(detections.size());
  const auto matches = match_detections(detections, truth, c, options.iou_threshold);
  for (const auto& m : matches) {
    r.per_class_ap.push_back(average_precision(m.true_positive, m.num_gt, options.method));
    r.per_class_gt.push_back(m.num_gt);
    r.pr_curves.push_back(pr_curve(m.true_positive, m.num_gt));
  }
  r.map = mean_ap(r.per_class_ap);
  r.confusion = confusion_matrix(detections, truth, c, options.iou_threshold, options.confusion_score_threshold);

  const auto fall_it = std::find(class_names.begin(), class_names.end(), "fall");
  if (c == 2 && fall_it != class_names.end()) {
    const int fall_id = static_cast<int>(fall_it - class_names.begin()) + 1;
    std::vector<std::vector<Detection>> per_frame(truth.size());
    for (const auto& d : detections) per_frame[static_cast<std::size_t>(d.frame_index)].push_back(d);
    std::vector<char> predicted, actual;
    for (std::size_t f = 0; f < truth.size(); ++f) {
      const auto top = top_detection(per_frame[f]);
      predicted.push_back(top && top->class_id == fall_id ? 1 : 0);
      actual.push_back(std::count(truth[f].labels.begin(), truth[f].labels.end(), fall_id) > 0 ? 1 : 0);
    }
    r.fall = fall_metrics(predicted, actual);
  }
  return r;
}

std::string MetricsReport::to_text() const {
  std::ostringstream os;
  char buf[160];
  os << "frames evaluated: " << frames << "\n";
  os << "detections: " << detections << "\n";
  os << "per-class average precision (PR-AUC):\n";
  for (std::size_t i = 0; i < class_names.size(); ++i) {
    if (per_class_ap[i]) {
      std::snprintf(buf, sizeof buf, "  %-14s %8.4f  (gt %d)\n", class_names[i].c_str(), *per_class_ap[i],
                    per_class_gt[i]);
    } else {
      std::snprintf(buf, sizeof buf, "  %-14s %8s  (gt %d)\n", class_names[i].c_str(), "n/a", per_class_gt[i]);
    }
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "frame mAP: %.6f\n", map);
  os << buf;
  os << "confusion matrix (rows: ground truth; columns: predicted, FN):\n";
  os << "  " << std::string(14, ' ');
  for (const auto& n : class_names) {
    std::snprintf(buf, sizeof buf, " %10.10s", n.c_str());
    os << buf;
  }
  os << "         FN\n";
  for (int r = 0; r < confusion.num_classes; ++r) {
    std::snprintf(buf, sizeof buf, "  %-14.14s", class_names[static_cast<std::size_t>(r)].c_str());
    os << buf;
    for (int col = 0; col <= confusion.num_classes; ++col) {
      std::snprintf(buf, sizeof buf, " %10lld", static_cast<long long>(confusion.at(r, col)));
      os << buf;
    }
    os << "\n";
  }
  if (fall) {
    auto pct = [](const std::optional<double>& v) {
      char b[32];
      if (!v) return std::string("n/a");
      std::snprintf(b, sizeof b, "%.2f", *v);
      return std::string(b);
    };
    os << "fall metrics: TP " << fall->tp << " TN " << fall->tn << " FP " << fall->fp << " FN " << fall->fn << "\n";
    os << "  sensitivity " << pct(fall->sensitivity) << "  specificity " << pct(fall->specificity) << "  accuracy "
       << pct(fall->accuracy) << "\n";
  }
  return os.str();
}

std::string MetricsReport::to_records() const {
  using nlohmann::json;
  std::ostringstream os;
  os << json{{"schema", kSchemaVersion}, {"kind", "summary"}, {"frames", frames}, {"detections", detections},
             {"map", map}, {"classes", class_names}}
            .dump()
     << "\n";
  for (std::size_t i = 0; i < class_names.size(); ++i) {
    json rec{{"schema", kSchemaVersion}, {"kind", "class"}, {"class_id", static_cast<int>(i) + 1},
             {"class", class_names[i]}, {"num_gt", per_class_gt[i]}};
    rec["ap"] = per_class_ap[i] ? json(*per_class_ap[i]) : json(nullptr);
    json recall = json::array(), precision = json::array();
    for (const auto& p : pr_curves[i]) {
      recall.push_back(p.recall);
      precision.push_back(p.precision);
    }
    rec["recall"] = recall;
    rec["precision"] = precision;
    os << rec.dump() << "\n";
  }
  json rows = json::array();
  for (int r = 0; r < confusion.num_classes; ++r) {
    json row = json::array();
    for (int c = 0; c <= confusion.num_classes; ++c) row.push_back(confusion.at(r, c));
    rows.push_back(row);
  }
  os << json{{"schema", kSchemaVersion}, {"kind", "confusion"}, {"rows", rows}}.dump() << "\n";
  if (fall) {
    json rec{{"schema", kSchemaVersion}, {"kind", "fall"}, {"tp", fall->tp}, {"tn", fall->tn},
             {"fp", fall->fp}, {"fn", fall->fn}};
    rec["sensitivity"] = fall->sensitivity ? json(*fall->sensitivity) : json(nullptr);
    rec["specificity"] = fall->specificity ? json(*fall->specificity) : json(nullptr);
    rec["accuracy"] = fall->accuracy ? json(*fall->accuracy) : json(nullptr);
    os << rec.dump() << "\n";
  }
  return os.str();
}

MetricsReport MetricsReport::from_records(const std::string& text) {
  using nlohmann::json;
  MetricsReport r;
  std::istringstream is(text);
  std::string line;
  auto opt = [](const json& v) { return v.is_null() ? std::optional<double>{} : std::optional<double>{v.get<double>()}; };
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto rec = json::parse(line);
    const auto kind = rec.at("kind").get<std::string>();
    if (kind == "summary") {
      r.frames = rec.at("frames");
      r.detections = rec.at("detections");
      r.map = rec.at("map");
      r.class_names = rec.at("classes").get<std::vector<std::string>>();
    } else if (kind == "class") {
      r.per_class_ap.push_back(opt(rec.at("ap")));
      r.per_class_gt.push_back(rec.at("num_gt"));
      std::vector<PrPoint> curve;
      const auto& rc = rec.at("recall");
      const auto& pc = rec.at("precision");
      for (std::size_t i = 0; i < rc.size(); ++i) curve.push_back({rc[i].get<double>(), pc[i].get<double>()});
      r.pr_curves.push_back(std::move(curve));
    } else if (kind == "confusion") {
      const auto& rows = rec.at("rows");
      r.confusion.num_classes = static_cast<int>(rows.size());
      for (const auto& row : rows) {
        for (const auto& v : row) r.confusion.counts.push_back(v.get<std::int64_t>());
      }
    } else if (kind == "fall") {
      FallMetrics f;
      f.tp = rec.at("tp");
      f.tn = rec.at("tn");
      f.fp = rec.at("fp");
      f.fn = rec.at("fn");
      f.sensitivity = opt(rec.at("sensitivity"));
      f.specificity = opt(rec.at("specificity"));
      f.accuracy = opt(rec.at("accuracy"));
      r.fall = f;
    }
  }
  return r;
}

}  // namespace shiftdet
