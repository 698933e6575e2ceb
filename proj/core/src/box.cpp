#include "shiftdet/box.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "shiftdet/tensor.hpp"

namespace shiftdet {

namespace {

// log(1000 / 16): the largest size change a single decode may apply.
constexpr double kMaxLogScale = 4.135166556742356;

void require_valid(const Box& b, const char* what) {
  if (!b.valid() || !std::isfinite(b.x1) || !std::isfinite(b.y1) || !std::isfinite(b.x2) || !std::isfinite(b.y2)) {
    throw ContractError(std::string(what) + ": degenerate box (" + std::to_string(b.x1) + "," +
                        std::to_string(b.y1) + "," + std::to_string(b.x2) + "," + std::to_string(b.y2) + ")");
  }
}

}  // namespace

double iou(const Box& a, const Box& b) {
  require_valid(a, "iou");
  require_valid(b, "iou");
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

BoxDelta encode_box(const Box& anchor, const Box& target) {
  require_valid(anchor, "encode_box");
  require_valid(target, "encode_box");
  const double wa = anchor.width(), ha = anchor.height();
  return {(target.center_x() - anchor.center_x()) / wa, (target.center_y() - anchor.center_y()) / ha,
          std::log(target.width() / wa), std::log(target.height() / ha)};
}

Box decode_box(const Box& anchor, const BoxDelta& delta) {
  require_valid(anchor, "decode_box");
  const double wa = anchor.width(), ha = anchor.height();
  const double cx = anchor.center_x() + delta[0] * wa;
  const double cy = anchor.center_y() + delta[1] * ha;
  const double w = wa * std::exp(std::min(delta[2], kMaxLogScale));
  const double h = ha * std::exp(std::min(delta[3], kMaxLogScale));
  return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

Box clip_box(const Box& box, double width, double height) {
  return {std::clamp(box.x1, 0.0, width), std::clamp(box.y1, 0.0, height), std::clamp(box.x2, 0.0, width),
          std::clamp(box.y2, 0.0, height)};
}

Box scale_box(const Box& box, double sx, double sy) {
  return {box.x1 * sx, box.y1 * sy, box.x2 * sx, box.y2 * sy};
}

}  // namespace shiftdet
