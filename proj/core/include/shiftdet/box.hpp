#pragma once

#include <array>
#include <span>
#include <vector>

namespace shiftdet {

/// Axis-aligned box in continuous pixel coordinates. Area is
/// (x2 - x1) * (y2 - y1), with no +1 convention anywhere.
struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const noexcept { return x2 - x1; }
  double height() const noexcept { return y2 - y1; }
  double area() const noexcept { return width() * height(); }
  double center_x() const noexcept { return 0.5 * (x1 + x2); }
  double center_y() const noexcept { return 0.5 * (y1 + y2); }
  bool valid() const noexcept { return x2 > x1 && y2 > y1; }
  bool operator==(const Box&) const = default;
};

/// Boxes with optional parallel scores and class labels.
struct BoxSet {
  std::vector<Box> boxes;
  std::vector<double> scores;  // empty or one per box
  std::vector<int> labels;     // empty or one per box

  std::size_t size() const noexcept { return boxes.size(); }
  bool empty() const noexcept { return boxes.empty(); }
};

using BoxDelta = std::array<double, 4>;

/// Intersection over union; 0 for disjoint boxes. Throws ContractError on a
/// degenerate box.
double iou(const Box& a, const Box& b);

/// Center/log-size regression target of `target` relative to `anchor`:
/// (dx / w_a, dy / h_a, log(w / w_a), log(h / h_a)).
BoxDelta encode_box(const Box& anchor, const Box& target);

/// Inverse of encode_box. Log-size deltas are clamped to avoid overflow.
Box decode_box(const Box& anchor, const BoxDelta& delta);

Box clip_box(const Box& box, double width, double height);

/// Scales coordinates by independent x/y factors.
Box scale_box(const Box& box, double sx, double sy);

}  // namespace shiftdet
