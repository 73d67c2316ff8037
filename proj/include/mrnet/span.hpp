#pragma once

#include <algorithm>
#include <string>

#include "mrnet/common.hpp"

namespace mrnet {

// A temporal interval with start < end. Units are normalized [0,1] inside the
// model and the training objective; metrics also accept spans in seconds.
struct Span {
  double start = 0.0;
  double end = 0.0;

  double length() const { return end - start; }
  double center() const { return 0.5 * (start + end); }
  double width() const { return end - start; }
};

inline void validate_normalized_span(const Span& s, const std::string& what) {
  if (!(s.start >= 0.0 && s.start < s.end && s.end <= 1.0))
    throw InputError(what + ": invalid normalized span [" +
                     std::to_string(s.start) + ", " + std::to_string(s.end) + "]");
}

// |a intersect b| / |a union b|; 0 when disjoint.
inline double iou_1d(const Span& a, const Span& b) {
  const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const double uni = a.length() + b.length() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

// Generalized IoU: iou minus the hull-gap penalty. Equals iou when the hull
// is covered by the union; tends to -1 for far-apart spans.
inline double giou_1d(const Span& a, const Span& b) {
  const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const double uni = a.length() + b.length() - inter;
  const double hull = std::max(a.end, b.end) - std::min(a.start, b.start);
  const double iou = uni > 0.0 ? inter / uni : 0.0;
  return hull > 0.0 ? iou - (hull - uni) / hull : iou;
}

// (center, width) <-> (start, end). Heads emit sigmoid (c, w) in (0,1); the
// clamped conversion is what matching and metrics consume.
inline Span span_from_center_width(double c, double w) {
  return Span{c - 0.5 * w, c + 0.5 * w};
}

inline Span span_from_center_width_clamped(double c, double w) {
  Span s = span_from_center_width(c, w);
  s.start = std::clamp(s.start, 0.0, 1.0);
  s.end = std::clamp(s.end, 0.0, 1.0);
  return s;
}

}  // namespace mrnet
