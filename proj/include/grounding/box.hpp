#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <string>
#include <tuple>

namespace grounding {

// Inclusive pixel rectangle. x is the column, y the row, origin top-left.
struct BoundingBox {
  int x1 = 0;
  int y1 = 0;
  int x2 = 0;
  int y2 = 0;

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;

  [[nodiscard]] int width() const { return x2 - x1 + 1; }
  [[nodiscard]] int height() const { return y2 - y1 + 1; }
  [[nodiscard]] std::int64_t area() const {
    return static_cast<std::int64_t>(width()) * height();
  }

  [[nodiscard]] bool is_valid() const { return x1 <= x2 && y1 <= y2 && x1 >= 0 && y1 >= 0; }

  [[nodiscard]] bool fits(int image_width, int image_height) const {
    return is_valid() && x2 < image_width && y2 < image_height;
  }

  [[nodiscard]] bool contains(int x, int y) const {
    return x >= x1 && x <= x2 && y >= y1 && y <= y2;
  }
};

// Tie-break order among equally scored boxes: lexicographic (y1, x1, y2, x2).
inline bool box_order_less(const BoundingBox& a, const BoundingBox& b) {
  return std::tie(a.y1, a.x1, a.y2, a.x2) < std::tie(b.y1, b.x1, b.y2, b.x2);
}

inline BoundingBox whole_image_box(int width, int height) {
  return {0, 0, width - 1, height - 1};
}

std::string to_string(const BoundingBox& box);

}  // namespace grounding
