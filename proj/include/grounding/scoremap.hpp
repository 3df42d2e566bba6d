#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "grounding/box.hpp"

namespace grounding {

// (W+1)x(H+1) summed-area table. Row 0 and column 0 are zero so a box sum is
// a four-corner lookup without branches.
class IntegralImage {
 public:
  IntegralImage() = default;
  IntegralImage(std::span<const double> grid, int width, int height);

  // Sum over the inclusive box. The box must lie inside the source grid.
  [[nodiscard]] double box_sum(const BoundingBox& box) const {
    const auto stride = static_cast<std::size_t>(width_) + 1;
    const auto x1 = static_cast<std::size_t>(box.x1);
    const auto x2 = static_cast<std::size_t>(box.x2) + 1;
    const auto y1 = static_cast<std::size_t>(box.y1);
    const auto y2 = static_cast<std::size_t>(box.y2) + 1;
    return table_[y2 * stride + x2] - table_[y1 * stride + x2] - table_[y2 * stride + x1] +
           table_[y1 * stride + x1];
  }

  [[nodiscard]] int width() const { return width_; }
  [[nodiscard]] int height() const { return height_; }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> table_;
};

// Per-concept spatial score map for one image. Immutable after construction;
// the integral images of the full scores, their positive part, their negative
// part and the probability view are built eagerly.
class ScoreMap {
 public:
  ScoreMap(int width, int height, std::vector<double> scores, std::string concept_id = {});

  [[nodiscard]] int width() const { return width_; }
  [[nodiscard]] int height() const { return height_; }
  [[nodiscard]] std::int64_t pixel_count() const {
    return static_cast<std::int64_t>(width_) * height_;
  }
  [[nodiscard]] const std::string& concept_id() const { return concept_id_; }
  [[nodiscard]] std::span<const double> scores() const { return scores_; }

  [[nodiscard]] double at(int x, int y) const {
    return scores_[static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
                   static_cast<std::size_t>(x)];
  }

  // Probability view: clamp((score + 1) / 2, 0, 1).
  [[nodiscard]] double probability_at(int x, int y) const;

  [[nodiscard]] bool contains(const BoundingBox& box) const { return box.fits(width_, height_); }

  // Checked queries; throw InvalidInput for boxes outside the map.
  [[nodiscard]] double box_sum(const BoundingBox& box) const;
  [[nodiscard]] double box_sum_positive(const BoundingBox& box) const;
  [[nodiscard]] double box_sum_negative(const BoundingBox& box) const;
  [[nodiscard]] double box_mean_prob(const BoundingBox& box) const;

  // Unchecked access for the search inner loop.
  [[nodiscard]] const IntegralImage& full_integral() const { return full_; }
  [[nodiscard]] const IntegralImage& positive_integral() const { return positive_; }
  [[nodiscard]] const IntegralImage& negative_integral() const { return negative_; }

 private:
  void require_inside(const BoundingBox& box) const;

  int width_;
  int height_;
  std::string concept_id_;
  std::vector<double> scores_;
  IntegralImage full_;
  IntegralImage positive_;
  IntegralImage negative_;
  IntegralImage probability_;
};

struct Detection {
  BoundingBox box;
  double confidence = 0.0;
  std::string concept_id;
};

// Row-major probabilities in [0,1]; strictly above 0.5 becomes +1, the rest -1.
ScoreMap from_segmentation(std::span<const double> probabilities, int width, int height,
                           std::string concept_id = {});

// Boxes with confidence < 0.5 are dropped; pixels inside the union of the
// survivors score +1, all others -1.
ScoreMap from_detections(std::span<const Detection> detections, int width, int height,
                         std::string concept_id = {});

// SMAP v1: "SMAP 1 <width> <height>\n" followed by width*height little-endian
// binary32 values, row-major. Scores are narrowed to float on write.
void write_smap(std::ostream& out, const ScoreMap& map);
void write_smap(const std::filesystem::path& path, const ScoreMap& map);
std::string encode_smap(const ScoreMap& map);
ScoreMap read_smap(std::istream& in, std::string concept_id = {});
ScoreMap read_smap(const std::filesystem::path& path, std::string concept_id = {});

}  // namespace grounding
