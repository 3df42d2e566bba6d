#pragma once

#include <span>
#include <string>
#include <vector>

#include "grounding/box.hpp"

namespace grounding {

// Intersection over union with inclusive-pixel areas.
double iou(const BoundingBox& a, const BoundingBox& b);

struct EvalRecord {
  std::string id;
  BoundingBox predicted;
  BoundingBox truth;
  std::string category;  // empty when untagged
};

struct CategoryScore {
  std::string category;
  std::size_t examples = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;  // percent
};

struct AccuracyReport {
  double threshold = 0.5;
  std::size_t examples = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;                  // percent
  std::vector<CategoryScore> categories;  // sorted by name
};

inline constexpr double kDefaultIouThreshold = 0.5;

// A prediction is correct when its IoU is strictly greater than the threshold.
AccuracyReport accuracy(std::span<const EvalRecord> records,
                        double threshold = kDefaultIouThreshold);

BoundingBox baseline_entire_image(int width, int height);

// Maximum-area proposal, first listed on ties.
BoundingBox baseline_largest_proposal(std::span<const BoundingBox> proposals);

// Aligned plain-text table; category rows follow the overall row when asked.
std::string format_report(const AccuracyReport& report, bool by_category);

}  // namespace grounding
