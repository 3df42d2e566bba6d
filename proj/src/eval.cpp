#include "grounding/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

#include "grounding/error.hpp"

namespace grounding {

double iou(const BoundingBox& a, const BoundingBox& b) {
  const int ix1 = std::max(a.x1, b.x1);
  const int iy1 = std::max(a.y1, b.y1);
  const int ix2 = std::min(a.x2, b.x2);
  const int iy2 = std::min(a.y2, b.y2);
  if (ix1 > ix2 || iy1 > iy2) return 0.0;
  const auto intersection = static_cast<std::int64_t>(ix2 - ix1 + 1) * (iy2 - iy1 + 1);
  const auto united = a.area() + b.area() - intersection;
  return static_cast<double>(intersection) / static_cast<double>(united);
}

AccuracyReport accuracy(std::span<const EvalRecord> records, double threshold) {
  if (records.empty()) throw InvalidInput("accuracy needs at least one record");
  AccuracyReport report;
  report.threshold = threshold;
  std::map<std::string, CategoryScore> groups;
  for (const auto& record : records) {
    const bool hit = iou(record.predicted, record.truth) > threshold;
    ++report.examples;
    report.correct += hit ? 1 : 0;
    auto& group = groups[record.category];
    group.category = record.category;
    ++group.examples;
    group.correct += hit ? 1 : 0;
  }
  auto percent = [](std::size_t correct, std::size_t total) {
    return 100.0 * static_cast<double>(correct) / static_cast<double>(total);
  };
  report.accuracy = percent(report.correct, report.examples);
  for (auto& [name, group] : groups) {
    group.accuracy = percent(group.correct, group.examples);
    report.categories.push_back(group);
  }
  return report;
}

BoundingBox baseline_entire_image(int width, int height) {
  if (width < 1 || height < 1) throw InvalidInput("image dimensions must be positive");
  return whole_image_box(width, height);
}

BoundingBox baseline_largest_proposal(std::span<const BoundingBox> proposals) {
  if (proposals.empty()) throw InvalidInput("largest-proposal baseline needs at least one proposal");
  const BoundingBox* best = &proposals.front();
  for (const auto& box : proposals) {
    if (box.area() > best->area()) best = &box;
  }
  return *best;
}

std::string format_report(const AccuracyReport& report, bool by_category) {
  std::size_t name_width = 8;
  if (by_category) {
    for (const auto& group : report.categories) {
      name_width = std::max(name_width, std::max<std::size_t>(group.category.size(), 6));
    }
  }
  std::string out;
  char line[512];
  std::snprintf(line, sizeof line, "IoU threshold: > %.2f\n", report.threshold);
  out += line;
  auto row = [&](const std::string& name, const std::string& examples, const std::string& correct,
                 const std::string& acc) {
    std::snprintf(line, sizeof line, "%-*s  %8s  %8s  %8s\n", static_cast<int>(name_width),
                  name.c_str(), examples.c_str(), correct.c_str(), acc.c_str());
    out += line;
  };
  auto fixed2 = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  row("category", "examples", "correct", "accuracy");
  row("overall", std::to_string(report.examples), std::to_string(report.correct),
      fixed2(report.accuracy));
  if (by_category) {
    for (const auto& group : report.categories) {
      row(group.category.empty() ? "(none)" : group.category, std::to_string(group.examples),
          std::to_string(group.correct), fixed2(group.accuracy));
    }
  }
  return out;
}

}  // namespace grounding
