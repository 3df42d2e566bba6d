#pragma once

#include <cstdint>
#include <string>

#include "grounding/box.hpp"
#include "grounding/scoremap.hpp"

namespace grounding {

struct Interval {
  int lo = 0;
  int hi = 0;

  friend bool operator==(const Interval&, const Interval&) = default;
  [[nodiscard]] int width() const { return hi - lo; }
};

// A set of boxes: every (x1, y1, x2, y2) drawn from the four intervals with
// x1 <= x2 and y1 <= y2.
struct BoxSet {
  Interval x1;
  Interval y1;
  Interval x2;
  Interval y2;

  friend bool operator==(const BoxSet&, const BoxSet&) = default;

  static BoxSet full(int width, int height) {
    return {{0, width - 1}, {0, height - 1}, {0, width - 1}, {0, height - 1}};
  }

  [[nodiscard]] bool feasible() const { return x1.lo <= x2.hi && y1.lo <= y2.hi; }
  [[nodiscard]] bool singleton() const {
    return x1.width() == 0 && y1.width() == 0 && x2.width() == 0 && y2.width() == 0;
  }
  // Union of every box in the set.
  [[nodiscard]] BoundingBox largest() const { return {x1.lo, y1.lo, x2.hi, y2.hi}; }
  // Intersection of every box in the set; may be empty (x1 > x2 or y1 > y2).
  [[nodiscard]] BoundingBox smallest() const { return {x1.hi, y1.hi, x2.lo, y2.lo}; }
  // Lexicographically (y1, x1, y2, x2) smallest member box. Requires feasible().
  [[nodiscard]] BoundingBox first_box() const;
  [[nodiscard]] int total_width() const {
    return x1.width() + y1.width() + x2.width() + y2.width();
  }
};

// Sum of positive scores over the largest box plus sum of negative scores over
// the smallest box (zero when that box is empty). Admissible for every member
// box and exact on singletons. Throws InvalidInput on an infeasible set or a
// set that reaches outside the map.
double upper_bound(const BoxSet& set, const ScoreMap& map);

// Drops coordinates that cannot belong to any valid member box (x1 > every
// x2, x2 < every x1, and likewise for y). The set of valid boxes is unchanged.
BoxSet tighten(const BoxSet& set);

// Splits the widest interval (ties X1, Y1, X2, Y2) at lo + (hi - lo) / 2.
std::pair<BoxSet, BoxSet> split(const BoxSet& set);

struct SearchResult {
  BoundingBox box;
  double value = 0.0;
  std::uint64_t bound_evaluations = 0;
  std::uint64_t iterations = 0;
  std::uint64_t peak_open_sets = 0;
};

struct EssOptions {
  // Open-list size above which the remaining sets are expanded depth-first,
  // still in priority order at the top level. Does not change the result; a
  // small budget keeps heap upkeep cheap and memory flat on large maps.
  std::size_t max_open_sets = 256;
  // Answer maps without any positive score directly (first maximal pixel).
  bool shortcut_non_positive = true;
};

// Global maximum of box_sum over every box in the map by best-first branch and
// bound over box sets. Open sets are ordered by descending upper bound, then by
// their first member box in (y1, x1, y2, x2) order, then by insertion. Among
// optimal boxes the one minimal in (y1, x1, y2, x2) order is returned, and the
// returned value is box_sum of that box.
SearchResult ess_search(const ScoreMap& map, const EssOptions& options = {});

// Enumerates every box. Refuses maps with more than 4096 pixels.
SearchResult brute_force_search(const ScoreMap& map);

inline constexpr std::int64_t kBruteForcePixelLimit = 4096;

struct ActivationThresholds {
  double confidence = 0.5;     // strict: confidence > threshold
  double area_fraction = 0.05; // inclusive: area / (W*H) >= threshold
};

struct ConceptActivation {
  std::string concept_id;
  BoundingBox box;
  double confidence = 0.0;
  double area_fraction = 0.0;
  bool active = false;

  friend bool operator==(const ConceptActivation&, const ConceptActivation&) = default;
};

ConceptActivation detect_activation(const ScoreMap& map, const ActivationThresholds& thresholds = {},
                                    const EssOptions& options = {});

}  // namespace grounding
