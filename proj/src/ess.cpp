#include "grounding/ess.hpp"

#include <algorithm>
#include <optional>
#include <queue>
#include <vector>

#include "grounding/error.hpp"

namespace grounding {

BoundingBox BoxSet::first_box() const {
  return {x1.lo, y1.lo, std::max(x2.lo, x1.lo), std::max(y2.lo, y1.lo)};
}

namespace {

double bound_unchecked(const BoxSet& set, const ScoreMap& map) {
  if (set.singleton()) return map.full_integral().box_sum(set.largest());
  double bound = map.positive_integral().box_sum(set.largest());
  const BoundingBox inner = set.smallest();
  if (inner.x1 <= inner.x2 && inner.y1 <= inner.y2) {
    bound += map.negative_integral().box_sum(inner);
  }
  return bound;
}

// (y1, x1, y2, x2) packed 16 bits each, so integer order is box order.
std::uint64_t order_key(const BoundingBox& box) {
  return (static_cast<std::uint64_t>(box.y1) << 48) | (static_cast<std::uint64_t>(box.x1) << 32) |
         (static_cast<std::uint64_t>(box.y2) << 16) | static_cast<std::uint64_t>(box.x2);
}

struct Node {
  BoxSet set;
  double bound;
  std::uint64_t first_key;  // order_key of set.first_box()
  std::uint64_t sequence;
};

// Max-heap order: higher bound first, then the set whose first member box is
// smaller in (y1, x1, y2, x2), then insertion order. The second key makes the
// first singleton popped the tie-break winner among all optimal boxes.
struct PopsLater {
  bool operator()(const Node& a, const Node& b) const {
    if (a.bound != b.bound) return a.bound < b.bound;
    if (a.first_key != b.first_key) return a.first_key > b.first_key;
    return a.sequence > b.sequence;
  }
};

constexpr int kMaxSearchDimension = 65535;

}  // namespace

BoxSet tighten(const BoxSet& set) {
  BoxSet out = set;
  out.x1.hi = std::min(set.x1.hi, set.x2.hi);
  out.x2.lo = std::max(set.x2.lo, set.x1.lo);
  out.y1.hi = std::min(set.y1.hi, set.y2.hi);
  out.y2.lo = std::max(set.y2.lo, set.y1.lo);
  return out;
}

double upper_bound(const BoxSet& set, const ScoreMap& map) {
  if (!set.feasible()) throw InvalidInput("upper_bound: box set contains no valid box");
  const auto ordered = [](const Interval& i) { return i.lo <= i.hi; };
  if (!ordered(set.x1) || !ordered(set.y1) || !ordered(set.x2) || !ordered(set.y2) ||
      set.x1.lo < 0 || set.y1.lo < 0 || set.x2.hi >= map.width() || set.y2.hi >= map.height()) {
    throw InvalidInput("upper_bound: box set reaches outside the map");
  }
  return bound_unchecked(set, map);
}

std::pair<BoxSet, BoxSet> split(const BoxSet& set) {
  BoxSet left = set;
  BoxSet right = set;
  Interval BoxSet::*const members[] = {&BoxSet::x1, &BoxSet::y1, &BoxSet::x2, &BoxSet::y2};
  Interval BoxSet::*widest = members[0];
  for (auto member : members) {
    if ((set.*member).width() > (set.*widest).width()) widest = member;
  }
  const Interval whole = set.*widest;
  const int mid = whole.lo + (whole.hi - whole.lo) / 2;
  left.*widest = {whole.lo, mid};
  right.*widest = {mid + 1, whole.hi};
  return {tighten(left), tighten(right)};
}

namespace {

class Searcher {
 public:
  Searcher(const ScoreMap& map, SearchResult& result) : map_(map), result_(result) {}

  [[nodiscard]] Node make_node(const BoxSet& set) {
    ++result_.bound_evaluations;
    return {set, bound_unchecked(set, map_), order_key(set.first_box()), sequence_++};
  }

  // A box beats the incumbent on value, or ties it and comes first in
  // (y1, x1, y2, x2) order.
  [[nodiscard]] bool improves(double value, const BoundingBox& box) const {
    return !have_best_ || value > best_value_ ||
           (value == best_value_ && box_order_less(box, best_box_));
  }

  // Whether any member of the set could still beat the incumbent.
  [[nodiscard]] bool worth_expanding(const Node& node) const {
    return !have_best_ || node.bound > best_value_ ||
           (node.bound == best_value_ && node.first_key < best_key_);
  }

  void offer(const Node& singleton) {
    if (improves(singleton.bound, singleton.set.largest())) {
      have_best_ = true;
      best_value_ = singleton.bound;
      best_box_ = singleton.set.largest();
      best_key_ = singleton.first_key;
    }
  }

  // Exhausts the subtree below `root` with an explicit stack, children with
  // the better priority expanded first.
  void expand_depth_first(const Node& root) {
    stack_.clear();
    stack_.push_back(root);
    while (!stack_.empty()) {
      const Node node = stack_.back();
      stack_.pop_back();
      ++result_.iterations;
      if (!worth_expanding(node)) continue;
      if (node.set.singleton()) {
        offer(node);
        continue;
      }
      const auto [left, right] = split(node.set);
      const bool left_ok = left.feasible();
      const bool right_ok = right.feasible();
      if (left_ok && right_ok) {
        Node a = make_node(left);
        Node b = make_node(right);
        if (PopsLater{}(b, a)) std::swap(a, b);  // a pops first
        if (worth_expanding(b)) stack_.push_back(b);
        if (worth_expanding(a)) stack_.push_back(a);
      } else if (left_ok || right_ok) {
        const Node only = make_node(left_ok ? left : right);
        if (worth_expanding(only)) stack_.push_back(only);
      }
      result_.peak_open_sets = std::max<std::uint64_t>(result_.peak_open_sets, stack_.size());
    }
  }

  SearchResult& finish() {
    result_.box = best_box_;
    result_.value = best_value_;
    return result_;
  }

 private:
  const ScoreMap& map_;
  SearchResult& result_;
  std::uint64_t sequence_ = 0;
  bool have_best_ = false;
  double best_value_ = 0.0;
  BoundingBox best_box_;
  std::uint64_t best_key_ = 0;
  std::vector<Node> stack_;
};

// With no positive score every multi-pixel box is dominated by one of its
// pixels, so the optimum is the first maximal pixel in row-major order.
std::optional<SearchResult> non_positive_shortcut(const ScoreMap& map) {
  const auto scores = map.scores();
  if (std::any_of(scores.begin(), scores.end(), [](double s) { return s > 0.0; })) {
    return std::nullopt;
  }
  const auto best = std::max_element(scores.begin(), scores.end());
  const auto index = static_cast<int>(best - scores.begin());
  SearchResult result;
  result.box = {index % map.width(), index / map.width(), index % map.width(),
                index / map.width()};
  result.value = map.full_integral().box_sum(result.box);
  return result;
}

}  // namespace

SearchResult ess_search(const ScoreMap& map, const EssOptions& options) {
  if (map.width() > kMaxSearchDimension || map.height() > kMaxSearchDimension) {
    throw InvalidInput("ess_search supports maps up to " + std::to_string(kMaxSearchDimension) +
                       " pixels per side");
  }
  if (options.shortcut_non_positive) {
    if (auto shortcut = non_positive_shortcut(map)) return *shortcut;
  }

  SearchResult result;
  Searcher searcher(map, result);
  std::priority_queue<Node, std::vector<Node>, PopsLater> queue;
  queue.push(searcher.make_node(BoxSet::full(map.width(), map.height())));

  // Best-first: the first singleton popped is the optimum.
  while (!queue.empty() && queue.size() <= options.max_open_sets) {
    const Node node = queue.top();
    queue.pop();
    ++result.iterations;
    if (node.set.singleton()) {
      searcher.offer(node);
      return searcher.finish();
    }
    const auto [left, right] = split(node.set);
    for (const BoxSet& child : {left, right}) {
      if (child.feasible()) queue.push(searcher.make_node(child));
    }
    result.peak_open_sets = std::max<std::uint64_t>(result.peak_open_sets, queue.size());
  }

  // Open list over budget: drain it in priority order, exhausting each subtree
  // depth-first against the incumbent. Once the top can no longer improve on
  // the incumbent, nothing below it can either.
  while (!queue.empty()) {
    const Node node = queue.top();
    queue.pop();
    if (!searcher.worth_expanding(node)) break;
    searcher.expand_depth_first(node);
  }
  return searcher.finish();
}

SearchResult brute_force_search(const ScoreMap& map) {
  if (map.pixel_count() > kBruteForcePixelLimit) {
    throw GuardExceeded("brute_force_search: map has " + std::to_string(map.pixel_count()) +
                        " pixels, limit is " + std::to_string(kBruteForcePixelLimit));
  }
  const IntegralImage& integral = map.full_integral();
  SearchResult result;
  bool have_best = false;
  // Enumeration in (y1, x1, y2, x2) order with a strict improvement test keeps
  // the lexicographically first optimum.
  for (int y1 = 0; y1 < map.height(); ++y1) {
    for (int x1 = 0; x1 < map.width(); ++x1) {
      for (int y2 = y1; y2 < map.height(); ++y2) {
        for (int x2 = x1; x2 < map.width(); ++x2) {
          const BoundingBox box{x1, y1, x2, y2};
          const double value = integral.box_sum(box);
          ++result.bound_evaluations;
          if (!have_best || value > result.value) {
            result.box = box;
            result.value = value;
            have_best = true;
          }
        }
      }
    }
  }
  result.iterations = result.bound_evaluations;
  return result;
}

ConceptActivation detect_activation(const ScoreMap& map, const ActivationThresholds& thresholds,
                                    const EssOptions& options) {
  const SearchResult found = ess_search(map, options);
  ConceptActivation activation;
  activation.concept_id = map.concept_id();
  activation.box = found.box;
  activation.confidence = map.box_mean_prob(found.box);
  activation.area_fraction =
      static_cast<double>(found.box.area()) / static_cast<double>(map.pixel_count());
  activation.active = activation.confidence > thresholds.confidence &&
                      activation.area_fraction >= thresholds.area_fraction;
  return activation;
}

}  // namespace grounding
