#include <doctest.h>

#include <cmath>
#include <vector>

#include "grounding/error.hpp"
#include "grounding/ess.hpp"
#include "oracles.hpp"

using namespace grounding;

namespace {

BoxSet random_set(Rng& rng, int width, int height) {
  auto interval = [&](int size) {
    const int a = rng.between(0, size - 1);
    const int b = rng.between(0, size - 1);
    return Interval{std::min(a, b), std::max(a, b)};
  };
  while (true) {
    const BoxSet set{interval(width), interval(height), interval(width), interval(height)};
    if (set.feasible()) return set;
  }
}

// Maps with many exact ties: entries in {-1, 0, 1}.
ScoreMap ternary_map(Rng& rng, int width, int height) {
  std::vector<double> scores(static_cast<std::size_t>(width * height));
  for (double& s : scores) s = static_cast<double>(rng.between(-1, 1));
  return ScoreMap(width, height, std::move(scores));
}

}  // namespace

TEST_CASE("upper bound is exact on singletons") {
  Rng rng(21);
  const ScoreMap map = oracle::random_map(rng, 7, 5);
  for (int i = 0; i < 200; ++i) {
    const auto b = oracle::random_box(rng, 7, 5);
    const BoxSet set{{b.x1, b.x1}, {b.y1, b.y1}, {b.x2, b.x2}, {b.y2, b.y2}};
    CHECK(set.singleton());
    CHECK(upper_bound(set, map) == map.box_sum(b));
  }
}

TEST_CASE("upper bound of the full set on a positive map is the total") {
  const ScoreMap map(3, 4, std::vector<double>(12, 0.5));
  CHECK(upper_bound(BoxSet::full(3, 4), map) == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("upper bound is admissible") {
  Rng rng(22);
  for (int trial = 0; trial < 200; ++trial) {
    const int w = rng.between(1, 10);
    const int h = rng.between(1, 10);
    const ScoreMap map = oracle::random_map(rng, w, h);
    const BoxSet set = random_set(rng, w, h);
    CHECK(upper_bound(set, map) >= oracle::best_in_set(set, map) - 1e-12);
  }
}

TEST_CASE("upper bound rejects bad sets") {
  const ScoreMap map(4, 4, std::vector<double>(16, 1.0));
  CHECK_THROWS_AS((void)upper_bound({{3, 3}, {0, 3}, {0, 2}, {0, 3}}, map), InvalidInput);
  CHECK_THROWS_AS((void)upper_bound({{0, 3}, {0, 3}, {0, 4}, {0, 3}}, map), InvalidInput);
  CHECK_THROWS_AS((void)upper_bound({{2, 1}, {0, 3}, {0, 3}, {0, 3}}, map), InvalidInput);
}

TEST_CASE("splitting shrinks the set and never raises the bound") {
  Rng rng(23);
  for (int trial = 0; trial < 300; ++trial) {
    const int w = rng.between(2, 12);
    const int h = rng.between(2, 12);
    const ScoreMap map = oracle::random_map(rng, w, h);
    BoxSet set = tighten(random_set(rng, w, h));
    if (set.singleton()) continue;
    const double parent = upper_bound(set, map);
    const auto [left, right] = split(set);
    for (const BoxSet& child : {left, right}) {
      CHECK(child.total_width() < set.total_width());
      if (child.feasible()) CHECK(upper_bound(child, map) <= parent + 1e-12);
    }
  }
}

TEST_CASE("split picks the widest interval, ties in x1, y1, x2, y2 order") {
  const BoxSet set{{0, 3}, {0, 3}, {2, 5}, {3, 4}};
  const auto [left, right] = split(set);
  CHECK(left.x1 == Interval{0, 1});
  CHECK(right.x1 == Interval{2, 3});
  CHECK(left.y1 == set.y1);

  const BoxSet tall{{0, 1}, {0, 6}, {0, 1}, {0, 6}};
  const auto [top, bottom] = split(tall);
  CHECK(top.y1 == Interval{0, 3});
  CHECK(bottom.y1 == Interval{4, 6});
}

TEST_CASE("tightening keeps exactly the valid boxes") {
  Rng rng(24);
  for (int trial = 0; trial < 200; ++trial) {
    const BoxSet set = random_set(rng, 6, 6);
    const BoxSet tight = tighten(set);
    std::size_t before = 0;
    std::size_t after = 0;
    auto count = [](const BoxSet& s) {
      std::size_t n = 0;
      for (int x1 = s.x1.lo; x1 <= s.x1.hi; ++x1)
        for (int x2 = s.x2.lo; x2 <= s.x2.hi; ++x2)
          for (int y1 = s.y1.lo; y1 <= s.y1.hi; ++y1)
            for (int y2 = s.y2.lo; y2 <= s.y2.hi; ++y2) n += (x1 <= x2 && y1 <= y2) ? 1 : 0;
      return n;
    };
    before = count(set);
    after = count(tight);
    CHECK(before == after);
    CHECK(tight.x1.hi <= tight.x2.hi);
    CHECK(tight.x2.lo >= tight.x1.lo);
  }
}

TEST_CASE("ess on simple maps") {
  SUBCASE("all positive") {
    const ScoreMap map(5, 4, std::vector<double>(20, 0.25));
    const auto r = ess_search(map);
    CHECK(r.box == BoundingBox{0, 0, 4, 3});
    CHECK(r.value == 5.0);
  }
  SUBCASE("one bright pixel") {
    std::vector<double> scores(6 * 5, -1.0);
    scores[3 * 6 + 2] = 5.0;
    const auto r = ess_search(ScoreMap(6, 5, scores));
    CHECK(r.box == BoundingBox{2, 3, 2, 3});
    CHECK(r.value == 5.0);
  }
  SUBCASE("all negative picks the first best pixel") {
    const auto r = ess_search(ScoreMap(3, 3, std::vector<double>(9, -1.0)));
    CHECK(r.box == BoundingBox{0, 0, 0, 0});
    CHECK(r.value == -1.0);
    EssOptions full_search;
    full_search.shortcut_non_positive = false;
    CHECK(ess_search(ScoreMap(3, 3, std::vector<double>(9, -1.0)), full_search).box == r.box);
  }
  SUBCASE("1x1") {
    const ScoreMap map(1, 1, {-0.3});
    CHECK(ess_search(map).box == BoundingBox{0, 0, 0, 0});
    CHECK(brute_force_search(map).value == -0.3);
  }
}

TEST_CASE("ess agrees with brute force, including the tie-break") {
  Rng rng(25);
  for (int trial = 0; trial < 300; ++trial) {
    const int w = rng.between(1, 12);
    const int h = rng.between(1, 12);
    const ScoreMap map = trial % 2 == 0 ? oracle::random_map(rng, w, h) : ternary_map(rng, w, h);
    const auto fast = ess_search(map);
    const auto slow = brute_force_search(map);
    CHECK(fast.value == slow.value);
    CHECK(fast.box == slow.box);
    CHECK(map.box_sum(fast.box) == fast.value);
  }
}

TEST_CASE("open-list budget and shortcut never change the answer") {
  Rng rng(26);
  for (int trial = 0; trial < 100; ++trial) {
    const int w = rng.between(1, 16);
    const int h = rng.between(1, 16);
    const ScoreMap map = trial % 3 == 0 ? ternary_map(rng, w, h) : oracle::random_map(rng, w, h);
    const auto reference = ess_search(map, {std::size_t{1} << 30, false});
    for (std::size_t budget : {std::size_t{0}, std::size_t{3}, std::size_t{64}}) {
      for (bool shortcut : {false, true}) {
        const auto r = ess_search(map, {budget, shortcut});
        CHECK(r.box == reference.box);
        CHECK(r.value == reference.value);
      }
    }
  }
}

TEST_CASE("ess is deterministic") {
  Rng rng(27);
  const ScoreMap map = oracle::random_map(rng, 40, 30);
  const auto a = ess_search(map);
  const auto b = ess_search(map);
  CHECK(a.box == b.box);
  CHECK(a.value == b.value);
  CHECK(a.bound_evaluations == b.bound_evaluations);
}

TEST_CASE("brute force refuses large maps") {
  const ScoreMap ok(64, 64, std::vector<double>(4096, 1.0));
  CHECK_NOTHROW((void)brute_force_search(ok));
  const ScoreMap big(65, 64, std::vector<double>(65 * 64, 1.0));
  CHECK_THROWS_AS((void)brute_force_search(big), GuardExceeded);
}

TEST_CASE("detect_activation") {
  SUBCASE("all positive") {
    const auto a = detect_activation(ScoreMap(8, 6, std::vector<double>(48, 1.0), "sky"));
    CHECK(a.concept_id == "sky");
    CHECK(a.box == BoundingBox{0, 0, 7, 5});
    CHECK(a.confidence == 1.0);
    CHECK(a.area_fraction == 1.0);
    CHECK(a.active);
  }
  SUBCASE("all negative") {
    const auto a = detect_activation(ScoreMap(8, 6, std::vector<double>(48, -1.0)));
    CHECK(a.confidence == 0.0);
    CHECK_FALSE(a.active);
  }
  SUBCASE("4% region is found but too small") {
    const std::vector<Detection> dets{{{3, 4, 4, 5}, 1.0, ""}};
    const auto a = detect_activation(from_detections(dets, 10, 10));
    CHECK(a.box == BoundingBox{3, 4, 4, 5});
    CHECK(a.confidence == 1.0);
    CHECK(a.area_fraction == doctest::Approx(0.04));
    CHECK_FALSE(a.active);
  }
  SUBCASE("exactly 5% counts") {
    const std::vector<Detection> dets{{{0, 0, 1, 4}, 1.0, ""}};
    const auto a = detect_activation(from_detections(dets, 20, 10));
    CHECK(a.area_fraction == 0.05);
    CHECK(a.active);
  }
  SUBCASE("thresholds are configurable") {
    const std::vector<Detection> dets{{{0, 0, 1, 4}, 1.0, ""}};
    const auto a = detect_activation(from_detections(dets, 20, 10), {0.5, 0.06});
    CHECK_FALSE(a.active);
  }
  SUBCASE("confidence must be strictly above the threshold") {
    // Half the pixels of the best box are +1, so the mean probability is 0.5.
    const ScoreMap map(2, 1, {1.0, 0.0});
    const auto a = detect_activation(map, {0.75, 0.0});
    CHECK(a.box == BoundingBox{0, 0, 0, 0});
    CHECK(a.confidence == 1.0);
    const ScoreMap flat(2, 1, {0.0, 0.0});
    const auto b = detect_activation(flat);
    CHECK(b.confidence == 0.5);
    CHECK_FALSE(b.active);
  }
}

TEST_CASE("active boxes always meet both thresholds") {
  Rng rng(28);
  for (int trial = 0; trial < 300; ++trial) {
    const int w = rng.between(1, 14);
    const int h = rng.between(1, 14);
    const auto a = detect_activation(oracle::random_map(rng, w, h));
    CHECK(a.active == (a.confidence > 0.5 && a.area_fraction >= 0.05));
    CHECK(a.box.fits(w, h));
  }
}
