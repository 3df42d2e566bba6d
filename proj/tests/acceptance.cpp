// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [--golden FILE] [--write-golden] [--expect-fail N[,N...]] [--only N[,N...]]
//
// Exit status is 0 when the set of failing criteria equals the --expect-fail
// set (empty by default), 1 otherwise.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "grounding/cli.hpp"
#include "grounding/error.hpp"
#include "grounding/eval.hpp"
#include "grounding/inference.hpp"
#include "grounding/io.hpp"
#include "grounding/linker.hpp"
#include "grounding/synth.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

using namespace grounding;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* pattern, auto... values) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, values...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Default synthetic worlds, generated and observed once and shared.
struct World {
  SynthCorpus corpus;
  SynthObservations observations;
  RelevanceMatrix matrix;
};

const World& world(double noise) {
  static std::vector<std::pair<double, World>> cache;
  for (const auto& [n, w] : cache) {
    if (n == noise) return w;
  }
  SynthConfig config;
  config.noise = noise;
  World w;
  w.corpus = generate(config);
  w.observations = observe(w.corpus);
  w.matrix = learn(w.corpus, w.observations);
  cache.emplace_back(noise, std::move(w));
  return cache.back().second;
}

double link_recovery(const World& w) {
  std::size_t planted = 0;
  std::size_t recovered = 0;
  for (std::size_t i = 0; i < w.corpus.words.size(); ++i) {
    const int c = w.corpus.planted[i];
    if (c < 0) continue;
    ++planted;
    if (!w.matrix.token_index(w.corpus.words[i])) continue;
    const auto top = top_relevant_concepts(w.matrix, w.corpus.words[i], 1);
    recovered += top.front().concept_id == w.corpus.concepts[static_cast<std::size_t>(c)] ? 1 : 0;
  }
  return 100.0 * static_cast<double>(recovered) / static_cast<double>(planted);
}

std::vector<GroundingResult> predictions(const World& w, const RelevanceMatrix& matrix, double tau) {
  GroundingOptions options;
  options.tau = tau;
  std::vector<GroundingResult> out;
  out.reserve(w.corpus.examples.size());
  for (std::size_t e = 0; e < w.corpus.examples.size(); ++e) {
    out.push_back(decide(matrix, w.observations.tokens[e], w.observations.activations[e],
                         w.corpus.config.width, w.corpus.config.height, options));
  }
  return out;
}

double accuracy_of(const World& w, const std::function<BoundingBox(std::size_t)>& predict) {
  std::vector<EvalRecord> records;
  for (std::size_t e = 0; e < w.corpus.examples.size(); ++e) {
    records.push_back({w.corpus.examples[e].id, predict(e), w.corpus.examples[e].truth, {}});
  }
  return accuracy(records).accuracy;
}

// ---- criteria -----------------------------------------------------------------

Verdict ess_exactness() {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(1);
  int mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    const ScoreMap map = oracle::random_map(rng, rng.between(1, 12), rng.between(1, 12));
    const auto fast = ess_search(map);
    const auto brute = brute_force_search(map);
    mismatches += fast.value == brute.value ? 0 : 1;
  }
  const double elapsed = seconds_since(start);
  return {mismatches == 0 && elapsed < 10.0,
          fmt("1000 maps up to 12x12, %d value mismatches, %.2f s (limit 10 s)", mismatches, elapsed)};
}

Verdict ess_efficiency() {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(1);
  const ScoreMap map = oracle::random_map(rng, 512, 512);
  const auto result = ess_search(map);
  const double elapsed = seconds_since(start);
  const double per_axis = 512.0 * 513.0 / 2.0;
  const double candidates = per_axis * per_axis;
  const double share = static_cast<double>(result.bound_evaluations) / candidates;
  return {share < 0.05 && elapsed < 60.0,
          fmt("512x512: %llu bound evaluations = %.2f%% of %.0f boxes (limit 5%%), %.1f s (limit 60 s)",
              static_cast<unsigned long long>(result.bound_evaluations), 100.0 * share, candidates,
              elapsed)};
}

Verdict calibration() {
  Rng rng(3);
  double worst = 0.0;
  for (std::uint64_t n : {100u, 500u, 1000u}) {
    for (double p : {0.1, 0.3, 0.5, 0.7}) {
      for (int k = 0; k < 25; ++k) {
        const auto observed = rng.below(n + 1);
        worst = std::max(worst, std::fabs(normal_tail_probability(n, p, observed) -
                                          exact_tail_probability(n, p, observed)));
      }
    }
  }
  return {worst <= 0.03, fmt("max |normal - exact tail| = %.4f over 300 cells (limit 0.03)", worst)};
}

Verdict erf_accuracy() {
  double worst = 0.0;
  const int points = 10000;
  for (int i = 0; i < points; ++i) {
    const double x = -6.0 + 12.0 * i / (points - 1);
    worst = std::max(worst, static_cast<double>(std::fabs(grounding::erf(x) - oracle::erf_series(x))));
  }
  return {worst <= 1e-7, fmt("max |erf - series| = %.3g on 10^4 points in [-6,6] (limit 1e-7)", worst)};
}

Verdict null_uniformity() {
  Rng rng(5);
  const std::size_t documents = 5000;
  const double token_probability = 0.08;  // N(s) about 400
  std::vector<double> values;
  double mean_ns = 0.0;
  for (int r = 0; r < 10000; ++r) {
    CooccurrenceStats stats(1, 1);
    for (std::size_t d = 0; d < documents; ++d) {
      const std::uint8_t t = rng.bernoulli(token_probability) ? 1 : 0;
      const std::uint8_t c = rng.bernoulli(0.5) ? 1 : 0;
      stats.add(std::span<const std::uint8_t>(&t, 1), std::span<const std::uint8_t>(&c, 1));
    }
    mean_ns += static_cast<double>(stats.token_count(0));
    values.push_back(relevance(stats, 0, 0));
  }
  const double ks = oracle::ks_uniform(values);
  return {ks < 0.1, fmt("KS = %.4f over 10^4 resamples, mean N(s) = %.1f (limit 0.1)", ks, mean_ns / 1e4)};
}

Verdict planted_recovery() {
  const double clean = link_recovery(world(0.0));
  const double noisy = link_recovery(world(0.1));
  return {clean == 100.0 && noisy >= 95.0,
          fmt("link recovery %.1f%% at noise 0 (need 100%%), %.1f%% at noise 0.1 (need 95%%)", clean, noisy)};
}

Verdict end_to_end(const std::string& golden_path, bool write_golden) {
  testing::TempDir dir;
  const auto config = dir.write("world.json", encode_synth_config(SynthConfig{}));
  const std::string corpus = (dir / "corpus").string();
  const std::string manifest = corpus + "/manifest.jsonl";
  const std::string model = (dir / "model.json").string();
  const std::string pred = (dir / "pred.jsonl").string();
  std::ostringstream out;
  std::ostringstream err;
  const std::vector<std::vector<std::string>> steps{
      {"synth", "--config", config.string(), "--out", corpus},
      {"train", "--corpus", manifest, "--vocab-size", "60", "--out", model},
      {"infer", "--corpus", manifest, "--model", model, "--out", pred},
      {"eval", "--pred", pred, "--gt", manifest, "--by-category"}};
  for (const auto& step : steps) {
    out.str("");
    if (cli::run(step, out, err) != 0) return {false, "ground " + step[0] + " failed: " + err.str()};
  }
  const std::string report = out.str();
  const auto truth = read_ground_truth(manifest);
  const auto preds = read_predictions(pred);
  std::vector<EvalRecord> records;
  for (std::size_t i = 0; i < preds.size(); ++i) records.push_back({preds[i].id, preds[i].box, truth[i].box, {}});
  const double acc = accuracy(records).accuracy;

  if (write_golden) write_file_atomic(golden_path, report);
  std::string golden;
  try {
    golden = read_file(golden_path);
  } catch (const InvalidInput&) {
    return {false, "golden report " + golden_path + " is missing"};
  }
  const bool same = golden == report;
  return {acc >= 90.0 && same, fmt("accuracy %.2f%% (need 90%%), golden report %s", acc,
                                   same ? "matches byte-for-byte" : "DIFFERS")};
}

Verdict metric_fixtures() {
  const double seventh = iou({0, 0, 1, 1}, {1, 1, 2, 2});
  const std::vector<EvalRecord> half{{"h", {0, 0, 1, 0}, {0, 0, 3, 0}, {}}};
  const double half_iou = iou(half[0].predicted, half[0].truth);
  const bool strict = accuracy(half).correct == 0;
  return {std::fabs(seventh - 1.0 / 7.0) <= 1e-12 && half_iou == 0.5 && strict,
          fmt("iou = %.15f (1/7), IoU 0.5 counted %s", seventh, strict ? "incorrect" : "CORRECT")};
}

Verdict rank_invariance() {
  std::size_t changed = 0;
  std::size_t total = 0;
  for (double noise : {0.0, 0.1}) {
    const World& w = world(noise);
    RelevanceMatrix transformed = w.matrix;
    for (double& v : transformed.values) v = std::sqrt(v);
    const auto base = predictions(w, w.matrix, kDefaultSignificance);
    const auto moved = predictions(w, transformed, std::sqrt(kDefaultSignificance));
    for (std::size_t e = 0; e < base.size(); ++e) {
      ++total;
      changed += base[e].box == moved[e].box && base[e].concept_id == moved[e].concept_id &&
                         base[e].token == moved[e].token
                     ? 0
                     : 1;
    }
  }
  return {changed == 0, fmt("sqrt transform of E and tau: %zu of %zu predictions changed", changed, total)};
}

Verdict baselines() {
  const World& w = world(0.0);
  const auto preds = predictions(w, w.matrix, kDefaultSignificance);
  const double method = accuracy_of(w, [&](std::size_t e) { return preds[e].box; });
  const double entire = accuracy_of(w, [&](std::size_t) {
    return baseline_entire_image(w.corpus.config.width, w.corpus.config.height);
  });
  const double largest = accuracy_of(w, [&](std::size_t e) {
    return baseline_largest_proposal(w.corpus.examples[e].proposals);
  });
  return {method > entire && method > largest,
          fmt("method %.2f%% vs entire image %.2f%%, largest proposal %.2f%%", method, entire, largest)};
}

std::set<int> parse_set(const std::string& text) {
  std::set<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.insert(std::stoi(item));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria for the grounding engine", "acceptance"};
  std::string golden = "golden/synth_report.txt";
  bool write_golden = false;
  std::string expect_fail;
  std::string only;
  app.add_option("--golden", golden, "Golden eval report for criterion 7");
  app.add_flag("--write-golden", write_golden, "Regenerate the golden report before comparing");
  app.add_option("--expect-fail", expect_fail, "Criteria known to fail, comma separated");
  app.add_option("--only", only, "Run just these criteria, comma separated");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"ESS exactness", ess_exactness},
      {"ESS efficiency", ess_efficiency},
      {"hypothesis-test calibration", calibration},
      {"erf accuracy", erf_accuracy},
      {"null uniformity", null_uniformity},
      {"planted-link recovery", planted_recovery},
      {"end-to-end grounding", [&] { return end_to_end(golden, write_golden); }},
      {"metric fixtures", metric_fixtures},
      {"rank invariance", rank_invariance},
      {"baseline sanity", baselines},
  };

  const std::set<int> selected = parse_set(only);
  std::set<int> expected = parse_set(expect_fail);
  std::set<int> failed;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.count(id)) {
      expected.erase(id);
      continue;
    }
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    if (!v.pass) failed.insert(id);
    std::printf("%s %2d %s: %s\n", v.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), v.detail.c_str());
    std::fflush(stdout);
  }

  if (failed == expected) {
    if (!expected.empty()) std::printf("failures match the expected set\n");
    return 0;
  }
  std::printf("failures differ from the expected set\n");
  return 1;
}
