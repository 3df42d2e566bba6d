#include "grounding/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "grounding/error.hpp"
#include "grounding/inference.hpp"
#include "grounding/random.hpp"

namespace grounding {

namespace {

std::string padded_name(char prefix, int index, int count) {
  const int digits = std::max(2, static_cast<int>(std::to_string(std::max(count - 1, 0)).size()));
  std::string number = std::to_string(index);
  if (static_cast<int>(number.size()) < digits) number.insert(0, digits - number.size(), '0');
  return prefix + number;
}

// Every (w, h) whose area fraction lies in [min_fraction, max_fraction].
std::vector<std::pair<int, int>> admissible_sizes(const SynthConfig& config) {
  std::vector<std::pair<int, int>> sizes;
  const double pixels = static_cast<double>(config.width) * config.height;
  for (int h = 1; h <= config.height; ++h) {
    for (int w = 1; w <= config.width; ++w) {
      const double fraction = static_cast<double>(w) * h / pixels;
      if (fraction >= config.min_box_fraction && fraction <= config.max_box_fraction) {
        sizes.emplace_back(w, h);
      }
    }
  }
  return sizes;
}

bool probability_ok(double p) { return p >= 0.0 && p <= 1.0; }

}  // namespace

std::vector<int> SynthConfig::planted_map() const {
  if (!planted.empty()) return planted;
  std::vector<int> map(static_cast<std::size_t>(num_words));
  for (int w = 0; w < num_words; ++w) map[static_cast<std::size_t>(w)] = w % num_concepts;
  return map;
}

void SynthConfig::validate() const {
  if (num_concepts < 1 || num_words < 1 || num_examples < 1) {
    throw InvalidInput("synth: concept, word and example counts must be positive");
  }
  if (width < 1 || height < 1) throw InvalidInput("synth: image dimensions must be positive");
  if (!probability_ok(concept_probability) || !probability_ok(distractor_probability) ||
      !probability_ok(filler_probability)) {
    throw InvalidInput("synth: probabilities must lie in [0,1]");
  }
  if (!(noise >= 0.0 && noise < 1.0)) throw InvalidInput("synth: noise must lie in [0,1)");
  if (max_distractors < 0 || proposals_per_image < 0) {
    throw InvalidInput("synth: distractor and proposal counts must be non-negative");
  }
  if (!(min_box_fraction > 0.0 && max_box_fraction <= 1.0 && min_box_fraction <= max_box_fraction)) {
    throw InvalidInput("synth: box area range must satisfy 0 < min <= max <= 1");
  }
  if (!planted.empty() && planted.size() != static_cast<std::size_t>(num_words)) {
    throw InvalidInput("synth: planted map must have one entry per word");
  }
  bool any_planted = false;
  for (int c : planted_map()) {
    if (c < -1 || c >= num_concepts) throw InvalidInput("synth: planted map targets an unknown concept");
    any_planted = any_planted || c >= 0;
  }
  if (!any_planted) throw InvalidInput("synth: at least one word must be planted");
  if (admissible_sizes(*this).empty()) {
    throw InvalidInput("synth: no box of a " + std::to_string(width) + "x" +
                       std::to_string(height) + " image has an area fraction in the configured range");
  }
}

ScoreMap SynthCorpus::render(const SynthExample& example, std::size_t concept_index) const {
  const SynthMap& described = example.maps.at(concept_index);
  std::vector<double> scores(static_cast<std::size_t>(config.width) *
                                 static_cast<std::size_t>(config.height),
                             -1.0);
  if (described.planted) {
    const BoundingBox& box = *described.planted;
    for (int y = box.y1; y <= box.y2; ++y) {
      for (int x = box.x1; x <= box.x2; ++x) {
        scores[static_cast<std::size_t>(y) * static_cast<std::size_t>(config.width) +
               static_cast<std::size_t>(x)] = 1.0;
      }
    }
  }
  if (config.noise > 0.0) {
    Rng rng(described.noise_seed);
    for (double& s : scores) {
      if (rng.bernoulli(config.noise)) s = -s;
    }
  }
  return ScoreMap(config.width, config.height, std::move(scores), concepts.at(concept_index));
}

namespace {

BoundingBox random_box(Rng& rng, int width, int height) {
  int xa = rng.between(0, width - 1);
  int xb = rng.between(0, width - 1);
  int ya = rng.between(0, height - 1);
  int yb = rng.between(0, height - 1);
  return {std::min(xa, xb), std::min(ya, yb), std::max(xa, xb), std::max(ya, yb)};
}

BoundingBox jitter(Rng& rng, const BoundingBox& box, int width, int height) {
  const int dx = std::max(1, box.width() / 5);
  const int dy = std::max(1, box.height() / 5);
  int x1 = std::clamp(box.x1 + rng.between(-dx, dx), 0, width - 1);
  int x2 = std::clamp(box.x2 + rng.between(-dx, dx), 0, width - 1);
  int y1 = std::clamp(box.y1 + rng.between(-dy, dy), 0, height - 1);
  int y2 = std::clamp(box.y2 + rng.between(-dy, dy), 0, height - 1);
  return {std::min(x1, x2), std::min(y1, y2), std::max(x1, x2), std::max(y1, y2)};
}

}  // namespace

SynthCorpus generate(const SynthConfig& config) {
  config.validate();

  SynthCorpus corpus;
  corpus.config = config;
  corpus.planted = config.planted_map();
  for (int c = 0; c < config.num_concepts; ++c) {
    corpus.concepts.push_back(padded_name('c', c, config.num_concepts));
  }
  for (int w = 0; w < config.num_words; ++w) {
    corpus.words.push_back(padded_name('w', w, config.num_words));
  }

  std::vector<std::vector<int>> words_of(static_cast<std::size_t>(config.num_concepts));
  for (int w = 0; w < config.num_words; ++w) {
    const int c = corpus.planted[static_cast<std::size_t>(w)];
    if (c >= 0) words_of[static_cast<std::size_t>(c)].push_back(w);
  }
  std::vector<int> linked_concepts;
  for (int c = 0; c < config.num_concepts; ++c) {
    if (!words_of[static_cast<std::size_t>(c)].empty()) linked_concepts.push_back(c);
  }
  const auto sizes = admissible_sizes(config);

  Rng rng(config.seed);
  corpus.examples.reserve(static_cast<std::size_t>(config.num_examples));
  for (int e = 0; e < config.num_examples; ++e) {
    SynthExample example;
    example.id = padded_name('e', e, config.num_examples);

    const int designated =
        linked_concepts[rng.below(linked_concepts.size())];
    std::vector<bool> active(static_cast<std::size_t>(config.num_concepts));
    for (int c = 0; c < config.num_concepts; ++c) {
      active[static_cast<std::size_t>(c)] = c == designated || rng.bernoulli(config.concept_probability);
    }

    example.maps.resize(static_cast<std::size_t>(config.num_concepts));
    for (int c = 0; c < config.num_concepts; ++c) {
      auto& map = example.maps[static_cast<std::size_t>(c)];
      map.noise_seed = mix_seed(config.seed ^ mix_seed(static_cast<std::uint64_t>(e) *
                                                           static_cast<std::uint64_t>(config.num_concepts) +
                                                       static_cast<std::uint64_t>(c)));
      if (!active[static_cast<std::size_t>(c)]) continue;
      const auto [w, h] = sizes[rng.below(sizes.size())];
      const int x1 = rng.between(0, config.width - w);
      const int y1 = rng.between(0, config.height - h);
      map.planted = BoundingBox{x1, y1, x1 + w - 1, y1 + h - 1};
    }
    example.designated_concept = designated;
    example.truth = *example.maps[static_cast<std::size_t>(designated)].planted;

    const auto& candidates = words_of[static_cast<std::size_t>(designated)];
    const int word = candidates[rng.below(candidates.size())];
    example.designated_word = corpus.words[static_cast<std::size_t>(word)];

    std::vector<std::string> query{example.designated_word};
    std::vector<int> distractor_pool;
    for (int w = 0; w < config.num_words; ++w) {
      const int c = corpus.planted[static_cast<std::size_t>(w)];
      if (c < 0 || !active[static_cast<std::size_t>(c)]) distractor_pool.push_back(w);
    }
    for (int k = 0; k < config.max_distractors; ++k) {
      if (!rng.bernoulli(config.distractor_probability) || distractor_pool.empty()) continue;
      query.push_back(corpus.words[static_cast<std::size_t>(distractor_pool[rng.below(distractor_pool.size())])]);
    }
    if (rng.bernoulli(config.filler_probability)) {
      query.emplace_back(kFillerWords[rng.below(std::size(kFillerWords))]);
    }
    for (std::size_t i = query.size(); i > 1; --i) {
      std::swap(query[i - 1], query[rng.below(i)]);
    }
    for (std::size_t i = 0; i < query.size(); ++i) {
      if (i > 0) example.query += ' ';
      example.query += query[i];
    }
    example.query.front() = static_cast<char>(example.query.front() - 'a' + 'A');
    example.query += '.';

    for (int p = 0; p < config.proposals_per_image; ++p) {
      example.proposals.push_back(random_box(rng, config.width, config.height));
    }
    for (int c = 0; c < config.num_concepts; ++c) {
      if (const auto& planted = example.maps[static_cast<std::size_t>(c)].planted) {
        example.proposals.push_back(jitter(rng, *planted, config.width, config.height));
      }
    }
    corpus.examples.push_back(std::move(example));
  }
  return corpus;
}

SynthObservations observe(const SynthCorpus& corpus, const ActivationThresholds& thresholds) {
  std::vector<std::string> queries;
  queries.reserve(corpus.examples.size());
  for (const auto& example : corpus.examples) queries.push_back(example.query);

  SynthObservations observations;
  // Large enough to keep every word the generator can emit.
  observations.vocabulary =
      build_vocab(queries, corpus.words.size() + std::size(kFillerWords));
  for (const auto& example : corpus.examples) {
    observations.tokens.push_back(observations.vocabulary.tokenize(example.query));
    std::vector<ConceptActivation> activations;
    activations.reserve(corpus.concepts.size());
    for (std::size_t c = 0; c < corpus.concepts.size(); ++c) {
      activations.push_back(detect_activation(corpus.render(example, c), thresholds));
    }
    observations.activations.push_back(std::move(activations));
  }
  return observations;
}

RelevanceMatrix learn(const SynthCorpus& corpus, const SynthObservations& observations,
                      Statistic statistic) {
  CooccurrenceStats stats(observations.vocabulary.size(), corpus.concepts.size());
  std::vector<std::uint8_t> active(corpus.concepts.size());
  for (std::size_t e = 0; e < observations.tokens.size(); ++e) {
    for (std::size_t c = 0; c < active.size(); ++c) {
      active[c] = observations.activations[e][c].active ? 1 : 0;
    }
    stats.add(observations.tokens[e], active);
  }
  if (statistic == Statistic::mutual_information) {
    return build_mutual_information_matrix(stats, observations.vocabulary.tokens(), corpus.concepts);
  }
  return build_relevance_matrix(stats, observations.vocabulary.tokens(), corpus.concepts);
}

RecoveryReport recovery_report(const SynthCorpus& corpus, const RecoveryOptions& options) {
  const SynthObservations observations = observe(corpus, options.thresholds);
  RecoveryReport report;
  report.matrix = learn(corpus, observations, options.statistic);

  for (std::size_t w = 0; w < corpus.words.size(); ++w) {
    const int planted = corpus.planted[w];
    if (planted < 0) continue;
    ++report.planted_words;
    if (!report.matrix.token_index(corpus.words[w])) continue;
    const auto top = top_relevant_concepts(report.matrix, corpus.words[w], 1);
    if (top.front().concept_id == corpus.concepts[static_cast<std::size_t>(planted)]) {
      ++report.recovered_words;
    }
  }
  report.link_recovery = report.planted_words == 0
                             ? 0.0
                             : 100.0 * static_cast<double>(report.recovered_words) /
                                   static_cast<double>(report.planted_words);

  GroundingOptions grounding;
  grounding.tau = options.tau;
  grounding.thresholds = options.thresholds;
  std::vector<EvalRecord> records;
  records.reserve(corpus.examples.size());
  for (std::size_t e = 0; e < corpus.examples.size(); ++e) {
    const auto& example = corpus.examples[e];
    const GroundingResult result =
        decide(report.matrix, observations.tokens[e], observations.activations[e],
               corpus.config.width, corpus.config.height, grounding);
    records.push_back({example.id, result.box, example.truth, {}});
  }
  report.grounding = accuracy(records);
  return report;
}

}  // namespace grounding
