#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "grounding/box.hpp"
#include "grounding/ess.hpp"
#include "grounding/eval.hpp"
#include "grounding/linker.hpp"
#include "grounding/scoremap.hpp"
#include "grounding/vocab.hpp"

namespace grounding {

// Synthetic world: concepts with planted boxes, words planted onto concepts,
// queries built from the words of one active concept plus distractors.
struct SynthConfig {
  std::uint64_t seed = 1;
  int num_concepts = 20;
  int num_words = 50;
  int num_examples = 5000;
  int width = 32;
  int height = 32;
  // planted[w] is the concept of word w, or -1 for an unplanted word. Empty
  // means word w -> concept w % num_concepts.
  std::vector<int> planted;
  // Each non-designated concept is active independently with this probability.
  double concept_probability = 0.15;
  // Up to max_distractors words whose concept is inactive are added, each with
  // this probability.
  double distractor_probability = 0.5;
  int max_distractors = 2;
  // Probability of one filler word ("the", "a", ...) in the query.
  double filler_probability = 0.5;
  // Each pixel of each map flips sign independently with this probability.
  double noise = 0.0;
  double min_box_fraction = 0.06;
  double max_box_fraction = 0.40;
  // Random proposals per image, plus one jittered copy of every planted box.
  int proposals_per_image = 10;

  // Throws InvalidInput on inconsistent settings, including a box area range
  // that no integer box satisfies.
  void validate() const;
  [[nodiscard]] std::vector<int> planted_map() const;
};

// A map is described rather than stored: the planted box (if the concept is
// active) and the seed of its per-pixel noise.
struct SynthMap {
  std::optional<BoundingBox> planted;
  std::uint64_t noise_seed = 0;
};

struct SynthExample {
  std::string id;
  std::string query;
  std::vector<SynthMap> maps;  // one per concept
  BoundingBox truth;
  int designated_concept = 0;
  std::string designated_word;
  std::vector<BoundingBox> proposals;
};

struct SynthCorpus {
  SynthConfig config;
  std::vector<std::string> concepts;
  std::vector<std::string> words;
  std::vector<int> planted;  // word index -> concept index or -1
  std::vector<SynthExample> examples;

  [[nodiscard]] ScoreMap render(const SynthExample& example, std::size_t concept_index) const;
};

SynthCorpus generate(const SynthConfig& config);

inline constexpr const char* kFillerWords[] = {"the", "a", "of", "on", "at"};

struct RecoveryOptions {
  ActivationThresholds thresholds;
  double tau = 0.05;
  Statistic statistic = Statistic::hypothesis_test;
};

struct RecoveryReport {
  std::size_t planted_words = 0;
  std::size_t recovered_words = 0;
  double link_recovery = 0.0;  // percent
  AccuracyReport grounding;
  RelevanceMatrix matrix;
};

// Per-example observations on a synthetic corpus: the vocabulary built from
// all queries, each query's token activations and each map's activation.
struct SynthObservations {
  Vocabulary vocabulary{std::vector<std::string>{}};
  std::vector<TokenActivations> tokens;
  std::vector<std::vector<ConceptActivation>> activations;
};

SynthObservations observe(const SynthCorpus& corpus, const ActivationThresholds& thresholds = {});

RelevanceMatrix learn(const SynthCorpus& corpus, const SynthObservations& observations,
                      Statistic statistic = Statistic::hypothesis_test);

// Trains on the corpus, then reports the share of planted words whose most
// relevant concept is the planted one and the IoU > 0.5 grounding accuracy.
RecoveryReport recovery_report(const SynthCorpus& corpus, const RecoveryOptions& options = {});

}  // namespace grounding
