#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "grounding/vocab.hpp"

namespace grounding {

// Exact co-occurrence counters over a corpus of (query, image) pairs:
//   examples        |D|
//   token_count     N(s)   = sum over queries of t_s
//   concept_count   N(c)   = sum over images of a_c
//   pair_count      N(s,c) = sum of a_c * t_s
class CooccurrenceStats {
 public:
  CooccurrenceStats() = default;
  CooccurrenceStats(std::size_t num_tokens, std::size_t num_concepts);

  // Validates 0 <= N(s,c) <= min(N(s), N(c)) and N(s), N(c) <= D.
  static CooccurrenceStats from_counts(std::uint64_t examples, std::vector<std::uint64_t> tokens,
                                       std::vector<std::uint64_t> concepts,
                                       std::vector<std::uint64_t> pairs);

  void add(std::span<const std::uint8_t> token_active, std::span<const std::uint8_t> concept_active);
  void merge(const CooccurrenceStats& other);

  [[nodiscard]] std::size_t num_tokens() const { return token_counts_.size(); }
  [[nodiscard]] std::size_t num_concepts() const { return concept_counts_.size(); }
  [[nodiscard]] std::uint64_t examples() const { return examples_; }
  [[nodiscard]] std::uint64_t token_count(std::size_t s) const { return token_counts_.at(s); }
  [[nodiscard]] std::uint64_t concept_count(std::size_t c) const { return concept_counts_.at(c); }
  [[nodiscard]] std::uint64_t pair_count(std::size_t s, std::size_t c) const {
    return pair_counts_.at(s * num_concepts() + c);
  }

  [[nodiscard]] const std::vector<std::uint64_t>& token_counts() const { return token_counts_; }
  [[nodiscard]] const std::vector<std::uint64_t>& concept_counts() const { return concept_counts_; }
  [[nodiscard]] const std::vector<std::uint64_t>& pair_counts() const { return pair_counts_; }

  friend bool operator==(const CooccurrenceStats&, const CooccurrenceStats&) = default;

 private:
  std::uint64_t examples_ = 0;
  std::vector<std::uint64_t> token_counts_;
  std::vector<std::uint64_t> concept_counts_;
  std::vector<std::uint64_t> pair_counts_;
};

struct ObservedExample {
  TokenActivations tokens;
  std::vector<std::uint8_t> concepts;
};

CooccurrenceStats accumulate(std::span<const ObservedExample> examples, std::size_t num_tokens,
                             std::size_t num_concepts);

double erf(double x);
double erfc(double x);

// P(n > observed) for n ~ Bin(trials, p) under the normal approximation with
// continuity correction: 1/2 - 1/2 erf((observed + 1/2 - mu) / (sigma sqrt 2)),
// mu = trials p, sigma^2 = trials p (1 - p). Returns 1.0 when trials == 0 or
// p is 0 or 1.
double normal_tail_probability(std::uint64_t trials, double p, std::uint64_t observed);

// Same tail summed exactly in log space. Refuses more than 1e5 trials.
double exact_tail_probability(std::uint64_t trials, double p, std::uint64_t observed);

inline constexpr std::uint64_t kExactTailTrialLimit = 100000;

// E(s,c) with p = N(c) / |D|.
double relevance(const CooccurrenceStats& stats, std::size_t s, std::size_t c);
double exact_binomial_tail(const CooccurrenceStats& stats, std::size_t s, std::size_t c);

// Plug-in mutual information between t_s and a_c in nats.
double mutual_information(const CooccurrenceStats& stats, std::size_t s, std::size_t c);

enum class Statistic { hypothesis_test, mutual_information };

std::string_view to_string(Statistic statistic);
Statistic statistic_from_string(std::string_view name);

// Token x concept score matrix; lower means more relevant. For the
// hypothesis test the entries are E(s,c) in [0,1]; for the mutual-information
// baseline they are -I(t_s; a_c).
struct RelevanceMatrix {
  std::vector<std::string> tokens;
  std::vector<std::string> concepts;
  std::vector<double> values;  // row-major, tokens x concepts
  CooccurrenceStats stats;
  Statistic statistic = Statistic::hypothesis_test;

  [[nodiscard]] double at(std::size_t s, std::size_t c) const {
    return values[s * concepts.size() + c];
  }
  [[nodiscard]] std::optional<std::size_t> token_index(std::string_view token) const;
  [[nodiscard]] std::optional<std::size_t> concept_index(std::string_view concept_id) const;
};

RelevanceMatrix build_relevance_matrix(const CooccurrenceStats& stats,
                                       std::vector<std::string> tokens,
                                       std::vector<std::string> concepts);

RelevanceMatrix build_mutual_information_matrix(const CooccurrenceStats& stats,
                                                std::vector<std::string> tokens,
                                                std::vector<std::string> concepts);

// Euclidean distance between the rows of two tokens.
double word_embedding_distance(const RelevanceMatrix& matrix, std::string_view a,
                               std::string_view b);

struct RankedConcept {
  std::string concept_id;
  double value = 0.0;
};

// Concepts by ascending score, ties in concept-list order, at most k entries.
std::vector<RankedConcept> top_relevant_concepts(const RelevanceMatrix& matrix,
                                                 std::string_view token, std::size_t k);

}  // namespace grounding
