#include "grounding/linker.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "grounding/error.hpp"

namespace grounding {

CooccurrenceStats::CooccurrenceStats(std::size_t num_tokens, std::size_t num_concepts)
    : token_counts_(num_tokens, 0),
      concept_counts_(num_concepts, 0),
      pair_counts_(num_tokens * num_concepts, 0) {}

CooccurrenceStats CooccurrenceStats::from_counts(std::uint64_t examples,
                                                 std::vector<std::uint64_t> tokens,
                                                 std::vector<std::uint64_t> concepts,
                                                 std::vector<std::uint64_t> pairs) {
  if (pairs.size() != tokens.size() * concepts.size()) {
    throw InvalidInput("pair count table has " + std::to_string(pairs.size()) +
                       " entries, expected " + std::to_string(tokens.size() * concepts.size()));
  }
  for (auto n : tokens) {
    if (n > examples) throw InvalidInput("token count exceeds the number of examples");
  }
  for (auto n : concepts) {
    if (n > examples) throw InvalidInput("concept count exceeds the number of examples");
  }
  for (std::size_t s = 0; s < tokens.size(); ++s) {
    for (std::size_t c = 0; c < concepts.size(); ++c) {
      if (pairs[s * concepts.size() + c] > std::min(tokens[s], concepts[c])) {
        throw InvalidInput("pair count exceeds its token or concept count");
      }
    }
  }
  CooccurrenceStats stats;
  stats.examples_ = examples;
  stats.token_counts_ = std::move(tokens);
  stats.concept_counts_ = std::move(concepts);
  stats.pair_counts_ = std::move(pairs);
  return stats;
}

void CooccurrenceStats::add(std::span<const std::uint8_t> token_active,
                            std::span<const std::uint8_t> concept_active) {
  if (token_active.size() != num_tokens() || concept_active.size() != num_concepts()) {
    throw InvalidInput("example has " + std::to_string(token_active.size()) + " tokens and " +
                       std::to_string(concept_active.size()) + " concepts, expected " +
                       std::to_string(num_tokens()) + " and " + std::to_string(num_concepts()));
  }
  ++examples_;
  for (std::size_t c = 0; c < num_concepts(); ++c) concept_counts_[c] += concept_active[c] ? 1 : 0;
  for (std::size_t s = 0; s < num_tokens(); ++s) {
    if (!token_active[s]) continue;
    ++token_counts_[s];
    auto row = pair_counts_.begin() + static_cast<std::ptrdiff_t>(s * num_concepts());
    for (std::size_t c = 0; c < num_concepts(); ++c) row[static_cast<std::ptrdiff_t>(c)] += concept_active[c] ? 1 : 0;
  }
}

void CooccurrenceStats::merge(const CooccurrenceStats& other) {
  if (other.num_tokens() != num_tokens() || other.num_concepts() != num_concepts()) {
    throw InvalidInput("cannot merge statistics with different dimensions");
  }
  examples_ += other.examples_;
  auto add_into = [](std::vector<std::uint64_t>& into, const std::vector<std::uint64_t>& from) {
    std::transform(into.begin(), into.end(), from.begin(), into.begin(), std::plus<>{});
  };
  add_into(token_counts_, other.token_counts_);
  add_into(concept_counts_, other.concept_counts_);
  add_into(pair_counts_, other.pair_counts_);
}

CooccurrenceStats accumulate(std::span<const ObservedExample> examples, std::size_t num_tokens,
                             std::size_t num_concepts) {
  CooccurrenceStats stats(num_tokens, num_concepts);
  for (const auto& example : examples) stats.add(example.tokens, example.concepts);
  return stats;
}

// std::erf / std::erfc are accurate to a few ulp; the acceptance suite checks
// them against an independent series / continued-fraction evaluation.
double erf(double x) { return std::erf(x); }
double erfc(double x) { return std::erfc(x); }

namespace {

bool degenerate(std::uint64_t trials, double p) { return trials == 0 || !(p > 0.0 && p < 1.0); }

}  // namespace

double normal_tail_probability(std::uint64_t trials, double p, std::uint64_t observed) {
  if (degenerate(trials, p)) return 1.0;
  const double n = static_cast<double>(trials);
  const double mu = n * p;
  const double sigma = std::sqrt(n * p * (1.0 - p));
  const double z = (static_cast<double>(observed) + 0.5 - mu) / (sigma * std::sqrt(2.0));
  // 1/2 - 1/2 erf(z), written via erfc to keep precision in the upper tail.
  return std::clamp(0.5 * erfc(z), 0.0, 1.0);
}

double exact_tail_probability(std::uint64_t trials, double p, std::uint64_t observed) {
  if (trials > kExactTailTrialLimit) {
    throw GuardExceeded("exact binomial tail refuses " + std::to_string(trials) +
                        " trials (limit " + std::to_string(kExactTailTrialLimit) + ")");
  }
  if (degenerate(trials, p)) return 1.0;
  if (observed >= trials) return 0.0;

  const long double n = static_cast<long double>(trials);
  const long double log_p = std::log(static_cast<long double>(p));
  const long double log_q = std::log1p(-static_cast<long double>(p));
  const long double log_n_factorial = std::lgamma(n + 1.0L);
  long double sum = 0.0L;
  // Summed from the far tail inwards so small terms are not swamped.
  for (std::uint64_t k = trials; k > observed; --k) {
    const long double kk = static_cast<long double>(k);
    const long double log_term = log_n_factorial - std::lgamma(kk + 1.0L) -
                                 std::lgamma(n - kk + 1.0L) + kk * log_p + (n - kk) * log_q;
    sum += std::exp(log_term);
  }
  return std::clamp(static_cast<double>(sum), 0.0, 1.0);
}

namespace {

double concept_rate(const CooccurrenceStats& stats, std::size_t c) {
  if (stats.examples() == 0) return 0.0;
  return static_cast<double>(stats.concept_count(c)) / static_cast<double>(stats.examples());
}

}  // namespace

double relevance(const CooccurrenceStats& stats, std::size_t s, std::size_t c) {
  return normal_tail_probability(stats.token_count(s), concept_rate(stats, c), stats.pair_count(s, c));
}

double exact_binomial_tail(const CooccurrenceStats& stats, std::size_t s, std::size_t c) {
  return exact_tail_probability(stats.token_count(s), concept_rate(stats, c), stats.pair_count(s, c));
}

double mutual_information(const CooccurrenceStats& stats, std::size_t s, std::size_t c) {
  const auto total = stats.examples();
  if (total == 0) return 0.0;
  const double d = static_cast<double>(total);
  const double n_s = static_cast<double>(stats.token_count(s));
  const double n_c = static_cast<double>(stats.concept_count(c));
  const double n_sc = static_cast<double>(stats.pair_count(s, c));

  // joint[u][v] = P(t_s = u, a_c = v)
  const double joint[2][2] = {{(d - n_s - n_c + n_sc) / d, (n_c - n_sc) / d},
                              {(n_s - n_sc) / d, n_sc / d}};
  const double token_marginal[2] = {1.0 - n_s / d, n_s / d};
  const double concept_marginal[2] = {1.0 - n_c / d, n_c / d};

  double info = 0.0;
  for (int u = 0; u < 2; ++u) {
    for (int v = 0; v < 2; ++v) {
      const double pj = joint[u][v];
      if (pj <= 0.0) continue;
      info += pj * std::log(pj / (token_marginal[u] * concept_marginal[v]));
    }
  }
  return std::max(info, 0.0);
}

std::string_view to_string(Statistic statistic) {
  switch (statistic) {
    case Statistic::hypothesis_test:
      return "hypothesis_test";
    case Statistic::mutual_information:
      return "mutual_information";
  }
  return "unknown";
}

Statistic statistic_from_string(std::string_view name) {
  if (name == "hypothesis_test") return Statistic::hypothesis_test;
  if (name == "mutual_information") return Statistic::mutual_information;
  throw InvalidInput("unknown statistic '" + std::string(name) + "'");
}

std::optional<std::size_t> RelevanceMatrix::token_index(std::string_view token) const {
  const auto it = std::find(tokens.begin(), tokens.end(), token);
  if (it == tokens.end()) return std::nullopt;
  return static_cast<std::size_t>(it - tokens.begin());
}

std::optional<std::size_t> RelevanceMatrix::concept_index(std::string_view concept_id) const {
  const auto it = std::find(concepts.begin(), concepts.end(), concept_id);
  if (it == concepts.end()) return std::nullopt;
  return static_cast<std::size_t>(it - concepts.begin());
}

namespace {

template <typename Score>
RelevanceMatrix build_matrix(const CooccurrenceStats& stats, std::vector<std::string> tokens,
                             std::vector<std::string> concepts, Statistic statistic, Score score) {
  if (tokens.size() != stats.num_tokens() || concepts.size() != stats.num_concepts()) {
    throw InvalidInput("token/concept lists do not match the statistics dimensions");
  }
  RelevanceMatrix matrix;
  matrix.values.resize(tokens.size() * concepts.size());
  for (std::size_t s = 0; s < tokens.size(); ++s) {
    for (std::size_t c = 0; c < concepts.size(); ++c) {
      matrix.values[s * concepts.size() + c] = score(stats, s, c);
    }
  }
  matrix.tokens = std::move(tokens);
  matrix.concepts = std::move(concepts);
  matrix.stats = stats;
  matrix.statistic = statistic;
  return matrix;
}

}  // namespace

RelevanceMatrix build_relevance_matrix(const CooccurrenceStats& stats,
                                       std::vector<std::string> tokens,
                                       std::vector<std::string> concepts) {
  return build_matrix(stats, std::move(tokens), std::move(concepts), Statistic::hypothesis_test,
                      relevance);
}

RelevanceMatrix build_mutual_information_matrix(const CooccurrenceStats& stats,
                                                std::vector<std::string> tokens,
                                                std::vector<std::string> concepts) {
  return build_matrix(stats, std::move(tokens), std::move(concepts),
                      Statistic::mutual_information,
                      [](const CooccurrenceStats& st, std::size_t s, std::size_t c) {
                        return -mutual_information(st, s, c);
                      });
}

namespace {

std::size_t require_token(const RelevanceMatrix& matrix, std::string_view token) {
  const auto index = matrix.token_index(token);
  if (!index) throw InvalidInput("unknown token '" + std::string(token) + "'");
  return *index;
}

}  // namespace

double word_embedding_distance(const RelevanceMatrix& matrix, std::string_view a,
                               std::string_view b) {
  const auto sa = require_token(matrix, a);
  const auto sb = require_token(matrix, b);
  double sum = 0.0;
  for (std::size_t c = 0; c < matrix.concepts.size(); ++c) {
    const double diff = matrix.at(sa, c) - matrix.at(sb, c);
    sum += diff * diff;
  }
  return std::sqrt(sum);
}

std::vector<RankedConcept> top_relevant_concepts(const RelevanceMatrix& matrix,
                                                 std::string_view token, std::size_t k) {
  if (k < 1) throw InvalidInput("top-k needs k >= 1");
  const auto s = require_token(matrix, token);
  std::vector<std::size_t> order(matrix.concepts.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return matrix.at(s, a) < matrix.at(s, b);
  });
  order.resize(std::min(k, order.size()));
  std::vector<RankedConcept> ranked;
  ranked.reserve(order.size());
  for (auto c : order) ranked.push_back({matrix.concepts[c], matrix.at(s, c)});
  return ranked;
}

}  // namespace grounding
