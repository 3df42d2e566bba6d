#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "grounding/box.hpp"
#include "grounding/ess.hpp"
#include "grounding/linker.hpp"
#include "grounding/scoremap.hpp"
#include "grounding/vocab.hpp"

namespace grounding {

inline constexpr double kDefaultSignificance = 0.05;

struct GroundingOptions {
  // A concept is selected only if its winning score is strictly below tau.
  double tau = kDefaultSignificance;
  ActivationThresholds thresholds;
  // Let <UKN> take part in the inner minimum.
  bool include_unknown = false;
  EssOptions ess;
};

struct Selection {
  std::optional<std::size_t> concept_index;  // empty: fall back to the whole image
  std::optional<std::size_t> token_index;
  // Best (token, concept) score among active pairs, whether or not it passed
  // tau; empty when no active pair exists.
  std::optional<double> value;

  [[nodiscard]] bool fallback() const { return !concept_index.has_value(); }
};

// argmin over active concepts of the min over active tokens of the matrix
// entry. Ties go to the earlier concept, then the earlier token.
Selection select_concept(const RelevanceMatrix& matrix, std::span<const std::uint8_t> active_tokens,
                         std::span<const std::uint8_t> active_concepts, double tau,
                         bool include_unknown = false);

struct GroundingInput {
  std::string query;
  std::string image_id;
  int width = 0;
  int height = 0;
  std::vector<ScoreMap> maps;  // one per concept, identified by ScoreMap::concept_id()
};

struct GroundingResult {
  BoundingBox box;
  std::optional<std::string> concept_id;  // empty: FALLBACK
  std::optional<std::string> token;
  std::optional<double> value;
  std::vector<ConceptActivation> activations;

  [[nodiscard]] bool fallback() const { return !concept_id.has_value(); }
  friend bool operator==(const GroundingResult&, const GroundingResult&) = default;
};

// Selection step given precomputed activations. Concepts of the matrix with no
// activation entry count as inactive; activations for unknown concepts are
// ignored.
GroundingResult decide(const RelevanceMatrix& matrix, const TokenActivations& tokens,
                       std::vector<ConceptActivation> activations, int width, int height,
                       const GroundingOptions& options = {});

GroundingResult ground(const GroundingInput& input, const RelevanceMatrix& matrix,
                       const Vocabulary& vocabulary, const GroundingOptions& options = {});

}  // namespace grounding
