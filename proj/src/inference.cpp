#include "grounding/inference.hpp"

#include <algorithm>

#include "grounding/error.hpp"

namespace grounding {

Selection select_concept(const RelevanceMatrix& matrix, std::span<const std::uint8_t> active_tokens,
                         std::span<const std::uint8_t> active_concepts, double tau,
                         bool include_unknown) {
  if (active_tokens.size() != matrix.tokens.size() ||
      active_concepts.size() != matrix.concepts.size()) {
    throw InvalidInput("activation vectors do not match the relevance matrix (" +
                       std::to_string(active_tokens.size()) + "x" +
                       std::to_string(active_concepts.size()) + " vs " +
                       std::to_string(matrix.tokens.size()) + "x" +
                       std::to_string(matrix.concepts.size()) + ")");
  }
  const auto unknown = matrix.token_index(kUnknownToken);

  Selection best;
  std::size_t best_concept = 0;
  std::size_t best_token = 0;
  for (std::size_t c = 0; c < matrix.concepts.size(); ++c) {
    if (!active_concepts[c]) continue;
    for (std::size_t s = 0; s < matrix.tokens.size(); ++s) {
      if (!active_tokens[s]) continue;
      if (!include_unknown && unknown && s == *unknown) continue;
      const double value = matrix.at(s, c);
      if (!best.value || value < *best.value) {
        best.value = value;
        best_concept = c;
        best_token = s;
      }
    }
  }
  if (best.value && *best.value < tau) {
    best.concept_index = best_concept;
    best.token_index = best_token;
  }
  return best;
}

GroundingResult decide(const RelevanceMatrix& matrix, const TokenActivations& tokens,
                       std::vector<ConceptActivation> activations, int width, int height,
                       const GroundingOptions& options) {
  std::vector<std::uint8_t> active(matrix.concepts.size(), 0);
  std::vector<const ConceptActivation*> by_concept(matrix.concepts.size(), nullptr);
  for (const auto& activation : activations) {
    if (!activation.box.fits(width, height)) {
      throw InvalidInput("activation box " + to_string(activation.box) + " for concept '" +
                         activation.concept_id + "' is outside the image");
    }
    if (const auto c = matrix.concept_index(activation.concept_id)) {
      by_concept[*c] = &activation;
      active[*c] = activation.active ? 1 : 0;
    }
  }

  const Selection selection =
      select_concept(matrix, tokens, active, options.tau, options.include_unknown);

  GroundingResult result;
  result.box = whole_image_box(width, height);
  if (!selection.fallback()) {
    result.box = by_concept[*selection.concept_index]->box;
    result.concept_id = matrix.concepts[*selection.concept_index];
    result.token = matrix.tokens[*selection.token_index];
    result.value = selection.value;
  }
  result.activations = std::move(activations);
  return result;
}

GroundingResult ground(const GroundingInput& input, const RelevanceMatrix& matrix,
                       const Vocabulary& vocabulary, const GroundingOptions& options) {
  if (vocabulary.tokens() != matrix.tokens) {
    throw InvalidInput("vocabulary does not match the relevance matrix token list");
  }
  if (input.width < 1 || input.height < 1) {
    throw InvalidInput("image '" + input.image_id + "' has invalid dimensions");
  }
  std::vector<ConceptActivation> activations;
  activations.reserve(input.maps.size());
  for (const auto& map : input.maps) {
    if (map.width() != input.width || map.height() != input.height) {
      throw InvalidInput("score map '" + map.concept_id() + "' is " + std::to_string(map.width()) +
                         "x" + std::to_string(map.height()) + " but image '" + input.image_id +
                         "' is " + std::to_string(input.width) + "x" +
                         std::to_string(input.height));
    }
    activations.push_back(detect_activation(map, options.thresholds, options.ess));
  }
  return decide(matrix, vocabulary.tokenize(input.query), std::move(activations), input.width,
                input.height, options);
}

}  // namespace grounding
