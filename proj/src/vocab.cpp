#include "grounding/vocab.hpp"

#include <algorithm>
#include <map>

#include "grounding/error.hpp"

namespace grounding {

namespace {

bool is_ascii_punct(unsigned char c) {
  return (c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) ||
         (c >= 123 && c <= 126);
}

bool is_ascii_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\v' || c == '\f' || c == '\r';
}

}  // namespace

std::vector<std::string> normalize_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (is_ascii_punct(c) || is_ascii_space(c)) {
      if (!current.empty()) words.push_back(std::move(current));
      current.clear();
      continue;
    }
    if (c >= 'A' && c <= 'Z') c = static_cast<unsigned char>(c - 'A' + 'a');
    current.push_back(static_cast<char>(c));
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

Vocabulary::Vocabulary(std::vector<std::string> words) : tokens_(std::move(words)) {
  tokens_.emplace_back(kUnknownToken);
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const auto& token = tokens_[i];
    if (i + 1 < tokens_.size()) {
      const auto normalized = normalize_words(token);
      if (normalized.size() != 1 || normalized.front() != token) {
        throw InvalidInput("vocabulary token '" + token + "' is not a normalized word");
      }
    }
    if (!index_.emplace(token, i).second) {
      throw InvalidInput("duplicate vocabulary token '" + token + "'");
    }
  }
}

std::optional<std::size_t> Vocabulary::index_of(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenActivations Vocabulary::tokenize(std::string_view query) const {
  TokenActivations active(tokens_.size(), 0);
  for (const auto& word : normalize_words(query)) {
    const auto it = index_.find(word);
    active[it == index_.end() ? unknown_index() : it->second] = 1;
  }
  return active;
}

std::string Vocabulary::to_text() const {
  std::string out;
  for (const auto& token : tokens_) {
    out += token;
    out += '\n';
  }
  return out;
}

Vocabulary Vocabulary::from_tokens(std::span<const std::string> tokens) {
  if (tokens.empty() || tokens.back() != kUnknownToken) {
    throw InvalidInput("vocabulary must end with " + std::string(kUnknownToken));
  }
  return Vocabulary(std::vector<std::string>(tokens.begin(), tokens.end() - 1));
}

Vocabulary Vocabulary::from_text(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    tokens.emplace_back(text.substr(start, end - start));
    start = end + 1;
  }
  return from_tokens(tokens);
}

Vocabulary build_vocab(std::span<const std::string> queries, std::size_t max_words) {
  if (queries.empty()) throw InvalidInput("cannot build a vocabulary from an empty corpus");
  if (max_words < 1) throw InvalidInput("vocabulary size must be at least 1");

  std::map<std::string, std::uint64_t> counts;
  for (const auto& query : queries) {
    for (auto& word : normalize_words(query)) ++counts[std::move(word)];
  }
  std::vector<std::pair<std::string, std::uint64_t>> ranked(counts.begin(), counts.end());
  // `counts` is already in ascending byte order, so a stable sort on count
  // alone keeps the lexicographic tie-break.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > max_words) ranked.resize(max_words);

  std::vector<std::string> words;
  words.reserve(ranked.size());
  for (auto& [word, count] : ranked) words.push_back(std::move(word));
  return Vocabulary(std::move(words));
}

}  // namespace grounding
