#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace grounding {

inline constexpr std::string_view kUnknownToken = "<UKN>";

// Lowercases ASCII letters, turns the 32 ASCII punctuation characters into
// spaces and splits on ASCII whitespace. Other bytes pass through.
std::vector<std::string> normalize_words(std::string_view text);

// Binary token activation t_s(Q), one entry per vocabulary token.
using TokenActivations = std::vector<std::uint8_t>;

class Vocabulary {
 public:
  // `words` excludes the unknown token; it is appended last.
  explicit Vocabulary(std::vector<std::string> words);

  [[nodiscard]] const std::vector<std::string>& tokens() const { return tokens_; }
  [[nodiscard]] std::size_t size() const { return tokens_.size(); }
  [[nodiscard]] std::size_t unknown_index() const { return tokens_.size() - 1; }
  [[nodiscard]] std::optional<std::size_t> index_of(std::string_view token) const;

  [[nodiscard]] TokenActivations tokenize(std::string_view query) const;

  // One token per line, <UKN> last.
  [[nodiscard]] std::string to_text() const;
  static Vocabulary from_text(std::string_view text);
  static Vocabulary from_tokens(std::span<const std::string> tokens);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Top-K words by frequency (every occurrence counts), ties at equal count in
// ascending byte order, followed by <UKN>.
Vocabulary build_vocab(std::span<const std::string> queries, std::size_t max_words);

}  // namespace grounding
