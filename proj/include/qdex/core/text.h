#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace qdex {

// Canonical text form used for evidence matching and name keys:
// NFKC, curly quotes to straight, dash variants to '-', whitespace runs
// collapsed to one space, trimmed, lower-cased. Idempotent.
std::string normalize(std::string_view text);

// normalize() with all punctuation removed (and whitespace re-collapsed).
// Throws Error(kUnusableName) when nothing is left.
std::string normalize_name(std::string_view name);

// Normalized text that remembers where each output byte came from, so that a
// match in normalized space can be mapped back onto the original bytes.
class NormalizedText {
 public:
  explicit NormalizedText(std::string_view original);

  const std::string& text() const { return text_; }

  // Byte range in the original text covering normalized bytes [begin, end).
  // Requires begin < end <= text().size().
  std::pair<std::size_t, std::size_t> original_range(std::size_t begin,
                                                     std::size_t end) const;

 private:
  std::string text_;
  std::vector<std::size_t> src_begin_;
  std::vector<std::size_t> src_end_;
};

// Largest prefix of `text` not longer than max_bytes that ends on a UTF-8
// code point boundary.
std::string_view utf8_prefix(std::string_view text, std::size_t max_bytes);

}  // namespace qdex
