#include "qdex/core/text.h"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <cstdint>

#include "qdex/core/errors.h"

namespace qdex {
namespace {

const icu::Normalizer2& nfkc() {
  static const icu::Normalizer2* instance = [] {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* n = icu::Normalizer2::getNFKCInstance(status);
    if (U_FAILURE(status) || n == nullptr) {
      throw Error(ErrorCode::kIo, "ICU NFKC normalizer unavailable");
    }
    return n;
  }();
  return *instance;
}

struct CodePoint {
  UChar32 cp;
  std::size_t begin;
  std::size_t end;
};

std::vector<CodePoint> decode(std::string_view s) {
  std::vector<CodePoint> out;
  out.reserve(s.size());
  const auto* bytes = reinterpret_cast<const uint8_t*>(s.data());
  const auto length = static_cast<int32_t>(s.size());
  int32_t i = 0;
  while (i < length) {
    const int32_t start = i;
    UChar32 c;
    U8_NEXT(bytes, i, length, c);
    if (c < 0) c = 0xFFFD;
    out.push_back({c, static_cast<std::size_t>(start), static_cast<std::size_t>(i)});
  }
  return out;
}

UChar32 fold_punctuation(UChar32 c) {
  switch (c) {
    case 0x2018: case 0x2019: case 0x201A: case 0x201B:
    case 0x2032: case 0x2035: case 0xFF07:
      return '\'';
    case 0x201C: case 0x201D: case 0x201E: case 0x201F:
    case 0x2033: case 0x2036: case 0xFF02:
      return '"';
    case 0x2212:  // minus sign
    case 0x2043:  // hyphen bullet
    case 0xFE63: case 0xFF0D:
      return '-';
    default:
      break;
  }
  if (u_charType(c) == U_DASH_PUNCTUATION) return '-';
  return c;
}

UChar32 map_code_point(UChar32 c) { return u_tolower(fold_punctuation(c)); }

void append_utf8(std::string& out, UChar32 c) {
  char buf[U8_MAX_LENGTH];
  int32_t n = 0;
  UBool error = false;
  U8_APPEND(reinterpret_cast<uint8_t*>(buf), n, U8_MAX_LENGTH, c, error);
  if (error) {
    out += "\xEF\xBF\xBD";
    return;
  }
  out.append(buf, static_cast<std::size_t>(n));
}

// Normalizes one NFKC segment: compose, map, compose again. The second pass
// keeps the result stable when lower-casing exposes a new composition.
void normalize_segment(const icu::UnicodeString& segment, std::vector<UChar32>& out) {
  UErrorCode status = U_ZERO_ERROR;
  icu::UnicodeString composed = nfkc().normalize(segment, status);
  if (U_FAILURE(status)) throw Error(ErrorCode::kIo, "NFKC normalization failed");
  icu::UnicodeString mapped;
  for (int32_t i = 0; i < composed.length();) {
    const UChar32 c = composed.char32At(i);
    mapped.append(map_code_point(c));
    i += U16_LENGTH(c);
  }
  icu::UnicodeString recomposed = nfkc().normalize(mapped, status);
  if (U_FAILURE(status)) throw Error(ErrorCode::kIo, "NFKC normalization failed");
  for (int32_t i = 0; i < recomposed.length();) {
    const UChar32 c = recomposed.char32At(i);
    out.push_back(map_code_point(c));
    i += U16_LENGTH(c);
  }
}

bool is_space(UChar32 c) { return u_isUWhiteSpace(c); }

// Shared core of normalize / NormalizedText. `on_emit` receives each output
// byte run and its source range; pass a no-op when offsets are not needed.
template <typename OnEmit>
std::string normalize_impl(std::string_view original, OnEmit&& on_emit) {
  const std::vector<CodePoint> cps = decode(original);
  const icu::Normalizer2& norm = nfkc();

  std::string out;
  out.reserve(original.size());
  bool pending_space = false;
  std::size_t space_begin = 0;
  std::size_t space_end = 0;

  auto emit = [&](UChar32 c, std::size_t begin, std::size_t end) {
    if (is_space(c)) {
      if (!pending_space) {
        space_begin = begin;
        space_end = end;
      }
      pending_space = true;
      return;
    }
    if (pending_space && !out.empty()) {
      out.push_back(' ');
      on_emit(1, space_begin, space_end);
    }
    pending_space = false;
    const std::size_t before = out.size();
    append_utf8(out, c);
    on_emit(out.size() - before, begin, end);
  };

  std::vector<UChar32> buffer;
  std::size_t i = 0;
  while (i < cps.size()) {
    std::size_t j = i + 1;
    while (j < cps.size() && !norm.hasBoundaryBefore(cps[j].cp)) ++j;
    const std::size_t begin = cps[i].begin;
    const std::size_t end = cps[j - 1].end;
    if (j == i + 1 && cps[i].cp < 0x80) {
      const UChar32 mapped = map_code_point(cps[i].cp);
      emit(mapped, begin, end);
    } else {
      icu::UnicodeString segment;
      for (std::size_t k = i; k < j; ++k) segment.append(cps[k].cp);
      buffer.clear();
      normalize_segment(segment, buffer);
      for (UChar32 c : buffer) emit(c, begin, end);
    }
    i = j;
  }
  return out;
}

std::string strip_punctuation(const std::string& normalized) {
  std::string out;
  out.reserve(normalized.size());
  bool pending_space = false;
  for (const CodePoint& cp : decode(normalized)) {
    if (u_ispunct(cp.cp)) continue;
    if (cp.cp == ' ') {
      pending_space = true;
      continue;
    }
    if (pending_space && !out.empty()) out.push_back(' ');
    pending_space = false;
    append_utf8(out, cp.cp);
  }
  return out;
}

}  // namespace

std::string normalize(std::string_view text) {
  return normalize_impl(text, [](std::size_t, std::size_t, std::size_t) {});
}

std::string normalize_name(std::string_view name) {
  // Dropping punctuation can bring a base letter next to a combining mark, so
  // iterate until stable (at most a couple of rounds in practice).
  std::string current = strip_punctuation(normalize(name));
  for (int round = 0; round < 8; ++round) {
    std::string next = strip_punctuation(normalize(current));
    if (next == current) break;
    current = std::move(next);
  }
  if (current.empty()) {
    throw Error(ErrorCode::kUnusableName,
                "name '" + std::string(name) + "' is empty after normalization");
  }
  return current;
}

NormalizedText::NormalizedText(std::string_view original) {
  text_ = normalize_impl(original, [this](std::size_t count, std::size_t begin,
                                          std::size_t end) {
    src_begin_.insert(src_begin_.end(), count, begin);
    src_end_.insert(src_end_.end(), count, end);
  });
}

std::pair<std::size_t, std::size_t> NormalizedText::original_range(std::size_t begin,
                                                                   std::size_t end) const {
  if (begin >= end || end > text_.size()) {
    throw Error(ErrorCode::kInvalidArgument, "normalized range out of bounds");
  }
  return {src_begin_[begin], src_end_[end - 1]};
}

std::string_view utf8_prefix(std::string_view text, std::size_t max_bytes) {
  if (text.size() <= max_bytes) return text;
  std::size_t cut = max_bytes;
  // Step back over continuation bytes so the cut lands on a lead byte.
  while (cut > 0 && (static_cast<unsigned char>(text[cut]) & 0xC0) == 0x80) --cut;
  return text.substr(0, cut);
}

}  // namespace qdex
