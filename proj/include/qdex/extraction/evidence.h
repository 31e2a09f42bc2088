#pragma once

// Strict evidence rule: a quote counts only if, after normalize(), it is a
// non-empty substring of the normalized document text.

#include <span>
#include <string>
#include <vector>

#include "qdex/core/model.h"
#include "qdex/core/text.h"

namespace qdex::extraction {

// A document with its normalized text computed once, for repeated checks.
class GroundedDocument {
 public:
  explicit GroundedDocument(const Document& doc);

  const Document& document() const { return *doc_; }

  // See validate_evidence.
  bool validate(Evidence& ev) const;
  // Same test without touching the evidence.
  bool holds(const Evidence& ev) const;

 private:
  const Document* doc_;
  NormalizedText norm_;
};

// True iff normalize(ev.quote) is a non-empty substring of normalize(doc.text)
// and, when a char_span is given, the span lies on the document and
// normalizes to the quote. On success an absent char_span is filled with the
// first match, in original byte offsets. Throws kInvalidArgument when
// ev.doc_id names another document.
bool validate_evidence(Evidence& ev, const Document& doc);

// Re-checks a finished table: every filled machine-origin cell must have at
// least one evidence entry and each entry must validate against its document.
// Returns one message per violation.
std::vector<std::string> audit_table(const Table& table, std::span<const Document> docs);

}  // namespace qdex::extraction
