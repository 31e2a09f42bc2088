#include "qdex/extraction/evidence.h"

#include <map>

#include "qdex/core/errors.h"

namespace qdex::extraction {

GroundedDocument::GroundedDocument(const Document& doc) : doc_(&doc), norm_(doc.text) {}

bool GroundedDocument::holds(const Evidence& ev) const {
  if (ev.doc_id != doc_->doc_id) {
    throw Error(ErrorCode::kInvalidArgument,
                "evidence for '" + ev.doc_id + "' checked against document '" + doc_->doc_id + "'");
  }
  const std::string quote = normalize(ev.quote);
  if (quote.empty()) return false;
  if (norm_.text().find(quote) == std::string::npos) return false;
  if (ev.char_span) {
    const CharSpan& s = *ev.char_span;
    if (s.begin >= s.end || s.end > doc_->text.size()) return false;
    if (normalize(std::string_view(doc_->text).substr(s.begin, s.end - s.begin)) != quote) return false;
  }
  return true;
}

bool GroundedDocument::validate(Evidence& ev) const {
  if (!holds(ev)) return false;
  if (!ev.char_span) {
    const std::string quote = normalize(ev.quote);
    const std::size_t at = norm_.text().find(quote);
    const auto [b, e] = norm_.original_range(at, at + quote.size());
    // A match that starts or ends inside one character's expansion (a
    // ligature, say) has no exact original span; leave it unset.
    if (normalize(std::string_view(doc_->text).substr(b, e - b)) == quote) ev.char_span = CharSpan{b, e};
  }
  return true;
}

bool validate_evidence(Evidence& ev, const Document& doc) { return GroundedDocument(doc).validate(ev); }

std::vector<std::string> audit_table(const Table& table, std::span<const Document> docs) {
  std::map<std::string, GroundedDocument> grounded;
  for (const Document& d : docs) grounded.emplace(d.doc_id, GroundedDocument(d));

  std::vector<std::string> problems;
  for (const Row& row : table.rows) {
    for (const auto& [field, cell] : row.cells) {
      if (cell.status != CellStatus::kFilled || cell.origin == CellOrigin::kHuman) continue;
      const std::string where = row.instance.display_name + " / " + field;
      if (cell.evidence.empty()) problems.push_back(where + ": filled without evidence");
      for (const Evidence& ev : cell.evidence) {
        const auto it = grounded.find(ev.doc_id);
        if (it == grounded.end()) {
          problems.push_back(where + ": evidence cites unknown document '" + ev.doc_id + "'");
        } else if (!it->second.holds(ev)) {
          problems.push_back(where + ": quote not found in '" + ev.doc_id + "': " + ev.quote);
        }
      }
    }
  }
  return problems;
}

}  // namespace qdex::extraction
