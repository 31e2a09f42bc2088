#pragma once

#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "qdex/core/model.h"

namespace qdex::extraction {

enum class ParseOutcome {
  kOk,
  kAbsent,   // null, empty, or a "not stated" style answer
  kInvalid,  // does not fit the field's value kind
};

struct ParsedValue {
  ParseOutcome outcome = ParseOutcome::kAbsent;
  Value value;
  std::string note;  // reason for kInvalid, or a warning for kOk
};

// Coerces a model-supplied JSON value to the field's kind.
//  number: JSON number or a plain decimal string ("1.5e3"), locale-free
//  date: ISO output when unambiguous, otherwise the text kept with a note
//  enum: matched by normalize_name, stored in the allowed spelling
//  list_of_text: list of strings, or one string as a singleton
ParsedValue parse_value(const nlohmann::json& raw, const SchemaField& field);

// Returns the ISO-8601 form (YYYY, YYYY-MM or YYYY-MM-DD) of a date string,
// or nullopt when it is not recognized or ambiguous.
std::optional<std::string> normalize_date(const std::string& text);

// Key under which two values count as equal during reconciliation.
std::string comparison_key(const Value& value);

}  // namespace qdex::extraction
