#pragma once

#include <string>

#include "qdex/core/model.h"

namespace qdex::service {

// RFC 4180: CRLF line ends, fields quoted when they hold a comma, quote, CR
// or LF, quotes doubled. First column is the instance display name, then one
// column per schema field in schema order. Conflict cells are empty; with
// include_conflicts each field is followed by a "<field> (conflict)" column
// listing the candidate values.
std::string table_to_csv(const Table& table, const Schema& schema, bool include_conflicts = false);

// Canonical JSON of the full table (evidence, statuses, candidates).
std::string table_to_json(const Table& table);
Table table_from_json(const std::string& text);

}  // namespace qdex::service
