#pragma once

// Human edits as events. apply_edit is a pure fold step; replay re-applies
// cell edits on top of a freshly extracted table.
//
// Payloads (JSON):
//   unit_edit     {"unit": {type_name, description, example_instances?}}
//   field_add     {"field": {name, definition, rationale?, value_kind?, allowed_values?}}
//   field_edit    {"name", "changes": {definition?, rationale?, value_kind?, allowed_values?, new_name?}}
//   field_remove  {"name"}
//   field_merge   {"sources": [names], "target": <field as in field_add>,
//                  "value_mapping"?: {"<source>": {"<old value>": "<new value>"}}}
//   cell_edit     {"instance", "field", "value", "evidence"?: [{doc_id, quote}]}
//   docs_added    {"documents": [Document]}

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qdex/core/model.h"

namespace qdex::store {

// Throws Error: kConflict for a seq gap, an edit that would break an
// invariant (unit edit after extraction, duplicate field name), kNotFound for
// unknown fields or instances, kInvalidArgument for malformed payloads.
SessionState apply_edit(const SessionState& state, const EditEvent& event);

// Stamps the next seq and the given timestamp, applies, and appends to the log.
SessionState record_edit(const SessionState& state, EditKind kind, nlohmann::json payload,
                         std::string timestamp);

// Re-applies every cell_edit in the log to state.table, following later
// renames. Edits whose instance or field no longer exists are parked (listed
// in parked_edits) rather than dropped. Cells that are already human are left
// alone, so replay is idempotent.
SessionState replay(const SessionState& state);

std::string utc_timestamp();

}  // namespace qdex::store
