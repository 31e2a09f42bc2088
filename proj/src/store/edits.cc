#include "qdex/store/edits.h"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <map>
#include <set>

#include <spdlog/spdlog.h>

#include "qdex/core/errors.h"
#include "qdex/core/json_io.h"
#include "qdex/core/text.h"
#include "qdex/extraction/evidence.h"
#include "qdex/extraction/values.h"

namespace qdex::store {
namespace {

using nlohmann::json;

[[noreturn]] void reject(ErrorCode code, const std::string& msg) { throw Error(code, msg); }

SchemaField field_from_payload(const json& j) {
  if (!j.is_object()) reject(ErrorCode::kInvalidArgument, "field must be an object");
  json copy = j;
  if (!copy.contains("canonical_name")) {
    if (!copy.contains("name")) reject(ErrorCode::kInvalidArgument, "field needs a name");
    copy["canonical_name"] = copy["name"];
  }
  SchemaField f = copy.get<SchemaField>();
  f.canonical_name = canonical_field_name(f.canonical_name);
  f.origin = FieldOrigin::kHuman;
  f.locked = true;
  validate_field(f);
  return f;
}

Schema& require_schema(SessionState& s) {
  if (!s.schema) reject(ErrorCode::kConflict, "session has no schema yet");
  return *s.schema;
}

SchemaField& require_field(Schema& schema, const std::string& name) {
  SchemaField* f = schema.find(name);
  if (f == nullptr) reject(ErrorCode::kNotFound, "unknown field '" + name + "'");
  return *f;
}

CellValue empty_cell(const std::string& field) {
  CellValue c;
  c.field_name = field;
  return c;
}

// Machine cells lose their value when the field's meaning changes under them.
void reset_machine_cells(Table& table, const std::string& field, const std::string& why) {
  for (Row& row : table.rows) {
    auto it = row.cells.find(field);
    if (it == row.cells.end() || it->second.origin == CellOrigin::kHuman) continue;
    it->second = empty_cell(field);
    it->second.note = why;
  }
}

void edit_unit(SessionState& s, const json& p) {
  if (s.table) reject(ErrorCode::kConflict, "extraction already ran; the unit can no longer change");
  ObservationUnitSpec unit = p.at("unit").get<ObservationUnitSpec>();
  unit.origin = UnitOrigin::kHuman;
  validate_unit(unit);
  s.ou_spec = std::move(unit);
  s.phase = std::max(s.phase, Phase::kUnitDiscovered);
}

void add_field(SessionState& s, const json& p) {
  Schema& schema = require_schema(s);
  SchemaField f = field_from_payload(p.at("field"));
  if (schema.find(f.canonical_name) != nullptr) {
    reject(ErrorCode::kConflict, "field '" + f.canonical_name + "' already exists");
  }
  if (s.table) {
    for (Row& row : s.table->rows) row.cells.emplace(f.canonical_name, empty_cell(f.canonical_name));
  }
  schema.fields.push_back(std::move(f));
  ++schema.version;
}

void edit_field(SessionState& s, const json& p) {
  Schema& schema = require_schema(s);
  const std::string name = p.at("name").get<std::string>();
  SchemaField& field = require_field(schema, name);
  const json& changes = p.at("changes");
  if (!changes.is_object()) reject(ErrorCode::kInvalidArgument, "changes must be an object");

  SchemaField updated = field;
  if (changes.contains("definition")) updated.definition = changes["definition"].get<std::string>();
  if (changes.contains("rationale")) updated.rationale = changes["rationale"].get<std::string>();
  if (changes.contains("value_kind")) {
    updated.value_kind = value_kind_from_string(changes["value_kind"].get<std::string>());
    if (updated.value_kind != ValueKind::kEnum) updated.allowed_values.reset();
  }
  if (changes.contains("allowed_values")) {
    if (changes["allowed_values"].is_null()) {
      updated.allowed_values.reset();
    } else {
      updated.allowed_values = changes["allowed_values"].get<std::vector<std::string>>();
    }
  }
  if (changes.contains("new_name")) updated.canonical_name = canonical_field_name(changes["new_name"].get<std::string>());
  updated.origin = FieldOrigin::kHuman;
  updated.locked = true;
  validate_field(updated);

  const std::string old_name = field.canonical_name;
  const bool renamed = normalize_name(updated.canonical_name) != normalize_name(old_name);
  if (renamed && schema.find(updated.canonical_name) != nullptr) {
    reject(ErrorCode::kConflict, "field '" + updated.canonical_name + "' already exists");
  }
  const bool kind_changed =
      updated.value_kind != field.value_kind || updated.allowed_values != field.allowed_values;
  field = updated;
  ++schema.version;

  if (!s.table) return;
  if (updated.canonical_name != old_name) {
    for (Row& row : s.table->rows) {
      auto node = row.cells.extract(old_name);
      if (node.empty()) continue;
      node.key() = updated.canonical_name;
      node.mapped().field_name = updated.canonical_name;
      row.cells.insert(std::move(node));
    }
  }
  if (kind_changed) reset_machine_cells(*s.table, updated.canonical_name, "value kind changed; re-extract");
}

void remove_field(SessionState& s, const json& p) {
  Schema& schema = require_schema(s);
  const std::string name = require_field(schema, p.at("name").get<std::string>()).canonical_name;
  schema.fields.erase(std::remove_if(schema.fields.begin(), schema.fields.end(),
                                     [&](const SchemaField& f) { return f.canonical_name == name; }),
                      schema.fields.end());
  ++schema.version;
  if (s.table) {
    for (Row& row : s.table->rows) row.cells.erase(name);
  }
}

// Maps one source value into the target field, or explains why it cannot.
std::optional<Value> map_value(const Value& v, const std::string& source, const json& mapping,
                               const SchemaField& target, std::string& problem) {
  std::string text = value_to_string(v);
  if (mapping.contains(source)) {
    const json& m = mapping[source];
    const auto it = m.find(text);
    if (it == m.end()) {
      problem = "value_mapping for '" + source + "' has no entry for '" + text + "'";
      return std::nullopt;
    }
    text = it->get<std::string>();
  } else if (target.value_kind == ValueKind::kListOfText && std::holds_alternative<std::vector<std::string>>(v)) {
    return v;
  }
  const extraction::ParsedValue parsed = extraction::parse_value(json(text), target);
  if (parsed.outcome != extraction::ParseOutcome::kOk) {
    problem = "value '" + text + "' from '" + source + "' does not fit '" + target.canonical_name +
              "'; add it to value_mapping";
    return std::nullopt;
  }
  return parsed.value;
}

void merge_fields(SessionState& s, const json& p) {
  Schema& schema = require_schema(s);
  std::vector<std::string> sources;
  for (const json& n : p.at("sources")) sources.push_back(require_field(schema, n.get<std::string>()).canonical_name);
  std::sort(sources.begin(), sources.end());
  if (std::adjacent_find(sources.begin(), sources.end()) != sources.end() || sources.size() < 2) {
    reject(ErrorCode::kInvalidArgument, "field_merge needs at least two distinct sources");
  }
  // Keep schema order for the sources from here on.
  std::vector<std::string> ordered;
  for (const SchemaField& f : schema.fields) {
    if (std::find(sources.begin(), sources.end(), f.canonical_name) != sources.end()) ordered.push_back(f.canonical_name);
  }
  SchemaField target = field_from_payload(p.at("target"));
  for (const SchemaField& f : schema.fields) {
    const bool is_source = std::find(ordered.begin(), ordered.end(), f.canonical_name) != ordered.end();
    if (!is_source && normalize_name(f.canonical_name) == normalize_name(target.canonical_name)) {
      reject(ErrorCode::kConflict, "field '" + target.canonical_name + "' already exists");
    }
  }
  const json mapping = p.value("value_mapping", json::object());
  if (!mapping.is_object()) reject(ErrorCode::kInvalidArgument, "value_mapping must be an object");

  // Build merged cells first so an incomplete mapping leaves nothing half-done.
  std::vector<CellValue> merged_cells;
  if (s.table) {
    for (const Row& row : s.table->rows) {
      CellValue merged = empty_cell(target.canonical_name);
      std::vector<Candidate> contributions;
      bool human = false;
      for (const std::string& src : ordered) {
        const auto it = row.cells.find(src);
        if (it == row.cells.end()) continue;
        const CellValue& c = it->second;
        std::vector<Candidate> values;
        if (c.status == CellStatus::kFilled && c.value) {
          values.push_back(Candidate{*c.value, c.evidence, c.evidence.empty() ? std::string() : c.evidence.front().doc_id,
                                     c.origin});
        }
        if (c.status == CellStatus::kConflict) values = c.candidates;
        for (Candidate& cand : values) {
          std::string problem;
          const std::optional<Value> mapped = map_value(cand.value, src, mapping, target, problem);
          if (!mapped) reject(ErrorCode::kInvalidArgument, "incomplete value mapping: " + problem);
          cand.value = *mapped;
          contributions.push_back(std::move(cand));
          human = human || c.origin == CellOrigin::kHuman;
        }
        for (const Evidence& e : c.evidence) {
          if (std::find(merged.evidence.begin(), merged.evidence.end(), e) == merged.evidence.end()) {
            merged.evidence.push_back(e);
          }
        }
      }
      if (!contributions.empty()) {
        const std::string key = extraction::comparison_key(contributions.front().value);
        const bool agree = std::all_of(contributions.begin(), contributions.end(), [&](const Candidate& c) {
          return extraction::comparison_key(c.value) == key;
        });
        merged.origin = human ? CellOrigin::kHuman : CellOrigin::kExtracted;
        if (agree) {
          merged.status = CellStatus::kFilled;
          merged.value = contributions.front().value;
        } else {
          merged.status = CellStatus::kConflict;
          merged.candidates = std::move(contributions);
          merged.note = "merged fields disagree";
        }
      }
      merged_cells.push_back(std::move(merged));
    }
  }

  const auto first = std::find_if(schema.fields.begin(), schema.fields.end(),
                                  [&](const SchemaField& f) { return f.canonical_name == ordered.front(); });
  const std::size_t position = static_cast<std::size_t>(first - schema.fields.begin());
  schema.fields.erase(std::remove_if(schema.fields.begin(), schema.fields.end(),
                                     [&](const SchemaField& f) {
                                       return std::find(ordered.begin(), ordered.end(), f.canonical_name) !=
                                              ordered.end();
                                     }),
                      schema.fields.end());
  schema.fields.insert(schema.fields.begin() + static_cast<std::ptrdiff_t>(position), target);
  ++schema.version;
  if (s.table) {
    for (std::size_t r = 0; r < s.table->rows.size(); ++r) {
      Row& row = s.table->rows[r];
      for (const std::string& src : ordered) row.cells.erase(src);
      row.cells[target.canonical_name] = std::move(merged_cells[r]);
    }
  }
}

// The human cell a cell_edit produces, given the cell it replaces.
CellValue edited_cell(const SessionState& s, const SchemaField& field, const CellValue& prior, const json& p) {
  CellValue cell;
  cell.field_name = field.canonical_name;
  cell.origin = CellOrigin::kHuman;
  const json value = p.contains("value") ? p["value"] : json();
  if (value.is_null()) {
    cell.status = CellStatus::kMissing;
  } else {
    const extraction::ParsedValue parsed = extraction::parse_value(value, field);
    if (parsed.outcome == extraction::ParseOutcome::kInvalid) {
      reject(ErrorCode::kInvalidArgument, "cell value for '" + field.canonical_name + "': " + parsed.note);
    }
    if (parsed.outcome == extraction::ParseOutcome::kOk) {
      cell.value = parsed.value;
      cell.status = CellStatus::kFilled;
    }
  }
  if (p.contains("evidence") && !p["evidence"].is_null()) {
    for (const json& e : p["evidence"]) {
      Evidence ev{e.at("doc_id").get<std::string>(), e.at("quote").get<std::string>(), std::nullopt};
      const Document* doc = s.find_document(ev.doc_id);
      if (doc == nullptr) reject(ErrorCode::kNotFound, "unknown document '" + ev.doc_id + "'");
      if (!extraction::validate_evidence(ev, *doc)) {
        reject(ErrorCode::kInvalidArgument, "quote not found in '" + ev.doc_id + "'");
      }
      cell.evidence.push_back(std::move(ev));
    }
  }

  // Same edit already in place: nothing to do (keeps replay idempotent).
  if (prior.origin == CellOrigin::kHuman && prior.value == cell.value && prior.evidence == cell.evidence &&
      prior.status == cell.status) {
    return prior;
  }
  cell.candidates = prior.candidates;
  if (prior.value) {
    std::string doc_id = prior.evidence.empty() ? std::string() : prior.evidence.front().doc_id;
    cell.candidates.push_back(Candidate{*prior.value, prior.evidence, doc_id, prior.origin});
  }
  return cell;
}

void edit_cell(SessionState& s, const json& p) {
  if (!s.table) reject(ErrorCode::kConflict, "session has no table yet");
  const Schema& schema = require_schema(s);
  const std::string instance = p.at("instance").get<std::string>();
  const std::string field_name = p.at("field").get<std::string>();
  Row* row = s.table->find_row(instance);
  if (row == nullptr) reject(ErrorCode::kNotFound, "unknown instance '" + instance + "'");
  const SchemaField* field = schema.find(field_name);
  if (field == nullptr) reject(ErrorCode::kNotFound, "unknown field '" + field_name + "'");
  auto it = row->cells.find(field->canonical_name);
  const CellValue prior = it == row->cells.end() ? empty_cell(field->canonical_name) : it->second;
  row->cells[field->canonical_name] = edited_cell(s, *field, prior, p);
}

void add_documents(SessionState& s, const json& p) {
  const auto docs = p.at("documents").get<std::vector<Document>>();
  if (docs.empty()) reject(ErrorCode::kInvalidArgument, "docs_added needs at least one document");
  std::vector<Document> all = s.documents;
  all.insert(all.end(), docs.begin(), docs.end());
  validate_documents(all);
  s.documents = std::move(all);
  // A table over the old corpus would contradict the lowered phase; cell
  // edits in the log come back on the next extraction through replay.
  if (s.phase > Phase::kSchemaDiscovered) {
    s.phase = Phase::kSchemaDiscovered;
    s.table.reset();
  }
}

}  // namespace

SessionState apply_edit(const SessionState& state, const EditEvent& event) {
  const std::int64_t expected = state.edit_log.empty() ? 1 : state.edit_log.back().seq + 1;
  if (event.seq != expected) {
    reject(ErrorCode::kConflict,
           "edit seq " + std::to_string(event.seq) + " does not follow " + std::to_string(expected - 1));
  }
  SessionState next = state;
  try {
    const json& p = event.payload;
    switch (event.kind) {
      case EditKind::kUnitEdit: edit_unit(next, p); break;
      case EditKind::kFieldAdd: add_field(next, p); break;
      case EditKind::kFieldEdit: edit_field(next, p); break;
      case EditKind::kFieldRemove: remove_field(next, p); break;
      case EditKind::kFieldMerge: merge_fields(next, p); break;
      case EditKind::kCellEdit: edit_cell(next, p); break;
      case EditKind::kDocsAdded: add_documents(next, p); break;
    }
  } catch (const nlohmann::json::exception& e) {
    reject(ErrorCode::kInvalidArgument,
           "malformed " + std::string(to_string(event.kind)) + " payload: " + e.what());
  }
  next.edit_log.push_back(event);
  return next;
}

SessionState record_edit(const SessionState& state, EditKind kind, json payload, std::string timestamp) {
  EditEvent e;
  e.seq = state.edit_log.empty() ? 1 : state.edit_log.back().seq + 1;
  e.timestamp = std::move(timestamp);
  e.kind = kind;
  e.payload = std::move(payload);
  return apply_edit(state, e);
}

SessionState replay(const SessionState& state) {
  SessionState next = state;
  next.parked_edits.clear();
  if (!next.table) return next;

  // Field each cell edit points at today, after later renames and removals.
  struct Pending {
    const EditEvent* event;
    std::optional<std::string> field;  // nullopt: removed or merged away
    std::string why;
  };
  std::vector<Pending> pending;
  auto same = [](const std::string& a, const std::string& b) {
    try {
      return normalize_name(a) == normalize_name(b);
    } catch (const Error&) {
      return false;
    }
  };
  for (const EditEvent& e : state.edit_log) {
    const json& p = e.payload;
    switch (e.kind) {
      case EditKind::kCellEdit:
        pending.push_back({&e, p.value("field", std::string()), {}});
        break;
      case EditKind::kFieldEdit:
        if (p.contains("changes") && p["changes"].contains("new_name")) {
          const std::string from = p.value("name", std::string());
          const std::string to = canonical_field_name(p["changes"]["new_name"].get<std::string>());
          for (Pending& c : pending) {
            if (c.field && same(*c.field, from)) c.field = to;
          }
        }
        break;
      case EditKind::kFieldRemove:
        for (Pending& c : pending) {
          if (c.field && same(*c.field, p.value("name", std::string()))) {
            c.field.reset();
            c.why = "field '" + p.value("name", std::string()) + "' was removed";
          }
        }
        break;
      case EditKind::kFieldMerge:
        for (const json& src : p.value("sources", json::array())) {
          for (Pending& c : pending) {
            if (c.field && same(*c.field, src.get<std::string>())) {
              c.field.reset();
              c.why = "field '" + src.get<std::string>() + "' was merged into another field";
            }
          }
        }
        break;
      default:
        break;
    }
  }

  // Cells that are already human were never re-derived; leave them as they are.
  std::set<std::pair<std::string, std::string>> kept;
  for (const Row& row : next.table->rows) {
    for (const auto& [name, cell] : row.cells) {
      if (cell.origin == CellOrigin::kHuman) kept.emplace(row.instance.canonical_key, name);
    }
  }
  for (const Pending& c : pending) {
    if (!c.field) {
      next.parked_edits.push_back({c.event->seq, c.why});
      continue;
    }
    json p = c.event->payload;
    p["field"] = *c.field;
    try {
      const Row* row = next.table->find_row(p.at("instance").get<std::string>());
      const SchemaField* f = next.schema ? next.schema->find(*c.field) : nullptr;
      if (row != nullptr && f != nullptr && kept.count({row->instance.canonical_key, f->canonical_name}) > 0) continue;
      edit_cell(next, p);
    } catch (const Error& e) {
      spdlog::warn("parking edit {}: {}", c.event->seq, e.what());
      next.parked_edits.push_back({c.event->seq, e.what()});
    } catch (const nlohmann::json::exception& e) {
      next.parked_edits.push_back({c.event->seq, e.what()});
    }
  }
  return next;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace qdex::store
