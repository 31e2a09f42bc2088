#include "qdex/core/json_io.h"

#include "qdex/core/errors.h"

namespace qdex {
namespace {

template <typename T>
void put_optional(json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

template <typename T>
void get_optional(const json& j, const char* key, std::optional<T>& out) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) {
    out.reset();
  } else {
    out = it->template get<T>();
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  return it->template get<T>();
}

const json& require(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw Error(ErrorCode::kInvalidArgument, std::string("missing key '") + key + "'");
  return *it;
}

}  // namespace

json value_to_json(const Value& v) {
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  if (const auto* d = std::get_if<double>(&v)) return *d;
  return std::get<std::vector<std::string>>(v);
}

Value value_from_json(const json& j) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number()) return j.get<double>();
  if (j.is_array()) {
    std::vector<std::string> items;
    for (const json& e : j) {
      if (!e.is_string()) throw Error(ErrorCode::kInvalidArgument, "list values must contain strings");
      items.push_back(e.get<std::string>());
    }
    return items;
  }
  throw Error(ErrorCode::kInvalidArgument, "unsupported value type: " + std::string(j.type_name()));
}

void to_json(json& j, const Document& v) {
  j = json{{"doc_id", v.doc_id}, {"text", v.text}, {"source_name", v.source_name}, {"metadata", v.metadata}};
  put_optional(j, "title", v.title);
}

void from_json(const json& j, Document& v) {
  v.doc_id = require(j, "doc_id").get<std::string>();
  v.text = require(j, "text").get<std::string>();
  v.source_name = get_or<std::string>(j, "source_name", "");
  v.metadata = get_or<std::map<std::string, std::string>>(j, "metadata", {});
  get_optional(j, "title", v.title);
}

void to_json(json& j, const ResearchQuery& v) { j = json{{"text", v.text}}; }

void from_json(const json& j, ResearchQuery& v) {
  v.text = j.is_string() ? j.get<std::string>() : require(j, "text").get<std::string>();
}

void to_json(json& j, const ExampleInstance& v) {
  j = json{{"name", v.name}, {"provenance", to_string(v.provenance)}};
}

void from_json(const json& j, ExampleInstance& v) {
  v.name = require(j, "name").get<std::string>();
  v.provenance = provenance_from_string(get_or<std::string>(j, "provenance", "from_documents"));
}

void to_json(json& j, const ObservationUnitSpec& v) {
  j = json{{"type_name", v.type_name},
           {"description", v.description},
           {"example_instances", v.example_instances},
           {"origin", to_string(v.origin)}};
}

void from_json(const json& j, ObservationUnitSpec& v) {
  v.type_name = require(j, "type_name").get<std::string>();
  v.description = get_or<std::string>(j, "description", "");
  v.example_instances = get_or<std::vector<ExampleInstance>>(j, "example_instances", {});
  v.origin = unit_origin_from_string(get_or<std::string>(j, "origin", "discovered"));
}

void to_json(json& j, const SchemaField& v) {
  j = json{{"canonical_name", v.canonical_name},
           {"definition", v.definition},
           {"rationale", v.rationale},
           {"value_kind", to_string(v.value_kind)},
           {"origin", to_string(v.origin)},
           {"locked", v.locked}};
  put_optional(j, "allowed_values", v.allowed_values);
}

void from_json(const json& j, SchemaField& v) {
  v.canonical_name = require(j, "canonical_name").get<std::string>();
  v.definition = get_or<std::string>(j, "definition", "");
  v.rationale = get_or<std::string>(j, "rationale", "");
  v.value_kind = value_kind_from_string(get_or<std::string>(j, "value_kind", "text"));
  v.origin = field_origin_from_string(get_or<std::string>(j, "origin", "model"));
  v.locked = get_or<bool>(j, "locked", false);
  get_optional(j, "allowed_values", v.allowed_values);
}

void to_json(json& j, const Schema& v) { j = json{{"fields", v.fields}, {"version", v.version}}; }

void from_json(const json& j, Schema& v) {
  v.fields = require(j, "fields").get<std::vector<SchemaField>>();
  v.version = get_or<std::int64_t>(j, "version", 0);
}

void to_json(json& j, const Evidence& v) {
  j = json{{"doc_id", v.doc_id}, {"quote", v.quote}};
  if (v.char_span) j["char_span"] = json::array({v.char_span->begin, v.char_span->end});
}

void from_json(const json& j, Evidence& v) {
  v.doc_id = require(j, "doc_id").get<std::string>();
  v.quote = require(j, "quote").get<std::string>();
  v.char_span.reset();
  if (const auto it = j.find("char_span"); it != j.end() && !it->is_null()) {
    if (!it->is_array() || it->size() != 2) {
      throw Error(ErrorCode::kInvalidArgument, "char_span must be a [begin, end] pair");
    }
    v.char_span = CharSpan{(*it)[0].get<std::size_t>(), (*it)[1].get<std::size_t>()};
  }
}

void to_json(json& j, const Candidate& v) {
  j = json{{"value", value_to_json(v.value)},
           {"evidence", v.evidence},
           {"doc_id", v.doc_id},
           {"origin", to_string(v.origin)}};
}

void from_json(const json& j, Candidate& v) {
  v.value = value_from_json(require(j, "value"));
  v.evidence = get_or<std::vector<Evidence>>(j, "evidence", {});
  v.doc_id = get_or<std::string>(j, "doc_id", "");
  v.origin = cell_origin_from_string(get_or<std::string>(j, "origin", "extracted"));
}

void to_json(json& j, const CellValue& v) {
  j = json{{"field_name", v.field_name},
           {"evidence", v.evidence},
           {"status", to_string(v.status)},
           {"origin", to_string(v.origin)}};
  if (v.value) j["value"] = value_to_json(*v.value);
  if (!v.candidates.empty()) j["candidates"] = v.candidates;
  put_optional(j, "note", v.note);
}

void from_json(const json& j, CellValue& v) {
  v.field_name = require(j, "field_name").get<std::string>();
  v.evidence = get_or<std::vector<Evidence>>(j, "evidence", {});
  v.status = cell_status_from_string(get_or<std::string>(j, "status", "missing"));
  v.origin = cell_origin_from_string(get_or<std::string>(j, "origin", "extracted"));
  v.value.reset();
  if (const auto it = j.find("value"); it != j.end() && !it->is_null()) v.value = value_from_json(*it);
  v.candidates = get_or<std::vector<Candidate>>(j, "candidates", {});
  get_optional(j, "note", v.note);
}

void to_json(json& j, const InstanceRecord& v) {
  j = json{{"canonical_key", v.canonical_key},
           {"display_name", v.display_name},
           {"aliases", v.aliases},
           {"source_doc_ids", v.source_doc_ids}};
}

void from_json(const json& j, InstanceRecord& v) {
  v.canonical_key = require(j, "canonical_key").get<std::string>();
  v.display_name = require(j, "display_name").get<std::string>();
  v.aliases = get_or<std::vector<std::string>>(j, "aliases", {});
  v.source_doc_ids = get_or<std::set<std::string>>(j, "source_doc_ids", {});
}

void to_json(json& j, const Row& v) { j = json{{"instance", v.instance}, {"cells", v.cells}}; }

void from_json(const json& j, Row& v) {
  v.instance = require(j, "instance").get<InstanceRecord>();
  v.cells = get_or<std::map<std::string, CellValue>>(j, "cells", {});
}

void to_json(json& j, const Table& v) { j = json{{"schema_version", v.schema_version}, {"rows", v.rows}}; }

void from_json(const json& j, Table& v) {
  v.schema_version = require(j, "schema_version").get<std::int64_t>();
  v.rows = require(j, "rows").get<std::vector<Row>>();
}

void to_json(json& j, const EditEvent& v) {
  j = json{{"seq", v.seq}, {"timestamp", v.timestamp}, {"kind", to_string(v.kind)}, {"payload", v.payload}};
}

void from_json(const json& j, EditEvent& v) {
  v.seq = get_or<std::int64_t>(j, "seq", 0);
  v.timestamp = get_or<std::string>(j, "timestamp", "");
  v.kind = edit_kind_from_string(require(j, "kind").get<std::string>());
  v.payload = get_or<json>(j, "payload", json::object());
}

void to_json(json& j, const ParkedEdit& v) { j = json{{"seq", v.seq}, {"reason", v.reason}}; }

void from_json(const json& j, ParkedEdit& v) {
  v.seq = require(j, "seq").get<std::int64_t>();
  v.reason = get_or<std::string>(j, "reason", "");
}

std::string dump_canonical(const json& j) {
  return j.dump(2, ' ', false, json::error_handler_t::replace) + "\n";
}

}  // namespace qdex
