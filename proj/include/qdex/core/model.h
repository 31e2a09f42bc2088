#pragma once

// Domain types shared by every stage of the engine. All of them are plain
// value types; the validate_* helpers check the invariants that cannot be
// expressed in the type system and throw qdex::Error(kInvalidArgument).

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace qdex {

struct Document {
  std::string doc_id;
  std::optional<std::string> title;
  std::string text;
  std::string source_name;
  std::map<std::string, std::string> metadata;

  bool operator==(const Document&) const = default;
};

struct ResearchQuery {
  std::string text;

  bool operator==(const ResearchQuery&) const = default;
};

enum class Provenance { kFromDocuments, kModelKnowledge };
enum class UnitOrigin { kDiscovered, kHuman };

struct ExampleInstance {
  std::string name;
  Provenance provenance = Provenance::kFromDocuments;

  bool operator==(const ExampleInstance&) const = default;
};

struct ObservationUnitSpec {
  std::string type_name;
  std::string description;
  std::vector<ExampleInstance> example_instances;
  UnitOrigin origin = UnitOrigin::kDiscovered;

  bool operator==(const ObservationUnitSpec&) const = default;
};

enum class ValueKind { kText, kNumber, kDate, kEnum, kListOfText };
enum class FieldOrigin { kModel, kHuman };

struct SchemaField {
  std::string canonical_name;
  std::string definition;
  std::string rationale;
  ValueKind value_kind = ValueKind::kText;
  std::optional<std::vector<std::string>> allowed_values;
  FieldOrigin origin = FieldOrigin::kModel;
  bool locked = false;

  bool operator==(const SchemaField&) const = default;
};

struct Schema {
  std::vector<SchemaField> fields;
  std::int64_t version = 0;

  // Lookup by normalize_name; nullptr when absent.
  const SchemaField* find(std::string_view name) const;
  SchemaField* find(std::string_view name);
  std::optional<std::size_t> index_of(std::string_view name) const;

  bool operator==(const Schema&) const = default;
};

// Byte offsets [begin, end) into the UTF-8 document text.
struct CharSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  bool operator==(const CharSpan&) const = default;
};

struct Evidence {
  std::string doc_id;
  std::string quote;
  std::optional<CharSpan> char_span;

  bool operator==(const Evidence&) const = default;
};

// A typed cell value: text/date/enum as string, number as double,
// list_of_text as a list of strings.
using Value = std::variant<std::string, double, std::vector<std::string>>;

enum class CellStatus { kFilled, kMissing, kConflict, kRejected };
enum class CellOrigin { kExtracted, kFollowup, kHuman };

// One candidate value for a cell, as contributed by a single document (or by
// a superseded machine value once a human has edited the cell).
struct Candidate {
  Value value;
  std::vector<Evidence> evidence;
  std::string doc_id;
  CellOrigin origin = CellOrigin::kExtracted;

  bool operator==(const Candidate&) const = default;
};

struct CellValue {
  std::string field_name;
  std::optional<Value> value;
  std::vector<Evidence> evidence;
  CellStatus status = CellStatus::kMissing;
  CellOrigin origin = CellOrigin::kExtracted;
  // Conflict candidates, or the audit trail of values a human replaced.
  std::vector<Candidate> candidates;
  std::optional<std::string> note;

  bool operator==(const CellValue&) const = default;
};

struct InstanceRecord {
  std::string canonical_key;
  std::string display_name;
  std::vector<std::string> aliases;
  std::set<std::string> source_doc_ids;

  bool operator==(const InstanceRecord&) const = default;
};

struct Row {
  InstanceRecord instance;
  std::map<std::string, CellValue> cells;

  bool operator==(const Row&) const = default;
};

struct Table {
  std::int64_t schema_version = 0;
  std::vector<Row> rows;

  const Row* find_row(std::string_view key_or_name) const;
  Row* find_row(std::string_view key_or_name);

  bool operator==(const Table&) const = default;
};

enum class EditKind {
  kUnitEdit,
  kFieldAdd,
  kFieldEdit,
  kFieldRemove,
  kFieldMerge,
  kCellEdit,
  kDocsAdded,
};

struct EditEvent {
  std::int64_t seq = 0;
  std::string timestamp;  // ISO-8601, UTC
  EditKind kind = EditKind::kCellEdit;
  nlohmann::json payload = nlohmann::json::object();

  bool operator==(const EditEvent&) const = default;
};

// Ordered: comparisons reflect pipeline progress.
enum class Phase { kCreated = 0, kUnitDiscovered = 1, kSchemaDiscovered = 2, kExtracted = 3 };

// An edit that could not be re-applied during replay, kept for the expert.
struct ParkedEdit {
  std::int64_t seq = 0;
  std::string reason;

  bool operator==(const ParkedEdit&) const = default;
};

struct SessionState {
  std::string session_id;
  ResearchQuery query;
  std::vector<Document> documents;
  std::optional<ObservationUnitSpec> ou_spec;
  std::optional<Schema> schema;
  std::optional<Table> table;
  std::vector<EditEvent> edit_log;
  Phase phase = Phase::kCreated;
  // Documents already seen by schema discovery; incremental runs use the rest.
  std::set<std::string> discovered_doc_ids;
  std::vector<ParkedEdit> parked_edits;

  const Document* find_document(std::string_view doc_id) const;

  bool operator==(const SessionState&) const = default;
};

// Invariant checks.
void validate_document(const Document& doc);
void validate_documents(const std::vector<Document>& docs);  // also checks id uniqueness
void validate_query(const ResearchQuery& query);
void validate_unit(const ObservationUnitSpec& spec);
void validate_field(const SchemaField& field);
void validate_schema(const Schema& schema);
void validate_cell(const CellValue& cell, const SchemaField& field);
void validate_session(const SessionState& state);

// Field names are Title Case words of letters/digits. Punctuation is dropped,
// runs of spaces collapse and the first letter of each word is upper-cased
// (the remaining letters are kept, so "NES" stays "NES").
// Throws kUnusableName if nothing survives.
std::string canonical_field_name(std::string_view raw);

// Enum <-> wire string helpers.
std::string_view to_string(Provenance v);
std::string_view to_string(UnitOrigin v);
std::string_view to_string(ValueKind v);
std::string_view to_string(FieldOrigin v);
std::string_view to_string(CellStatus v);
std::string_view to_string(CellOrigin v);
std::string_view to_string(EditKind v);
std::string_view to_string(Phase v);

Provenance provenance_from_string(std::string_view s);
UnitOrigin unit_origin_from_string(std::string_view s);
ValueKind value_kind_from_string(std::string_view s);
FieldOrigin field_origin_from_string(std::string_view s);
CellStatus cell_status_from_string(std::string_view s);
CellOrigin cell_origin_from_string(std::string_view s);
EditKind edit_kind_from_string(std::string_view s);
Phase phase_from_string(std::string_view s);

// Renders a value for display and comparisons: numbers in shortest
// round-trip form (integers without a fractional part), lists joined by "; ".
std::string value_to_string(const Value& value);

}  // namespace qdex
