#include "qdex/core/model.h"

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <unordered_set>
#include <utility>

#include "qdex/core/errors.h"
#include "qdex/core/text.h"

namespace qdex {
namespace {

[[noreturn]] void invalid(const std::string& message) {
  throw Error(ErrorCode::kInvalidArgument, message);
}

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

std::optional<std::string> key_of(std::string_view name) {
  try {
    return normalize_name(name);
  } catch (const Error&) {
    return std::nullopt;
  }
}

template <typename E, std::size_t N>
E parse_enum(std::string_view s, const std::array<std::pair<E, std::string_view>, N>& table,
             std::string_view what) {
  for (const auto& [value, name] : table) {
    if (name == s) return value;
  }
  invalid("unknown " + std::string(what) + " '" + std::string(s) + "'");
}

template <typename E, std::size_t N>
std::string_view enum_name(E v, const std::array<std::pair<E, std::string_view>, N>& table) {
  for (const auto& [value, name] : table) {
    if (value == v) return name;
  }
  return "?";
}

constexpr std::array<std::pair<Provenance, std::string_view>, 2> kProvenance{{
    {Provenance::kFromDocuments, "from_documents"},
    {Provenance::kModelKnowledge, "model_knowledge"},
}};
constexpr std::array<std::pair<UnitOrigin, std::string_view>, 2> kUnitOrigin{{
    {UnitOrigin::kDiscovered, "discovered"},
    {UnitOrigin::kHuman, "human"},
}};
constexpr std::array<std::pair<ValueKind, std::string_view>, 5> kValueKind{{
    {ValueKind::kText, "text"},
    {ValueKind::kNumber, "number"},
    {ValueKind::kDate, "date"},
    {ValueKind::kEnum, "enum"},
    {ValueKind::kListOfText, "list_of_text"},
}};
constexpr std::array<std::pair<FieldOrigin, std::string_view>, 2> kFieldOrigin{{
    {FieldOrigin::kModel, "model"},
    {FieldOrigin::kHuman, "human"},
}};
constexpr std::array<std::pair<CellStatus, std::string_view>, 4> kCellStatus{{
    {CellStatus::kFilled, "filled"},
    {CellStatus::kMissing, "missing"},
    {CellStatus::kConflict, "conflict"},
    {CellStatus::kRejected, "rejected"},
}};
constexpr std::array<std::pair<CellOrigin, std::string_view>, 3> kCellOrigin{{
    {CellOrigin::kExtracted, "extracted"},
    {CellOrigin::kFollowup, "followup"},
    {CellOrigin::kHuman, "human"},
}};
constexpr std::array<std::pair<EditKind, std::string_view>, 7> kEditKind{{
    {EditKind::kUnitEdit, "unit_edit"},
    {EditKind::kFieldAdd, "field_add"},
    {EditKind::kFieldEdit, "field_edit"},
    {EditKind::kFieldRemove, "field_remove"},
    {EditKind::kFieldMerge, "field_merge"},
    {EditKind::kCellEdit, "cell_edit"},
    {EditKind::kDocsAdded, "docs_added"},
}};
constexpr std::array<std::pair<Phase, std::string_view>, 4> kPhase{{
    {Phase::kCreated, "created"},
    {Phase::kUnitDiscovered, "unit_discovered"},
    {Phase::kSchemaDiscovered, "schema_discovered"},
    {Phase::kExtracted, "extracted"},
}};

}  // namespace

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kConflict: return "conflict";
    case ErrorCode::kUnusableName: return "unusable_name";
    case ErrorCode::kMissingBinding: return "missing_binding";
    case ErrorCode::kTransport: return "transport_error";
    case ErrorCode::kContractViolation: return "contract_violation";
    case ErrorCode::kConfig: return "config_error";
    case ErrorCode::kIo: return "io_error";
  }
  return "unknown";
}

std::string_view to_string(Provenance v) { return enum_name(v, kProvenance); }
std::string_view to_string(UnitOrigin v) { return enum_name(v, kUnitOrigin); }
std::string_view to_string(ValueKind v) { return enum_name(v, kValueKind); }
std::string_view to_string(FieldOrigin v) { return enum_name(v, kFieldOrigin); }
std::string_view to_string(CellStatus v) { return enum_name(v, kCellStatus); }
std::string_view to_string(CellOrigin v) { return enum_name(v, kCellOrigin); }
std::string_view to_string(EditKind v) { return enum_name(v, kEditKind); }
std::string_view to_string(Phase v) { return enum_name(v, kPhase); }

Provenance provenance_from_string(std::string_view s) { return parse_enum(s, kProvenance, "provenance"); }
UnitOrigin unit_origin_from_string(std::string_view s) { return parse_enum(s, kUnitOrigin, "unit origin"); }
ValueKind value_kind_from_string(std::string_view s) { return parse_enum(s, kValueKind, "value kind"); }
FieldOrigin field_origin_from_string(std::string_view s) { return parse_enum(s, kFieldOrigin, "field origin"); }
CellStatus cell_status_from_string(std::string_view s) { return parse_enum(s, kCellStatus, "cell status"); }
CellOrigin cell_origin_from_string(std::string_view s) { return parse_enum(s, kCellOrigin, "cell origin"); }
EditKind edit_kind_from_string(std::string_view s) { return parse_enum(s, kEditKind, "edit kind"); }
Phase phase_from_string(std::string_view s) { return parse_enum(s, kPhase, "phase"); }

const SchemaField* Schema::find(std::string_view name) const {
  const auto idx = index_of(name);
  return idx ? &fields[*idx] : nullptr;
}

SchemaField* Schema::find(std::string_view name) {
  const auto idx = index_of(name);
  return idx ? &fields[*idx] : nullptr;
}

std::optional<std::size_t> Schema::index_of(std::string_view name) const {
  std::optional<std::string> key;
  try {
    key = normalize_name(canonical_field_name(name));
  } catch (const Error&) {
    return std::nullopt;
  }
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (key_of(fields[i].canonical_name) == key) return i;
  }
  return std::nullopt;
}

const Row* Table::find_row(std::string_view key_or_name) const {
  const auto key = key_of(key_or_name);
  if (!key) return nullptr;
  for (const Row& row : rows) {
    if (row.instance.canonical_key == *key) return &row;
  }
  return nullptr;
}

Row* Table::find_row(std::string_view key_or_name) {
  return const_cast<Row*>(std::as_const(*this).find_row(key_or_name));
}

const Document* SessionState::find_document(std::string_view doc_id) const {
  for (const Document& doc : documents) {
    if (doc.doc_id == doc_id) return &doc;
  }
  return nullptr;
}

std::string canonical_field_name(std::string_view raw) {
  std::string out;
  bool word_start = true;
  const auto* bytes = reinterpret_cast<const uint8_t*>(raw.data());
  const auto length = static_cast<int32_t>(raw.size());
  for (int32_t i = 0; i < length;) {
    UChar32 c;
    U8_NEXT(bytes, i, length, c);
    if (c < 0) continue;
    // Apostrophes vanish inside words ("Court's" -> "Courts").
    if (c == '\'' || c == 0x2019 || c == 0x2018) continue;
    if (!u_isalnum(c)) {
      word_start = true;
      continue;
    }
    if (word_start && !out.empty()) out.push_back(' ');
    if (word_start) c = u_toupper(c);
    word_start = false;
    char buf[U8_MAX_LENGTH];
    int32_t n = 0;
    UBool error = false;
    U8_APPEND(reinterpret_cast<uint8_t*>(buf), n, U8_MAX_LENGTH, c, error);
    if (!error) out.append(buf, static_cast<std::size_t>(n));
  }
  if (out.empty()) {
    throw Error(ErrorCode::kUnusableName, "field name '" + std::string(raw) + "' has no letters or digits");
  }
  return out;
}

std::string value_to_string(const Value& value) {
  if (const auto* s = std::get_if<std::string>(&value)) return *s;
  if (const auto* d = std::get_if<double>(&value)) {
    const double x = *d;
    if (std::isfinite(x) && std::trunc(x) == x && std::fabs(x) < 1e15) {
      return std::to_string(static_cast<long long>(x));
    }
    std::array<char, 64> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), x);
    return std::string(buf.data(), res.ptr);
  }
  const auto& list = std::get<std::vector<std::string>>(value);
  std::string out;
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (i) out += "; ";
    out += list[i];
  }
  return out;
}

void validate_document(const Document& doc) {
  if (doc.doc_id.empty()) invalid("document has an empty doc_id");
  if (is_blank(doc.text)) invalid("document '" + doc.doc_id + "' has empty text");
}

void validate_documents(const std::vector<Document>& docs) {
  std::unordered_set<std::string> seen;
  for (const Document& doc : docs) {
    validate_document(doc);
    if (!seen.insert(doc.doc_id).second) invalid("duplicate doc_id '" + doc.doc_id + "'");
  }
}

void validate_query(const ResearchQuery& query) {
  if (is_blank(query.text)) invalid("research query is empty");
}

void validate_unit(const ObservationUnitSpec& spec) {
  if (is_blank(spec.type_name)) invalid("observation unit type_name is empty");
  for (const ExampleInstance& ex : spec.example_instances) {
    if (is_blank(ex.name)) invalid("observation unit example instance has an empty name");
  }
}

void validate_field(const SchemaField& field) {
  if (canonical_field_name(field.canonical_name) != field.canonical_name) {
    invalid("field name '" + field.canonical_name + "' is not in canonical Title Case form");
  }
  const bool is_enum = field.value_kind == ValueKind::kEnum;
  if (is_enum != field.allowed_values.has_value()) {
    invalid("field '" + field.canonical_name + "': allowed_values must be present iff value_kind is enum");
  }
  if (field.allowed_values) {
    if (field.allowed_values->empty()) {
      invalid("field '" + field.canonical_name + "': allowed_values is empty");
    }
    std::unordered_set<std::string> seen;
    for (const std::string& v : *field.allowed_values) {
      if (!seen.insert(normalize(v)).second) {
        invalid("field '" + field.canonical_name + "': duplicate allowed value '" + v + "'");
      }
    }
  }
}

void validate_schema(const Schema& schema) {
  std::unordered_set<std::string> seen;
  for (const SchemaField& f : schema.fields) {
    validate_field(f);
    if (!seen.insert(normalize_name(f.canonical_name)).second) {
      invalid("duplicate field name '" + f.canonical_name + "'");
    }
  }
  if (schema.version < 0) invalid("schema version is negative");
}

void validate_cell(const CellValue& cell, const SchemaField& field) {
  switch (cell.status) {
    case CellStatus::kFilled:
      if (!cell.value) invalid("filled cell '" + cell.field_name + "' has no value");
      if (cell.evidence.empty() && cell.origin != CellOrigin::kHuman) {
        invalid("filled cell '" + cell.field_name + "' has no evidence");
      }
      break;
    case CellStatus::kMissing:
      if (cell.value) invalid("missing cell '" + cell.field_name + "' carries a value");
      break;
    default:
      break;
  }
  if (cell.value && field.value_kind == ValueKind::kEnum && field.allowed_values) {
    const auto* s = std::get_if<std::string>(&*cell.value);
    const auto& allowed = *field.allowed_values;
    if (s == nullptr || std::find(allowed.begin(), allowed.end(), *s) == allowed.end()) {
      invalid("cell '" + cell.field_name + "' holds a value outside allowed_values");
    }
  }
}

void validate_session(const SessionState& state) {
  validate_query(state.query);
  validate_documents(state.documents);
  if (state.ou_spec) {
    validate_unit(*state.ou_spec);
    if (state.phase < Phase::kUnitDiscovered) invalid("unit present but phase is 'created'");
  }
  if (state.schema) {
    validate_schema(*state.schema);
    if (state.phase < Phase::kSchemaDiscovered) invalid("schema present but phase precedes schema_discovered");
  }
  if (state.table) {
    if (state.phase != Phase::kExtracted) invalid("table present but phase is not 'extracted'");
    std::unordered_set<std::string> keys;
    for (const Row& row : state.table->rows) {
      if (!keys.insert(row.instance.canonical_key).second) {
        invalid("duplicate row key '" + row.instance.canonical_key + "'");
      }
    }
  }
  for (std::size_t i = 0; i < state.edit_log.size(); ++i) {
    if (state.edit_log[i].seq != static_cast<std::int64_t>(i) + 1) invalid("edit log is not gapless");
  }
}

}  // namespace qdex
