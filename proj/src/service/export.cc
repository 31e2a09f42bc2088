#include "qdex/service/export.h"

#include "qdex/core/errors.h"
#include "qdex/core/json_io.h"

namespace qdex::service {
namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

void add_record(std::string& out, const std::vector<std::string>& cols) {
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (i) out += ',';
    out += csv_field(cols[i]);
  }
  out += "\r\n";
}

}  // namespace

std::string table_to_csv(const Table& table, const Schema& schema, bool include_conflicts) {
  std::string out;
  std::vector<std::string> header = {"instance"};
  for (const SchemaField& f : schema.fields) {
    header.push_back(f.canonical_name);
    if (include_conflicts) header.push_back(f.canonical_name + " (conflict)");
  }
  add_record(out, header);

  for (const Row& row : table.rows) {
    std::vector<std::string> cols = {row.instance.display_name};
    for (const SchemaField& f : schema.fields) {
      const auto it = row.cells.find(f.canonical_name);
      const CellValue* cell = it == row.cells.end() ? nullptr : &it->second;
      const bool conflict = cell != nullptr && cell->status == CellStatus::kConflict;
      cols.push_back(cell != nullptr && !conflict && cell->value ? value_to_string(*cell->value) : std::string());
      if (include_conflicts) {
        std::string candidates;
        if (conflict) {
          for (const Candidate& c : cell->candidates) {
            if (!candidates.empty()) candidates += " | ";
            candidates += value_to_string(c.value);
          }
        }
        cols.push_back(candidates);
      }
    }
    add_record(out, cols);
  }
  return out;
}

std::string table_to_json(const Table& table) { return dump_canonical(json(table)); }

Table table_from_json(const std::string& text) {
  try {
    return json::parse(text).get<Table>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("not a table: ") + e.what());
  }
}

}  // namespace qdex::service
