#include "qdex/llm/prompt_inputs.h"

#include <nlohmann/json.hpp>

#include "qdex/core/text.h"

namespace qdex::llm {
namespace {

nlohmann::json field_json(const SchemaField& f) {
  nlohmann::json j = {{"name", f.canonical_name},
                      {"definition", f.definition},
                      {"value_kind", std::string(to_string(f.value_kind))}};
  if (f.allowed_values) j["allowed_values"] = *f.allowed_values;
  return j;
}

}  // namespace

std::string render_document(const Document& doc, std::size_t max_chars) {
  std::string out = "[doc_id: " + doc.doc_id + "]\n";
  if (doc.title) out += "Title: " + *doc.title + "\n";
  const std::string_view body = utf8_prefix(doc.text, max_chars);
  out += body;
  if (body.size() < doc.text.size()) out += "\n[truncated]";
  out += "\n";
  return out;
}

std::string render_documents(std::span<const Document> docs, std::size_t max_chars) {
  std::string out;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (i) out += "\n";
    out += render_document(docs[i], max_chars);
  }
  return out;
}

std::string render_unit(const ObservationUnitSpec& unit) {
  std::string out = unit.type_name;
  if (!unit.description.empty()) out += ": " + unit.description;
  return out;
}

std::string render_field(const SchemaField& field) { return field_json(field).dump(); }

std::string render_schema(const Schema& schema) {
  nlohmann::json fields = nlohmann::json::array();
  for (const SchemaField& f : schema.fields) fields.push_back(field_json(f));
  return fields.dump();
}

}  // namespace qdex::llm
