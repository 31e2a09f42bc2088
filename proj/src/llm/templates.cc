#include "qdex/llm/templates.h"

#include <array>
#include <cctype>
#include <vector>

#include "qdex/core/errors.h"

namespace qdex::llm {
namespace {

constexpr std::array<std::pair<TemplateId, std::string_view>, 5> kNames{{
    {TemplateId::kUnitDiscovery, "unit_discovery"},
    {TemplateId::kSchemaDiscovery, "schema_discovery"},
    {TemplateId::kInstanceIdentification, "instance_identification"},
    {TemplateId::kFieldFill, "field_fill"},
    {TemplateId::kFieldFollowup, "field_followup"},
}};

constexpr std::string_view kUnitDiscoveryBody = R"(You are assisting a domain expert who wants to build a structured dataset that answers a research question over a collection of documents.

Research question:
{{query}}

Sample of the document collection:
{{documents}}

Decide which kind of entity the research question is about: the observation unit, i.e. what a single row of the dataset should stand for so that a table with one row per unit can answer the question. Rows stand for entities, not for documents.

Reply with one JSON object and nothing else:
{"type_name": "<short singular name of the unit type>",
 "description": "<how instances of the unit show up in the documents and what counts as one instance>",
 "example_instances": [{"name": "<instance>", "provenance": "from_documents" or "model_knowledge"}]}
Mark an example "from_documents" when it occurs in the documents above, otherwise "model_knowledge".)";

constexpr std::string_view kSchemaDiscoveryBody = R"(You are assisting a domain expert who is designing the columns of a dataset that answers a research question.

Research question:
{{query}}

Observation unit (one row per instance):
{{unit}}

Current schema (JSON; may be empty):
{{schema}}

Next batch of documents:
{{documents}}

Read the documents and decide whether the schema needs new fields, or better definitions for existing ones, so that every instance can be described in ways that matter for the question, including plausible confounders. Propose only changes these documents support. If nothing should change, return an empty list.

Reply with one JSON object and nothing else:
{"proposals": [{"action": "add" or "refine",
                "name": "<Title Case field name; for refine, the existing field's name>",
                "definition": "<what the field records>",
                "rationale": "<how the field helps answer the question>",
                "value_kind": "text" | "number" | "date" | "enum" | "list_of_text",
                "allowed_values": ["<only for enum fields>"]}]})";

constexpr std::string_view kInstanceIdentificationBody = R"(Observation unit:
{{unit}}

Document {{doc_id}}:
{{document}}

List every instance of the observation unit discussed in this document. For each one give its name as written in the document and a short quote, copied exactly from the document, that mentions it. Do not paraphrase quotes.

Reply with one JSON object and nothing else:
{"instances": [{"name": "<instance name>", "quote": "<verbatim quote>"}]})";

constexpr std::string_view kFieldFillBody = R"(Observation unit:
{{unit}}

Instance: {{instance}}

Fields (JSON):
{{schema}}

Document {{doc_id}}:
{{document}}

Fill every field for this instance using only the document above. Give a value only when the document clearly supports it, and back it with one or more quotes copied exactly from the document. When the document does not state a value, use null.
Text, date and enum fields take a string (enum values must be one of the allowed values; write dates as YYYY-MM-DD when possible), number fields take a number, list_of_text fields take a list of strings.

Reply with one JSON object and nothing else:
{"cells": [{"field": "<field name>", "value": <value or null>, "quotes": ["<verbatim quote>"]}]})";

constexpr std::string_view kFieldFollowupBody = R"(Observation unit:
{{unit}}

Instance: {{instance}}

Field (JSON):
{{field}}

Document {{doc_id}}:
{{document}}

An earlier pass left this field empty for this instance. Search the document again for text that states its value. Give a value only when the document clearly supports it, with quotes copied exactly from the document; otherwise return null.

Reply with one JSON object and nothing else:
{"value": <value or null>, "quotes": ["<verbatim quote>"]})";

PromptTemplate make(TemplateId id, std::string_view body, const ResponseContract& contract) {
  PromptTemplate t;
  t.template_id = id;
  t.body = std::string(body);
  t.required_bindings = placeholders(body);
  t.response_contract = contract;
  validate_template(t);
  return t;
}

bool is_name_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

// Calls on_placeholder(start, end, name) for each "{{name}}" occurrence.
template <typename F>
void scan(std::string_view body, F&& on_placeholder) {
  std::size_t pos = 0;
  while ((pos = body.find("{{", pos)) != std::string_view::npos) {
    std::size_t end = pos + 2;
    while (end < body.size() && is_name_char(body[end])) ++end;
    if (end > pos + 2 && body.substr(end, 2) == "}}") {
      on_placeholder(pos, end + 2, body.substr(pos + 2, end - pos - 2));
      pos = end + 2;
    } else {
      pos += 2;
    }
  }
}

}  // namespace

std::string_view to_string(TemplateId id) {
  for (const auto& [value, name] : kNames) {
    if (value == id) return name;
  }
  return "?";
}

TemplateId template_id_from_string(std::string_view s) {
  for (const auto& [value, name] : kNames) {
    if (name == s) return value;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown template_id '" + std::string(s) + "'");
}

std::set<std::string> placeholders(std::string_view body) {
  std::set<std::string> out;
  scan(body, [&](std::size_t, std::size_t, std::string_view name) { out.emplace(name); });
  return out;
}

void validate_template(const PromptTemplate& t) {
  for (const std::string& name : placeholders(t.body)) {
    if (!t.required_bindings.count(name)) {
      throw Error(ErrorCode::kInvalidArgument, "template " + std::string(to_string(t.template_id)) +
                                                   ": placeholder '" + name + "' is not a required binding");
    }
  }
  if (t.response_contract.kind != Shape::Kind::kObject || t.response_contract.members.empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                "template " + std::string(to_string(t.template_id)) + ": response contract is empty");
  }
}

std::string render_prompt(const PromptTemplate& t, const Bindings& bindings) {
  std::vector<std::string> missing;
  for (const std::string& name : t.required_bindings) {
    if (!bindings.count(name)) missing.push_back(name);
  }
  if (!missing.empty()) {
    std::string names;
    for (std::size_t i = 0; i < missing.size(); ++i) names += (i ? ", " : "") + missing[i];
    throw Error(ErrorCode::kMissingBinding, "missing prompt bindings: " + names);
  }
  std::string out;
  out.reserve(t.body.size());
  std::size_t copied = 0;
  scan(t.body, [&](std::size_t start, std::size_t end, std::string_view name) {
    out.append(t.body, copied, start - copied);
    const auto it = bindings.find(std::string(name));
    if (it != bindings.end()) {
      out += it->second;
    } else {
      out.append(t.body, start, end - start);
    }
    copied = end;
  });
  out.append(t.body, copied, std::string::npos);
  return out;
}

const ResponseContract& unit_discovery_contract() {
  static const ResponseContract c = Shape::object({
      required("type_name", Shape::string(true)),
      required("description", Shape::string(true)),
      required("example_instances",
               Shape::array_of(Shape::object({
                   required("name", Shape::string(true)),
                   required("provenance", Shape::enumeration({"from_documents", "model_knowledge"})),
               }))),
  });
  return c;
}

const ResponseContract& schema_discovery_contract() {
  static const ResponseContract c = Shape::object({
      required("proposals",
               Shape::array_of(Shape::object({
                   required("action", Shape::enumeration({"add", "refine"})),
                   required("name", Shape::string(true)),
                   required("definition", Shape::string()),
                   required("rationale", Shape::string()),
                   required("value_kind", Shape::enumeration({"text", "number", "date", "enum", "list_of_text"})),
                   optional("allowed_values", Shape::array_of(Shape::string(true)).or_null()),
               }))),
  });
  return c;
}

const ResponseContract& instance_identification_contract() {
  static const ResponseContract c = Shape::object({
      required("instances", Shape::array_of(Shape::object({
                                required("name", Shape::string(true)),
                                required("quote", Shape::string()),
                            }))),
  });
  return c;
}

const ResponseContract& field_fill_contract() {
  static const ResponseContract c = Shape::object({
      required("cells", Shape::array_of(Shape::object({
                            required("field", Shape::string(true)),
                            optional("value", Shape::any()),
                            optional("quotes", Shape::array_of(Shape::string()).or_null()),
                        }))),
  });
  return c;
}

const ResponseContract& field_followup_contract() {
  static const ResponseContract c = Shape::object({
      required("value", Shape::any()),
      optional("quotes", Shape::array_of(Shape::string()).or_null()),
  });
  return c;
}

TemplateRegistry::TemplateRegistry() {
  for (auto t : {make(TemplateId::kUnitDiscovery, kUnitDiscoveryBody, unit_discovery_contract()),
                 make(TemplateId::kSchemaDiscovery, kSchemaDiscoveryBody, schema_discovery_contract()),
                 make(TemplateId::kInstanceIdentification, kInstanceIdentificationBody,
                      instance_identification_contract()),
                 make(TemplateId::kFieldFill, kFieldFillBody, field_fill_contract()),
                 make(TemplateId::kFieldFollowup, kFieldFollowupBody, field_followup_contract())}) {
    templates_.emplace(t.template_id, std::move(t));
  }
}

const PromptTemplate& TemplateRegistry::get(TemplateId id) const { return templates_.at(id); }

void TemplateRegistry::override_body(TemplateId id, std::string body) {
  PromptTemplate& t = templates_.at(id);
  PromptTemplate updated = t;
  updated.required_bindings = placeholders(body);
  updated.body = std::move(body);
  validate_template(updated);
  t = std::move(updated);
}

}  // namespace qdex::llm
