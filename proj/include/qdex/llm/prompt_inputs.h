#pragma once

// Text renderings of domain objects for prompt bindings. Deterministic so the
// scripted provider sees identical prompts for identical state.

#include <cstddef>
#include <span>
#include <string>

#include "qdex/core/model.h"
#include "qdex/llm/gateway.h"
#include "qdex/llm/templates.h"

namespace qdex::llm {

std::string render_document(const Document& doc, std::size_t max_chars);
std::string render_documents(std::span<const Document> docs, std::size_t max_chars);
std::string render_unit(const ObservationUnitSpec& unit);
std::string render_field(const SchemaField& field);
std::string render_schema(const Schema& schema);

// What an LLM-backed step needs: the gateway, the template set, and the model
// configured for that step.
struct LlmContext {
  Gateway& gateway;
  const TemplateRegistry& templates;
  ProviderConfig model;
};

}  // namespace qdex::llm
