#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>

#include "qdex/llm/contract.h"

namespace qdex::llm {

enum class TemplateId {
  kUnitDiscovery,
  kSchemaDiscovery,
  kInstanceIdentification,
  kFieldFill,
  kFieldFollowup,
};

std::string_view to_string(TemplateId id);
TemplateId template_id_from_string(std::string_view s);

using Bindings = std::map<std::string, std::string>;

// A prompt body with {{name}} placeholders and the JSON shape it asks for.
struct PromptTemplate {
  TemplateId template_id = TemplateId::kUnitDiscovery;
  std::string body;
  std::set<std::string> required_bindings;
  ResponseContract response_contract;
};

// Placeholder names appearing in `body`, in sorted order.
std::set<std::string> placeholders(std::string_view body);

// Throws Error(kInvalidArgument) when a placeholder is not a required binding
// or the contract is empty.
void validate_template(const PromptTemplate& t);

// Single-pass substitution: values are inserted verbatim and never re-scanned.
// Throws Error(kMissingBinding) listing every absent required binding.
std::string render_prompt(const PromptTemplate& t, const Bindings& bindings);

// The five pipeline templates. Bodies are configuration: a registry can be
// copied and individual bodies overridden per session (the response contract
// stays fixed because the pipeline parses it).
class TemplateRegistry {
 public:
  TemplateRegistry();  // built-in defaults

  const PromptTemplate& get(TemplateId id) const;

  // Replaces the body; required bindings become the body's placeholders.
  void override_body(TemplateId id, std::string body);

 private:
  std::map<TemplateId, PromptTemplate> templates_;
};

const ResponseContract& unit_discovery_contract();
const ResponseContract& schema_discovery_contract();
const ResponseContract& instance_identification_contract();
const ResponseContract& field_fill_contract();
const ResponseContract& field_followup_contract();

}  // namespace qdex::llm
