#pragma once

// Step three: find instances per document, fill every field per (instance,
// document), retry empty fields once, and fold documents into one table.

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "qdex/core/model.h"
#include "qdex/core/progress.h"
#include "qdex/llm/prompt_inputs.h"

namespace qdex::extraction {

using llm::LlmContext;

enum class ConflictPolicy { kKeepAllMarkConflict, kFirstWins };

std::string_view to_string(ConflictPolicy p);
ConflictPolicy conflict_policy_from_string(std::string_view s);

struct ExtractionConfig {
  std::size_t max_followups_per_field = 1;
  // false: keep the quotes that validate and drop the rest (one is still
  // needed). true: a single bad quote rejects the value.
  bool evidence_required = true;
  ConflictPolicy conflict_policy = ConflictPolicy::kKeepAllMarkConflict;
  std::size_t max_parallel_docs = 4;
  std::size_t max_chars_per_doc = 20000;
};

void validate_config(const ExtractionConfig& cfg);

struct InstanceMention {
  std::string doc_id;
  std::string surface_name;
  Evidence context_quote;
};

struct IdentifyResult {
  std::vector<InstanceMention> mentions;
  std::size_t rejected = 0;  // mentions whose quote failed validation
};

IdentifyResult identify_instances(const Document& doc, const ObservationUnitSpec& unit, const ExtractionConfig& cfg,
                                  LlmContext& ctx);

// One cell per schema field, in schema order. A value is kept only when it
// parses under the field's kind and its evidence validates; otherwise the
// cell is missing with a note saying why. A gateway failure leaves every
// cell missing with the error as note.
std::vector<CellValue> fill_fields(const Document& doc, const ObservationUnitSpec& unit,
                                   const InstanceMention& mention, const Schema& schema,
                                   const ExtractionConfig& cfg, LlmContext& ctx);

// Second try for one field. Same gates as fill_fields; origin is followup.
CellValue followup_extract(const Document& doc, const ObservationUnitSpec& unit, const InstanceMention& mention,
                           const SchemaField& field, const ExtractionConfig& cfg, LlmContext& ctx);

// Groups mentions by normalize_name(surface_name), in first-seen order. The
// longest surface form (first on ties) becomes the display name, the other
// distinct forms become aliases.
std::vector<InstanceRecord> resolve_instances(std::span<const InstanceMention> mentions);

struct DocumentCoverage {
  std::string doc_id;
  std::size_t mentions = 0;
  std::size_t mentions_rejected = 0;
  std::size_t rows = 0;  // distinct instances this document contributed to
  bool failed = false;
  std::string error;
};

struct ExtractionReport {
  std::size_t docs_total = 0;
  std::size_t docs_failed = 0;
  std::size_t fill_errors = 0;  // (instance, document) fills lost to the gateway
  std::size_t llm_calls = 0;
  std::size_t instances_found = 0;
  std::size_t rejected_evidence = 0;  // mentions and values dropped by the evidence rule
  std::map<std::string, std::size_t> cell_counts;  // by status
  double fill_rate = 0.0;
  std::vector<DocumentCoverage> coverage;  // in document order
};

nlohmann::json report_to_json(const ExtractionReport& report);

struct ExtractionResult {
  Table table;
  ExtractionReport report;
};

// Runs the whole step. Per-document failures are isolated: the document is
// reported and a pipeline_error event is emitted, the rest carry on. Rows
// and cells are assembled in (document, mention) order so output does not
// depend on thread timing. Throws kInvalidArgument for an empty schema.
ExtractionResult extract_table(std::span<const Document> docs, const ObservationUnitSpec& unit, const Schema& schema,
                               const ExtractionConfig& cfg, LlmContext& ctx, const ProgressSink& progress = {});

}  // namespace qdex::extraction
