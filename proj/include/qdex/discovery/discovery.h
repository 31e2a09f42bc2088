#pragma once

// Steps one and two of the pipeline: decide what a row stands for, then grow
// the schema batch by batch until proposals dry up or the corpus runs out.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qdex/core/errors.h"
#include "qdex/core/model.h"
#include "qdex/core/progress.h"
#include "qdex/llm/prompt_inputs.h"

namespace qdex::discovery {

using llm::LlmContext;

struct DiscoveryConfig {
  std::size_t batch_size = 5;
  std::size_t max_chars_per_doc = 20000;
  std::size_t quiescence_batches = 3;
  std::size_t max_fields = 40;
  bool early_stop = true;  // stop after quiescence_batches zero-accept batches
  std::size_t unit_batch_index = 0;  // which batch the unit step reads
  std::optional<std::uint64_t> shuffle_seed;  // unset: ingestion order
};

void validate_config(const DiscoveryConfig& cfg);

enum class ProposalAction { kAdd, kRefine };

struct FieldProposal {
  ProposalAction action = ProposalAction::kAdd;
  std::string target_name;  // canonical form
  std::string definition;
  std::string rationale;
  ValueKind value_kind = ValueKind::kText;
  std::optional<std::vector<std::string>> allowed_values;
};

struct MergeResult {
  Schema schema;
  std::size_t accepted_count = 0;
};

struct SchemaDiscoveryResult {
  Schema schema;
  std::size_t proposal_calls = 0;
  std::size_t batches_processed = 0;
  bool stopped_early = false;
};

// Thrown when the gateway fails mid-loop; carries the schema as it stood.
class DiscoveryAborted : public Error {
 public:
  DiscoveryAborted(ErrorCode code, const std::string& message, Schema partial)
      : Error(code, message), partial_(std::move(partial)) {}
  const Schema& partial_schema() const { return partial_; }

 private:
  Schema partial_;
};

// The batch the unit step reads, honouring unit_batch_index (clamped to the
// last batch) and the optional shuffle.
std::vector<Document> unit_discovery_batch(std::span<const Document> docs, const DiscoveryConfig& cfg);

// Documents in processing order (ingestion order unless shuffle_seed is set).
std::vector<Document> processing_order(std::span<const Document> docs, const DiscoveryConfig& cfg);

ObservationUnitSpec discover_observation_unit(const ResearchQuery& query, std::span<const Document> batch,
                                              const DiscoveryConfig& cfg, LlmContext& ctx);

// Asks the model for add/refine proposals. Unusable names and refinements of
// unknown fields are dropped with a warning.
std::vector<FieldProposal> propose_schema_updates(const ResearchQuery& query, const ObservationUnitSpec& unit,
                                                  const Schema& current, std::span<const Document> batch,
                                                  const DiscoveryConfig& cfg, LlmContext& ctx);

// Applies proposals:
//  - an add whose name collides (normalize_name) with an existing field is a refine;
//  - a refine changes definition/rationale/value kind of unlocked fields only,
//    and counts as accepted only if it changed something;
//  - adds past max_fields are rejected;
//  - existing order is kept, new fields are appended in proposal order;
//  - version bumps by one iff anything was accepted.
MergeResult merge_proposals(const Schema& schema, const std::vector<FieldProposal>& proposals,
                            std::size_t max_fields);

// Batch loop. With a seed schema (incremental mode) every seed field survives
// and locked fields are never touched. Emits batch_processed and
// field_proposed progress events when a sink is given.
SchemaDiscoveryResult run_schema_discovery(const ResearchQuery& query, const ObservationUnitSpec& unit,
                                           std::span<const Document> docs, const DiscoveryConfig& cfg,
                                           LlmContext& ctx, const std::optional<Schema>& seed_schema,
                                           const ProgressSink& progress = {});

}  // namespace qdex::discovery
