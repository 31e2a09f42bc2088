#include "qdex/discovery/discovery.h"

#include <algorithm>
#include <random>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "qdex/core/text.h"

namespace qdex::discovery {
namespace {

using nlohmann::json;

bool mentioned_in(const std::string& name, std::span<const Document> batch) {
  const std::string needle = normalize(name);
  if (needle.empty()) return false;
  return std::any_of(batch.begin(), batch.end(),
                     [&](const Document& d) { return normalize(d.text).find(needle) != std::string::npos; });
}

// Enum proposals need a usable vocabulary; anything else drops allowed values.
void sanitize_kind(FieldProposal& p) {
  if (p.value_kind != ValueKind::kEnum) {
    p.allowed_values.reset();
    return;
  }
  std::vector<std::string> cleaned;
  std::unordered_set<std::string> seen;
  if (p.allowed_values) {
    for (const std::string& v : *p.allowed_values) {
      const std::string key = normalize(v);
      if (key.empty() || !seen.insert(key).second) continue;
      cleaned.push_back(v);
    }
  }
  if (cleaned.empty()) {
    spdlog::warn("enum proposal '{}' has no allowed values; treating it as text", p.target_name);
    p.value_kind = ValueKind::kText;
    p.allowed_values.reset();
  } else {
    p.allowed_values = std::move(cleaned);
  }
}

}  // namespace

void validate_config(const DiscoveryConfig& cfg) {
  if (cfg.batch_size == 0 || cfg.max_chars_per_doc == 0 || cfg.quiescence_batches == 0 || cfg.max_fields == 0) {
    throw Error(ErrorCode::kInvalidArgument, "discovery config values must be positive");
  }
}

std::vector<Document> processing_order(std::span<const Document> docs, const DiscoveryConfig& cfg) {
  std::vector<Document> ordered(docs.begin(), docs.end());
  if (cfg.shuffle_seed) {
    std::mt19937_64 rng(*cfg.shuffle_seed);
    std::shuffle(ordered.begin(), ordered.end(), rng);
  }
  return ordered;
}

std::vector<Document> unit_discovery_batch(std::span<const Document> docs, const DiscoveryConfig& cfg) {
  validate_config(cfg);
  const std::vector<Document> ordered = processing_order(docs, cfg);
  if (ordered.empty()) return {};
  const std::size_t batches = (ordered.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t index = std::min(cfg.unit_batch_index, batches - 1);
  const std::size_t begin = index * cfg.batch_size;
  const std::size_t end = std::min(begin + cfg.batch_size, ordered.size());
  return {ordered.begin() + static_cast<std::ptrdiff_t>(begin), ordered.begin() + static_cast<std::ptrdiff_t>(end)};
}

ObservationUnitSpec discover_observation_unit(const ResearchQuery& query, std::span<const Document> batch,
                                              const DiscoveryConfig& cfg, LlmContext& ctx) {
  validate_query(query);
  if (batch.empty()) throw Error(ErrorCode::kInvalidArgument, "unit discovery needs at least one document");
  validate_config(cfg);

  const llm::Bindings bindings = {{"query", query.text},
                                  {"documents", llm::render_documents(batch, cfg.max_chars_per_doc)}};
  const llm::LlmExchange ex =
      ctx.gateway.complete_structured(ctx.model, ctx.templates.get(llm::TemplateId::kUnitDiscovery), bindings);
  const json& out = *ex.parsed;

  ObservationUnitSpec spec;
  spec.type_name = out.at("type_name").get<std::string>();
  spec.description = out.at("description").get<std::string>();
  spec.origin = UnitOrigin::kDiscovered;
  for (const json& item : out.at("example_instances")) {
    ExampleInstance ex_inst;
    ex_inst.name = item.at("name").get<std::string>();
    ex_inst.provenance = provenance_from_string(item.at("provenance").get<std::string>());
    // A "from the documents" claim must be checkable against the batch.
    if (ex_inst.provenance == Provenance::kFromDocuments && !mentioned_in(ex_inst.name, batch)) {
      spdlog::warn("example '{}' is not found in the batch; marking it model_knowledge", ex_inst.name);
      ex_inst.provenance = Provenance::kModelKnowledge;
    }
    spec.example_instances.push_back(std::move(ex_inst));
  }
  validate_unit(spec);
  return spec;
}

std::vector<FieldProposal> propose_schema_updates(const ResearchQuery& query, const ObservationUnitSpec& unit,
                                                  const Schema& current, std::span<const Document> batch,
                                                  const DiscoveryConfig& cfg, LlmContext& ctx) {
  if (batch.empty()) throw Error(ErrorCode::kInvalidArgument, "schema discovery needs a non-empty batch");
  const llm::Bindings bindings = {{"query", query.text},
                                  {"unit", llm::render_unit(unit)},
                                  {"schema", llm::render_schema(current)},
                                  {"documents", llm::render_documents(batch, cfg.max_chars_per_doc)}};
  const llm::LlmExchange ex =
      ctx.gateway.complete_structured(ctx.model, ctx.templates.get(llm::TemplateId::kSchemaDiscovery), bindings);

  std::vector<FieldProposal> proposals;
  for (const json& item : ex.parsed->at("proposals")) {
    FieldProposal p;
    p.action = item.at("action") == "refine" ? ProposalAction::kRefine : ProposalAction::kAdd;
    try {
      p.target_name = canonical_field_name(item.at("name").get<std::string>());
    } catch (const Error& e) {
      spdlog::warn("dropping proposal: {}", e.what());
      continue;
    }
    p.definition = item.at("definition").get<std::string>();
    p.rationale = item.at("rationale").get<std::string>();
    p.value_kind = value_kind_from_string(item.at("value_kind").get<std::string>());
    if (const auto it = item.find("allowed_values"); it != item.end() && !it->is_null()) {
      p.allowed_values = it->get<std::vector<std::string>>();
    }
    if (p.action == ProposalAction::kRefine && current.find(p.target_name) == nullptr) {
      spdlog::warn("dropping refine of unknown field '{}'", p.target_name);
      continue;
    }
    sanitize_kind(p);
    proposals.push_back(std::move(p));
  }
  return proposals;
}

MergeResult merge_proposals(const Schema& schema, const std::vector<FieldProposal>& proposals,
                            std::size_t max_fields) {
  MergeResult result{schema, 0};
  Schema& out = result.schema;
  for (const FieldProposal& p : proposals) {
    SchemaField* existing = out.find(p.target_name);
    if (existing == nullptr) {
      if (p.action == ProposalAction::kRefine) continue;
      if (out.fields.size() >= max_fields) {
        spdlog::info("rejecting '{}': schema already has {} fields", p.target_name, max_fields);
        continue;
      }
      SchemaField f;
      f.canonical_name = p.target_name;
      f.definition = p.definition;
      f.rationale = p.rationale;
      f.value_kind = p.value_kind;
      f.allowed_values = p.allowed_values;
      f.origin = FieldOrigin::kModel;
      out.fields.push_back(std::move(f));
      ++result.accepted_count;
      continue;
    }
    if (existing->locked) continue;
    SchemaField updated = *existing;
    updated.definition = p.definition;
    updated.rationale = p.rationale;
    updated.value_kind = p.value_kind;
    updated.allowed_values = p.allowed_values;
    if (updated != *existing) {
      *existing = std::move(updated);
      ++result.accepted_count;
    }
  }
  if (result.accepted_count > 0) ++out.version;
  return result;
}

SchemaDiscoveryResult run_schema_discovery(const ResearchQuery& query, const ObservationUnitSpec& unit,
                                           std::span<const Document> docs, const DiscoveryConfig& cfg,
                                           LlmContext& ctx, const std::optional<Schema>& seed_schema,
                                           const ProgressSink& progress) {
  validate_config(cfg);
  if (docs.empty()) throw Error(ErrorCode::kInvalidArgument, "schema discovery needs at least one document");
  if (seed_schema) validate_schema(*seed_schema);

  SchemaDiscoveryResult result;
  result.schema = seed_schema.value_or(Schema{});
  const std::vector<Document> ordered = processing_order(docs, cfg);
  std::size_t quiet_batches = 0;

  for (std::size_t begin = 0; begin < ordered.size(); begin += cfg.batch_size) {
    const std::size_t end = std::min(begin + cfg.batch_size, ordered.size());
    const std::span<const Document> batch(ordered.data() + begin, end - begin);

    std::vector<FieldProposal> proposals;
    try {
      ++result.proposal_calls;
      proposals = propose_schema_updates(query, unit, result.schema, batch, cfg, ctx);
    } catch (const Error& e) {
      throw DiscoveryAborted(e.code(), std::string("schema discovery aborted: ") + e.what(), result.schema);
    }

    const std::size_t before = result.schema.fields.size();
    MergeResult merged = merge_proposals(result.schema, proposals, cfg.max_fields);
    result.schema = std::move(merged.schema);
    ++result.batches_processed;

    if (progress) {
      for (std::size_t i = before; i < result.schema.fields.size(); ++i) {
        progress("field_proposed", {{"field", result.schema.fields[i].canonical_name}});
      }
      json doc_ids = json::array();
      for (const Document& d : batch) doc_ids.push_back(d.doc_id);
      progress("batch_processed", {{"batch", result.batches_processed},
                                   {"doc_ids", doc_ids},
                                   {"proposals", proposals.size()},
                                   {"accepted", merged.accepted_count},
                                   {"schema_version", result.schema.version}});
    }

    quiet_batches = merged.accepted_count == 0 ? quiet_batches + 1 : 0;
    if (cfg.early_stop && quiet_batches >= cfg.quiescence_batches && end < ordered.size()) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

}  // namespace qdex::discovery
