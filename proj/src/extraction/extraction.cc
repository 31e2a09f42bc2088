#include "qdex/extraction/extraction.h"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <thread>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "qdex/core/errors.h"
#include "qdex/core/text.h"
#include "qdex/extraction/evidence.h"
#include "qdex/extraction/values.h"

namespace qdex::extraction {
namespace {

using nlohmann::json;

// A cell plus whether some value for it was thrown out along the way.
struct GatedCell {
  CellValue cell;
  bool rejected = false;
  bool evidence_rejected = false;
};

struct FillOutcome {
  std::vector<GatedCell> cells;
  bool failed = false;
  std::string error;
};

template <typename F>
void parallel_for(std::size_t n, std::size_t workers, F&& fn) {
  std::atomic<std::size_t> next{0};
  auto run = [&] {
    for (std::size_t i; (i = next++) < n;) fn(i);
  };
  workers = std::min(workers, n);
  if (workers <= 1) {
    run();
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t k = 1; k < workers; ++k) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
}

GatedCell missing_cell(const std::string& field, CellOrigin origin, std::string note = {}) {
  GatedCell g;
  g.cell.field_name = field;
  g.cell.status = CellStatus::kMissing;
  g.cell.origin = origin;
  if (!note.empty()) g.cell.note = std::move(note);
  return g;
}

GatedCell rejected_cell(const std::string& field, CellOrigin origin, const std::string& why, bool evidence) {
  GatedCell g = missing_cell(field, origin, "rejected: " + why);
  g.rejected = true;
  g.evidence_rejected = evidence;
  return g;
}

// Applies the type gate and the evidence rule to one model answer.
GatedCell gate(const json& raw_value, const json* quotes, const SchemaField& field, const GroundedDocument& doc,
               const ExtractionConfig& cfg, CellOrigin origin) {
  const ParsedValue parsed = parse_value(raw_value, field);
  if (parsed.outcome == ParseOutcome::kAbsent) return missing_cell(field.canonical_name, origin);
  if (parsed.outcome == ParseOutcome::kInvalid) return rejected_cell(field.canonical_name, origin, parsed.note, false);

  std::vector<Evidence> evidence;
  std::vector<std::string> bad_quotes;
  if (quotes != nullptr && quotes->is_array()) {
    for (const json& q : *quotes) {
      Evidence ev{doc.document().doc_id, q.get<std::string>(), std::nullopt};
      if (doc.validate(ev)) {
        evidence.push_back(std::move(ev));
      } else {
        bad_quotes.push_back(q.get<std::string>());
      }
    }
  }
  if (evidence.empty() && bad_quotes.empty()) {
    return rejected_cell(field.canonical_name, origin, "value has no supporting quote", true);
  }
  if (!bad_quotes.empty() && (cfg.evidence_required || evidence.empty())) {
    return rejected_cell(field.canonical_name, origin, "quote not found in document: " + bad_quotes.front(), true);
  }
  GatedCell g;
  g.cell.field_name = field.canonical_name;
  g.cell.value = parsed.value;
  g.cell.evidence = std::move(evidence);
  g.cell.status = CellStatus::kFilled;
  g.cell.origin = origin;
  if (!parsed.note.empty()) g.cell.note = parsed.note;
  return g;
}

llm::Bindings mention_bindings(const Document& doc, const InstanceMention& mention, const ObservationUnitSpec& unit,
                               const ExtractionConfig& cfg) {
  return {{"unit", llm::render_unit(unit)},
          {"instance", mention.surface_name},
          {"doc_id", doc.doc_id},
          {"document", llm::render_document(doc, cfg.max_chars_per_doc)}};
}

FillOutcome fill_impl(const GroundedDocument& gdoc, const InstanceMention& mention, const ObservationUnitSpec& unit,
                      const Schema& schema, const ExtractionConfig& cfg, LlmContext& ctx) {
  const Document& doc = gdoc.document();
  FillOutcome out;
  llm::Bindings bindings = mention_bindings(doc, mention, unit, cfg);
  bindings["schema"] = llm::render_schema(schema);
  json cells;
  try {
    const llm::LlmExchange ex =
        ctx.gateway.complete_structured(ctx.model, ctx.templates.get(llm::TemplateId::kFieldFill), bindings);
    cells = ex.parsed->at("cells");
  } catch (const Error& e) {
    out.failed = true;
    out.error = e.what();
    for (const SchemaField& f : schema.fields) {
      out.cells.push_back(missing_cell(f.canonical_name, CellOrigin::kExtracted,
                                       std::string("extraction failed: ") + e.what()));
    }
    return out;
  }

  // First answer per field wins; unknown field names are ignored.
  std::vector<const json*> answer(schema.fields.size(), nullptr);
  for (const json& c : cells) {
    std::optional<std::size_t> idx;
    try {
      idx = schema.index_of(c.at("field").get<std::string>());
    } catch (const Error&) {
    }
    if (!idx) {
      spdlog::debug("ignoring answer for unknown field {}", c.at("field").dump());
      continue;
    }
    if (answer[*idx] == nullptr) answer[*idx] = &c;
  }
  for (std::size_t i = 0; i < schema.fields.size(); ++i) {
    const SchemaField& f = schema.fields[i];
    if (answer[i] == nullptr) {
      out.cells.push_back(missing_cell(f.canonical_name, CellOrigin::kExtracted));
      continue;
    }
    const json& a = *answer[i];
    const json value = a.contains("value") ? a["value"] : json();
    const json* quotes = a.contains("quotes") ? &a["quotes"] : nullptr;
    out.cells.push_back(gate(value, quotes, f, gdoc, cfg, CellOrigin::kExtracted));
  }
  return out;
}

GatedCell followup_impl(const GroundedDocument& gdoc, const InstanceMention& mention, const ObservationUnitSpec& unit,
                        const SchemaField& field, const ExtractionConfig& cfg, LlmContext& ctx, bool* failed) {
  llm::Bindings bindings = mention_bindings(gdoc.document(), mention, unit, cfg);
  bindings["field"] = llm::render_field(field);
  try {
    const llm::LlmExchange ex =
        ctx.gateway.complete_structured(ctx.model, ctx.templates.get(llm::TemplateId::kFieldFollowup), bindings);
    const json& out = *ex.parsed;
    return gate(out.at("value"), out.contains("quotes") ? &out["quotes"] : nullptr, field, gdoc, cfg,
                CellOrigin::kFollowup);
  } catch (const Error& e) {
    if (failed != nullptr) *failed = true;
    return missing_cell(field.canonical_name, CellOrigin::kFollowup, std::string("follow-up failed: ") + e.what());
  }
}

IdentifyResult identify_impl(const GroundedDocument& gdoc, const ObservationUnitSpec& unit,
                             const ExtractionConfig& cfg, LlmContext& ctx) {
  const Document& doc = gdoc.document();
  const llm::Bindings bindings = {{"unit", llm::render_unit(unit)},
                                  {"doc_id", doc.doc_id},
                                  {"document", llm::render_document(doc, cfg.max_chars_per_doc)}};
  const llm::LlmExchange ex = ctx.gateway.complete_structured(
      ctx.model, ctx.templates.get(llm::TemplateId::kInstanceIdentification), bindings);
  IdentifyResult result;
  for (const json& item : ex.parsed->at("instances")) {
    InstanceMention m;
    m.doc_id = doc.doc_id;
    m.surface_name = item.at("name").get<std::string>();
    m.context_quote = Evidence{doc.doc_id, item.at("quote").get<std::string>(), std::nullopt};
    bool usable = true;
    try {
      normalize_name(m.surface_name);
    } catch (const Error&) {
      usable = false;
    }
    if (usable && gdoc.validate(m.context_quote)) {
      result.mentions.push_back(std::move(m));
    } else {
      ++result.rejected;
    }
  }
  return result;
}

std::size_t code_points(std::string_view s) {
  return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) { return (c & 0xC0) != 0x80; }));
}

void append_unique(std::vector<Evidence>& into, const std::vector<Evidence>& from) {
  for (const Evidence& ev : from) {
    if (std::find(into.begin(), into.end(), ev) == into.end()) into.push_back(ev);
  }
}

}  // namespace

std::string_view to_string(ConflictPolicy p) {
  return p == ConflictPolicy::kFirstWins ? "first_wins" : "keep_all_mark_conflict";
}

ConflictPolicy conflict_policy_from_string(std::string_view s) {
  if (s == "first_wins") return ConflictPolicy::kFirstWins;
  if (s == "keep_all_mark_conflict") return ConflictPolicy::kKeepAllMarkConflict;
  throw Error(ErrorCode::kInvalidArgument, "unknown conflict policy '" + std::string(s) + "'");
}

void validate_config(const ExtractionConfig& cfg) {
  if (cfg.max_parallel_docs == 0) throw Error(ErrorCode::kInvalidArgument, "max_parallel_docs must be positive");
  if (cfg.max_chars_per_doc == 0) throw Error(ErrorCode::kInvalidArgument, "max_chars_per_doc must be positive");
}

IdentifyResult identify_instances(const Document& doc, const ObservationUnitSpec& unit, const ExtractionConfig& cfg,
                                  LlmContext& ctx) {
  return identify_impl(GroundedDocument(doc), unit, cfg, ctx);
}

std::vector<CellValue> fill_fields(const Document& doc, const ObservationUnitSpec& unit,
                                   const InstanceMention& mention, const Schema& schema,
                                   const ExtractionConfig& cfg, LlmContext& ctx) {
  if (schema.fields.empty()) throw Error(ErrorCode::kInvalidArgument, "extraction requires at least one field");
  FillOutcome out = fill_impl(GroundedDocument(doc), mention, unit, schema, cfg, ctx);
  std::vector<CellValue> cells;
  for (GatedCell& g : out.cells) cells.push_back(std::move(g.cell));
  return cells;
}

CellValue followup_extract(const Document& doc, const ObservationUnitSpec& unit, const InstanceMention& mention,
                           const SchemaField& field, const ExtractionConfig& cfg, LlmContext& ctx) {
  return followup_impl(GroundedDocument(doc), mention, unit, field, cfg, ctx, nullptr).cell;
}

std::vector<InstanceRecord> resolve_instances(std::span<const InstanceMention> mentions) {
  std::vector<InstanceRecord> records;
  std::vector<std::vector<std::string>> forms;
  std::unordered_map<std::string, std::size_t> by_key;
  for (const InstanceMention& m : mentions) {
    const std::string key = normalize_name(m.surface_name);
    auto [it, inserted] = by_key.emplace(key, records.size());
    if (inserted) {
      records.push_back(InstanceRecord{key, m.surface_name, {}, {}});
      forms.emplace_back();
    }
    InstanceRecord& r = records[it->second];
    r.source_doc_ids.insert(m.doc_id);
    auto& seen = forms[it->second];
    if (std::find(seen.begin(), seen.end(), m.surface_name) == seen.end()) seen.push_back(m.surface_name);
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& seen = forms[i];
    std::size_t best = 0;
    for (std::size_t k = 1; k < seen.size(); ++k) {
      if (code_points(seen[k]) > code_points(seen[best])) best = k;
    }
    records[i].display_name = seen[best];
    records[i].aliases.clear();
    for (std::size_t k = 0; k < seen.size(); ++k) {
      if (k != best) records[i].aliases.push_back(seen[k]);
    }
  }
  return records;
}

json report_to_json(const ExtractionReport& r) {
  json coverage = json::array();
  for (const DocumentCoverage& c : r.coverage) {
    json j = {{"doc_id", c.doc_id},
              {"mentions", c.mentions},
              {"mentions_rejected", c.mentions_rejected},
              {"rows", c.rows},
              {"failed", c.failed}};
    if (c.failed) j["error"] = c.error;
    coverage.push_back(std::move(j));
  }
  return {{"docs_total", r.docs_total},       {"docs_failed", r.docs_failed},
          {"fill_errors", r.fill_errors},     {"llm_calls", r.llm_calls},
          {"instances_found", r.instances_found},
          {"rejected_evidence_count", r.rejected_evidence},
          {"cell_counts", r.cell_counts},     {"fill_rate", r.fill_rate},
          {"coverage", coverage}};
}

ExtractionResult extract_table(std::span<const Document> docs, const ObservationUnitSpec& unit, const Schema& schema,
                               const ExtractionConfig& cfg, LlmContext& ctx, const ProgressSink& progress) {
  validate_config(cfg);
  if (schema.fields.empty()) throw Error(ErrorCode::kInvalidArgument, "extraction requires at least one field");

  std::mutex emit_mutex;
  auto emit = [&](std::string_view kind, json payload) {
    if (!progress) return;
    std::lock_guard lock(emit_mutex);
    progress(kind, std::move(payload));
  };
  std::atomic<std::size_t> calls{0};

  std::vector<GroundedDocument> grounded;
  grounded.reserve(docs.size());
  for (const Document& d : docs) grounded.emplace_back(d);

  ExtractionResult result;
  ExtractionReport& report = result.report;
  report.docs_total = docs.size();
  emit("phase_started", {{"phase", "extraction"}, {"docs", docs.size()}, {"fields", schema.fields.size()}});

  // Identification, one task per document.
  std::vector<IdentifyResult> found(docs.size());
  std::vector<std::optional<std::string>> doc_error(docs.size());
  parallel_for(docs.size(), cfg.max_parallel_docs, [&](std::size_t i) {
    ++calls;
    try {
      found[i] = identify_impl(grounded[i], unit, cfg, ctx);
    } catch (const Error& e) {
      doc_error[i] = e.what();
      spdlog::warn("instance identification failed for {}: {}", docs[i].doc_id, e.what());
      emit("pipeline_error", {{"doc_id", docs[i].doc_id}, {"stage", "identification"}, {"message", e.what()}});
    }
  });

  std::vector<InstanceMention> mentions;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    DocumentCoverage c;
    c.doc_id = docs[i].doc_id;
    if (doc_error[i]) {
      c.failed = true;
      c.error = *doc_error[i];
      ++report.docs_failed;
    } else {
      c.mentions = found[i].mentions.size();
      c.mentions_rejected = found[i].rejected;
      report.rejected_evidence += found[i].rejected;
      mentions.insert(mentions.end(), found[i].mentions.begin(), found[i].mentions.end());
    }
    report.coverage.push_back(std::move(c));
  }

  const std::vector<InstanceRecord> records = resolve_instances(mentions);
  report.instances_found = records.size();
  for (const InstanceRecord& r : records) {
    emit("instance_found", {{"instance", r.display_name},
                            {"canonical_key", r.canonical_key},
                            {"doc_ids", json(r.source_doc_ids)}});
  }

  // One fill task per (record, contributing document), in document order.
  struct Task {
    std::size_t record;
    std::size_t doc;
    const InstanceMention* mention;
  };
  std::vector<Task> tasks;
  {
    std::unordered_map<std::string, std::size_t> record_of;
    for (std::size_t r = 0; r < records.size(); ++r) record_of.emplace(records[r].canonical_key, r);
    std::vector<std::vector<const InstanceMention*>> first_mention(records.size(),
                                                                   std::vector<const InstanceMention*>(docs.size()));
    std::unordered_map<std::string, std::size_t> doc_index;
    for (std::size_t i = 0; i < docs.size(); ++i) doc_index.emplace(docs[i].doc_id, i);
    for (const InstanceMention& m : mentions) {
      const std::size_t r = record_of.at(normalize_name(m.surface_name));
      const std::size_t d = doc_index.at(m.doc_id);
      if (first_mention[r][d] == nullptr) first_mention[r][d] = &m;
    }
    for (std::size_t r = 0; r < records.size(); ++r) {
      for (std::size_t d = 0; d < docs.size(); ++d) {
        if (first_mention[r][d] != nullptr) tasks.push_back({r, d, first_mention[r][d]});
      }
    }
  }

  std::vector<FillOutcome> outcomes(tasks.size());
  parallel_for(tasks.size(), cfg.max_parallel_docs, [&](std::size_t t) {
    const Task& task = tasks[t];
    const GroundedDocument& gdoc = grounded[task.doc];
    const std::string& instance = records[task.record].display_name;
    const std::string& doc_id = docs[task.doc].doc_id;
    ++calls;
    FillOutcome out = fill_impl(gdoc, *task.mention, unit, schema, cfg, ctx);
    if (out.failed) {
      spdlog::warn("field fill failed for {} in {}: {}", instance, doc_id, out.error);
      emit("pipeline_error", {{"doc_id", doc_id}, {"stage", "fill"}, {"instance", instance}, {"message", out.error}});
      outcomes[t] = std::move(out);
      return;
    }
    auto rejected_event = [&](const GatedCell& g) {
      emit("cell_rejected", {{"instance", instance}, {"field", g.cell.field_name}, {"doc_id", doc_id},
                             {"origin", std::string(to_string(g.cell.origin))}, {"reason", g.cell.note.value_or("")}});
    };
    for (std::size_t f = 0; f < schema.fields.size(); ++f) {
      GatedCell& g = out.cells[f];
      if (g.rejected) rejected_event(g);
      for (std::size_t k = 0; k < cfg.max_followups_per_field && g.cell.status != CellStatus::kFilled; ++k) {
        ++calls;
        bool failed = false;
        GatedCell next = followup_impl(gdoc, *task.mention, unit, schema.fields[f], cfg, ctx, &failed);
        if (next.rejected) rejected_event(next);
        if (next.cell.status != CellStatus::kFilled && !next.cell.note) next.cell.note = g.cell.note;
        next.rejected = next.rejected || g.rejected;
        next.evidence_rejected = next.evidence_rejected || g.evidence_rejected;
        g = std::move(next);
        if (failed) break;
      }
      if (g.cell.status == CellStatus::kFilled) {
        emit("cell_filled", {{"instance", instance}, {"field", g.cell.field_name}, {"doc_id", doc_id},
                             {"origin", std::string(to_string(g.cell.origin))},
                             {"value", value_to_string(*g.cell.value)}});
      }
    }
    outcomes[t] = std::move(out);
  });
  report.llm_calls = calls.load();

  // Single-threaded reduction in (record, document) order.
  std::vector<std::vector<std::size_t>> tasks_of(records.size());
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    tasks_of[tasks[t].record].push_back(t);
    if (outcomes[t].failed) ++report.fill_errors;
    for (const GatedCell& g : outcomes[t].cells) {
      if (g.evidence_rejected) ++report.rejected_evidence;
    }
  }
  result.table.schema_version = schema.version;
  for (const char* s : {"filled", "missing", "conflict", "rejected"}) report.cell_counts[s] = 0;
  for (std::size_t r = 0; r < records.size(); ++r) {
    Row row;
    row.instance = records[r];
    for (std::size_t f = 0; f < schema.fields.size(); ++f) {
      const SchemaField& field = schema.fields[f];
      std::vector<std::pair<std::size_t, const GatedCell*>> contributions;
      for (std::size_t t : tasks_of[r]) contributions.emplace_back(tasks[t].doc, &outcomes[t].cells[f]);

      std::vector<std::pair<std::size_t, const GatedCell*>> filled;
      bool any_rejected = false;
      for (const auto& c : contributions) {
        if (c.second->cell.status == CellStatus::kFilled) filled.push_back(c);
        any_rejected = any_rejected || c.second->rejected;
      }

      CellValue cell;
      cell.field_name = field.canonical_name;
      if (filled.empty()) {
        cell.status = any_rejected ? CellStatus::kRejected : CellStatus::kMissing;
        for (const auto& c : contributions) {
          if (c.second->cell.note) {
            cell.note = c.second->cell.note;
            break;
          }
        }
      } else if (cfg.conflict_policy == ConflictPolicy::kFirstWins) {
        cell = filled.front().second->cell;
      } else {
        const std::string key = comparison_key(*filled.front().second->cell.value);
        const bool agree = std::all_of(filled.begin(), filled.end(), [&](const auto& c) {
          return comparison_key(*c.second->cell.value) == key;
        });
        if (agree) {
          cell = filled.front().second->cell;
          for (std::size_t k = 1; k < filled.size(); ++k) append_unique(cell.evidence, filled[k].second->cell.evidence);
        } else {
          cell.status = CellStatus::kConflict;
          for (const auto& [d, g] : filled) {
            append_unique(cell.evidence, g->cell.evidence);
            cell.candidates.push_back(Candidate{*g->cell.value, g->cell.evidence, docs[d].doc_id, g->cell.origin});
          }
          cell.note = std::to_string(filled.size()) + " documents disagree";
          emit("conflict_detected", {{"instance", row.instance.display_name},
                                     {"field", field.canonical_name},
                                     {"candidates", filled.size()}});
        }
      }
      ++report.cell_counts[std::string(to_string(cell.status))];
      row.cells.emplace(field.canonical_name, std::move(cell));
    }
    result.table.rows.push_back(std::move(row));
  }

  for (DocumentCoverage& c : report.coverage) {
    c.rows = static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [&](const InstanceRecord& r) {
      return r.source_doc_ids.count(c.doc_id) > 0;
    }));
  }
  const std::size_t total_cells = records.size() * schema.fields.size();
  report.fill_rate =
      total_cells == 0 ? 0.0 : static_cast<double>(report.cell_counts["filled"]) / static_cast<double>(total_cells);

  emit("phase_completed", {{"phase", "extraction"},
                           {"rows", result.table.rows.size()},
                           {"docs_failed", report.docs_failed},
                           {"fill_rate", report.fill_rate}});
  return result;
}

}  // namespace qdex::extraction
