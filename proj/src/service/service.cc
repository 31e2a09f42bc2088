#include "qdex/service/service.h"

#include <algorithm>

#include <spdlog/spdlog.h>

#include "qdex/core/errors.h"
#include "qdex/core/json_io.h"
#include "qdex/store/edits.h"

namespace qdex::service {

using nlohmann::json;

struct SessionService::Job {
  JobInfo info;
  std::thread thread;
};

std::string_view to_string(JobStatus s) {
  switch (s) {
    case JobStatus::kRunning: return "running";
    case JobStatus::kSucceeded: return "succeeded";
    case JobStatus::kFailed: return "failed";
  }
  return "failed";
}

json job_to_json(const JobInfo& job) {
  json j = {{"job_id", job.job_id},
            {"session_id", job.session_id},
            {"kind", job.kind},
            {"status", to_string(job.status)},
            {"message", job.message}};
  if (!job.report.is_null()) j["report"] = job.report;
  return j;
}

json usage_to_json(const llm::GatewayStats& s) {
  return {{"calls", s.calls},
          {"attempts", s.attempts},
          {"input_tokens", s.usage.input_tokens},
          {"output_tokens", s.usage.output_tokens}};
}

namespace {

// Accepts a single object or an array of them.
std::vector<json> as_list(const json& body) {
  if (body.is_array()) return {body.begin(), body.end()};
  if (body.is_object()) return {body};
  throw Error(ErrorCode::kInvalidArgument, "expected an object or an array of objects");
}

}  // namespace

SessionService::SessionService(store::SessionStore& store, ServiceConfig config,
                               std::map<llm::ProviderId, std::shared_ptr<llm::LlmProvider>> providers,
                               llm::TemplateRegistry templates)
    : store_(store), config_(std::move(config)), providers_(std::move(providers)), templates_(std::move(templates)) {
  discovery::validate_config(config_.discovery);
  extraction::validate_config(config_.extraction);
}

SessionService::~SessionService() { wait_for_jobs(); }

std::unique_ptr<llm::Gateway> SessionService::gateway_for(const std::string& session_id) {
  auto gateway = std::make_unique<llm::Gateway>(config_.max_in_flight);
  for (const auto& [id, provider] : providers_) gateway->register_provider(id, provider);
  if (store_.config().retain_raw_exchanges) {
    gateway->set_exchange_sink([this, session_id](const llm::LlmExchange& x) {
      std::lock_guard lock(exchange_mutex_);
      store_.append_exchange(session_id, {{"template_id", llm::to_string(x.template_id)},
                                          {"attempt", x.attempt},
                                          {"prompt", x.rendered_prompt},
                                          {"response", x.raw_response},
                                          {"input_tokens", x.usage.input_tokens},
                                          {"output_tokens", x.usage.output_tokens}});
    });
  }
  return gateway;
}

void SessionService::account(const llm::Gateway& gateway) {
  const llm::GatewayStats s = gateway.stats();
  std::lock_guard lock(mutex_);
  usage_.calls += s.calls;
  usage_.attempts += s.attempts;
  usage_.usage += s.usage;
}

llm::GatewayStats SessionService::usage() const {
  std::lock_guard lock(mutex_);
  return usage_;
}

SessionState SessionService::create_session(const ResearchQuery& query, std::vector<Document> docs) {
  if (docs.empty()) throw Error(ErrorCode::kInvalidArgument, "a session needs at least one document");
  return store_.create_session(query, std::move(docs));
}

SessionState SessionService::get(const std::string& session_id) const { return store_.load(session_id); }

SessionState SessionService::add_documents(const std::string& session_id, const json& documents) {
  if (!store_.exists(session_id)) throw Error(ErrorCode::kNotFound, "unknown session '" + session_id + "'");
  if (job_running(session_id)) throw Error(ErrorCode::kConflict, "extraction is running");
  auto lock = store_.lock(session_id);
  SessionState s = store_.load(session_id);
  s = store::record_edit(s, EditKind::kDocsAdded, {{"documents", documents}}, store::utc_timestamp());
  store_.save(s);
  return s;
}

UnitResult SessionService::discover_unit(const std::string& session_id) {
  if (!store_.exists(session_id)) throw Error(ErrorCode::kNotFound, "unknown session '" + session_id + "'");
  auto lock = store_.lock(session_id);
  SessionState s = store_.load(session_id);
  if (s.table) throw Error(ErrorCode::kConflict, "extraction already ran; the unit can no longer change");

  events_.publish(session_id, "phase_started", {{"phase", "unit_discovery"}});
  auto gateway = gateway_for(session_id);
  llm::LlmContext ctx{*gateway, templates_, config_.models.discovery};
  UnitResult result;
  try {
    const auto batch = discovery::unit_discovery_batch(s.documents, config_.discovery);
    result.unit = discovery::discover_observation_unit(s.query, batch, config_.discovery, ctx);
  } catch (const Error& e) {
    account(*gateway);
    events_.publish(session_id, "pipeline_error", {{"stage", "unit_discovery"}, {"message", e.what()}});
    events_.publish(session_id, "phase_completed", {{"phase", "unit_discovery"}, {"failed", true}});
    throw;
  }
  account(*gateway);
  if (s.ou_spec) {
    result.warning = "replaced the earlier observation unit '" + s.ou_spec->type_name + "'";
    spdlog::warn("session {}: {}", session_id, *result.warning);
  }
  s.ou_spec = result.unit;
  s.phase = std::max(s.phase, Phase::kUnitDiscovered);
  store_.save(s);
  events_.publish(session_id, "phase_completed",
                  {{"phase", "unit_discovery"}, {"type_name", result.unit.type_name}});
  return result;
}

ObservationUnitSpec SessionService::put_unit(const std::string& session_id, const json& unit) {
  if (!store_.exists(session_id)) throw Error(ErrorCode::kNotFound, "unknown session '" + session_id + "'");
  auto lock = store_.lock(session_id);
  SessionState s = store_.load(session_id);
  s = store::record_edit(s, EditKind::kUnitEdit, {{"unit", unit}}, store::utc_timestamp());
  store_.save(s);
  return *s.ou_spec;
}

Schema SessionService::discover_schema(const std::string& session_id, bool incremental,
                                       const std::optional<Schema>& seed) {
  if (!store_.exists(session_id)) throw Error(ErrorCode::kNotFound, "unknown session '" + session_id + "'");
  if (job_running(session_id)) throw Error(ErrorCode::kConflict, "extraction is running");
  auto lock = store_.lock(session_id);
  SessionState s = store_.load(session_id);
  if (!s.ou_spec) throw Error(ErrorCode::kConflict, "discover or set the observation unit first");

  std::optional<Schema> start = seed ? seed : s.schema;
  std::vector<Document> docs;
  if (incremental && start) {
    for (const Document& d : s.documents) {
      if (s.discovered_doc_ids.count(d.doc_id) == 0) docs.push_back(d);
    }
  } else {
    docs = s.documents;
    if (start && !seed) {
      // A full re-run starts over but keeps what the expert fixed.
      std::erase_if(start->fields, [](const SchemaField& f) { return !f.locked; });
      if (start->fields.empty()) start.reset();
    }
  }
  if (docs.empty()) {
    if (!start) throw Error(ErrorCode::kConflict, "no documents to discover from");
    if (!s.schema) {
      s.schema = *start;
      s.phase = std::max(s.phase, Phase::kSchemaDiscovered);
      store_.save(s);
    }
    return *s.schema;
  }

  events_.publish(session_id, "phase_started",
                  {{"phase", "schema_discovery"}, {"docs", docs.size()}, {"incremental", incremental}});
  auto gateway = gateway_for(session_id);
  llm::LlmContext ctx{*gateway, templates_, config_.models.discovery};
  discovery::SchemaDiscoveryResult result;
  try {
    result = discovery::run_schema_discovery(s.query, *s.ou_spec, docs, config_.discovery, ctx, start,
                                             events_.sink_for(session_id));
  } catch (const Error& e) {
    account(*gateway);
    events_.publish(session_id, "pipeline_error", {{"stage", "schema_discovery"}, {"message", e.what()}});
    events_.publish(session_id, "phase_completed", {{"phase", "schema_discovery"}, {"failed", true}});
    throw;
  }
  account(*gateway);
  if (s.schema && result.schema.version <= s.schema->version) result.schema.version = s.schema->version + 1;
  s.schema = result.schema;
  for (const Document& d : docs) s.discovered_doc_ids.insert(d.doc_id);
  if (s.table) {
    // The table no longer matches the schema; cell edits return through replay.
    s.table.reset();
    s.phase = Phase::kSchemaDiscovered;
  }
  s.phase = std::max(s.phase, Phase::kSchemaDiscovered);
  store_.save(s);
  events_.publish(session_id, "phase_completed",
                  {{"phase", "schema_discovery"},
                   {"fields", result.schema.fields.size()},
                   {"proposal_calls", result.proposal_calls},
                   {"batches_processed", result.batches_processed},
                   {"stopped_early", result.stopped_early}});
  return *s.schema;
}

SessionState SessionService::apply_edits(const std::string& session_id, const json& edits, bool cells) {
  if (!store_.exists(session_id)) throw Error(ErrorCode::kNotFound, "unknown session '" + session_id + "'");
  if (job_running(session_id)) throw Error(ErrorCode::kConflict, "extraction is running");
  auto lock = store_.lock(session_id);
  SessionState s = store_.load(session_id);
  const std::vector<json> list = as_list(edits);
  if (list.empty()) throw Error(ErrorCode::kInvalidArgument, "no edits given");
  for (const json& e : list) {
    if (cells) {
      s = store::record_edit(s, EditKind::kCellEdit, e, store::utc_timestamp());
      continue;
    }
    if (!e.contains("kind") || !e["kind"].is_string()) throw Error(ErrorCode::kInvalidArgument, "edit needs a kind");
    const EditKind kind = edit_kind_from_string(e["kind"].get<std::string>());
    if (kind != EditKind::kFieldAdd && kind != EditKind::kFieldEdit && kind != EditKind::kFieldRemove &&
        kind != EditKind::kFieldMerge) {
      throw Error(ErrorCode::kInvalidArgument, "schema edits are field_add, field_edit, field_remove, field_merge");
    }
    s = store::record_edit(s, kind, e.value("payload", json::object()), store::utc_timestamp());
  }
  store_.save(s);
  return s;
}

Schema SessionService::patch_schema(const std::string& session_id, const json& edits) {
  return *apply_edits(session_id, edits, false).schema;
}

Table SessionService::patch_cells(const std::string& session_id, const json& edits) {
  return *apply_edits(session_id, edits, true).table;
}

Table SessionService::get_table(const std::string& session_id) const {
  const SessionState s = store_.load(session_id);
  if (!s.table) throw Error(ErrorCode::kConflict, "no table yet; run extraction first");
  return *s.table;
}

std::optional<json> SessionService::last_report(const std::string& session_id) const {
  if (!store_.exists(session_id)) throw Error(ErrorCode::kNotFound, "unknown session '" + session_id + "'");
  return store_.read_artifact(session_id, "report");
}

extraction::ExtractionReport SessionService::extract(const std::string& session_id, json& completed) {
  SessionState before;
  {
    auto lock = store_.lock(session_id);
    before = store_.load(session_id);
  }
  if (!before.schema) throw Error(ErrorCode::kConflict, "discover or define a schema first");
  if (!before.ou_spec) throw Error(ErrorCode::kConflict, "discover or set the observation unit first");

  auto gateway = gateway_for(session_id);
  llm::LlmContext ctx{*gateway, templates_, config_.models.extraction};
  const ProgressSink publish = events_.sink_for(session_id);
  const ProgressSink sink = [&](std::string_view kind, json payload) {
    if (kind == "phase_completed") {
      completed = std::move(payload);
      return;
    }
    publish(kind, std::move(payload));
  };
  extraction::ExtractionResult result;
  try {
    result = extraction::extract_table(before.documents, *before.ou_spec, *before.schema, config_.extraction, ctx, sink);
  } catch (...) {
    account(*gateway);
    throw;
  }
  account(*gateway);

  auto lock = store_.lock(session_id);
  SessionState s = store_.load(session_id);
  if (s.schema != before.schema || s.documents != before.documents || s.ou_spec != before.ou_spec) {
    throw Error(ErrorCode::kConflict, "the session changed during extraction; run it again");
  }
  s.table = std::move(result.table);
  s.phase = Phase::kExtracted;
  s = store::replay(s);
  for (const ParkedEdit& p : s.parked_edits) spdlog::warn("session {}: edit {} parked: {}", session_id, p.seq, p.reason);
  store_.save(s);

  json report = extraction::report_to_json(result.report);
  report["token_usage"] = usage_to_json(gateway->stats());
  report["parked_edits"] = s.parked_edits;
  store_.write_artifact(session_id, "report", report);
  completed["parked_edits"] = s.parked_edits.size();
  return result.report;
}

extraction::ExtractionReport SessionService::run_extraction(const std::string& session_id) {
  if (!store_.exists(session_id)) throw Error(ErrorCode::kNotFound, "unknown session '" + session_id + "'");
  if (job_running(session_id)) throw Error(ErrorCode::kConflict, "extraction is already running");
  json completed;
  try {
    auto report = extract(session_id, completed);
    events_.publish(session_id, "phase_completed", completed);
    return report;
  } catch (const Error& e) {
    events_.publish(session_id, "pipeline_error", {{"stage", "extraction"}, {"message", e.what()}});
    events_.publish(session_id, "phase_completed", {{"phase", "extraction"}, {"failed", true}});
    throw;
  }
}

JobInfo SessionService::start_extraction(const std::string& session_id) {
  const SessionState s = store_.load(session_id);
  if (!s.ou_spec) throw Error(ErrorCode::kConflict, "discover or set the observation unit first");
  if (!s.schema) throw Error(ErrorCode::kConflict, "discover or define a schema first");

  auto job = std::make_shared<Job>();
  {
    std::lock_guard lock(mutex_);
    if (running_.count(session_id) > 0) throw Error(ErrorCode::kConflict, "extraction is already running");
    job->info.job_id = "job-" + std::to_string(next_job_++);
    job->info.session_id = session_id;
    job->info.kind = "extraction";
    jobs_[job->info.job_id] = job;
    running_[session_id] = job->info.job_id;
  }
  const JobInfo info = job->info;
  Job* raw = job.get();
  job->thread = std::thread([this, raw, session_id] {
    json completed;
    json finished;
    JobStatus status = JobStatus::kSucceeded;
    std::string message;
    try {
      extract(session_id, completed);
      finished = store_.read_artifact(session_id, "report").value_or(json());
    } catch (const std::exception& e) {
      status = JobStatus::kFailed;
      message = e.what();
      spdlog::error("session {}: extraction failed: {}", session_id, message);
    }
    {
      std::lock_guard lock(mutex_);
      raw->info.status = status;
      raw->info.message = message;
      raw->info.report = finished;
      running_.erase(session_id);
    }
    if (status == JobStatus::kFailed) {
      events_.publish(session_id, "pipeline_error", {{"stage", "extraction"}, {"message", message}});
      completed = {{"phase", "extraction"}, {"failed", true}};
    }
    events_.publish(session_id, "phase_completed", completed);
  });
  return info;
}

JobInfo SessionService::job(const std::string& job_id) const {
  std::lock_guard lock(mutex_);
  const auto it = jobs_.find(job_id);
  if (it == jobs_.end()) throw Error(ErrorCode::kNotFound, "unknown job '" + job_id + "'");
  return it->second->info;
}

bool SessionService::job_running(const std::string& session_id) const {
  std::lock_guard lock(mutex_);
  return running_.count(session_id) > 0;
}

void SessionService::wait_for_jobs() {
  std::lock_guard join_lock(join_mutex_);
  std::vector<std::shared_ptr<Job>> jobs;
  {
    std::lock_guard lock(mutex_);
    for (const auto& [id, j] : jobs_) jobs.push_back(j);
  }
  for (const auto& j : jobs) {
    if (j->thread.joinable()) j->thread.join();
  }
}

}  // namespace qdex::service
