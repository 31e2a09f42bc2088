#pragma once

// Pipeline operations on stored sessions. The HTTP server and the CLI both go
// through this class; it holds no session state besides running jobs and
// event logs.

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "qdex/discovery/discovery.h"
#include "qdex/extraction/extraction.h"
#include "qdex/llm/gateway.h"
#include "qdex/service/events.h"
#include "qdex/store/session_store.h"

namespace qdex::service {

struct ServiceConfig {
  llm::ModelRoles models;
  discovery::DiscoveryConfig discovery;
  extraction::ExtractionConfig extraction;
  std::size_t max_in_flight = 4;
};

enum class JobStatus { kRunning, kSucceeded, kFailed };
std::string_view to_string(JobStatus s);

struct JobInfo {
  std::string job_id;
  std::string session_id;
  std::string kind;  // "extraction"
  JobStatus status = JobStatus::kRunning;
  std::string message;
  nlohmann::json report;  // extraction report once finished
};

nlohmann::json job_to_json(const JobInfo& job);
nlohmann::json usage_to_json(const llm::GatewayStats& stats);

struct UnitResult {
  ObservationUnitSpec unit;
  std::optional<std::string> warning;  // set when an earlier unit was replaced
};

class SessionService {
 public:
  SessionService(store::SessionStore& store, ServiceConfig config,
                 std::map<llm::ProviderId, std::shared_ptr<llm::LlmProvider>> providers,
                 llm::TemplateRegistry templates = {});
  ~SessionService();  // waits for running jobs

  SessionService(const SessionService&) = delete;
  SessionService& operator=(const SessionService&) = delete;

  EventBus& events() { return events_; }
  store::SessionStore& store() { return store_; }
  const ServiceConfig& config() const { return config_; }

  SessionState create_session(const ResearchQuery& query, std::vector<Document> docs);
  SessionState get(const std::string& session_id) const;
  SessionState add_documents(const std::string& session_id, const nlohmann::json& documents);

  UnitResult discover_unit(const std::string& session_id);
  ObservationUnitSpec put_unit(const std::string& session_id, const nlohmann::json& unit);

  // incremental: seed with the current schema (or `seed`) and read only the
  // documents not seen by earlier discovery. Otherwise read everything,
  // seeded with the locked fields of the current schema.
  Schema discover_schema(const std::string& session_id, bool incremental,
                         const std::optional<Schema>& seed = std::nullopt);
  // Body: one edit {"kind", "payload"} or an array of them; field edits only.
  Schema patch_schema(const std::string& session_id, const nlohmann::json& edits);

  JobInfo start_extraction(const std::string& session_id);
  extraction::ExtractionReport run_extraction(const std::string& session_id);
  Table get_table(const std::string& session_id) const;  // kConflict before extraction
  // Body: one cell edit payload or an array of them.
  Table patch_cells(const std::string& session_id, const nlohmann::json& edits);

  std::optional<nlohmann::json> last_report(const std::string& session_id) const;

  JobInfo job(const std::string& job_id) const;  // kNotFound
  bool job_running(const std::string& session_id) const;
  void wait_for_jobs();

  llm::GatewayStats usage() const;

 private:
  struct Job;
  std::unique_ptr<llm::Gateway> gateway_for(const std::string& session_id);
  void account(const llm::Gateway& gateway);
  SessionState apply_edits(const std::string& session_id, const nlohmann::json& edits, bool cells);
  // Runs extraction and installs the table. The extraction's own
  // phase_completed event is held back and returned, so that listeners only
  // see it once the table can be read.
  extraction::ExtractionReport extract(const std::string& session_id, nlohmann::json& completed);

  store::SessionStore& store_;
  ServiceConfig config_;
  std::map<llm::ProviderId, std::shared_ptr<llm::LlmProvider>> providers_;
  llm::TemplateRegistry templates_;
  EventBus events_;

  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Job>> jobs_;
  std::map<std::string, std::string> running_;  // session -> job id
  std::mutex exchange_mutex_;
  std::mutex join_mutex_;
  llm::GatewayStats usage_;
  std::atomic<std::int64_t> next_job_{1};
};

}  // namespace qdex::service
