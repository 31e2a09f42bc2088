#pragma once

// One directory per session under root_dir:
//   session.json      id, query, documents, unit, phase, bookkeeping
//   schema.json       present once a schema exists
//   table.json        present once a table exists
//   edits.ndjson      one EditEvent per line
//   exchanges.ndjson  raw model exchanges, only with retain_raw_exchanges
//   .lock             advisory write lock

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qdex/core/model.h"

namespace qdex::store {

struct StoreConfig {
  std::filesystem::path root_dir;
  bool retain_raw_exchanges = true;
};

// Exclusive flock on a session's lock file, released on destruction.
class SessionLock {
 public:
  explicit SessionLock(const std::filesystem::path& lock_file);
  ~SessionLock();
  SessionLock(const SessionLock&) = delete;
  SessionLock& operator=(const SessionLock&) = delete;

 private:
  int fd_ = -1;
};

class SessionStore {
 public:
  // Creates root_dir if needed; throws kConfig if it is not writable.
  explicit SessionStore(StoreConfig config);

  const StoreConfig& config() const { return config_; }

  // Validates inputs, assigns an id unless given (kConflict if taken), saves.
  SessionState create_session(const ResearchQuery& query, std::vector<Document> docs,
                              std::optional<std::string> session_id = std::nullopt);
  SessionState load(const std::string& session_id) const;  // kNotFound
  void save(const SessionState& state);
  bool exists(const std::string& session_id) const;
  std::vector<std::string> list() const;

  // Appends one raw exchange record; a no-op unless retain_raw_exchanges.
  void append_exchange(const std::string& session_id, const nlohmann::json& exchange);
  std::vector<nlohmann::json> exchanges(const std::string& session_id) const;

  // Small named JSON files next to the session (e.g. the last run report).
  void write_artifact(const std::string& session_id, const std::string& name, const nlohmann::json& value);
  std::optional<nlohmann::json> read_artifact(const std::string& session_id, const std::string& name) const;

  std::filesystem::path session_dir(const std::string& session_id) const;
  SessionLock lock(const std::string& session_id) const;

 private:
  StoreConfig config_;
};

std::string new_session_id();

}  // namespace qdex::store
