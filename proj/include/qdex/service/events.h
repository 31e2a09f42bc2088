#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qdex/core/progress.h"

namespace qdex::service {

struct ProgressEvent {
  std::string session_id;
  std::int64_t seq = 0;
  std::string kind;
  nlohmann::json payload = nlohmann::json::object();
  std::string timestamp;

  bool operator==(const ProgressEvent&) const = default;
};

void to_json(nlohmann::json& j, const ProgressEvent& e);
void from_json(const nlohmann::json& j, ProgressEvent& e);

// Per-session event log with gapless seq starting at 1. Readers poll with
// since() or block in wait_since(); the log is kept for the process lifetime
// so a reconnecting reader can resume from any seq.
class EventBus {
 public:
  ProgressEvent publish(const std::string& session_id, std::string_view kind, nlohmann::json payload);

  std::vector<ProgressEvent> since(const std::string& session_id, std::int64_t last_seq) const;

  // Returns as soon as there is at least one event after last_seq, or empty
  // after the timeout.
  std::vector<ProgressEvent> wait_since(const std::string& session_id, std::int64_t last_seq,
                                        std::chrono::milliseconds timeout) const;

  std::int64_t last_seq(const std::string& session_id) const;

  ProgressSink sink_for(const std::string& session_id);

 private:
  mutable std::mutex mutex_;
  mutable std::condition_variable published_;
  std::map<std::string, std::vector<ProgressEvent>> logs_;
};

}  // namespace qdex::service
