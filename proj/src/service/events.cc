#include "qdex/service/events.h"

#include "qdex/store/edits.h"

namespace qdex::service {

using nlohmann::json;

void to_json(json& j, const ProgressEvent& e) {
  j = json{{"session_id", e.session_id},
           {"seq", e.seq},
           {"kind", e.kind},
           {"payload", e.payload},
           {"timestamp", e.timestamp}};
}

void from_json(const json& j, ProgressEvent& e) {
  e.session_id = j.at("session_id").get<std::string>();
  e.seq = j.at("seq").get<std::int64_t>();
  e.kind = j.at("kind").get<std::string>();
  e.payload = j.value("payload", json::object());
  e.timestamp = j.value("timestamp", std::string());
}

ProgressEvent EventBus::publish(const std::string& session_id, std::string_view kind, json payload) {
  ProgressEvent e;
  {
    std::lock_guard lock(mutex_);
    auto& log = logs_[session_id];
    e.session_id = session_id;
    e.seq = static_cast<std::int64_t>(log.size()) + 1;
    e.kind = std::string(kind);
    e.payload = std::move(payload);
    e.timestamp = store::utc_timestamp();
    log.push_back(e);
  }
  published_.notify_all();
  return e;
}

std::vector<ProgressEvent> EventBus::since(const std::string& session_id, std::int64_t last_seq) const {
  std::lock_guard lock(mutex_);
  const auto it = logs_.find(session_id);
  if (it == logs_.end() || last_seq >= static_cast<std::int64_t>(it->second.size())) return {};
  const auto from = static_cast<std::size_t>(std::max<std::int64_t>(last_seq, 0));
  return {it->second.begin() + static_cast<std::ptrdiff_t>(from), it->second.end()};
}

std::vector<ProgressEvent> EventBus::wait_since(const std::string& session_id, std::int64_t last_seq,
                                                std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mutex_);
  auto available = [&] {
    const auto it = logs_.find(session_id);
    return it != logs_.end() && static_cast<std::int64_t>(it->second.size()) > last_seq;
  };
  if (!published_.wait_for(lock, timeout, available)) return {};
  const auto& log = logs_.at(session_id);
  const auto from = static_cast<std::size_t>(std::max<std::int64_t>(last_seq, 0));
  return {log.begin() + static_cast<std::ptrdiff_t>(from), log.end()};
}

std::int64_t EventBus::last_seq(const std::string& session_id) const {
  std::lock_guard lock(mutex_);
  const auto it = logs_.find(session_id);
  return it == logs_.end() ? 0 : static_cast<std::int64_t>(it->second.size());
}

ProgressSink EventBus::sink_for(const std::string& session_id) {
  return [this, session_id](std::string_view kind, json payload) { publish(session_id, kind, std::move(payload)); };
}

}  // namespace qdex::service
