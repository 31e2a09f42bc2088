#pragma once

#include <functional>
#include <string_view>

#include <nlohmann/json.hpp>

namespace qdex {

// Receives pipeline milestones (kind, payload). The service layer stamps
// them with a session, sequence number and timestamp. Must be thread-safe:
// extraction reports from worker threads.
using ProgressSink = std::function<void(std::string_view kind, nlohmann::json payload)>;

}  // namespace qdex
