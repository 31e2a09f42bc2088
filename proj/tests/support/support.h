#pragma once

// Helpers shared by the integration tests and the acceptance runner.

#include <chrono>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qdex/llm/gateway.h"

namespace qdex::testing {

struct TempDir {
  std::filesystem::path path;
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

std::filesystem::path fixture_dir();
std::string read_text(const std::filesystem::path& p);
nlohmann::json read_json(const std::filesystem::path& p);

// Independent RFC 4180 reader. Sets crlf_only to false if any record ends in
// a bare LF; throws std::runtime_error on malformed quoting.
struct CsvParse {
  std::vector<std::vector<std::string>> records;
  bool crlf_only = true;
};
CsvParse parse_csv(const std::string& text);

// Wraps a provider and sleeps before each call, to keep a job running long
// enough to interrupt a subscriber.
class SlowProvider : public llm::LlmProvider {
 public:
  SlowProvider(std::shared_ptr<llm::LlmProvider> inner, std::chrono::milliseconds delay)
      : inner_(std::move(inner)), delay_(delay) {}
  llm::ProviderReply complete(const llm::ProviderRequest& request) override;

 private:
  std::shared_ptr<llm::LlmProvider> inner_;
  std::chrono::milliseconds delay_;
};

// Reads WebSocket text frames from ws://127.0.0.1:port<path> until the server
// closes, or until max_events frames arrived (then disconnects abruptly).
struct WsResult {
  std::vector<nlohmann::json> events;
  bool closed_by_server = false;
};
WsResult ws_collect(unsigned short port, const std::string& path, std::size_t max_events = SIZE_MAX);

}  // namespace qdex::testing
