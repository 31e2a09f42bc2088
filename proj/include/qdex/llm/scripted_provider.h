#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qdex/llm/gateway.h"

namespace qdex::llm {

// One canned reply. The entry answers requests for `template_id` whose
// bindings contain `binding_contains` (any binding, or only the one named by
// `binding`), and for every (name, text) in `when`, binding `name` contains
// `text`. An entry with `error` simulates a transport failure instead.
struct ScriptedEntry {
  TemplateId template_id = TemplateId::kUnitDiscovery;
  std::optional<std::string> binding_contains;
  std::optional<std::string> binding;
  std::string response;
  std::optional<std::string> error;
  std::map<std::string, std::string> when;
};

// Replays a transcript. For each request the first unconsumed matching entry
// is used; once every matching entry has been consumed the last one keeps
// answering. Requests are served one at a time.
//
// Transcript file: JSON array of
//   {"template_id": "...", "binding_contains"?: "...", "binding"?: "...",
//    "when"?: {"<binding>": "..."}, "response": "..." | {...}, "error"?: "..."}
// A non-string "response" is serialized compactly before replay.
class ScriptedProvider : public LlmProvider {
 public:
  explicit ScriptedProvider(std::vector<ScriptedEntry> entries);
  ScriptedProvider(ScriptedProvider&& other) noexcept;

  static ScriptedProvider from_json(const nlohmann::json& transcript);
  static ScriptedProvider from_file(const std::filesystem::path& path);

  ProviderReply complete(const ProviderRequest& request) override;

  // Forget which entries were consumed.
  void rewind();

  std::size_t requests_served() const;

 private:
  std::vector<ScriptedEntry> entries_;
  std::vector<bool> consumed_;
  mutable std::mutex mutex_;
  std::size_t served_ = 0;
};

}  // namespace qdex::llm
