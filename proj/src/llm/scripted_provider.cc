#include "qdex/llm/scripted_provider.h"

#include <fstream>
#include <sstream>

namespace qdex::llm {
namespace {

std::int64_t estimate_tokens(std::size_t bytes) { return static_cast<std::int64_t>((bytes + 3) / 4); }

bool matches(const ScriptedEntry& e, const ProviderRequest& req) {
  if (e.template_id != req.template_id) return false;
  for (const auto& [name, text] : e.when) {
    const auto it = req.bindings.find(name);
    if (it == req.bindings.end() || it->second.find(text) == std::string::npos) return false;
  }
  if (!e.binding_contains) return true;
  if (e.binding) {
    const auto it = req.bindings.find(*e.binding);
    return it != req.bindings.end() && it->second.find(*e.binding_contains) != std::string::npos;
  }
  for (const auto& [name, value] : req.bindings) {
    if (value.find(*e.binding_contains) != std::string::npos) return true;
  }
  return false;
}

}  // namespace

ScriptedProvider::ScriptedProvider(std::vector<ScriptedEntry> entries)
    : entries_(std::move(entries)), consumed_(entries_.size(), false) {}

ScriptedProvider::ScriptedProvider(ScriptedProvider&& other) noexcept
    : entries_(std::move(other.entries_)), consumed_(std::move(other.consumed_)), served_(other.served_) {}

ScriptedProvider ScriptedProvider::from_json(const nlohmann::json& transcript) {
  if (!transcript.is_array()) throw Error(ErrorCode::kInvalidArgument, "transcript must be a JSON array");
  std::vector<ScriptedEntry> entries;
  for (const auto& item : transcript) {
    ScriptedEntry e;
    e.template_id = template_id_from_string(item.at("template_id").get<std::string>());
    if (item.contains("binding_contains")) e.binding_contains = item["binding_contains"].get<std::string>();
    if (item.contains("binding")) e.binding = item["binding"].get<std::string>();
    if (item.contains("when")) e.when = item["when"].get<std::map<std::string, std::string>>();
    if (item.contains("error")) e.error = item["error"].get<std::string>();
    if (const auto it = item.find("response"); it != item.end()) {
      e.response = it->is_string() ? it->get<std::string>() : it->dump();
    } else if (!e.error) {
      throw Error(ErrorCode::kInvalidArgument, "transcript entry needs a response or an error");
    }
    entries.push_back(std::move(e));
  }
  return ScriptedProvider(std::move(entries));
}

ScriptedProvider ScriptedProvider::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read transcript " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return from_json(nlohmann::json::parse(buf.str()));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, "transcript " + path.string() + ": " + e.what());
  }
}

ProviderReply ScriptedProvider::complete(const ProviderRequest& request) {
  std::lock_guard lock(mutex_);
  ++served_;
  std::optional<std::size_t> chosen;
  std::optional<std::size_t> last_match;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (!matches(entries_[i], request)) continue;
    last_match = i;
    if (!consumed_[i]) {
      chosen = i;
      break;
    }
  }
  if (!chosen) chosen = last_match;
  if (!chosen) {
    throw Error(ErrorCode::kTransport,
                "scripted transcript has no entry for " + std::string(to_string(request.template_id)));
  }
  consumed_[*chosen] = true;
  const ScriptedEntry& e = entries_[*chosen];
  if (e.error) throw Error(ErrorCode::kTransport, "scripted transport error: " + *e.error);
  return ProviderReply{e.response, {estimate_tokens(request.prompt.size()), estimate_tokens(e.response.size())}};
}

void ScriptedProvider::rewind() {
  std::lock_guard lock(mutex_);
  std::fill(consumed_.begin(), consumed_.end(), false);
}

std::size_t ScriptedProvider::requests_served() const {
  std::lock_guard lock(mutex_);
  return served_;
}

}  // namespace qdex::llm
