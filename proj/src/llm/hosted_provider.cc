#include "qdex/llm/hosted_provider.h"

#include <cmath>
#include <cstdlib>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace qdex::llm {
namespace {

struct Endpoint {
  std::string scheme_host_port;
  std::string path_prefix;
};

Endpoint split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorCode::kConfig, "base_url needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  Endpoint ep;
  ep.scheme_host_port = url.substr(0, path_start);
  ep.path_prefix = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!ep.path_prefix.empty() && ep.path_prefix.back() == '/') ep.path_prefix.pop_back();
  return ep;
}

}  // namespace

std::string require_api_key(const ProviderConfig& config) {
  const char* key = std::getenv(config.api_key_env_var.c_str());
  if (key == nullptr || *key == '\0') {
    throw Error(ErrorCode::kConfig, "API key not set: export " + config.api_key_env_var);
  }
  return key;
}

ProviderReply HostedProvider::complete(const ProviderRequest& request) {
  const ProviderConfig& cfg = request.config;
  const std::string key = require_api_key(cfg);
  const Endpoint ep = split_url(cfg.base_url.value_or(kDefaultBaseUrl));

  httplib::Client client(ep.scheme_host_port);
  const auto seconds = static_cast<time_t>(cfg.request_timeout_s);
  const auto micros = static_cast<time_t>(std::fmod(cfg.request_timeout_s, 1.0) * 1e6);
  client.set_connection_timeout(seconds, micros);
  client.set_read_timeout(seconds, micros);
  client.set_write_timeout(seconds, micros);
  client.set_bearer_token_auth(key);

  const nlohmann::json body = {
      {"model", cfg.model_id},
      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}})},
      {"temperature", cfg.temperature},
      {"max_tokens", cfg.max_output_tokens},
      {"response_format", {{"type", "json_object"}}},
  };
  auto res = client.Post(ep.path_prefix + "/chat/completions", body.dump(), "application/json");
  if (!res) {
    throw Error(ErrorCode::kTransport, "request to " + ep.scheme_host_port + " failed: " +
                                           httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(ErrorCode::kTransport, "provider returned HTTP " + std::to_string(res->status) + ": " +
                                           res->body.substr(0, 300));
  }
  try {
    const auto reply = nlohmann::json::parse(res->body);
    ProviderReply out;
    out.text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
    if (const auto usage = reply.find("usage"); usage != reply.end() && usage->is_object()) {
      out.usage.input_tokens = usage->value("prompt_tokens", 0);
      out.usage.output_tokens = usage->value("completion_tokens", 0);
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kTransport, std::string("malformed provider envelope: ") + e.what());
  }
}

}  // namespace qdex::llm
