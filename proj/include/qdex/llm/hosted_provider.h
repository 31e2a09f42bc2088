#pragma once

#include <string>

#include "qdex/llm/gateway.h"

namespace qdex::llm {

inline constexpr const char* kDefaultBaseUrl = "https://api.together.xyz/v1";

// OpenAI-compatible chat-completions client. Model, temperature, token limit,
// timeout and base URL come from each request's ProviderConfig; the API key
// is read from the environment variable the config names.
class HostedProvider : public LlmProvider {
 public:
  ProviderReply complete(const ProviderRequest& request) override;
};

// Returns the API key or throws Error(kConfig) naming the missing variable.
std::string require_api_key(const ProviderConfig& config);

}  // namespace qdex::llm
