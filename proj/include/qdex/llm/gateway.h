#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "qdex/core/errors.h"
#include "qdex/llm/templates.h"

namespace qdex::llm {

enum class ProviderId { kHostedApi, kScripted };

std::string_view to_string(ProviderId id);
ProviderId provider_id_from_string(std::string_view s);

struct ProviderConfig {
  ProviderId provider_id = ProviderId::kScripted;
  std::string model_id;
  std::string api_key_env_var = "SCHEMATIQ_API_KEY";
  std::optional<std::string> base_url;
  double temperature = 0.0;
  int max_output_tokens = 4096;
  double request_timeout_s = 120.0;
  int max_retries = 2;
};

void validate_config(const ProviderConfig& config);

// Discovery runs on one model, extraction optionally on a cheaper one.
struct ModelRoles {
  ProviderConfig discovery;
  ProviderConfig extraction;
};

struct TokenUsage {
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;

  TokenUsage& operator+=(const TokenUsage& o) {
    input_tokens += o.input_tokens;
    output_tokens += o.output_tokens;
    return *this;
  }
};

struct LlmExchange {
  TemplateId template_id = TemplateId::kUnitDiscovery;
  std::string rendered_prompt;
  std::string raw_response;
  std::optional<nlohmann::json> parsed;
  int attempt = 0;
  TokenUsage usage;
};

struct ProviderRequest {
  TemplateId template_id;
  const Bindings& bindings;
  const std::string& prompt;
  const ProviderConfig& config;
};

struct ProviderReply {
  std::string text;
  TokenUsage usage;
};

// A backend that turns one prompt into one raw response. Transport failures
// are reported by throwing Error(kTransport).
class LlmProvider {
 public:
  virtual ~LlmProvider() = default;
  virtual ProviderReply complete(const ProviderRequest& request) = 0;
};

// Terminal failure to obtain output satisfying the response contract. The
// last exchange (including the raw response) is kept for auditing.
class ContractViolation : public Error {
 public:
  ContractViolation(const std::string& message, LlmExchange last)
      : Error(ErrorCode::kContractViolation, message), last_(std::move(last)) {}

  const LlmExchange& last_exchange() const { return last_; }

 private:
  LlmExchange last_;
};

struct GatewayStats {
  std::int64_t calls = 0;     // complete_structured invocations
  std::int64_t attempts = 0;  // provider requests, including retries
  TokenUsage usage;
};

class Gateway {
 public:
  explicit Gateway(std::size_t max_in_flight = 4);

  void register_provider(ProviderId id, std::shared_ptr<LlmProvider> provider);

  // Receives every attempt, successful or not.
  void set_exchange_sink(std::function<void(const LlmExchange&)> sink);

  // Renders the prompt, asks the provider, parses and checks the response.
  // Failed parses are retried with a repair note appended, up to
  // config.max_retries times. Throws Error(kTransport) or ContractViolation
  // once the attempts are used up.
  LlmExchange complete_structured(const ProviderConfig& config, const PromptTemplate& tmpl,
                                  const Bindings& bindings);

  GatewayStats stats() const;

 private:
  LlmProvider& provider_for(ProviderId id);
  void acquire_slot();
  void release_slot();

  std::map<ProviderId, std::shared_ptr<LlmProvider>> providers_;
  std::function<void(const LlmExchange&)> sink_;

  mutable std::mutex mutex_;
  std::condition_variable slot_freed_;
  std::size_t max_in_flight_;
  std::size_t in_flight_ = 0;
  GatewayStats stats_;
};

// Strips one enclosing ``` / ```json fence if the whole response is fenced.
std::string unwrap_code_fence(const std::string& text);

}  // namespace qdex::llm
