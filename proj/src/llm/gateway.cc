#include "qdex/llm/gateway.h"

#include <spdlog/spdlog.h>

namespace qdex::llm {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::string repair_note(const std::string& error, const ResponseContract& contract) {
  return "\n\nYour previous reply could not be used: " + error +
         "\nReply again with only a JSON object of this form: " + describe(contract);
}

}  // namespace

std::string_view to_string(ProviderId id) {
  return id == ProviderId::kHostedApi ? "hosted_api" : "scripted";
}

ProviderId provider_id_from_string(std::string_view s) {
  if (s == "hosted_api") return ProviderId::kHostedApi;
  if (s == "scripted") return ProviderId::kScripted;
  throw Error(ErrorCode::kInvalidArgument, "unknown provider_id '" + std::string(s) + "'");
}

void validate_config(const ProviderConfig& config) {
  if (!(config.temperature >= 0.0 && config.temperature <= 1.0)) {
    throw Error(ErrorCode::kConfig, "temperature must lie in [0, 1]");
  }
  if (config.max_output_tokens <= 0) throw Error(ErrorCode::kConfig, "max_output_tokens must be positive");
  if (!(config.request_timeout_s > 0.0)) throw Error(ErrorCode::kConfig, "request_timeout_s must be positive");
  if (config.max_retries < 0) throw Error(ErrorCode::kConfig, "max_retries must be non-negative");
}

std::string unwrap_code_fence(const std::string& text) {
  const std::string t = trim(text);
  if (t.size() < 6 || t.compare(0, 3, "```") != 0 || t.compare(t.size() - 3, 3, "```") != 0) return text;
  const auto first_newline = t.find('\n');
  if (first_newline == std::string::npos || first_newline >= t.size() - 3) return text;
  return t.substr(first_newline + 1, t.size() - 3 - first_newline - 1);
}

Gateway::Gateway(std::size_t max_in_flight) : max_in_flight_(max_in_flight == 0 ? 1 : max_in_flight) {}

void Gateway::register_provider(ProviderId id, std::shared_ptr<LlmProvider> provider) {
  std::lock_guard lock(mutex_);
  providers_[id] = std::move(provider);
}

void Gateway::set_exchange_sink(std::function<void(const LlmExchange&)> sink) {
  std::lock_guard lock(mutex_);
  sink_ = std::move(sink);
}

GatewayStats Gateway::stats() const {
  std::lock_guard lock(mutex_);
  return stats_;
}

LlmProvider& Gateway::provider_for(ProviderId id) {
  std::lock_guard lock(mutex_);
  const auto it = providers_.find(id);
  if (it == providers_.end() || !it->second) {
    throw Error(ErrorCode::kConfig, "no provider registered for '" + std::string(to_string(id)) + "'");
  }
  return *it->second;
}

void Gateway::acquire_slot() {
  std::unique_lock lock(mutex_);
  slot_freed_.wait(lock, [&] { return in_flight_ < max_in_flight_; });
  ++in_flight_;
}

void Gateway::release_slot() {
  {
    std::lock_guard lock(mutex_);
    --in_flight_;
  }
  slot_freed_.notify_one();
}

LlmExchange Gateway::complete_structured(const ProviderConfig& config, const PromptTemplate& tmpl,
                                         const Bindings& bindings) {
  validate_config(config);
  const std::string rendered = render_prompt(tmpl, bindings);
  LlmProvider& provider = provider_for(config.provider_id);
  {
    std::lock_guard lock(mutex_);
    ++stats_.calls;
  }

  const int max_attempts = config.max_retries + 1;
  std::string prompt = rendered;
  LlmExchange last;
  std::string last_error;
  bool last_was_transport = false;

  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    LlmExchange ex;
    ex.template_id = tmpl.template_id;
    ex.rendered_prompt = prompt;
    ex.attempt = attempt;

    acquire_slot();
    try {
      const ProviderRequest request{tmpl.template_id, bindings, prompt, config};
      ProviderReply reply = provider.complete(request);
      release_slot();
      ex.raw_response = std::move(reply.text);
      ex.usage = reply.usage;
      last_was_transport = false;
    } catch (const Error& e) {
      release_slot();
      if (e.code() != ErrorCode::kTransport) throw;
      last_was_transport = true;
      last_error = e.what();
    } catch (...) {
      release_slot();
      throw;
    }

    std::function<void(const LlmExchange&)> sink;
    {
      std::lock_guard lock(mutex_);
      ++stats_.attempts;
      stats_.usage += ex.usage;
      sink = sink_;
    }

    if (!last_was_transport) {
      std::optional<std::string> problem;
      try {
        nlohmann::json parsed = nlohmann::json::parse(unwrap_code_fence(ex.raw_response));
        problem = check(parsed, tmpl.response_contract);
        if (!problem) ex.parsed = std::move(parsed);
      } catch (const nlohmann::json::parse_error& e) {
        // e.what() quotes the offending text; keep raw model output out of errors.
        problem = "reply is not valid JSON (parse error at byte " + std::to_string(e.byte) + ")";
      }
      if (sink) sink(ex);
      if (ex.parsed) return ex;
      last_error = *problem;
      prompt = rendered + repair_note(last_error, tmpl.response_contract);
    } else {
      if (sink) sink(ex);
    }
    spdlog::debug("{} attempt {}/{} failed: {}", to_string(tmpl.template_id), attempt, max_attempts, last_error);
    last = std::move(ex);
  }

  const std::string what = std::string(to_string(tmpl.template_id)) + " failed after " +
                           std::to_string(max_attempts) + " attempt(s): " + last_error;
  if (last_was_transport) throw Error(ErrorCode::kTransport, what);
  throw ContractViolation(what, std::move(last));
}

}  // namespace qdex::llm
