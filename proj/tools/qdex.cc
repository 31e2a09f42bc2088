// qdex: batch runner, HTTP server, and evaluation reports.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "qdex/cli/run.h"
#include "qdex/core/errors.h"
#include "qdex/core/json_io.h"
#include "qdex/eval/eval.h"
#include "qdex/llm/hosted_provider.h"
#include "qdex/llm/scripted_provider.h"
#include "qdex/service/server.h"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct ModelFlags {
  std::string model = "meta-llama/Llama-3.3-70B-Instruct-Turbo";
  std::string extraction_model;
  std::string base_url;
  std::string api_key_env = "SCHEMATIQ_API_KEY";
  int max_retries = 2;

  void add(CLI::App& app) {
    app.add_option("--model", model, "Model for unit and schema discovery")->capture_default_str();
    app.add_option("--extraction-model", extraction_model, "Model for extraction (default: --model)");
    app.add_option("--base-url", base_url, "OpenAI-compatible endpoint");
    app.add_option("--api-key-env", api_key_env, "Environment variable holding the API key")->capture_default_str();
    app.add_option("--max-retries", max_retries, "Repair retries per model call")->capture_default_str();
  }

  qdex::llm::ModelRoles roles() const {
    qdex::llm::ModelRoles r;
    r.discovery.model_id = model;
    r.discovery.api_key_env_var = api_key_env;
    r.discovery.max_retries = max_retries;
    if (!base_url.empty()) r.discovery.base_url = base_url;
    r.extraction = r.discovery;
    if (!extraction_model.empty()) r.extraction.model_id = extraction_model;
    return r;
  }
};

json read_json_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw qdex::Error(qdex::ErrorCode::kIo, "cannot read '" + p.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw qdex::Error(qdex::ErrorCode::kInvalidArgument, "'" + p.string() + "' is not valid JSON: " + e.what());
  }
}

void write_report(const std::string& out, const json& j) {
  if (out.empty()) return;
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  f << qdex::dump_canonical(j);
  if (!f) throw qdex::Error(qdex::ErrorCode::kIo, "cannot write '" + out + "'");
}

// Table JSON, an array of names, or an array of instance records.
std::vector<qdex::InstanceRecord> load_predicted(const fs::path& p) {
  const json j = read_json_file(p);
  std::vector<qdex::InstanceRecord> out;
  if (j.is_object() && j.contains("rows")) {
    for (const qdex::Row& r : j.get<qdex::Table>().rows) out.push_back(r.instance);
    return out;
  }
  if (!j.is_array()) throw qdex::Error(qdex::ErrorCode::kInvalidArgument, "predicted instances must be a table or an array");
  for (const json& e : j) {
    if (e.is_string()) {
      qdex::InstanceRecord r;
      r.display_name = e.get<std::string>();
      out.push_back(std::move(r));
    } else {
      out.push_back(e.get<qdex::InstanceRecord>());
    }
  }
  return out;
}

// Array of names or of {name, doc_ids}.
std::vector<qdex::eval::GoldInstance> load_gold_instances(const fs::path& p) {
  const json j = read_json_file(p);
  if (!j.is_array()) throw qdex::Error(qdex::ErrorCode::kInvalidArgument, "gold instances must be an array");
  std::vector<qdex::eval::GoldInstance> out;
  for (const json& e : j) {
    if (e.is_string()) {
      out.push_back({e.get<std::string>(), {}});
    } else {
      out.push_back({e.at("name").get<std::string>(), e.value("doc_ids", std::vector<std::string>{})});
    }
  }
  return out;
}

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? v : fallback;
}

int serve(const std::string& data_dir, const std::string& bind, const std::string& scripted, const ModelFlags& flags,
          bool retain_raw) {
  qdex::service::ServiceConfig cfg;
  cfg.models = flags.roles();
  std::map<qdex::llm::ProviderId, std::shared_ptr<qdex::llm::LlmProvider>> providers;
  if (!scripted.empty()) {
    cfg.models.discovery.provider_id = qdex::llm::ProviderId::kScripted;
    cfg.models.extraction.provider_id = qdex::llm::ProviderId::kScripted;
    providers[qdex::llm::ProviderId::kScripted] =
        std::make_shared<qdex::llm::ScriptedProvider>(qdex::llm::ScriptedProvider::from_file(scripted));
  } else {
    cfg.models.discovery.provider_id = qdex::llm::ProviderId::kHostedApi;
    cfg.models.extraction.provider_id = qdex::llm::ProviderId::kHostedApi;
    qdex::llm::require_api_key(cfg.models.discovery);
    providers[qdex::llm::ProviderId::kHostedApi] = std::make_shared<qdex::llm::HostedProvider>();
  }

  // Block the stop signals before any thread starts, then wait for one.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  qdex::store::SessionStore store({data_dir, retain_raw});
  qdex::service::SessionService service(store, cfg, providers);
  qdex::service::HttpServer server(service, qdex::service::parse_bind_address(bind));
  server.start();
  spdlog::info("listening on {}:{} (data in {})", qdex::service::parse_bind_address(bind).host, server.port(), data_dir);
  std::cout << "listening on port " << server.port() << std::endl;

  int sig = 0;
  sigwait(&signals, &sig);
  spdlog::info("shutting down");
  server.stop();
  service.wait_for_jobs();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qdex: question-driven table extraction from document collections"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Log progress to stderr");

  // run
  qdex::cli::RunOptions run;
  ModelFlags run_models;
  std::string manifest, scripted, schema_seed, format = "both", unit;
  bool no_raw = false;
  auto* run_cmd = app.add_subcommand("run", "Run unit discovery, schema discovery and extraction over a manifest");
  run_cmd->add_option("--manifest", manifest, "JSON array of {doc_id, title?, path}")->required();
  run_cmd->add_option("--query", run.query, "Research question, or a file holding it")->required();
  run_cmd->add_option("--unit", unit, "Observation unit JSON (inline or file); skips unit discovery");
  run_cmd->add_option("--schema-seed", schema_seed, "Schema JSON to extend instead of starting empty");
  run_cmd->add_option("--scripted", scripted, "Replay this transcript instead of calling a hosted model");
  run_cmd->add_option("--batch-size", run.batch_size, "Documents per schema discovery call")->capture_default_str();
  run_cmd->add_option("--max-fields", run.max_fields, "Schema size cap")->capture_default_str();
  run_cmd->add_option("--out-dir", run.out_dir, "Output directory")->capture_default_str();
  run_cmd->add_option("--format", format, "csv, json or both")->capture_default_str();
  run_cmd->add_option("--parallel", run.parallel, "Documents extracted at once (1 is fully deterministic)")
      ->capture_default_str();
  run_cmd->add_flag("--include-conflicts", run.include_conflicts, "Add a \"<field> (conflict)\" column per field");
  run_cmd->add_flag("--no-raw", no_raw, "Do not keep raw model exchanges in the session directory");
  run_models.add(*run_cmd);

  // serve
  std::string data_dir = env_or("SCHEMATIQ_DATA_DIR", "qdex-data");
  std::string bind = env_or("SCHEMATIQ_BIND_ADDR", "127.0.0.1:8080");
  std::string serve_scripted;
  bool serve_no_raw = false;
  ModelFlags serve_models;
  auto* serve_cmd = app.add_subcommand("serve", "Serve the /v1 HTTP and WebSocket API");
  serve_cmd->add_option("--data-dir", data_dir, "Session store root (env SCHEMATIQ_DATA_DIR)")->capture_default_str();
  serve_cmd->add_option("--bind", bind, "host:port (env SCHEMATIQ_BIND_ADDR)")->capture_default_str();
  serve_cmd->add_option("--scripted", serve_scripted, "Replay this transcript instead of calling a hosted model");
  serve_cmd->add_flag("--no-raw", serve_no_raw, "Do not keep raw model exchanges");
  serve_models.add(*serve_cmd);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluation reports");
  eval_cmd->require_subcommand(1);
  std::string out_json;
  std::string candidate, gold, manual_map;
  auto* align_cmd = eval_cmd->add_subcommand("align", "Align a schema with a gold schema");
  align_cmd->add_option("--candidate", candidate, "Schema JSON")->required();
  align_cmd->add_option("--gold", gold, "Gold schema JSON")->required();
  align_cmd->add_option("--manual-map", manual_map, "Expert pairing [[candidate, gold], ...]");
  align_cmd->add_option("--out", out_json, "Write the JSON report here");
  std::string predicted, gold_instances;
  auto* inst_cmd = eval_cmd->add_subcommand("instances", "Instance recall and precision");
  inst_cmd->add_option("--predicted", predicted, "table.json, or an array of names")->required();
  inst_cmd->add_option("--gold", gold_instances, "Array of names or {name, doc_ids}")->required();
  inst_cmd->add_option("--out", out_json, "Write the JSON report here");
  std::string query_only, docs_only, both;
  auto* abl_cmd = eval_cmd->add_subcommand("ablation", "Field overlap across three input conditions");
  abl_cmd->add_option("--query-only", query_only, "Schema from the question alone")->required();
  abl_cmd->add_option("--docs-only", docs_only, "Schema from the documents alone")->required();
  abl_cmd->add_option("--both", both, "Schema from both")->required();
  abl_cmd->add_option("--out", out_json, "Write the JSON report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  spdlog::set_level(verbose ? spdlog::level::info : spdlog::level::warn);

  try {
    if (*run_cmd) {
      run.manifest = manifest;
      if (!scripted.empty()) run.scripted = scripted;
      if (!schema_seed.empty()) run.schema_seed = schema_seed;
      if (!unit.empty()) run.unit = unit;
      run.retain_raw = !no_raw;
      run.format = qdex::cli::output_format_from_string(format);
      run.models = run_models.roles();
      const auto outcome = qdex::cli::run(run, std::cerr);
      return outcome.exit_code;
    }
    if (*serve_cmd) return serve(data_dir, bind, serve_scripted, serve_models, !serve_no_raw);
    if (*align_cmd) {
      const auto g = qdex::eval::load_gold_schema(gold);
      const auto c = qdex::eval::schema_from_json(read_json_file(candidate));
      const auto a = manual_map.empty()
                         ? qdex::eval::align_schemas(c, g.schema)
                         : qdex::eval::align_schemas(c, g.schema, qdex::eval::Matcher::kManualMap,
                                                     qdex::eval::load_manual_map(manual_map));
      std::cout << qdex::eval::summary(a);
      write_report(out_json, qdex::eval::to_json(a));
      return 0;
    }
    if (*inst_cmd) {
      const auto r = qdex::eval::instance_metrics(load_predicted(predicted), load_gold_instances(gold_instances));
      std::cout << qdex::eval::summary(r);
      write_report(out_json, qdex::eval::to_json(r));
      return 0;
    }
    if (*abl_cmd) {
      const auto r = qdex::eval::ablation_overlap(qdex::eval::schema_from_json(read_json_file(query_only)),
                                                  qdex::eval::schema_from_json(read_json_file(docs_only)),
                                                  qdex::eval::schema_from_json(read_json_file(both)));
      std::cout << qdex::eval::summary(r);
      write_report(out_json, qdex::eval::to_json(r));
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
