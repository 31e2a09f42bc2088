#include "qdex/cli/run.h"

#include <fstream>
#include <sstream>

#include "qdex/core/errors.h"
#include "qdex/core/json_io.h"
#include "qdex/llm/hosted_provider.h"
#include "qdex/llm/scripted_provider.h"
#include "qdex/service/export.h"
#include "qdex/service/service.h"

namespace qdex::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << content;
  if (!out) throw Error(ErrorCode::kIo, "cannot write '" + p.string() + "'");
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, what + " is not valid JSON: " + e.what());
  }
}

bool is_file(const std::string& s) {
  std::error_code ec;
  return !s.empty() && s.size() < 4096 && fs::is_regular_file(s, ec);
}

}  // namespace

OutputFormat output_format_from_string(std::string_view s) {
  if (s == "csv") return OutputFormat::kCsv;
  if (s == "json") return OutputFormat::kJson;
  if (s == "both") return OutputFormat::kBoth;
  throw Error(ErrorCode::kInvalidArgument, "unknown format '" + std::string(s) + "' (csv, json, both)");
}

std::vector<Document> load_manifest(const fs::path& manifest) {
  const json j = parse_json(read_file(manifest), "manifest '" + manifest.string() + "'");
  if (!j.is_array()) throw Error(ErrorCode::kInvalidArgument, "manifest must be a JSON array");
  const fs::path base = manifest.parent_path();
  std::vector<Document> docs;
  for (const json& entry : j) {
    if (!entry.is_object() || !entry.contains("doc_id") || !entry.contains("path")) {
      throw Error(ErrorCode::kInvalidArgument, "manifest entries need doc_id and path");
    }
    Document doc;
    doc.doc_id = entry.at("doc_id").get<std::string>();
    if (entry.contains("title") && !entry["title"].is_null()) doc.title = entry["title"].get<std::string>();
    fs::path path = entry.at("path").get<std::string>();
    if (path.is_relative()) path = base / path;
    doc.text = read_file(path);
    doc.source_name = path.filename().string();
    docs.push_back(std::move(doc));
  }
  validate_documents(docs);
  return docs;
}

RunOutcome run(const RunOptions& o, std::ostream& log) {
  RunOutcome out;
  try {
    std::vector<Document> docs = load_manifest(o.manifest);
    const ResearchQuery query{is_file(o.query) ? read_file(o.query) : o.query};

    service::ServiceConfig cfg;
    cfg.models = o.models;
    cfg.discovery.batch_size = o.batch_size;
    cfg.discovery.max_fields = o.max_fields;
    cfg.extraction.max_parallel_docs = o.parallel;
    cfg.max_in_flight = o.parallel;
    discovery::validate_config(cfg.discovery);
    extraction::validate_config(cfg.extraction);

    std::map<llm::ProviderId, std::shared_ptr<llm::LlmProvider>> providers;
    if (o.scripted) {
      cfg.models.discovery.provider_id = llm::ProviderId::kScripted;
      cfg.models.extraction.provider_id = llm::ProviderId::kScripted;
      providers[llm::ProviderId::kScripted] =
          std::make_shared<llm::ScriptedProvider>(llm::ScriptedProvider::from_file(*o.scripted));
    } else {
      cfg.models.discovery.provider_id = llm::ProviderId::kHostedApi;
      cfg.models.extraction.provider_id = llm::ProviderId::kHostedApi;
      llm::require_api_key(cfg.models.discovery);
      llm::require_api_key(cfg.models.extraction);
      providers[llm::ProviderId::kHostedApi] = std::make_shared<llm::HostedProvider>();
    }
    llm::validate_config(cfg.models.discovery);
    llm::validate_config(cfg.models.extraction);

    std::optional<json> unit;
    if (o.unit) unit = parse_json(is_file(*o.unit) ? read_file(*o.unit) : *o.unit, "--unit");
    std::optional<Schema> seed;
    if (o.schema_seed) {
      try {
        seed = parse_json(read_file(*o.schema_seed), "--schema-seed").get<Schema>();
      } catch (const json::exception& e) {
        throw Error(ErrorCode::kInvalidArgument, std::string("--schema-seed: ") + e.what());
      }
    }

    fs::create_directories(o.out_dir);
    store::SessionStore store({o.out_dir / "sessions", o.retain_raw});
    service::SessionService svc(store, cfg, providers);

    const SessionState created = svc.create_session(query, std::move(docs));
    const std::string id = created.session_id;
    out.session_id = id;
    log << "session " << id << ": " << created.documents.size() << " documents\n";

    if (unit) {
      svc.put_unit(id, *unit);
    } else {
      const auto r = svc.discover_unit(id);
      log << "observation unit: " << r.unit.type_name << "\n";
    }
    const Schema schema = seed ? svc.discover_schema(id, true, seed) : svc.discover_schema(id, false);
    log << "schema: " << schema.fields.size() << " fields\n";

    const extraction::ExtractionReport report = svc.run_extraction(id);
    const Table table = svc.get_table(id);

    if (o.format != OutputFormat::kJson) {
      write_file(o.out_dir / "table.csv", service::table_to_csv(table, schema, o.include_conflicts));
    }
    if (o.format != OutputFormat::kCsv) write_file(o.out_dir / "table.json", service::table_to_json(table));

    json r = svc.last_report(id).value_or(extraction::report_to_json(report));
    const llm::GatewayStats usage = svc.usage();
    r["llm_calls"] = usage.calls;
    r["token_usage"] = service::usage_to_json(usage);
    r["session_id"] = id;
    r["session_dir"] = store.session_dir(id).string();
    write_file(o.out_dir / "report.json", dump_canonical(r));

    json events = json::array();
    for (const auto& e : svc.events().since(id, 0)) events.push_back(e);
    store.write_artifact(id, "events", events);

    out.report = r;
    log << "rows: " << table.rows.size() << ", documents failed: " << report.docs_failed << "/" << report.docs_total
        << "\n";
    // Nothing extracted at all is a hard failure, not a partial one.
    if (report.docs_total > 0 && report.docs_failed == report.docs_total) {
      out.error = "every document failed";
      out.exit_code = 2;
    } else {
      out.exit_code = report.docs_failed > 0 ? 1 : 0;
    }
  } catch (const std::exception& e) {
    out.error = e.what();
    out.exit_code = 2;
  }
  if (!out.error.empty()) log << "error: " << out.error << "\n";
  return out;
}

}  // namespace qdex::cli
