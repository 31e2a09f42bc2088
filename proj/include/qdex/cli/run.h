#pragma once

// Headless end-to-end run: manifest in, table and report files out. The
// steps are the same service operations the HTTP API exposes.

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qdex/core/model.h"
#include "qdex/llm/gateway.h"

namespace qdex::cli {

enum class OutputFormat { kCsv, kJson, kBoth };
OutputFormat output_format_from_string(std::string_view s);  // kInvalidArgument

struct RunOptions {
  std::filesystem::path manifest;
  std::string query;  // text, or a path to a file holding it
  std::optional<std::string> unit;  // JSON object, or a path to one
  std::optional<std::filesystem::path> schema_seed;
  std::optional<std::filesystem::path> scripted;  // transcript; unset means the hosted provider
  std::filesystem::path out_dir = "qdex-out";
  OutputFormat format = OutputFormat::kBoth;
  bool include_conflicts = false;
  bool retain_raw = true;
  std::size_t batch_size = 5;
  std::size_t max_fields = 40;
  std::size_t parallel = 4;
  llm::ModelRoles models;  // provider_id is set from `scripted`
};

// Manifest: JSON array of {doc_id, title?, path}; relative paths resolve
// against the manifest's directory. Throws kIo / kInvalidArgument.
std::vector<Document> load_manifest(const std::filesystem::path& manifest);

struct RunOutcome {
  int exit_code = 2;  // 0 ok, 1 some documents failed, 2 terminal error
  std::string session_id;
  nlohmann::json report;
  std::string error;
};

RunOutcome run(const RunOptions& options, std::ostream& log);

}  // namespace qdex::cli
