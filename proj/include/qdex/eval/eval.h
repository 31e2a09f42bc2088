#pragma once

// Measurement helpers: schema alignment against a gold schema, instance
// recall/precision, and field overlap across three input conditions. All
// matching is by normalize_name; there is no fuzzy matching.

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "qdex/core/model.h"

namespace qdex::eval {

enum class Matcher { kExactNormalized, kManualMap };
std::string_view to_string(Matcher m);

using FieldPair = std::pair<std::string, std::string>;  // (candidate, gold)

struct SchemaAlignment {
  std::vector<FieldPair> shared;  // in gold order
  std::vector<std::string> candidate_only;
  std::vector<std::string> gold_only;
  Matcher matcher = Matcher::kExactNormalized;
  double coverage = 0.0;  // matched gold fields / gold fields, equally weighted
};

// kManualMap uses only the given pairs; everything unpaired is *_only.
// Throws kInvalidArgument for an empty gold schema, or for pairs naming an
// unknown field or using a field twice.
SchemaAlignment align_schemas(const Schema& candidate, const Schema& gold, Matcher matcher = Matcher::kExactNormalized,
                              const std::vector<FieldPair>& manual_map = {});

nlohmann::json to_json(const SchemaAlignment& a);
std::string summary(const SchemaAlignment& a);

// Gold schema file: {"domain", "observation_unit", "query"?, "fields": [name, ...]}.
struct GoldSchema {
  std::string domain;
  std::string observation_unit;
  std::string query;
  Schema schema;
};
GoldSchema load_gold_schema(const std::filesystem::path& path);

// Manual map file: [[candidate, gold], ...] or {"pairs": [...]}.
std::vector<FieldPair> load_manual_map(const std::filesystem::path& path);

// Accepts either a Schema object or a gold schema file's shape.
Schema schema_from_json(const nlohmann::json& j);

struct GoldInstance {
  std::string name;
  std::vector<std::string> doc_ids;  // documents that mention it; may be empty
};

struct DocRecall {
  std::string doc_id;
  std::size_t gold_instances = 0;
  std::size_t found = 0;
};

// Docs grouped by how many gold instances they hold.
struct DensityBucket {
  std::size_t gold_instances = 0;
  std::size_t docs = 0;
  std::size_t gold = 0;
  std::size_t missed = 0;
  double recall = 0.0;
};

struct RecallReport {
  std::size_t true_positive = 0;
  std::size_t false_negative = 0;
  std::size_t false_positive = 0;
  double recall = 0.0;
  double precision = 1.0;
  // No predictions (or none at all counted): precision is 1.0 by convention.
  bool degenerate = false;
  std::vector<DocRecall> per_doc;
  std::vector<DensityBucket> by_density;
};

// A gold instance counts as found when its name matches a predicted
// record's display name or an alias. Duplicate gold names count once.
// Throws kInvalidArgument when gold is empty.
RecallReport instance_metrics(const std::vector<InstanceRecord>& predicted, const std::vector<GoldInstance>& gold);
RecallReport instance_metrics(const std::vector<InstanceRecord>& predicted, const std::vector<std::string>& gold);

nlohmann::json to_json(const RecallReport& r);
std::string summary(const RecallReport& r);

// Regions of the three-set diagram, keyed by which conditions hold the
// field: "query", "docs", "both", "query+docs", "query+both", "docs+both",
// "all".
inline constexpr std::array<const char*, 7> kAblationRegions = {"query",      "docs",      "both",     "query+docs",
                                                                "query+both", "docs+both", "all"};

struct AblationReport {
  std::map<std::string, std::vector<std::string>> regions;  // every region present, maybe empty
  std::size_t total = 0;  // distinct fields across the three schemas
};

AblationReport ablation_overlap(const Schema& query_only, const Schema& docs_only, const Schema& both);

nlohmann::json to_json(const AblationReport& r);
std::string summary(const AblationReport& r);

}  // namespace qdex::eval
