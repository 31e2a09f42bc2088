#include "qdex/eval/eval.h"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <unordered_map>

#include "qdex/core/errors.h"
#include "qdex/core/json_io.h"
#include "qdex/core/text.h"

namespace qdex::eval {

using nlohmann::json;

namespace {

[[noreturn]] void invalid(const std::string& msg) { throw Error(ErrorCode::kInvalidArgument, msg); }

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    invalid("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

std::string fraction(double v) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(3) << v;
  return ss.str();
}

// normalized name -> position
std::unordered_map<std::string, std::size_t> index_fields(const Schema& s) {
  std::unordered_map<std::string, std::size_t> out;
  for (std::size_t i = 0; i < s.fields.size(); ++i) out.emplace(normalize_name(s.fields[i].canonical_name), i);
  return out;
}

}  // namespace

std::string_view to_string(Matcher m) { return m == Matcher::kManualMap ? "manual_map" : "exact_normalized"; }

SchemaAlignment align_schemas(const Schema& candidate, const Schema& gold, Matcher matcher,
                              const std::vector<FieldPair>& manual_map) {
  validate_schema(candidate);
  validate_schema(gold);
  if (gold.fields.empty()) invalid("gold schema has no fields");
  if (matcher == Matcher::kExactNormalized && !manual_map.empty()) invalid("a manual map needs the manual_map matcher");

  const auto cand_index = index_fields(candidate);
  const auto gold_index = index_fields(gold);
  std::vector<std::optional<std::size_t>> gold_to_cand(gold.fields.size());
  std::vector<bool> cand_used(candidate.fields.size(), false);

  if (matcher == Matcher::kExactNormalized) {
    for (std::size_t g = 0; g < gold.fields.size(); ++g) {
      auto it = cand_index.find(normalize_name(gold.fields[g].canonical_name));
      if (it == cand_index.end()) continue;
      gold_to_cand[g] = it->second;
      cand_used[it->second] = true;
    }
  } else {
    for (const auto& [c_name, g_name] : manual_map) {
      auto c = cand_index.find(normalize_name(c_name));
      if (c == cand_index.end()) invalid("manual map names unknown candidate field '" + c_name + "'");
      auto g = gold_index.find(normalize_name(g_name));
      if (g == gold_index.end()) invalid("manual map names unknown gold field '" + g_name + "'");
      if (cand_used[c->second]) invalid("manual map uses candidate field '" + c_name + "' twice");
      if (gold_to_cand[g->second]) invalid("manual map uses gold field '" + g_name + "' twice");
      gold_to_cand[g->second] = c->second;
      cand_used[c->second] = true;
    }
  }

  SchemaAlignment out;
  out.matcher = matcher;
  for (std::size_t g = 0; g < gold.fields.size(); ++g) {
    if (gold_to_cand[g]) {
      out.shared.emplace_back(candidate.fields[*gold_to_cand[g]].canonical_name, gold.fields[g].canonical_name);
    } else {
      out.gold_only.push_back(gold.fields[g].canonical_name);
    }
  }
  for (std::size_t c = 0; c < candidate.fields.size(); ++c) {
    if (!cand_used[c]) out.candidate_only.push_back(candidate.fields[c].canonical_name);
  }
  out.coverage = static_cast<double>(out.shared.size()) / static_cast<double>(gold.fields.size());
  return out;
}

json to_json(const SchemaAlignment& a) {
  json shared = json::array();
  for (const auto& [c, g] : a.shared) shared.push_back({{"candidate", c}, {"gold", g}});
  return {{"matcher", to_string(a.matcher)},
          {"shared", shared},
          {"candidate_only", a.candidate_only},
          {"gold_only", a.gold_only},
          {"coverage", a.coverage},
          {"weighting", "equal"}};
}

std::string summary(const SchemaAlignment& a) {
  std::ostringstream ss;
  ss << "matcher          " << to_string(a.matcher) << "\n"
     << "shared           " << a.shared.size() << "\n"
     << "candidate only   " << a.candidate_only.size() << "\n"
     << "gold only        " << a.gold_only.size() << "\n"
     << "coverage         " << fraction(a.coverage) << " (fields weighted equally)\n";
  for (const auto& [c, g] : a.shared) ss << "  = " << g << (c == g ? "" : " <- " + c) << "\n";
  for (const auto& g : a.gold_only) ss << "  - " << g << "\n";
  for (const auto& c : a.candidate_only) ss << "  + " << c << "\n";
  return ss.str();
}

Schema schema_from_json(const json& j) {
  if (!j.is_object() || !j.contains("fields") || !j["fields"].is_array()) invalid("schema JSON needs a fields array");
  Schema s;
  try {
    if (std::all_of(j["fields"].begin(), j["fields"].end(), [](const json& f) { return f.is_string(); })) {
      for (const json& f : j["fields"]) {
        SchemaField field;
        field.canonical_name = canonical_field_name(f.get<std::string>());
        field.origin = FieldOrigin::kHuman;
        s.fields.push_back(std::move(field));
      }
      s.version = j.value("version", std::int64_t{0});
    } else {
      s = j.get<Schema>();
    }
  } catch (const json::exception& e) {
    invalid(std::string("bad schema JSON: ") + e.what());
  }
  validate_schema(s);
  return s;
}

GoldSchema load_gold_schema(const std::filesystem::path& path) {
  const json j = read_json_file(path);
  GoldSchema g;
  g.schema = schema_from_json(j);
  g.domain = j.value("domain", "");
  g.observation_unit = j.value("observation_unit", "");
  g.query = j.value("query", "");
  return g;
}

std::vector<FieldPair> load_manual_map(const std::filesystem::path& path) {
  json j = read_json_file(path);
  if (j.is_object() && j.contains("pairs")) j = j["pairs"];
  if (!j.is_array()) invalid("manual map must be an array of [candidate, gold] pairs");
  std::vector<FieldPair> out;
  for (const json& p : j) {
    if (p.is_array() && p.size() == 2 && p[0].is_string() && p[1].is_string()) {
      out.emplace_back(p[0].get<std::string>(), p[1].get<std::string>());
    } else if (p.is_object() && p.contains("candidate") && p.contains("gold")) {
      out.emplace_back(p["candidate"].get<std::string>(), p["gold"].get<std::string>());
    } else {
      invalid("manual map entries must be [candidate, gold] pairs");
    }
  }
  return out;
}

RecallReport instance_metrics(const std::vector<InstanceRecord>& predicted, const std::vector<GoldInstance>& gold) {
  if (gold.empty()) invalid("gold instance list is empty");

  // Deduplicate gold by normalized name, merging document lists.
  std::vector<std::string> gold_keys;
  std::map<std::string, std::set<std::string>> gold_docs;
  for (const GoldInstance& g : gold) {
    const std::string key = normalize_name(g.name);
    if (key.empty()) invalid("gold instance name is empty");
    if (!gold_docs.count(key)) gold_keys.push_back(key);
    gold_docs[key].insert(g.doc_ids.begin(), g.doc_ids.end());
  }

  std::set<std::string> found;
  RecallReport r;
  for (const InstanceRecord& p : predicted) {
    std::vector<std::string> names = p.aliases;
    names.push_back(p.display_name);
    bool matched = false;
    for (const std::string& n : names) {
      const std::string key = normalize_name(n);
      if (gold_docs.count(key)) {
        found.insert(key);
        matched = true;
      }
    }
    if (!matched) ++r.false_positive;
  }
  r.true_positive = found.size();
  r.false_negative = gold_keys.size() - found.size();
  r.recall = static_cast<double>(r.true_positive) / static_cast<double>(gold_keys.size());
  if (r.true_positive + r.false_positive == 0) {
    r.precision = 1.0;
    r.degenerate = true;
  } else {
    r.precision = static_cast<double>(r.true_positive) / static_cast<double>(r.true_positive + r.false_positive);
  }

  std::map<std::string, DocRecall> docs;
  std::vector<std::string> doc_order;
  for (const std::string& key : gold_keys) {
    for (const std::string& d : gold_docs[key]) {
      if (!docs.count(d)) {
        doc_order.push_back(d);
        docs[d].doc_id = d;
      }
      ++docs[d].gold_instances;
      if (found.count(key)) ++docs[d].found;
    }
  }
  std::sort(doc_order.begin(), doc_order.end());
  std::map<std::size_t, DensityBucket> density;
  for (const std::string& d : doc_order) {
    const DocRecall& dr = docs[d];
    r.per_doc.push_back(dr);
    DensityBucket& b = density[dr.gold_instances];
    b.gold_instances = dr.gold_instances;
    ++b.docs;
    b.gold += dr.gold_instances;
    b.missed += dr.gold_instances - dr.found;
  }
  for (auto& [n, b] : density) {
    b.recall = b.gold == 0 ? 0.0 : static_cast<double>(b.gold - b.missed) / static_cast<double>(b.gold);
    r.by_density.push_back(b);
  }
  return r;
}

RecallReport instance_metrics(const std::vector<InstanceRecord>& predicted, const std::vector<std::string>& gold) {
  std::vector<GoldInstance> g;
  for (const std::string& name : gold) g.push_back({name, {}});
  return instance_metrics(predicted, g);
}

json to_json(const RecallReport& r) {
  json per_doc = json::array();
  for (const DocRecall& d : r.per_doc) {
    per_doc.push_back({{"doc_id", d.doc_id}, {"gold_instances", d.gold_instances}, {"found", d.found}});
  }
  json density = json::array();
  for (const DensityBucket& b : r.by_density) {
    density.push_back({{"gold_instances", b.gold_instances},
                       {"docs", b.docs},
                       {"gold", b.gold},
                       {"missed", b.missed},
                       {"recall", b.recall}});
  }
  return {{"true_positive", r.true_positive},
          {"false_negative", r.false_negative},
          {"false_positive", r.false_positive},
          {"recall", r.recall},
          {"precision", r.precision},
          {"degenerate", r.degenerate},
          {"per_doc", per_doc},
          {"by_density", density}};
}

std::string summary(const RecallReport& r) {
  std::ostringstream ss;
  ss << "true positive    " << r.true_positive << "\n"
     << "false negative   " << r.false_negative << "\n"
     << "false positive   " << r.false_positive << "\n"
     << "recall           " << fraction(r.recall) << "\n"
     << "precision        " << fraction(r.precision) << (r.degenerate ? " (no predictions; 1.0 by convention)" : "")
     << "\n";
  if (!r.by_density.empty()) {
    ss << "instances/doc    docs   gold  missed  recall\n";
    for (const DensityBucket& b : r.by_density) {
      ss << std::left << std::setw(17) << b.gold_instances << std::setw(7) << b.docs << std::setw(6) << b.gold
         << std::setw(8) << b.missed << fraction(b.recall) << "\n";
    }
  }
  return ss.str();
}

AblationReport ablation_overlap(const Schema& query_only, const Schema& docs_only, const Schema& both) {
  const std::array<const Schema*, 3> schemas = {&query_only, &docs_only, &both};
  std::vector<std::string> order;
  std::map<std::string, std::pair<std::string, unsigned>> seen;  // key -> (display name, membership bits)
  for (unsigned i = 0; i < schemas.size(); ++i) {
    validate_schema(*schemas[i]);
    for (const SchemaField& f : schemas[i]->fields) {
      const std::string key = normalize_name(f.canonical_name);
      auto [it, inserted] = seen.emplace(key, std::make_pair(f.canonical_name, 0u));
      if (inserted) order.push_back(key);
      it->second.second |= 1u << i;
    }
  }
  // Bits: 1 query, 2 docs, 4 both.
  static const std::map<unsigned, const char*> kRegion = {{1, "query"},      {2, "docs"},      {4, "both"},
                                                          {3, "query+docs"}, {5, "query+both"}, {6, "docs+both"},
                                                          {7, "all"}};
  AblationReport r;
  for (const char* name : kAblationRegions) r.regions[name];
  for (const std::string& key : order) {
    const auto& [display, bits] = seen[key];
    r.regions[kRegion.at(bits)].push_back(display);
  }
  r.total = order.size();
  return r;
}

json to_json(const AblationReport& r) {
  json regions = json::object();
  for (const char* name : kAblationRegions) regions[name] = r.regions.at(name);
  return {{"regions", regions}, {"total", r.total}};
}

std::string summary(const AblationReport& r) {
  std::ostringstream ss;
  for (const char* name : kAblationRegions) {
    ss << std::left << std::setw(12) << name << r.regions.at(name).size() << "\n";
  }
  ss << std::left << std::setw(12) << "total" << r.total << "\n";
  return ss.str();
}

}  // namespace qdex::eval
