#include <algorithm>
#include <random>
#include <set>

#include "doctest.h"
#include "qdex/core/errors.h"
#include "qdex/core/text.h"
#include "qdex/extraction/evidence.h"
#include "qdex/extraction/extraction.h"
#include "qdex/extraction/values.h"
#include "qdex/llm/scripted_provider.h"

using namespace qdex;
using namespace qdex::extraction;
using namespace qdex::llm;
using nlohmann::json;

namespace {

struct Harness {
  Gateway gateway;
  TemplateRegistry templates;
  std::shared_ptr<ScriptedProvider> provider;
  LlmContext ctx{gateway, templates, model()};

  explicit Harness(const json& transcript)
      : provider(std::make_shared<ScriptedProvider>(ScriptedProvider::from_json(transcript))) {
    gateway.register_provider(ProviderId::kScripted, provider);
  }

  static ProviderConfig model() {
    ProviderConfig c;
    c.provider_id = ProviderId::kScripted;
    c.max_retries = 0;
    return c;
  }
};

const ObservationUnitSpec kJudge{"Judge", "One row per judge.", {}, UnitOrigin::kDiscovered};

SchemaField field(const std::string& name, ValueKind kind = ValueKind::kText,
                  std::optional<std::vector<std::string>> allowed = std::nullopt) {
  return {name, "def", "why", kind, std::move(allowed), FieldOrigin::kModel, false};
}

json identify_reply(const std::string& doc_id, json instances) {
  return {{"template_id", "instance_identification"},
          {"when", {{"doc_id", doc_id}}},
          {"response", {{"instances", instances}}}};
}

json fill_reply(const std::string& instance, const std::string& doc_id, json cells) {
  return {{"template_id", "field_fill"},
          {"when", {{"instance", instance}, {"doc_id", doc_id}}},
          {"response", {{"cells", cells}}}};
}

json followup_reply(const std::string& field_name, json value, json quotes) {
  return {{"template_id", "field_followup"},
          {"when", {{"field", field_name}}},
          {"response", {{"value", value}, {"quotes", quotes}}}};
}

InstanceMention mention(const Document& d, const std::string& name, const std::string& quote) {
  return {d.doc_id, name, Evidence{d.doc_id, quote, std::nullopt}};
}

const Document kScalia{"c1", std::string("Opinion"),
                       "Justice Antonin Scalia filed a dissenting opinion.\nThe Court affirmed on March 3, 2015, "
                       "by a vote of 6 to 3.",
                       "c1.txt",
                       {}};

}  // namespace

TEST_CASE("validate_evidence examples") {
  const Document doc{"d1", std::nullopt, "He said “the  statute\nis clear” and moved on.", "d1.txt", {}};
  Evidence verbatim{"d1", "the  statute\nis clear", std::nullopt};
  CHECK(validate_evidence(verbatim, doc));
  REQUIRE(verbatim.char_span);
  CHECK(doc.text.substr(verbatim.char_span->begin, verbatim.char_span->end - verbatim.char_span->begin) ==
        "the  statute\nis clear");

  Evidence styled{"d1", "\"The Statute is CLEAR\"", std::nullopt};
  CHECK(validate_evidence(styled, doc));
  REQUIRE(styled.char_span);
  // The span begins at the opening curly quote, three bytes in UTF-8.
  CHECK(doc.text.substr(styled.char_span->begin, 3) == "“");

  Evidence paraphrase{"d1", "the statute is plain", std::nullopt};
  CHECK_FALSE(validate_evidence(paraphrase, doc));
  CHECK_FALSE(paraphrase.char_span);

  Evidence blank{"d1", "  \n ", std::nullopt};
  CHECK_FALSE(validate_evidence(blank, doc));

  Evidence other{"d2", "statute", std::nullopt};
  CHECK_THROWS_AS(validate_evidence(other, doc), Error);

  Evidence wrong_span{"d1", "statute", CharSpan{0, 2}};
  CHECK_FALSE(validate_evidence(wrong_span, doc));
  Evidence out_of_range{"d1", "statute", CharSpan{5, 5000}};
  CHECK_FALSE(validate_evidence(out_of_range, doc));

  const Document wide{"w", std::nullopt, "Case １２—A was decided", "w.txt", {}};
  Evidence folded{"w", "case 12-a", std::nullopt};
  CHECK(validate_evidence(folded, wide));
}

TEST_CASE("parse_value") {
  const SchemaField num = field("Vote Count", ValueKind::kNumber);
  CHECK(parse_value(6, num).outcome == ParseOutcome::kOk);
  CHECK(std::get<double>(parse_value("1.5", num).value) == 1.5);
  CHECK(parse_value("1,5", num).outcome == ParseOutcome::kInvalid);
  CHECK(parse_value("six judges", num).outcome == ParseOutcome::kInvalid);
  CHECK(parse_value(nullptr, num).outcome == ParseOutcome::kAbsent);
  CHECK(parse_value("Not stated.", num).outcome == ParseOutcome::kAbsent);

  const SchemaField date = field("Decision Date", ValueKind::kDate);
  CHECK(std::get<std::string>(parse_value("March 3, 2015", date).value) == "2015-03-03");
  CHECK(std::get<std::string>(parse_value("3rd Mar. 2015", date).value) == "2015-03-03");
  CHECK(std::get<std::string>(parse_value("2015-3-3", date).value) == "2015-03-03");
  CHECK(std::get<std::string>(parse_value("13/04/2015", date).value) == "2015-04-13");
  CHECK(std::get<std::string>(parse_value(1998, date).value) == "1998");
  const ParsedValue ambiguous = parse_value("03/04/2015", date);
  CHECK(ambiguous.outcome == ParseOutcome::kOk);
  CHECK(std::get<std::string>(ambiguous.value) == "03/04/2015");
  CHECK_FALSE(ambiguous.note.empty());
  CHECK(normalize_date("2015-02-30") == std::nullopt);
  CHECK(normalize_date("2016-02-29") == "2016-02-29");

  const SchemaField outcome = field("Judge Decision Outcome", ValueKind::kEnum,
                                    std::vector<std::string>{"Majority", "Dissent", "Concurrence"});
  CHECK(std::get<std::string>(parse_value("dissent.", outcome).value) == "Dissent");
  CHECK(parse_value("Abstain", outcome).outcome == ParseOutcome::kInvalid);
  CHECK(parse_value(3, outcome).outcome == ParseOutcome::kInvalid);

  const SchemaField list = field("Joined By", ValueKind::kListOfText);
  CHECK(std::get<std::vector<std::string>>(parse_value("Alito", list).value) == std::vector<std::string>{"Alito"});
  CHECK(std::get<std::vector<std::string>>(parse_value(json{"Alito", " ", "Thomas"}, list).value) ==
        std::vector<std::string>{"Alito", "Thomas"});
  CHECK(parse_value(json::array(), list).outcome == ParseOutcome::kAbsent);
  CHECK(parse_value(json{1, 2}, list).outcome == ParseOutcome::kInvalid);

  const SchemaField text = field("Court");
  CHECK(std::get<std::string>(parse_value(" Supreme Court ", text).value) == "Supreme Court");
  CHECK(parse_value(json::object(), text).outcome == ParseOutcome::kInvalid);
}

TEST_CASE("identify_instances") {
  Harness h(json::array({identify_reply("c1", {{{"name", "Antonin Scalia"}, {"quote", "Justice Antonin Scalia filed"}},
                                         {{"name", "Clarence Thomas"}, {"quote", "Justice Thomas concurred"}},
                                         {{"name", "..."}, {"quote", "dissenting opinion"}}})}));
  const IdentifyResult r = identify_instances(kScalia, kJudge, {}, h.ctx);
  REQUIRE(r.mentions.size() == 1);
  CHECK(r.mentions[0].surface_name == "Antonin Scalia");
  CHECK(r.mentions[0].context_quote.char_span.has_value());
  CHECK(r.rejected == 2);
}

TEST_CASE("fill_fields and followup_extract") {
  Schema schema;
  schema.fields = {field("Judge Decision Outcome", ValueKind::kEnum, std::vector<std::string>{"Majority", "Dissent"}),
                   field("Vote Count", ValueKind::kNumber), field("Decision Date", ValueKind::kDate),
                   field("Court"), field("Law Clerk")};
  Harness h(json::array(
      {fill_reply("Antonin Scalia", "c1",
            {{{"field", "judge decision outcome"}, {"value", "dissent"}, {"quotes", {"filed a dissenting opinion"}}},
             {{"field", "Vote Count"}, {"value", "six"}, {"quotes", {"6 to 3"}}},
             {{"field", "Decision Date"}, {"value", "March 3, 2015"}, {"quotes", {"on March 3, 2015"}}},
             {{"field", "Court"}, {"value", "Supreme Court"}, {"quotes", {"the Supreme Court"}}},
             {{"field", "Unknown Thing"}, {"value", "x"}, {"quotes", {"Justice"}}}}),
       followup_reply("Law Clerk", "not stated", nullptr), followup_reply("Court", "The Court", {"The Court affirmed"})}));
  const InstanceMention m = mention(kScalia, "Antonin Scalia", "Antonin Scalia");
  const auto cells = fill_fields(kScalia, kJudge, m, schema, {}, h.ctx);
  REQUIRE(cells.size() == 5);
  CHECK(cells[0].status == CellStatus::kFilled);
  CHECK(std::get<std::string>(*cells[0].value) == "Dissent");
  CHECK(cells[0].evidence.size() == 1);
  CHECK(cells[1].status == CellStatus::kMissing);
  CHECK_FALSE(cells[1].value.has_value());
  CHECK(cells[2].status == CellStatus::kFilled);
  CHECK(std::get<std::string>(*cells[2].value) == "2015-03-03");
  CHECK(cells[3].status == CellStatus::kMissing);  // quote not in document
  CHECK(cells[3].note->find("quote not found") != std::string::npos);
  CHECK(cells[4].status == CellStatus::kMissing);
  CHECK_FALSE(cells[4].note.has_value());

  const CellValue court = followup_extract(kScalia, kJudge, m, schema.fields[3], {}, h.ctx);
  CHECK(court.status == CellStatus::kFilled);
  CHECK(court.origin == CellOrigin::kFollowup);
  const CellValue clerk = followup_extract(kScalia, kJudge, m, schema.fields[4], {}, h.ctx);
  CHECK(clerk.status == CellStatus::kMissing);

  Harness none(json::array());
  const auto failed = fill_fields(kScalia, kJudge, m, schema, {}, none.ctx);
  REQUIRE(failed.size() == 5);
  for (const CellValue& c : failed) {
    CHECK(c.status == CellStatus::kMissing);
    CHECK(c.note->find("extraction failed") == 0);
  }
}

TEST_CASE("evidence_required=false keeps the quotes that validate") {
  Schema schema;
  schema.fields = {field("Court")};
  const json cells = {{{"field", "Court"}, {"value", "Court"}, {"quotes", {"The Court affirmed", "made up words"}}}};
  Harness h(json::array({fill_reply("Antonin Scalia", "c1", cells)}));
  const InstanceMention m = mention(kScalia, "Antonin Scalia", "Antonin Scalia");
  ExtractionConfig lenient;
  lenient.evidence_required = false;
  const auto kept = fill_fields(kScalia, kJudge, m, schema, lenient, h.ctx);
  CHECK(kept[0].status == CellStatus::kFilled);
  CHECK(kept[0].evidence.size() == 1);
  CHECK(fill_fields(kScalia, kJudge, m, schema, {}, h.ctx)[0].status == CellStatus::kMissing);
}

TEST_CASE("resolve_instances") {
  const InstanceMention a{"d1", "Ruth Bader Ginsburg", {}};
  const InstanceMention b{"d2", "RUTH BADER GINSBURG", {}};
  const InstanceMention c{"d2", "Antonin Scalia", {}};
  const InstanceMention d{"d3", "Ruth Bader Ginsburg.", {}};
  const auto records = resolve_instances(std::vector<InstanceMention>{a, b, c, d});
  REQUIRE(records.size() == 2);
  CHECK(records[0].display_name == "Ruth Bader Ginsburg.");
  CHECK(records[0].aliases == std::vector<std::string>{"Ruth Bader Ginsburg", "RUTH BADER GINSBURG"});
  CHECK(records[0].source_doc_ids == std::set<std::string>{"d1", "d2", "d3"});
  CHECK(records[1].display_name == "Antonin Scalia");

  const auto tie = resolve_instances(std::vector<InstanceMention>{b, a});
  REQUIRE(tie.size() == 1);
  CHECK(tie[0].display_name == "RUTH BADER GINSBURG");
  CHECK(tie[0].canonical_key == "ruth bader ginsburg");
}

TEST_CASE("resolve_instances is a partition of the surface forms") {
  const std::vector<std::string> names = {"Ann Lee", "ann lee", "ANN LEE", "Ann  Lee", "Bo Chen", "bo chen!",
                                          "Cy Diaz", "Cy-Diaz", "cy diaz", "Dee", "DEE", "Eve Park"};
  std::mt19937 rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<InstanceMention> ms;
    const std::size_t n = 1 + rng() % 15;
    std::set<std::string> forms;
    std::set<std::string> keys;
    for (std::size_t i = 0; i < n; ++i) {
      const std::string& name = names[rng() % names.size()];
      ms.push_back({"d" + std::to_string(rng() % 4), name, {}});
      forms.insert(name);
      keys.insert(normalize_name(name));
    }
    const auto records = resolve_instances(ms);
    CHECK(records.size() == keys.size());
    std::multiset<std::string> covered;
    for (const auto& r : records) {
      covered.insert(r.display_name);
      for (const auto& alias : r.aliases) covered.insert(alias);
      for (const auto& alias : r.aliases) CHECK(normalize_name(alias) == r.canonical_key);
    }
    CHECK(std::set<std::string>(covered.begin(), covered.end()) == forms);
    CHECK(covered.size() == forms.size());
    for (const auto& m : ms) {
      const auto it = std::find_if(records.begin(), records.end(),
                                   [&](const InstanceRecord& r) { return r.canonical_key == normalize_name(m.surface_name); });
      REQUIRE(it != records.end());
      CHECK(it->source_doc_ids.count(m.doc_id) == 1);
    }
  }
}

namespace {

const std::string kPresidents = "Appointing Presidents On Panel";

std::vector<Document> panel_docs() {
  return {{"a", std::nullopt, "Judge Ann Lee sat on a panel appointed by Obama and Bush.", "a.txt", {}},
          {"b", std::nullopt, "Ann Lee joined; the panel's appointing presidents were Obama and Bush.", "b.txt", {}},
          {"c", std::nullopt, "Bo Chen wrote for the court in a short opinion.", "c.txt", {}}};
}

json panel_transcript(const std::string& b_value) {
  return json::array(
      {identify_reply("a", {{{"name", "Ann Lee"}, {"quote", "Judge Ann Lee"}}}),
       identify_reply("b", {{{"name", "ANN LEE"}, {"quote", "Ann Lee joined"}}}),
       identify_reply("c", {{{"name", "Bo Chen"}, {"quote", "Bo Chen wrote"}}}),
       fill_reply("Ann Lee", "a", {{{"field", kPresidents}, {"value", "Obama; Bush"}, {"quotes", {"appointed by Obama and Bush"}}}}),
       fill_reply("ANN LEE", "b", {{{"field", kPresidents}, {"value", b_value}, {"quotes", {"presidents were Obama and Bush"}}}}),
       fill_reply("Bo Chen", "c", {{{"field", kPresidents}, {"value", nullptr}}}),
       followup_reply(kPresidents, nullptr, nullptr)});
}

Schema panel_schema() {
  Schema s;
  s.fields = {field(kPresidents)};
  s.version = 3;
  return s;
}

}  // namespace

TEST_CASE("extract_table reconciles agreeing documents") {
  Harness h(panel_transcript("obama;  bush"));
  std::vector<std::string> kinds;
  const auto r = extract_table(panel_docs(), kJudge, panel_schema(), {}, h.ctx,
                               [&](std::string_view k, const json&) { kinds.emplace_back(k); });
  REQUIRE(r.table.rows.size() == 2);
  CHECK(r.table.schema_version == 3);
  const Row& lee = r.table.rows[0];
  CHECK(lee.instance.display_name == "Ann Lee");
  CHECK(lee.instance.source_doc_ids == std::set<std::string>{"a", "b"});
  const CellValue& cell = lee.cells.at(kPresidents);
  CHECK(cell.status == CellStatus::kFilled);
  CHECK(std::get<std::string>(*cell.value) == "Obama; Bush");
  REQUIRE(cell.evidence.size() == 2);
  CHECK(cell.evidence[0].doc_id == "a");
  CHECK(cell.evidence[1].doc_id == "b");
  CHECK(r.table.rows[1].cells.at(kPresidents).status == CellStatus::kMissing);
  CHECK(audit_table(r.table, panel_docs()).empty());

  CHECK(kinds.front() == "phase_started");
  CHECK(kinds.back() == "phase_completed");
  CHECK(std::count(kinds.begin(), kinds.end(), "instance_found") == 2);
  CHECK(std::count(kinds.begin(), kinds.end(), "cell_filled") == 2);
  // 3 identifications, 3 fills, 1 follow-up for Bo Chen.
  CHECK(r.report.llm_calls == 7);
  CHECK(r.report.llm_calls <= 3 + 3 * (1 + 1));
  CHECK(r.report.cell_counts.at("filled") == 1);
  CHECK(r.report.fill_rate == doctest::Approx(0.5));
}

TEST_CASE("extract_table marks disagreement as conflict") {
  Harness h(panel_transcript("Obama; Clinton"));
  const auto r = extract_table(panel_docs(), kJudge, panel_schema(), {}, h.ctx);
  const CellValue& cell = r.table.rows[0].cells.at(kPresidents);
  CHECK(cell.status == CellStatus::kConflict);
  CHECK_FALSE(cell.value.has_value());
  REQUIRE(cell.candidates.size() == 2);
  CHECK(cell.candidates[0].doc_id == "a");
  CHECK(std::get<std::string>(cell.candidates[1].value) == "Obama; Clinton");

  Harness first(panel_transcript("Obama; Clinton"));
  ExtractionConfig cfg;
  cfg.conflict_policy = ConflictPolicy::kFirstWins;
  const auto fw = extract_table(panel_docs(), kJudge, panel_schema(), cfg, first.ctx);
  CHECK(std::get<std::string>(*fw.table.rows[0].cells.at(kPresidents).value) == "Obama; Bush");
}

TEST_CASE("extract_table rejects an empty schema") {
  Harness h(json::array());
  CHECK_THROWS_AS(extract_table(panel_docs(), kJudge, Schema{}, {}, h.ctx), Error);
}

TEST_CASE("a failing document is isolated") {
  json t = panel_transcript("Obama; Bush");
  t[1] = {{"template_id", "instance_identification"}, {"when", {{"doc_id", "b"}}}, {"error", "HTTP 500"}};
  Harness h(t);
  std::vector<json> errors;
  const auto r = extract_table(panel_docs(), kJudge, panel_schema(), {}, h.ctx, [&](std::string_view k, const json& p) {
    if (k == "pipeline_error") errors.push_back(p);
  });
  CHECK(r.report.docs_failed == 1);
  REQUIRE(errors.size() == 1);
  CHECK(errors[0]["doc_id"] == "b");
  REQUIRE(r.table.rows.size() == 2);
  CHECK(r.table.rows[0].instance.source_doc_ids == std::set<std::string>{"a"});
  CHECK(r.report.coverage[1].failed);
  CHECK(r.report.coverage[0].rows == 1);
}

TEST_CASE("rejected values that are never filled end as rejected") {
  Schema schema;
  schema.fields = {field("Vote Count", ValueKind::kNumber)};
  Harness h(json::array({identify_reply("c1", {{{"name", "Antonin Scalia"}, {"quote", "Antonin Scalia"}}}),
                         fill_reply("Antonin Scalia", "c1", {{{"field", "Vote Count"}, {"value", "six"}, {"quotes", {"6 to 3"}}}}),
                         followup_reply("Vote Count", nullptr, nullptr)}));
  std::size_t rejected_events = 0;
  const auto r = extract_table(std::vector<Document>{kScalia}, kJudge, schema, {}, h.ctx,
                               [&](std::string_view k, const json&) { rejected_events += k == "cell_rejected"; });
  const CellValue& cell = r.table.rows[0].cells.at("Vote Count");
  CHECK(cell.status == CellStatus::kRejected);
  REQUIRE(cell.note.has_value());
  CHECK(cell.note->find("rejected") == 0);
  CHECK(rejected_events == 1);
}

TEST_CASE("follow-up budget") {
  Schema schema;
  schema.fields = {field("Court"), field("Law Clerk")};
  json t = json::array({identify_reply("c1", {{{"name", "Antonin Scalia"}, {"quote", "Antonin Scalia"}}}),
                        fill_reply("Antonin Scalia", "c1", json::array()), followup_reply("Court", nullptr, nullptr),
                        followup_reply("Law Clerk", nullptr, nullptr)});
  for (std::size_t budget : {0u, 1u, 3u}) {
    Harness h(t);
    ExtractionConfig cfg;
    cfg.max_followups_per_field = budget;
    const auto r = extract_table(std::vector<Document>{kScalia}, kJudge, schema, cfg, h.ctx);
    CHECK(r.report.llm_calls == 2 + 2 * budget);
    CHECK(h.provider->requests_served() == 2 + 2 * budget);
  }
}

TEST_CASE("parallel extraction gives the same table") {
  Harness serial(panel_transcript("Obama; Clinton"));
  ExtractionConfig one;
  one.max_parallel_docs = 1;
  const auto a = extract_table(panel_docs(), kJudge, panel_schema(), one, serial.ctx);
  for (int i = 0; i < 5; ++i) {
    Harness parallel(panel_transcript("Obama; Clinton"));
    ExtractionConfig four;
    four.max_parallel_docs = 4;
    const auto b = extract_table(panel_docs(), kJudge, panel_schema(), four, parallel.ctx);
    CHECK(b.table == a.table);
  }
}
