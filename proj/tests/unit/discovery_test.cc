#include <cmath>
#include <random>

#include "doctest.h"
#include "qdex/discovery/discovery.h"
#include "qdex/llm/scripted_provider.h"

using namespace qdex;
using namespace qdex::discovery;
using namespace qdex::llm;
using nlohmann::json;

namespace {

struct Harness {
  Gateway gateway;
  TemplateRegistry templates;
  std::shared_ptr<ScriptedProvider> provider;
  LlmContext ctx{gateway, templates, scripted_model()};

  explicit Harness(std::vector<ScriptedEntry> entries)
      : provider(std::make_shared<ScriptedProvider>(std::move(entries))) {
    gateway.register_provider(ProviderId::kScripted, provider);
  }

  static ProviderConfig scripted_model() {
    ProviderConfig c;
    c.provider_id = ProviderId::kScripted;
    c.max_retries = 0;
    return c;
  }
};

ScriptedEntry entry(TemplateId id, json response, std::optional<std::string> contains = std::nullopt) {
  ScriptedEntry e;
  e.template_id = id;
  e.response = response.dump();
  e.binding_contains = std::move(contains);
  return e;
}

json add(const std::string& name, const std::string& kind = "text") {
  return {{"action", "add"}, {"name", name}, {"definition", "Def of " + name},
          {"rationale", "Needed"}, {"value_kind", kind}};
}

json proposals(std::vector<json> items) { return {{"proposals", items}}; }

std::vector<Document> corpus(std::size_t n) {
  std::vector<Document> docs;
  for (std::size_t i = 1; i <= n; ++i) {
    docs.push_back({"d" + std::to_string(i), std::nullopt, "Opinion text number " + std::to_string(i) + ".",
                    "d" + std::to_string(i) + ".txt", {}});
  }
  return docs;
}

const ResearchQuery kLegalQuery{"How do judges' backgrounds relate to their decisions?"};
const ObservationUnitSpec kJudge{"Judge", "One row per judge.", {}, UnitOrigin::kDiscovered};

FieldProposal refine(const std::string& name, const std::string& definition) {
  FieldProposal p;
  p.action = ProposalAction::kRefine;
  p.target_name = name;
  p.definition = definition;
  p.rationale = "r";
  return p;
}

FieldProposal add_proposal(const std::string& name) {
  FieldProposal p;
  p.target_name = name;
  p.definition = "d";
  p.rationale = "r";
  return p;
}

}  // namespace

TEST_CASE("observation unit from a legal batch") {
  std::vector<Document> docs = {
      {"c1", std::string("Opinion"), "Justice Ruth Bader Ginsburg delivered the opinion of the Court.", "c1.txt", {}}};
  Harness h({entry(TemplateId::kUnitDiscovery,
                   {{"type_name", "Judge"},
                    {"description", "Each row is one judge who authored or joined an opinion."},
                    {"example_instances",
                     {{{"name", "Ruth Bader Ginsburg"}, {"provenance", "from_documents"}},
                      {{"name", "Antonin Scalia"}, {"provenance", "from_documents"}}}}})});
  const ObservationUnitSpec spec = discover_observation_unit(kLegalQuery, docs, {}, h.ctx);
  CHECK(spec.type_name == "Judge");
  CHECK(spec.origin == UnitOrigin::kDiscovered);
  REQUIRE(spec.example_instances.size() == 2);
  CHECK(spec.example_instances[0].name == "Ruth Bader Ginsburg");
  CHECK(spec.example_instances[0].provenance == Provenance::kFromDocuments);
  // Not in the batch, so the claim cannot stand.
  CHECK(spec.example_instances[1].provenance == Provenance::kModelKnowledge);
}

TEST_CASE("observation unit from a protocol batch") {
  std::vector<Document> docs = {{"p1", std::nullopt, "Proteins were tagged with GFP.", "p1.txt", {}}};
  Harness h({entry(TemplateId::kUnitDiscovery,
                   {{"type_name", "Protein"},
                    {"description", "Each row is a protein studied in a protocol."},
                    {"example_instances", json::array()}})});
  const ResearchQuery q{"Which proteins are exported by non-classical secretion?"};
  CHECK(discover_observation_unit(q, docs, {}, h.ctx).type_name == "Protein");
}

TEST_CASE("empty type name is a contract violation") {
  Harness h({entry(TemplateId::kUnitDiscovery,
                   {{"type_name", ""}, {"description", "x"}, {"example_instances", json::array()}})});
  CHECK_THROWS_AS(discover_observation_unit(kLegalQuery, corpus(1), {}, h.ctx), ContractViolation);
  CHECK_THROWS_AS(discover_observation_unit(kLegalQuery, {}, {}, h.ctx), Error);
  CHECK_THROWS_AS(discover_observation_unit(ResearchQuery{"  "}, corpus(1), {}, h.ctx), Error);
}

TEST_CASE("unit batch selection") {
  const auto docs = corpus(12);
  DiscoveryConfig cfg;
  auto first = unit_discovery_batch(docs, cfg);
  REQUIRE(first.size() == 5);
  CHECK(first.front().doc_id == "d1");
  cfg.unit_batch_index = 2;
  auto third = unit_discovery_batch(docs, cfg);
  REQUIRE(third.size() == 2);
  CHECK(third.front().doc_id == "d11");
  cfg.unit_batch_index = 99;
  CHECK(unit_discovery_batch(docs, cfg) == third);
}

TEST_CASE("propose_schema_updates") {
  const auto docs = corpus(2);
  SUBCASE("first legal batch") {
    Harness h({entry(TemplateId::kSchemaDiscovery,
                     proposals({add("Judge Names"), add("judge decision outcome", "enum")}))});
    // The enum proposal has no vocabulary, so it comes back as text.
    const auto out = propose_schema_updates(kLegalQuery, kJudge, {}, docs, {}, h.ctx);
    REQUIRE(out.size() == 2);
    CHECK(out[0].target_name == "Judge Names");
    CHECK(out[0].action == ProposalAction::kAdd);
    CHECK(out[1].target_name == "Judge Decision Outcome");
    CHECK(out[1].value_kind == ValueKind::kText);
    CHECK(out[1].rationale == "Needed");
  }
  SUBCASE("nothing new") {
    Harness h({entry(TemplateId::kSchemaDiscovery, proposals({}))});
    CHECK(propose_schema_updates(kLegalQuery, kJudge, {}, docs, {}, h.ctx).empty());
  }
  SUBCASE("refine of an unknown field is dropped") {
    json bad = add("Foo Bar");
    bad["action"] = "refine";
    json unusable = add("!!!");
    Harness h({entry(TemplateId::kSchemaDiscovery, proposals({bad, unusable, add("Court")}))});
    const auto out = propose_schema_updates(kLegalQuery, kJudge, {}, docs, {}, h.ctx);
    REQUIRE(out.size() == 1);
    CHECK(out[0].target_name == "Court");
  }
  SUBCASE("enum vocabulary is deduplicated") {
    json e = add("Vote", "enum");
    e["allowed_values"] = {"Majority", "majority ", "Dissent"};
    json t = add("Notes");
    t["allowed_values"] = {"a"};
    Harness h({entry(TemplateId::kSchemaDiscovery, proposals({e, t}))});
    const auto out = propose_schema_updates(kLegalQuery, kJudge, {}, docs, {}, h.ctx);
    REQUIRE(out.size() == 2);
    CHECK(out[0].allowed_values == std::vector<std::string>{"Majority", "Dissent"});
    CHECK_FALSE(out[1].allowed_values.has_value());
  }
}

TEST_CASE("merge_proposals") {
  Schema s;
  s.fields.push_back({"Court", "Which court", "Needed", ValueKind::kText, std::nullopt, FieldOrigin::kModel, false});
  s.version = 4;

  SUBCASE("identity") {
    const MergeResult r = merge_proposals(s, {}, 40);
    CHECK(r.schema == s);
    CHECK(r.accepted_count == 0);
  }
  SUBCASE("colliding adds collapse") {
    const MergeResult r = merge_proposals({}, {add_proposal("Judge Names"), add_proposal("judge names")}, 40);
    REQUIRE(r.schema.fields.size() == 1);
    CHECK(r.schema.fields[0].canonical_name == "Judge Names");
    CHECK(r.accepted_count == 1);
    CHECK(r.schema.version == 1);
  }
  SUBCASE("locked fields ignore refines") {
    s.fields[0].locked = true;
    const MergeResult r = merge_proposals(s, {refine("Court", "changed")}, 40);
    CHECK(r.schema == s);
    CHECK(r.accepted_count == 0);
  }
  SUBCASE("refine of unlocked field") {
    const MergeResult r = merge_proposals(s, {refine("court", "changed")}, 40);
    CHECK(r.schema.fields[0].definition == "changed");
    CHECK(r.schema.fields[0].canonical_name == "Court");
    CHECK(r.accepted_count == 1);
    CHECK(r.schema.version == 5);
  }
  SUBCASE("a refine that changes nothing is not accepted") {
    FieldProposal same = refine("Court", "Which court");
    same.rationale = "Needed";
    const MergeResult r = merge_proposals(s, {same}, 40);
    CHECK(r.accepted_count == 0);
    CHECK(r.schema.version == 4);
  }
  SUBCASE("max_fields and order") {
    const MergeResult r = merge_proposals(s, {add_proposal("Zeta"), add_proposal("Alpha"), add_proposal("Beta")}, 3);
    REQUIRE(r.schema.fields.size() == 3);
    CHECK(r.schema.fields[1].canonical_name == "Zeta");
    CHECK(r.schema.fields[2].canonical_name == "Alpha");
    CHECK(r.accepted_count == 2);
  }
}

TEST_CASE("run_schema_discovery traces") {
  SUBCASE("6 docs, batch 5") {
    Harness h({entry(TemplateId::kSchemaDiscovery, proposals({add("Judge Names"), add("Court"), add("Year")}),
                     "[doc_id: d1]"),
               entry(TemplateId::kSchemaDiscovery, proposals({}), "[doc_id: d6]")});
    const auto r = run_schema_discovery(kLegalQuery, kJudge, corpus(6), {}, h.ctx, std::nullopt);
    CHECK(r.schema.fields.size() == 3);
    CHECK(r.proposal_calls == 2);
    CHECK(h.provider->requests_served() == 2);
    CHECK_FALSE(r.stopped_early);
  }
  SUBCASE("single doc") {
    Harness h({entry(TemplateId::kSchemaDiscovery, proposals({add("Court")}))});
    const auto r = run_schema_discovery(kLegalQuery, kJudge, corpus(1), {}, h.ctx, std::nullopt);
    CHECK(r.proposal_calls == 1);
    CHECK(r.batches_processed == 1);
  }
  SUBCASE("locked seed field survives a refine") {
    Schema seed;
    seed.fields.push_back({"Court", "Which court", "Needed", ValueKind::kText, std::nullopt, FieldOrigin::kHuman, true});
    seed.version = 2;
    json r = add("Court", "number");
    r["action"] = "refine";
    Harness h({entry(TemplateId::kSchemaDiscovery, proposals({r, add("Year")}))});
    const auto out = run_schema_discovery(kLegalQuery, kJudge, corpus(3), {}, h.ctx, seed);
    REQUIRE(out.schema.fields.size() == 2);
    CHECK(out.schema.fields[0] == seed.fields[0]);
  }
  SUBCASE("gateway failure keeps the partial schema") {
    ScriptedEntry boom;
    boom.template_id = TemplateId::kSchemaDiscovery;
    boom.binding_contains = "[doc_id: d2]";
    boom.error = "connection reset";
    Harness h({entry(TemplateId::kSchemaDiscovery, proposals({add("Court")}), "[doc_id: d1]"), boom});
    DiscoveryConfig cfg;
    cfg.batch_size = 1;
    try {
      run_schema_discovery(kLegalQuery, kJudge, corpus(3), cfg, h.ctx, std::nullopt);
      FAIL("expected abort");
    } catch (const DiscoveryAborted& e) {
      CHECK(e.code() == ErrorCode::kTransport);
      REQUIRE(e.partial_schema().fields.size() == 1);
      CHECK(e.partial_schema().fields[0].canonical_name == "Court");
    }
  }
  SUBCASE("progress events") {
    Harness h({entry(TemplateId::kSchemaDiscovery, proposals({add("Court"), add("Year")}))});
    std::vector<std::string> kinds;
    run_schema_discovery(kLegalQuery, kJudge, corpus(2), {}, h.ctx, std::nullopt,
                         [&](std::string_view kind, const json&) { kinds.emplace_back(kind); });
    CHECK(kinds == std::vector<std::string>{"field_proposed", "field_proposed", "batch_processed"});
  }
}

TEST_CASE("quiescence stops after exactly three quiet batches") {
  for (bool early_stop : {true, false}) {
    std::vector<ScriptedEntry> entries = {entry(TemplateId::kSchemaDiscovery, proposals({add("Court")})),
                                          entry(TemplateId::kSchemaDiscovery, proposals({}))};
    Harness h(entries);
    DiscoveryConfig cfg;
    cfg.batch_size = 1;
    cfg.early_stop = early_stop;
    const auto r = run_schema_discovery(kLegalQuery, kJudge, corpus(20), cfg, h.ctx, std::nullopt);
    CHECK(r.proposal_calls == (early_stop ? 4u : 20u));
    CHECK(r.stopped_early == early_stop);
  }
}

// Property: call bound, max_fields, determinism and the fixed point, over
// random per-call transcripts. The oracle replays the stop rule by hand.
TEST_CASE("discovery loop properties") {
  std::mt19937 rng(20261016);
  for (std::size_t n = 1; n <= 20; ++n) {
    for (std::size_t batch = 1; batch <= 5; ++batch) {
      for (int trial = 0; trial < 4; ++trial) {
        const std::size_t batches = (n + batch - 1) / batch;
        std::vector<ScriptedEntry> entries;
        std::vector<bool> adds;
        int next = 0;
        for (std::size_t b = 0; b < batches; ++b) {
          const bool adds_field = rng() % 3 == 0;
          adds.push_back(adds_field);
          entries.push_back(entry(TemplateId::kSchemaDiscovery,
                                  adds_field ? proposals({add("Field " + std::to_string(next++))}) : proposals({})));
        }
        // Sticky last reply must not add fields beyond the planned ones.
        entries.push_back(entry(TemplateId::kSchemaDiscovery, proposals({})));

        DiscoveryConfig cfg;
        cfg.batch_size = batch;
        cfg.max_fields = 3;
        std::size_t expected_calls = 0, quiet = 0, expected_fields = 0;
        for (std::size_t b = 0; b < batches; ++b) {
          ++expected_calls;
          const bool accepted = adds[b] && expected_fields < cfg.max_fields;
          if (accepted) ++expected_fields;
          quiet = accepted ? 0 : quiet + 1;
          if (quiet == 3) break;
        }

        Harness h(entries);
        const auto docs = corpus(n);
        const auto r = run_schema_discovery(kLegalQuery, kJudge, docs, cfg, h.ctx, std::nullopt);
        CAPTURE(n);
        CAPTURE(batch);
        CHECK(r.proposal_calls <= batches);
        CHECK(r.proposal_calls == expected_calls);
        CHECK(r.schema.fields.size() == expected_fields);
        CHECK(r.schema.fields.size() <= cfg.max_fields);

        Harness again(entries);
        CHECK(run_schema_discovery(kLegalQuery, kJudge, docs, cfg, again.ctx, std::nullopt).schema == r.schema);

        Harness quiet_run({entry(TemplateId::kSchemaDiscovery, proposals({}))});
        const auto fixed = run_schema_discovery(kLegalQuery, kJudge, docs, cfg, quiet_run.ctx, r.schema);
        CHECK(fixed.schema == r.schema);
      }
    }
  }
}
