#pragma once

// nlohmann::json bindings for the domain types. Object keys come out sorted
// (nlohmann::json is map-backed) and absent optionals are omitted, so
// dump_canonical() output is stable across runs.

#include <string>

#include <nlohmann/json.hpp>

#include "qdex/core/model.h"

namespace qdex {

using nlohmann::json;

void to_json(json& j, const Document& v);
void from_json(const json& j, Document& v);
void to_json(json& j, const ResearchQuery& v);
void from_json(const json& j, ResearchQuery& v);
void to_json(json& j, const ExampleInstance& v);
void from_json(const json& j, ExampleInstance& v);
void to_json(json& j, const ObservationUnitSpec& v);
void from_json(const json& j, ObservationUnitSpec& v);
void to_json(json& j, const SchemaField& v);
void from_json(const json& j, SchemaField& v);
void to_json(json& j, const Schema& v);
void from_json(const json& j, Schema& v);
void to_json(json& j, const Evidence& v);
void from_json(const json& j, Evidence& v);
void to_json(json& j, const Candidate& v);
void from_json(const json& j, Candidate& v);
void to_json(json& j, const CellValue& v);
void from_json(const json& j, CellValue& v);
void to_json(json& j, const InstanceRecord& v);
void from_json(const json& j, InstanceRecord& v);
void to_json(json& j, const Row& v);
void from_json(const json& j, Row& v);
void to_json(json& j, const Table& v);
void from_json(const json& j, Table& v);
void to_json(json& j, const EditEvent& v);
void from_json(const json& j, EditEvent& v);
void to_json(json& j, const ParkedEdit& v);
void from_json(const json& j, ParkedEdit& v);

json value_to_json(const Value& v);
Value value_from_json(const json& j);

// Two-space indented, sorted keys, trailing newline.
std::string dump_canonical(const json& j);

}  // namespace qdex
