#pragma once

// Declarative description of the JSON a prompt expects back. Model output is
// checked against it structurally (presence, kinds, enumerations) before any
// domain-level validation happens.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace qdex::llm {

struct Member;

struct Shape {
  enum class Kind { kString, kNumber, kBoolean, kArray, kObject, kAny };

  Kind kind = Kind::kAny;
  bool nullable = false;
  bool non_empty = false;             // strings: must contain non-space text
  std::vector<std::string> one_of;    // strings: closed vocabulary
  std::vector<Member> members;        // objects
  std::shared_ptr<const Shape> element;  // arrays

  static Shape string(bool non_empty = false);
  static Shape enumeration(std::vector<std::string> values);
  static Shape number();
  static Shape boolean();
  static Shape any();
  static Shape array_of(Shape element);
  static Shape object(std::vector<Member> members);

  Shape& or_null() {
    nullable = true;
    return *this;
  }
};

struct Member {
  std::string name;
  Shape shape;
  bool required = true;
};

Member required(std::string name, Shape shape);
Member optional(std::string name, Shape shape);

using ResponseContract = Shape;

// Empty when `value` satisfies `shape`; otherwise a message naming the first
// offending path, e.g. "$.proposals[1].value_kind: expected one of [...]".
std::optional<std::string> check(const nlohmann::json& value, const Shape& shape);

// Short human-readable rendering, used in repair instructions.
std::string describe(const Shape& shape);

}  // namespace qdex::llm
