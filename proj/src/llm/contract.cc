#include "qdex/llm/contract.h"

#include <algorithm>
#include <cctype>

namespace qdex::llm {
namespace {

using nlohmann::json;

std::string kind_name(Shape::Kind kind) {
  switch (kind) {
    case Shape::Kind::kString: return "string";
    case Shape::Kind::kNumber: return "number";
    case Shape::Kind::kBoolean: return "boolean";
    case Shape::Kind::kArray: return "array";
    case Shape::Kind::kObject: return "object";
    case Shape::Kind::kAny: return "any";
  }
  return "?";
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    out += '"' + items[i] + '"';
  }
  return out;
}

std::optional<std::string> check_at(const json& value, const Shape& shape, const std::string& path) {
  if (value.is_null()) {
    if (shape.nullable || shape.kind == Shape::Kind::kAny) return std::nullopt;
    return path + ": must not be null";
  }
  switch (shape.kind) {
    case Shape::Kind::kAny:
      return std::nullopt;
    case Shape::Kind::kString: {
      if (!value.is_string()) return path + ": expected string, got " + value.type_name();
      const auto& s = value.get_ref<const std::string&>();
      if (shape.non_empty &&
          std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); })) {
        return path + ": must be a non-empty string";
      }
      if (!shape.one_of.empty() &&
          std::find(shape.one_of.begin(), shape.one_of.end(), s) == shape.one_of.end()) {
        return path + ": expected one of [" + join(shape.one_of) + "], got \"" + s + "\"";
      }
      return std::nullopt;
    }
    case Shape::Kind::kNumber:
      if (!value.is_number()) return path + ": expected number, got " + value.type_name();
      return std::nullopt;
    case Shape::Kind::kBoolean:
      if (!value.is_boolean()) return path + ": expected boolean, got " + value.type_name();
      return std::nullopt;
    case Shape::Kind::kArray: {
      if (!value.is_array()) return path + ": expected array, got " + value.type_name();
      if (!shape.element) return std::nullopt;
      for (std::size_t i = 0; i < value.size(); ++i) {
        if (auto err = check_at(value[i], *shape.element, path + "[" + std::to_string(i) + "]")) return err;
      }
      return std::nullopt;
    }
    case Shape::Kind::kObject: {
      if (!value.is_object()) return path + ": expected object, got " + value.type_name();
      for (const Member& m : shape.members) {
        const auto it = value.find(m.name);
        if (it == value.end()) {
          if (m.required) return path + ": missing required key \"" + m.name + "\"";
          continue;
        }
        if (auto err = check_at(*it, m.shape, path + "." + m.name)) return err;
      }
      return std::nullopt;
    }
  }
  return std::nullopt;
}

void describe_into(const Shape& shape, std::string& out) {
  switch (shape.kind) {
    case Shape::Kind::kObject: {
      out += "{";
      for (std::size_t i = 0; i < shape.members.size(); ++i) {
        const Member& m = shape.members[i];
        if (i) out += ", ";
        out += '"' + m.name + '"' + (m.required ? "" : "?") + ": ";
        describe_into(m.shape, out);
      }
      out += "}";
      break;
    }
    case Shape::Kind::kArray:
      out += "[";
      if (shape.element) describe_into(*shape.element, out);
      out += ", ...]";
      break;
    case Shape::Kind::kString:
      out += shape.one_of.empty() ? "string" : "one of " + join(shape.one_of);
      break;
    default:
      out += kind_name(shape.kind);
      break;
  }
  if (shape.nullable) out += " | null";
}

}  // namespace

Shape Shape::string(bool non_empty) {
  Shape s;
  s.kind = Kind::kString;
  s.non_empty = non_empty;
  return s;
}

Shape Shape::enumeration(std::vector<std::string> values) {
  Shape s = string(true);
  s.one_of = std::move(values);
  return s;
}

Shape Shape::number() {
  Shape s;
  s.kind = Kind::kNumber;
  return s;
}

Shape Shape::boolean() {
  Shape s;
  s.kind = Kind::kBoolean;
  return s;
}

Shape Shape::any() { return Shape{}; }

Shape Shape::array_of(Shape element) {
  Shape s;
  s.kind = Kind::kArray;
  s.element = std::make_shared<const Shape>(std::move(element));
  return s;
}

Shape Shape::object(std::vector<Member> members) {
  Shape s;
  s.kind = Kind::kObject;
  s.members = std::move(members);
  return s;
}

Member required(std::string name, Shape shape) { return Member{std::move(name), std::move(shape), true}; }
Member optional(std::string name, Shape shape) { return Member{std::move(name), std::move(shape), false}; }

std::optional<std::string> check(const json& value, const Shape& shape) { return check_at(value, shape, "$"); }

std::string describe(const Shape& shape) {
  std::string out;
  describe_into(shape, out);
  return out;
}

}  // namespace qdex::llm
