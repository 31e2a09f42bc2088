#include "qdex/extraction/values.h"

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "qdex/core/errors.h"
#include "qdex/core/text.h"

namespace qdex::extraction {
namespace {

using nlohmann::json;

bool absent_marker(const std::string& s) {
  static const std::set<std::string> kMarkers = {
      "",           "n/a",           "na",         "not stated", "not mentioned", "not specified",
      "not given",  "not available", "not found",  "unknown",    "none stated",   "not applicable",
      "not reported", "null",        "none given", "unstated"};
  std::string n = normalize(s);
  while (!n.empty() && (n.back() == '.' || n.back() == '-')) n.pop_back();
  return kMarkers.count(n) > 0;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::optional<int> to_int(std::string_view s) {
  if (s.empty() || s.size() > 4) return std::nullopt;
  int v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

bool leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

int days_in(int y, int m) {
  static constexpr std::array<int, 12> kDays = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  return m == 2 && leap(y) ? 29 : kDays[static_cast<std::size_t>(m - 1)];
}

std::optional<std::string> iso(int y, std::optional<int> m, std::optional<int> d) {
  if (y < 1 || y > 9999) return std::nullopt;
  char buf[32];
  if (!m) {
    std::snprintf(buf, sizeof buf, "%04d", y);
    return buf;
  }
  if (*m < 1 || *m > 12) return std::nullopt;
  if (!d) {
    std::snprintf(buf, sizeof buf, "%04d-%02d", y, *m);
    return buf;
  }
  if (*d < 1 || *d > days_in(y, *m)) return std::nullopt;
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", y, *m, *d);
  return buf;
}

std::optional<int> month_number(std::string_view word) {
  static const std::array<std::string_view, 12> kNames = {"january", "february", "march",     "april",
                                                          "may",     "june",     "july",      "august",
                                                          "september", "october", "november", "december"};
  if (word == "sept") return 9;
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (word == kNames[i] || (word.size() == 3 && kNames[i].substr(0, 3) == word)) return static_cast<int>(i) + 1;
  }
  return std::nullopt;
}

std::optional<int> day_number(std::string_view word) {
  for (std::string_view suffix : {"st", "nd", "rd", "th"}) {
    if (word.size() > suffix.size() && word.substr(word.size() - suffix.size()) == suffix) {
      word.remove_suffix(suffix.size());
      break;
    }
  }
  if (word.size() > 2) return std::nullopt;
  return to_int(word);
}

std::vector<std::string_view> split(std::string_view s, std::string_view seps) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const std::size_t j = s.find_first_of(seps, i);
    const std::size_t end = j == std::string_view::npos ? s.size() : j;
    if (end > i) out.push_back(s.substr(i, end - i));
    if (j == std::string_view::npos) break;
    i = j + 1;
  }
  return out;
}

std::optional<std::string> numeric_date(std::string_view s) {
  for (char sep : {'-', '/', '.'}) {
    if (s.find(sep) == std::string_view::npos) continue;
    const auto parts = split(s, std::string_view(&sep, 1));
    if (parts.size() < 2 || parts.size() > 3) return std::nullopt;
    std::vector<int> n;
    for (auto p : parts) {
      const auto v = to_int(p);
      if (!v) return std::nullopt;
      n.push_back(*v);
    }
    if (parts[0].size() == 4) {  // year first
      return parts.size() == 2 ? iso(n[0], n[1], std::nullopt) : iso(n[0], n[1], n[2]);
    }
    if (parts.size() == 3 && parts[2].size() == 4) {
      const int a = n[0], b = n[1], y = n[2];
      if (a == b || (a > 12 && b <= 12)) return iso(y, b, a);
      if (b > 12 && a <= 12) return iso(y, a, b);
      return std::nullopt;  // 03/04/2015: month or day first?
    }
    if (parts.size() == 2 && parts[1].size() == 4) return iso(n[1], n[0], std::nullopt);
    return std::nullopt;
  }
  if (s.size() == 4) {
    if (const auto y = to_int(s)) return iso(*y, std::nullopt, std::nullopt);
  }
  return std::nullopt;
}

std::optional<std::string> worded_date(const std::string& lowered) {
  const auto words = split(lowered, " ,.");
  if (words.size() < 2 || words.size() > 3) return std::nullopt;
  const auto year = words.back().size() == 4 ? to_int(words.back()) : std::nullopt;
  if (!year) return std::nullopt;
  if (words.size() == 2) {
    if (const auto m = month_number(words[0])) return iso(*year, m, std::nullopt);
    return std::nullopt;
  }
  if (const auto m = month_number(words[0])) {
    if (const auto d = day_number(words[1])) return iso(*year, m, d);
  }
  if (const auto m = month_number(words[1])) {
    if (const auto d = day_number(words[0])) return iso(*year, m, d);
  }
  return std::nullopt;
}

std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

ParsedValue ok(Value v, std::string note = {}) { return {ParseOutcome::kOk, std::move(v), std::move(note)}; }
ParsedValue invalid(std::string why) { return {ParseOutcome::kInvalid, std::string(), std::move(why)}; }
ParsedValue absent() { return {ParseOutcome::kAbsent, std::string(), {}}; }

}  // namespace

std::optional<std::string> normalize_date(const std::string& text) {
  const std::string_view t = trim(text);
  if (t.empty()) return std::nullopt;
  if (auto d = numeric_date(t)) return d;
  return worded_date(normalize(t));
}

ParsedValue parse_value(const json& raw, const SchemaField& field) {
  if (raw.is_null()) return absent();
  if (raw.is_string() && absent_marker(raw.get<std::string>())) return absent();

  switch (field.value_kind) {
    case ValueKind::kNumber: {
      if (raw.is_number()) {
        const double v = raw.get<double>();
        if (!std::isfinite(v)) return invalid("number is not finite");
        return ok(v);
      }
      if (raw.is_string()) {
        if (const auto v = parse_number(raw.get<std::string>())) return ok(*v);
      }
      return invalid("not a number: " + raw.dump());
    }
    case ValueKind::kDate: {
      std::string text;
      if (raw.is_string()) {
        text = std::string(trim(raw.get<std::string>()));
      } else if (raw.is_number_integer()) {
        text = std::to_string(raw.get<std::int64_t>());
      } else {
        return invalid("not a date: " + raw.dump());
      }
      if (auto d = normalize_date(text)) return ok(*d);
      return ok(text, "date kept as text: not an unambiguous calendar date");
    }
    case ValueKind::kEnum: {
      if (!raw.is_string() || !field.allowed_values) return invalid("not one of the allowed values: " + raw.dump());
      std::string key;
      try {
        key = normalize_name(raw.get<std::string>());
      } catch (const Error&) {
        return invalid("not one of the allowed values: " + raw.dump());
      }
      for (const std::string& allowed : *field.allowed_values) {
        try {
          if (normalize_name(allowed) == key) return ok(allowed);
        } catch (const Error&) {
        }
      }
      return invalid("not one of the allowed values: " + raw.dump());
    }
    case ValueKind::kListOfText: {
      std::vector<std::string> items;
      if (raw.is_string()) {
        items.push_back(std::string(trim(raw.get<std::string>())));
      } else if (raw.is_array()) {
        for (const json& item : raw) {
          if (!item.is_string()) return invalid("list items must be strings: " + raw.dump());
          const std::string_view t = trim(item.get<std::string>());
          if (!t.empty()) items.emplace_back(t);
        }
      } else {
        return invalid("not a list of text: " + raw.dump());
      }
      if (items.empty()) return absent();
      return ok(std::move(items));
    }
    case ValueKind::kText: {
      if (raw.is_string()) return ok(std::string(trim(raw.get<std::string>())));
      if (raw.is_number() || raw.is_boolean()) return ok(raw.dump());
      return invalid("not text: " + raw.dump());
    }
  }
  return invalid("unknown value kind");
}

std::string comparison_key(const Value& value) { return normalize(value_to_string(value)); }

}  // namespace qdex::extraction
