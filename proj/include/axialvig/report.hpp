#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace axialvig::report {

// Ordered key-value report split into a deterministic section (byte-identical
// across runs with equal flags and seed) and a timing section. Text form is
// line-delimited "key = value"; timing keys carry a "timing." prefix.
class Report {
 public:
  using Value = std::variant<std::int64_t, double, bool, std::string>;

  explicit Report(std::string schema) : schema_(std::move(schema)) {}

  Report& det(const std::string& key, std::int64_t v) { return put(det_, key, v); }
  Report& det(const std::string& key, int v) { return put(det_, key, static_cast<std::int64_t>(v)); }
  Report& det(const std::string& key, double v) { return put(det_, key, v); }
  Report& det(const std::string& key, bool v) { return put(det_, key, v); }
  Report& det(const std::string& key, const std::string& v) { return put(det_, key, v); }
  Report& det(const std::string& key, const char* v) { return put(det_, key, std::string(v)); }

  Report& timing(const std::string& key, double v) { return put(timing_, key, v); }

  const std::string& schema() const { return schema_; }

  std::string text() const;
  nlohmann::ordered_json json() const;
  void write_json_file(const std::string& path) const;

 private:
  using Entries = std::vector<std::pair<std::string, Value>>;
  std::string schema_;
  Entries det_;
  Entries timing_;

  Report& put(Entries& where, const std::string& key, Value v) {
    where.emplace_back(key, std::move(v));
    return *this;
  }
};

// Shortest round-trip decimal formatting; keeps report bytes stable.
std::string format_double(double v);

// Strict structural validation against a committed schema: the field sets of
// both sections must match exactly and every type tag must agree.
// Throws FormatError on any deviation.
void validate_against_schema(const nlohmann::ordered_json& report_json,
                             const nlohmann::ordered_json& schema_json);

}  // namespace axialvig::report
