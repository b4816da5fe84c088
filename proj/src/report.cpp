#include "axialvig/report.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "axialvig/common.hpp"

namespace axialvig::report {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::string value_text(const Report::Value& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
  if (const auto* d = std::get_if<double>(&v)) return format_double(*d);
  if (const auto* b = std::get_if<bool>(&v)) return *b ? "true" : "false";
  return std::get<std::string>(v);
}

nlohmann::ordered_json value_json(const Report::Value& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
  if (const auto* d = std::get_if<double>(&v)) return *d;
  if (const auto* b = std::get_if<bool>(&v)) return *b;
  return std::get<std::string>(v);
}

const char* type_tag(const nlohmann::ordered_json& v) {
  if (v.is_boolean()) return "boolean";
  if (v.is_number_integer()) return "integer";
  if (v.is_number()) return "number";
  if (v.is_string()) return "string";
  return "other";
}

}  // namespace

std::string Report::text() const {
  std::ostringstream os;
  os << "schema = " << schema_ << "\n";
  for (const auto& [k, v] : det_) os << k << " = " << value_text(v) << "\n";
  for (const auto& [k, v] : timing_)
    os << "timing." << k << " = " << value_text(v) << "\n";
  return os.str();
}

nlohmann::ordered_json Report::json() const {
  nlohmann::ordered_json j;
  j["schema"] = schema_;
  j["deterministic"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : det_) j["deterministic"][k] = value_json(v);
  j["timing"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : timing_) j["timing"][k] = value_json(v);
  return j;
}

void Report::write_json_file(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw FormatError("report: cannot open " + path + " for writing");
  os << json().dump(2) << "\n";
  if (!os) throw FormatError("report: write failed for " + path);
}

void validate_against_schema(const nlohmann::ordered_json& report_json,
                             const nlohmann::ordered_json& schema_json) {
  if (!report_json.contains("schema") ||
      report_json["schema"] != schema_json.at("schema"))
    throw FormatError("report schema: name mismatch");
  for (const char* section : {"deterministic", "timing"}) {
    if (!report_json.contains(section))
      throw FormatError(std::string("report schema: missing section ") +
                        section);
    const auto& have = report_json[section];
    const auto& want = schema_json.at(section);
    for (auto it = want.begin(); it != want.end(); ++it) {
      // Wildcard-suffix keys ("tensor.*") describe dynamic field families and
      // are matched in the reverse pass below, not required literally.
      if (!it.key().empty() && it.key().back() == '*') continue;
      if (!have.contains(it.key()))
        throw FormatError("report schema: missing field '" + it.key() +
                          "' in " + section);
      const std::string got = type_tag(have[it.key()]);
      const std::string expected = it.value().get<std::string>();
      if (expected != got && !(expected == "number" && got == "integer"))
        throw FormatError("report schema: field '" + it.key() + "' has type " +
                          got + ", schema says " + expected);
    }
    for (auto it = have.begin(); it != have.end(); ++it) {
      if (want.contains(it.key())) continue;
      bool matched = false;
      for (auto ws = want.begin(); ws != want.end(); ++ws) {
        const std::string& pat = ws.key();
        if (pat.size() > 1 && pat.back() == '*' &&
            it.key().rfind(pat.substr(0, pat.size() - 1), 0) == 0) {
          matched = true;
          break;
        }
      }
      if (!matched)
        throw FormatError("report schema: unexpected field '" + it.key() +
                          "' in " + section);
    }
  }
}

}  // namespace axialvig::report
