#include "axialvig/model.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

namespace axialvig::model {

void ModelConfig::validate() const {
  if (name.empty()) throw ConfigError("config: name must not be empty");
  if (classes < 1) throw ConfigError("config: classes must be >= 1");
  if (resolution < 32 || resolution % 32 != 0)
    throw ConfigError("config: resolution must be a positive multiple of 32, got " +
                      std::to_string(resolution));
  for (int i = 0; i < 4; ++i) {
    const StageConfig& s = stages[static_cast<std::size_t>(i)];
    const std::string at = "stage" + std::to_string(i + 1);
    if (s.channels < 1)
      throw ConfigError("config: " + at + ".channels must be >= 1");
    if (s.channels % 2 != 0)
      throw ConfigError("config: " + at + ".channels must be even");
    if (s.mbconv_repeats < 1)
      throw ConfigError("config: " + at + ".mbconv_repeats must be >= 1");
    if (s.dagc_repeats < 1)
      throw ConfigError("config: " + at + ".dagc_repeats must be >= 1");
    if (s.k < 1) throw ConfigError("config: " + at + ".k must be >= 1");
    if (i > 0 && s.channels <= stages[static_cast<std::size_t>(i - 1)].channels)
      throw ConfigError("config: stage channels must be strictly increasing");
  }
}

namespace {

ModelConfig make_config(std::string name, std::array<Index, 4> channels,
                        std::array<int, 4> mbconv, std::array<int, 4> dagc,
                        std::array<int, 4> k, Index classes, Index resolution) {
  ModelConfig c;
  c.name = std::move(name);
  for (std::size_t i = 0; i < 4; ++i)
    c.stages[i] = StageConfig{channels[i], mbconv[i], dagc[i], k[i]};
  c.classes = classes;
  c.resolution = resolution;
  c.validate();
  return c;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char ch) { return std::tolower(ch); });
  return s;
}

}  // namespace

ModelConfig predefined(const std::string& name) {
  const std::string id = lower(name);
  if (id == "s" || id == "greedyvig-s")
    return make_config("greedyvig-s", {48, 96, 192, 384}, {2, 2, 6, 2},
                       {2, 2, 2, 2}, {8, 4, 2, 1}, 1000, 224);
  if (id == "m" || id == "greedyvig-m")
    return make_config("greedyvig-m", {56, 112, 224, 448}, {3, 3, 9, 3},
                       {3, 3, 3, 3}, {8, 4, 2, 1}, 1000, 224);
  if (id == "b" || id == "greedyvig-b")
    return make_config("greedyvig-b", {64, 128, 256, 512}, {4, 4, 12, 3},
                       {4, 4, 4, 3}, {8, 4, 2, 1}, 1000, 224);
  if (id == "toy")
    return make_config("toy", {8, 16, 32, 64}, {1, 1, 1, 1}, {1, 1, 1, 1},
                       {2, 2, 1, 1}, 10, 32);
  throw ConfigError("predefined: unknown model '" + name +
                    "' (expected S, M, B, or toy)");
}

std::string format_config(const ModelConfig& config) {
  std::ostringstream os;
  os << "name = " << config.name << "\n";
  os << "classes = " << config.classes << "\n";
  os << "resolution = " << config.resolution << "\n";
  for (int i = 0; i < 4; ++i) {
    const StageConfig& s = config.stages[static_cast<std::size_t>(i)];
    const std::string p = "stage" + std::to_string(i + 1) + ".";
    os << p << "channels = " << s.channels << "\n";
    os << p << "mbconv_repeats = " << s.mbconv_repeats << "\n";
    os << p << "dagc_repeats = " << s.dagc_repeats << "\n";
    os << p << "k = " << s.k << "\n";
  }
  return os.str();
}

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

Index parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return static_cast<Index>(v);
  } catch (const std::exception&) {
    throw ConfigError("config: value for '" + key + "' is not an integer: '" +
                      value + "'");
  }
}

}  // namespace

ModelConfig parse_config(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(line_no) +
                        " is not 'key = value': '" + stripped + "'");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("config: line " + std::to_string(line_no) +
                        " has an empty key or value");
    if (!kv.emplace(key, value).second)
      throw ConfigError("config: duplicate key '" + key + "'");
  }

  auto take = [&](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end())
      throw ConfigError("config: missing key '" + key + "'");
    std::string v = it->second;
    kv.erase(it);
    return v;
  };

  ModelConfig c;
  c.name = take("name");
  c.classes = parse_int("classes", take("classes"));
  c.resolution = parse_int("resolution", take("resolution"));
  for (int i = 0; i < 4; ++i) {
    const std::string p = "stage" + std::to_string(i + 1) + ".";
    StageConfig& s = c.stages[static_cast<std::size_t>(i)];
    s.channels = parse_int(p + "channels", take(p + "channels"));
    s.mbconv_repeats =
        static_cast<int>(parse_int(p + "mbconv_repeats", take(p + "mbconv_repeats")));
    s.dagc_repeats =
        static_cast<int>(parse_int(p + "dagc_repeats", take(p + "dagc_repeats")));
    s.k = static_cast<int>(parse_int(p + "k", take(p + "k")));
  }
  if (!kv.empty())
    throw ConfigError("config: unknown key '" + kv.begin()->first + "'");
  c.validate();
  return c;
}

ModelConfig parse_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("config: cannot open " + path);
  return parse_config(is);
}

}  // namespace axialvig::model
