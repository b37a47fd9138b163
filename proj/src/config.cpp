// Copyright 2026 The EPN Authors
// SPDX-License-Identifier: Apache-2.0

#include "epn/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "epn/errors.hpp"

namespace epn {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

template <typename N>
N parse_number(const std::string& key, const std::string& text) {
  N value{};
  const std::string t = trim(text);
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
  }
  return value;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

KeyValues parse_key_values(const std::string& text, const std::string& origin) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str(), path.string());
}

void write_key_values(const KeyValues& kv, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  for (const auto& [k, v] : kv) out << k << " = " << v << "\n";
  if (!out) throw IoError(path.string(), "write failed");
}

std::pair<std::string, std::string> parse_override(const std::string& arg) {
  const auto eq = arg.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + arg + "' is not of the form key=value");
  }
  return {trim(arg.substr(0, eq)), trim(arg.substr(eq + 1))};
}

void apply_key_values(const KeySet& keys, const KeyValues& kv) {
  for (const auto& [name, value] : kv) {
    const auto it = std::find_if(keys.begin(), keys.end(),
                                 [&](const ConfigKey& k) { return k.name == name; });
    if (it == keys.end()) {
      std::string valid;
      for (const auto& k : keys) valid += (valid.empty() ? "" : ", ") + k.name;
      throw ConfigError("unknown config key '" + name + "'; valid keys: " + valid);
    }
    it->set(value);
  }
}

KeyValues collect_key_values(const KeySet& keys) {
  KeyValues kv;
  for (const auto& k : keys) kv[k.name] = k.get();
  return kv;
}

KeyValues take_keys(const KeySet& keys, KeyValues& kv) {
  KeyValues taken;
  for (const auto& k : keys) {
    const auto it = kv.find(k.name);
    if (it != kv.end()) {
      taken.insert(*it);
      kv.erase(it);
    }
  }
  return taken;
}

ConfigKey int_key(const std::string& name, int& target, const std::string& help) {
  return {name, help, [&target] { return std::to_string(target); },
          [&target, name](const std::string& v) { target = parse_number<int>(name, v); }};
}

ConfigKey int64_key(const std::string& name, long long& target, const std::string& help) {
  return {name, help, [&target] { return std::to_string(target); },
          [&target, name](const std::string& v) { target = parse_number<long long>(name, v); }};
}

ConfigKey u64_key(const std::string& name, unsigned long long& target, const std::string& help) {
  return {name, help, [&target] { return std::to_string(target); },
          [&target, name](const std::string& v) {
            target = parse_number<unsigned long long>(name, v);
          }};
}

ConfigKey double_key(const std::string& name, double& target, const std::string& help) {
  return {name, help, [&target] { return format_double(target); },
          [&target, name](const std::string& v) { target = parse_number<double>(name, v); }};
}

ConfigKey bool_key(const std::string& name, bool& target, const std::string& help) {
  return {name, help, [&target] { return std::string(target ? "true" : "false"); },
          [&target, name](const std::string& v) {
            const std::string t = trim(v);
            if (t == "true" || t == "1" || t == "yes") {
              target = true;
            } else if (t == "false" || t == "0" || t == "no") {
              target = false;
            } else {
              throw ConfigError("config key '" + name + "': expected true/false, got '" + v + "'");
            }
          }};
}

ConfigKey string_key(const std::string& name, std::string& target, const std::string& help) {
  return {name, help, [&target] { return target; },
          [&target](const std::string& v) { target = trim(v); }};
}

ConfigKey int_list_key(const std::string& name, std::vector<int>& target, const std::string& help) {
  return {name, help,
          [&target] {
            std::string s;
            for (std::size_t i = 0; i < target.size(); ++i) {
              s += (i ? "," : "") + std::to_string(target[i]);
            }
            return s;
          },
          [&target, name](const std::string& v) {
            std::vector<int> out;
            for (const auto& item : split(v, ',')) out.push_back(parse_number<int>(name, item));
            target = std::move(out);
          }};
}

ConfigKey int_pair_key(const std::string& name, std::pair<int, int>& target,
                       const std::string& help) {
  return {name, help,
          [&target] { return std::to_string(target.first) + "," + std::to_string(target.second); },
          [&target, name](const std::string& v) {
            const auto items = split(v, ',');
            if (items.size() != 2) throw ConfigError("config key '" + name + "': expected a,b");
            target = {parse_number<int>(name, items[0]), parse_number<int>(name, items[1])};
          }};
}

ConfigKey double_pair_key(const std::string& name, std::pair<double, double>& target,
                          const std::string& help) {
  return {name, help,
          [&target] { return format_double(target.first) + "," + format_double(target.second); },
          [&target, name](const std::string& v) {
            const auto items = split(v, ',');
            if (items.size() != 2) throw ConfigError("config key '" + name + "': expected a,b");
            target = {parse_number<double>(name, items[0]), parse_number<double>(name, items[1])};
          }};
}

}  // namespace epn
