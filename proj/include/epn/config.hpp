// Copyright 2026 The EPN Authors
// SPDX-License-Identifier: Apache-2.0

// Plain-text `key = value` configuration shared by the config structs and the CLI.

#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace epn {

using KeyValues = std::map<std::string, std::string>;

// Parses `key = value` lines; blank lines and `#` comments are ignored.
KeyValues read_key_values(const std::filesystem::path& path);
KeyValues parse_key_values(const std::string& text, const std::string& origin = "<text>");
void write_key_values(const KeyValues& kv, const std::filesystem::path& path);
// Parses a single `key=value` override.
std::pair<std::string, std::string> parse_override(const std::string& arg);

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

using KeySet = std::vector<ConfigKey>;

// Applies kv to the bound keys. Unknown keys and unparsable values throw
// ConfigError; the unknown-key message lists every valid key.
void apply_key_values(const KeySet& keys, const KeyValues& kv);
KeyValues collect_key_values(const KeySet& keys);
// Splits kv into entries owned by `keys` and the rest.
KeyValues take_keys(const KeySet& keys, KeyValues& kv);

ConfigKey int_key(const std::string& name, int& target, const std::string& help);
ConfigKey int64_key(const std::string& name, long long& target, const std::string& help);
ConfigKey u64_key(const std::string& name, unsigned long long& target, const std::string& help);
ConfigKey double_key(const std::string& name, double& target, const std::string& help);
ConfigKey bool_key(const std::string& name, bool& target, const std::string& help);
ConfigKey string_key(const std::string& name, std::string& target, const std::string& help);
ConfigKey int_list_key(const std::string& name, std::vector<int>& target, const std::string& help);
ConfigKey int_pair_key(const std::string& name, std::pair<int, int>& target,
                       const std::string& help);
ConfigKey double_pair_key(const std::string& name, std::pair<double, double>& target,
                          const std::string& help);

// Shortest decimal that round-trips to the same double.
std::string format_double(double v);

}  // namespace epn
