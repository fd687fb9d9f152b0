#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace alphamine {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ConfigType { kInt, kReal, kBool, kText };

struct ConfigKey {
  std::string name;
  ConfigType type;
  std::string default_value;
  std::string help;
};

// Every recognized setting with its default, in file order.
const std::vector<ConfigKey>& ConfigSchema();

// Flat key-value settings. Values are validated against the schema type on
// every Set; unknown keys throw ConfigError naming the key.
class RunConfig {
 public:
  RunConfig();  // all defaults

  void Set(const std::string& key, const std::string& value);
  bool Has(const std::string& key) const;

  std::string Text(const std::string& key) const;
  std::int64_t Int(const std::string& key) const;
  double Real(const std::string& key) const;
  bool Bool(const std::string& key) const;

  // "key value" lines (a bare key sets the empty value); "#" starts a
  // comment; blank lines are ignored.
  void MergeFile(const std::filesystem::path& path);
  // --key value pairs; a bool key may appear without a value.
  void MergeArgs(const std::vector<std::string>& args);

  std::string Serialize() const;
  // Refuses to overwrite.
  void Save(const std::filesystem::path& path) const;

 private:
  const ConfigKey& Lookup(const std::string& key) const;
  std::map<std::string, std::string> values_;
};

}  // namespace alphamine
