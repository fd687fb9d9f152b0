#include "alphamine/run_config.h"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace alphamine {

namespace {

bool ParseInt(const std::string& s, std::int64_t& out) {
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size() && !s.empty();
}

bool ParseReal(const std::string& s, double& out) {
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size() && !s.empty();
}

bool ParseBool(const std::string& s, bool& out) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") {
    out = true;
    return true;
  }
  if (s == "false" || s == "0" || s == "no" || s == "off") {
    out = false;
    return true;
  }
  return false;
}

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

const std::vector<ConfigKey>& ConfigSchema() {
  using T = ConfigType;
  static const std::vector<ConfigKey> kSchema = {
      {"seed", T::kInt, "7", "global random seed"},
      {"threads", T::kInt, "1", "worker threads for candidate evaluation"},
      {"out", T::kText, "runs", "root directory for run outputs"},
      {"name", T::kText, "", "run directory name (default: derived, never reused)"},
      // data
      {"data", T::kText, "", "CSV panel path"},
      {"synth", T::kBool, "false", "use the synthetic market instead of --data"},
      {"signal", T::kText, "Delta(close, 10d)", "planted formula of the synthetic market"},
      {"assets", T::kInt, "50", "synthetic asset count"},
      {"days", T::kInt, "750", "synthetic day count"},
      {"signal_strength", T::kReal, "0.9", "synthetic target loading on the signal"},
      {"horizon", T::kInt, "5", "forward-return horizon in days"},
      {"asset_vol", T::kReal, "0.02", "synthetic idiosyncratic daily volatility"},
      {"market_vol", T::kReal, "0.01", "synthetic market daily volatility"},
      {"train_frac", T::kReal, "0.6", "fraction of days for training"},
      {"valid_frac", T::kReal, "0.2", "fraction of days for validation"},
      {"lookback", T::kInt, "50", "warm-up days kept before each split"},
      {"output", T::kText, "", "synth: CSV file to write"},
      // trainer
      {"steps", T::kInt, "20000", "trainer steps"},
      {"batch", T::kInt, "16", "sampled rollouts per step"},
      {"lr", T::kReal, "0.001", "policy learning rate"},
      {"optimizer", T::kText, "adam", "adam or sgd"},
      {"reward_floor", T::kReal, "-1", "reward of unevaluable programs"},
      {"baseline", T::kBool, "true", "subtract the greedy-rollout reward"},
      {"max_len", T::kInt, "20", "token budget including BEG and SEP"},
      {"pool_capacity", T::kInt, "10", "maximum pool size"},
      {"embed", T::kInt, "32", "token embedding width"},
      {"hidden", T::kInt, "64", "recurrent state width"},
      {"eval_every", T::kInt, "100", "validation cadence in steps (0: off)"},
      {"checkpoint_every", T::kInt, "1000", "checkpoint cadence in steps (0: final only)"},
      {"patience", T::kInt, "0", "early-stop patience in steps (0: off)"},
      {"cache_entries", T::kInt, "256", "cached evaluated factors"},
      {"subtree_entries", T::kInt, "512", "cached intermediate operator results"},
      // weight fitting
      {"fit_lr", T::kReal, "0.005", "pool weight gradient-descent step"},
      {"fit_iters", T::kInt, "1000", "pool weight iterations"},
      {"fit_tol", T::kReal, "1e-8", "pool weight gradient tolerance"},
      // shaping
      {"lambda", T::kReal, "0.02", "IR penalty"},
      {"alpha", T::kReal, "90000", "steps before the IR threshold rises"},
      {"eta", T::kReal, "2.65e-6", "IR threshold slope per step"},
      {"delta", T::kReal, "0.3", "IR threshold cap"},
      // backtest / eval
      {"pool", T::kText, "", "pool file (weight<TAB>formula lines)"},
      {"split", T::kText, "test", "train, valid, test or all"},
      {"k", T::kInt, "50", "assets held"},
      {"cost_bps", T::kReal, "0", "cost per unit turnover, basis points"},
      {"two_way", T::kBool, "false", "report two-way turnover"},
      // verify
      {"r1", T::kReal, "1", "reward of the better arm"},
      {"r2", T::kReal, "0.6", "reward of the worse arm"},
      {"p", T::kText, "", "comma-separated pi(a1) grid (default 0.05..0.95)"},
      {"samples", T::kInt, "1000000", "Monte-Carlo samples per grid point"},
      {"report", T::kText, "", "verify: CSV report path"},
  };
  return kSchema;
}

RunConfig::RunConfig() {
  for (const auto& k : ConfigSchema()) values_[k.name] = k.default_value;
}

const ConfigKey& RunConfig::Lookup(const std::string& key) const {
  const auto& schema = ConfigSchema();
  const auto it = std::find_if(schema.begin(), schema.end(),
                               [&](const ConfigKey& k) { return k.name == key; });
  if (it == schema.end()) throw ConfigError("unknown setting '" + key + "'");
  return *it;
}

bool RunConfig::Has(const std::string& key) const { return values_.count(key) > 0; }

void RunConfig::Set(const std::string& key, const std::string& raw) {
  const ConfigKey& k = Lookup(key);
  const std::string value = Trim(raw);
  std::int64_t i;
  double d;
  bool b;
  switch (k.type) {
    case ConfigType::kInt:
      if (!ParseInt(value, i)) throw ConfigError("setting '" + key + "' needs an integer, got '" + value + "'");
      break;
    case ConfigType::kReal:
      if (!ParseReal(value, d)) throw ConfigError("setting '" + key + "' needs a number, got '" + value + "'");
      break;
    case ConfigType::kBool:
      if (!ParseBool(value, b)) throw ConfigError("setting '" + key + "' needs true/false, got '" + value + "'");
      break;
    case ConfigType::kText:
      if (value.find('\n') != std::string::npos) throw ConfigError("setting '" + key + "' spans lines");
      break;
  }
  values_[key] = value;
}

std::string RunConfig::Text(const std::string& key) const {
  Lookup(key);
  return values_.at(key);
}

std::int64_t RunConfig::Int(const std::string& key) const {
  if (Lookup(key).type != ConfigType::kInt) throw ConfigError("setting '" + key + "' is not an integer");
  std::int64_t v = 0;
  ParseInt(values_.at(key), v);
  return v;
}

double RunConfig::Real(const std::string& key) const {
  const ConfigType t = Lookup(key).type;
  if (t == ConfigType::kInt) return static_cast<double>(Int(key));
  if (t != ConfigType::kReal) throw ConfigError("setting '" + key + "' is not a number");
  double v = 0;
  ParseReal(values_.at(key), v);
  return v;
}

bool RunConfig::Bool(const std::string& key) const {
  if (Lookup(key).type != ConfigType::kBool) throw ConfigError("setting '" + key + "' is not a flag");
  bool v = false;
  ParseBool(values_.at(key), v);
  return v;
}

void RunConfig::MergeFile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = Trim(line);
    if (line.empty()) continue;
    const auto sep = line.find_first_of(" \t=");
    std::string key = Trim(line.substr(0, sep));
    std::string value = sep == std::string::npos ? "" : Trim(line.substr(sep + 1));
    if (!value.empty() && value.front() == '=') value = Trim(value.substr(1));
    try {
      Set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

void RunConfig::MergeArgs(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a.rfind("--", 0) != 0 || a.size() < 3) throw ConfigError("unexpected argument '" + a + "'");
    std::string key = a.substr(2);
    std::string value;
    const auto eq = key.find('=');
    if (eq != std::string::npos) {
      value = key.substr(eq + 1);
      key.resize(eq);
    } else {
      const bool flag = Lookup(key).type == ConfigType::kBool;
      const bool next_is_value = i + 1 < args.size() && args[i + 1].rfind("--", 0) != 0;
      bool parsed = false;
      if (flag && (!next_is_value || !ParseBool(args[i + 1], parsed))) {
        value = "true";
      } else if (next_is_value) {
        value = args[++i];
      } else {
        throw ConfigError("setting '" + key + "' needs a value");
      }
    }
    Set(key, value);
  }
}

std::string RunConfig::Serialize() const {
  std::string out;
  for (const auto& k : ConfigSchema()) {
    out += k.name;
    out += ' ';
    out += values_.at(k.name);
    out += '\n';
  }
  return out;
}

void RunConfig::Save(const std::filesystem::path& path) const {
  if (std::filesystem::exists(path)) throw ConfigError("refusing to overwrite " + path.string());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << Serialize();
}

}  // namespace alphamine
