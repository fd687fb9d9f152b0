#include "alphamine/commands.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "alphamine/alpha_pool.h"
#include "alphamine/backtest.h"
#include "alphamine/bandit_lab.h"
#include "alphamine/formula.h"

namespace alphamine {

namespace {

std::string Fmt(double v) {
  if (IsMissing(v)) return "nan";
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

std::vector<std::string> HeaderFeatures(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> features;
  std::stringstream ss(line);
  std::string field;
  for (int col = 0; std::getline(ss, field, ','); ++col) {
    if (col < 2 || field == "target") continue;
    features.push_back(field);
  }
  return features;  // LoadCsv rejects unknown or misordered names
}

SynthParams SynthFrom(const RunConfig& config) {
  SynthParams p;
  const auto assets = config.Int("assets");
  const auto days = config.Int("days");
  if (assets < 3 || days < 2) throw UsageError("synthetic market needs assets >= 3 and days >= 2");
  p.n_assets = static_cast<std::size_t>(assets);
  p.n_days = static_cast<std::size_t>(days);
  p.signal_strength = config.Real("signal_strength");
  p.seed = static_cast<std::uint64_t>(config.Int("seed"));
  p.horizon_days = static_cast<int>(config.Int("horizon"));
  p.asset_vol = config.Real("asset_vol");
  p.market_vol = config.Real("market_vol");
  return p;
}

RpnProgram ParseSetting(const RunConfig& config, const std::string& key) {
  const Grammar grammar(Vocabulary(), static_cast<int>(config.Int("max_len")));
  try {
    return ParseInfix(config.Text(key), grammar);
  } catch (const FormulaError& e) {
    throw UsageError("setting '" + key + "': " + e.what());
  }
}

// Named error for the first factor reading a feature the panel lacks.
void CheckFeatures(const std::vector<WeightedProgram>& pool, const PanelTensor& panel) {
  for (const auto& wp : pool) {
    for (const Token& t : wp.program.tokens()) {
      if (t.kind != TokenKind::kFeature) continue;
      const std::string_view name = FeatureName(t.index);
      if (panel.FeatureIndex(name) < 0) {
        throw DataError("factor '" + ToInfix(wp.program) + "' reads feature '" +
                        std::string(name) + "', which the data does not provide");
      }
    }
  }
}

struct LoadedPool {
  std::vector<RpnProgram> programs;
  std::vector<double> weights;
};

LoadedPool LoadPoolFor(const RunConfig& config, const PanelTensor& panel) {
  const std::string path = config.Text("pool");
  if (path.empty()) throw UsageError("no pool: pass --pool <file>");
  const Grammar grammar(Vocabulary(), static_cast<int>(config.Int("max_len")));
  const auto pool = LoadPool(path, grammar);
  if (pool.empty()) throw DataError(path + ": pool has no factors");
  CheckFeatures(pool, panel);
  LoadedPool out;
  for (const auto& wp : pool) {
    out.programs.push_back(wp.program);
    out.weights.push_back(wp.weight);
  }
  return out;
}

std::vector<double> ParseGrid(const std::string& text) {
  std::vector<double> grid;
  if (text.empty()) return grid;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(' ');
    const auto e = item.find_last_not_of(' ');
    double v = 0;
    const bool blank = b == std::string::npos;
    const auto res = blank ? std::from_chars_result{item.data(), std::errc::invalid_argument}
                           : std::from_chars(item.data() + b, item.data() + e + 1, v);
    if (blank || res.ec != std::errc() || res.ptr != item.data() + e + 1 || !(v > 0 && v < 1)) {
      throw UsageError("setting 'p' needs probabilities in (0, 1), got '" + item + "'");
    }
    grid.push_back(v);
  }
  return grid;
}

}  // namespace

MarketData LoadMarket(const RunConfig& config, bool require_all_features) {
  const std::string path = config.Text("data");
  if (config.Bool("synth")) {
    if (!path.empty()) throw UsageError("pass either --data or --synth, not both");
    return SynthMarket(SynthFrom(config), ParseSetting(config, "signal"));
  }
  if (path.empty()) throw UsageError("no data: pass --data <csv> or --synth");
  const int horizon = static_cast<int>(config.Int("horizon"));
  if (require_all_features) return LoadCsv(path, DefaultFeatures(), horizon);
  return LoadCsv(path, HeaderFeatures(path), horizon);
}

MarketData SelectSplit(const MarketData& data, const RunConfig& config) {
  const std::string split = config.Text("split");
  if (split == "all") return data;
  int part = -1;
  if (split == "train") part = 0;
  if (split == "valid") part = 1;
  if (split == "test") part = 2;
  if (part < 0) throw UsageError("setting 'split' must be train, valid, test or all");
  const auto lookback = config.Int("lookback");
  if (lookback < 0) throw UsageError("setting 'lookback' must be >= 0");
  const SplitSpec spec =
      FractionalSplit(data.panel.dates(), config.Real("train_frac"), config.Real("valid_frac"));
  return Split(data, spec, static_cast<std::size_t>(lookback))[static_cast<std::size_t>(part)];
}

TrainConfig TrainConfigFrom(const RunConfig& config) {
  TrainConfig c;
  c.batch_size = static_cast<int>(config.Int("batch"));
  c.learning_rate = config.Real("lr");
  c.total_steps = config.Int("steps");
  c.seed = static_cast<std::uint64_t>(config.Int("seed"));
  const std::string opt = config.Text("optimizer");
  if (opt == "adam") {
    c.optimizer = OptimizerKind::kAdam;
  } else if (opt == "sgd") {
    c.optimizer = OptimizerKind::kSgd;
  } else {
    throw UsageError("setting 'optimizer' must be adam or sgd");
  }
  c.reward_floor = config.Real("reward_floor");
  c.use_baseline = config.Bool("baseline");
  c.max_len = static_cast<int>(config.Int("max_len"));
  const auto capacity = config.Int("pool_capacity");
  if (capacity < 1) throw UsageError("setting 'pool_capacity' must be >= 1");
  c.pool_capacity = static_cast<std::size_t>(capacity);
  c.policy.embed = static_cast<int>(config.Int("embed"));
  c.policy.hidden = static_cast<int>(config.Int("hidden"));
  c.threads = static_cast<int>(config.Int("threads"));
  c.cache_entries = static_cast<std::size_t>(std::max<std::int64_t>(1, config.Int("cache_entries")));
  c.subtree_entries =
      static_cast<std::size_t>(std::max<std::int64_t>(0, config.Int("subtree_entries")));
  c.eval_every = static_cast<int>(config.Int("eval_every"));
  c.checkpoint_every = static_cast<int>(config.Int("checkpoint_every"));
  c.patience = config.Int("patience");
  c.fit.lr = config.Real("fit_lr");
  c.fit.max_iters = static_cast<int>(config.Int("fit_iters"));
  c.fit.tol = config.Real("fit_tol");
  c.Validate();
  return c;
}

ShapingSchedule ScheduleFrom(const RunConfig& config) {
  ShapingSchedule s;
  s.lambda = config.Real("lambda");
  s.alpha = config.Real("alpha");
  s.eta = config.Real("eta");
  s.delta = config.Real("delta");
  s.Validate();
  return s;
}

std::filesystem::path CreateRunDirectory(const RunConfig& config, std::string_view command) {
  const std::filesystem::path root = config.Text("out");
  std::filesystem::create_directories(root);
  const std::string name = config.Text("name");
  std::filesystem::path dir;
  if (!name.empty()) {
    dir = root / name;
    if (!std::filesystem::create_directory(dir)) {
      throw UsageError("run directory " + dir.string() + " already exists; runs are never overwritten");
    }
  } else {
    for (int n = 1;; ++n) {
      dir = root / (std::string(command) + "-" + std::to_string(n));
      if (std::filesystem::create_directory(dir)) break;
    }
  }
  RunConfig echoed = config;
  echoed.Set("name", "");
  echoed.Save(dir / "config");
  return dir;
}

int CmdMine(const RunConfig& config, std::ostream& out, std::ostream&) {
  const TrainConfig tc = TrainConfigFrom(config);
  const ShapingSchedule schedule = ScheduleFrom(config);
  const MarketData data = LoadMarket(config, true);
  const auto lookback = config.Int("lookback");
  if (lookback < 0) throw UsageError("setting 'lookback' must be >= 0");
  const auto parts =
      Split(data, FractionalSplit(data.panel.dates(), config.Real("train_frac"), config.Real("valid_frac")),
            static_cast<std::size_t>(lookback));
  auto train = std::make_shared<const MarketData>(parts[0]);
  auto valid = std::make_shared<const MarketData>(parts[1]);

  const auto dir = CreateRunDirectory(config, "mine");
  out << "run " << dir.string() << '\n' << std::flush;
  const TrainResult result =
      Train(tc, train, valid, schedule, dir, [&](const StepReport& r) {
        if (IsMissing(r.valid_ic)) return;
        out << "step " << r.step << " mean_reward " << Fmt(r.mean_reward) << " pool_ic "
            << Fmt(r.pool_ic) << " valid_ic " << Fmt(r.valid_ic) << '\n'
            << std::flush;
      });
  out << "steps " << result.history.size() << (result.stopped_early ? " (early stop)" : "")
      << "\nbest_valid_ic " << Fmt(result.best_valid_ic) << '\n';
  for (const auto& wp : result.pool) out << Fmt(wp.weight) << '\t' << ToInfix(wp.program) << '\n';
  return kExitOk;
}

int CmdVerify(const RunConfig& config, std::ostream& out, std::ostream& err) {
  VerifyOptions options;
  options.r1 = config.Real("r1");
  options.r2 = config.Real("r2");
  options.grid = ParseGrid(config.Text("p"));
  options.samples = static_cast<long>(config.Int("samples"));
  options.seed = static_cast<std::uint64_t>(config.Int("seed"));
  if (options.samples < 2) throw UsageError("setting 'samples' must be >= 2");
  if (!(options.r1 > options.r2)) throw UsageError("verify needs r1 > r2");

  const VerifyOutcome outcome = RunVerification(options);
  for (const auto& w : outcome.warnings) err << "warning: " << w << '\n';
  for (const auto& line : outcome.lines) out << line << '\n';

  const std::string report = config.Text("report");
  if (!report.empty()) {
    if (std::filesystem::exists(report)) throw UsageError("refusing to overwrite " + report);
    std::ofstream csv(report);
    if (!csv) throw DataError("cannot write " + report);
    csv.precision(17);
    csv << "p,exact_var_reinforce,exact_var_greedy_baseline,mc_var_reinforce,"
           "mc_var_greedy_baseline,bound\n";
    for (const auto& r : outcome.rows) {
      csv << r.p << ',' << r.exact_reinforce << ',' << r.exact_baseline << ',' << r.mc_reinforce << ','
          << r.mc_baseline << ',' << r.bound << '\n';
    }
  }
  return outcome.passed ? kExitOk : kExitVerify;
}

int CmdBacktest(const RunConfig& config, std::ostream& out, std::ostream&) {
  const MarketData data = LoadMarket(config, false);
  const LoadedPool pool = LoadPoolFor(config, data.panel);
  const MarketData part = SelectSplit(data, config);
  BacktestOptions options;
  const auto k = config.Int("k");
  if (k < 1 || static_cast<std::size_t>(k) > part.panel.assets()) {
    throw UsageError("setting 'k' must lie in [1, " + std::to_string(part.panel.assets()) + "]");
  }
  options.k = static_cast<std::size_t>(k);
  options.cost_bps = config.Real("cost_bps");
  options.two_way_turnover = config.Bool("two_way");

  const FactorMatrix signal = CombineOn(pool.programs, pool.weights, part.panel);
  const BacktestReport report = RunBacktest(signal, part.panel, options);
  const auto dir = CreateRunDirectory(config, "backtest");
  WriteBacktest(dir, report);
  out << "run " << dir.string() << '\n'
      << "days " << report.daily.size() << '\n'
      << "cumulative_return " << Fmt(report.risk.cumulative) << '\n'
      << "sharpe " << Fmt(report.risk.sharpe) << '\n'
      << "max_drawdown " << Fmt(report.risk.max_drawdown) << '\n'
      << "benchmark_cumulative_return " << Fmt(report.benchmark_risk.cumulative) << '\n';
  return kExitOk;
}

int CmdEval(const RunConfig& config, std::ostream& out, std::ostream&) {
  const MarketData data = LoadMarket(config, false);
  const LoadedPool pool = LoadPoolFor(config, data.panel);
  const MarketData part = SelectSplit(data, config);
  const PoolMetrics m = ScoreOn(pool.programs, pool.weights, part);
  out << "ic " << Fmt(m.ic) << "\nrank_ic " << Fmt(m.rank_ic) << "\nir " << Fmt(m.ir) << '\n';
  return kExitOk;
}

int CmdSynth(const RunConfig& config, std::ostream& out, std::ostream&) {
  const std::string path = config.Text("output");
  if (path.empty()) throw UsageError("no output: pass --output <csv>");
  if (std::filesystem::exists(path)) throw UsageError("refusing to overwrite " + path);
  const MarketData data = SynthMarket(SynthFrom(config), ParseSetting(config, "signal"));
  WriteCsv(path, data, true);
  out << "wrote " << path << " (" << data.panel.assets() << " assets, " << data.panel.days()
      << " days)\n";
  return kExitOk;
}

int RunCommand(std::string_view command, const std::filesystem::path& config_file,
               const std::vector<std::string>& overrides, std::ostream& out, std::ostream& err) {
  try {
    RunConfig config;
    if (!config_file.empty()) config.MergeFile(config_file);
    config.MergeArgs(overrides);
    if (command == "mine") return CmdMine(config, out, err);
    if (command == "verify") return CmdVerify(config, out, err);
    if (command == "backtest") return CmdBacktest(config, out, err);
    if (command == "eval") return CmdEval(config, out, err);
    if (command == "synth") return CmdSynth(config, out, err);
    throw UsageError("unknown command '" + std::string(command) + "'");
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace alphamine
