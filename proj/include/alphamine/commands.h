#pragma once

#include <filesystem>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "alphamine/panel.h"
#include "alphamine/run_config.h"
#include "alphamine/trainer.h"

namespace alphamine {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitVerify = 3,
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Full data set named by the config: the synthetic market when `synth` is
// set, otherwise the CSV at `data`. Unless all features are required, the
// CSV may carry any subset of the feature columns, in canonical order.
MarketData LoadMarket(const RunConfig& config, bool require_all_features = true);

// Train/valid/test parts with `lookback` warm-up days each, or the whole set
// (no warm-up) for split "all".
MarketData SelectSplit(const MarketData& data, const RunConfig& config);

TrainConfig TrainConfigFrom(const RunConfig& config);
ShapingSchedule ScheduleFrom(const RunConfig& config);

// New directory under `out`: the configured name, or "<command>-<n>" with
// the first unused n. Never reuses an existing path. The effective config is
// written to <dir>/config with `name` cleared so it can be replayed.
std::filesystem::path CreateRunDirectory(const RunConfig& config, std::string_view command);

int CmdMine(const RunConfig& config, std::ostream& out, std::ostream& err);
int CmdVerify(const RunConfig& config, std::ostream& out, std::ostream& err);
int CmdBacktest(const RunConfig& config, std::ostream& out, std::ostream& err);
int CmdEval(const RunConfig& config, std::ostream& out, std::ostream& err);
int CmdSynth(const RunConfig& config, std::ostream& out, std::ostream& err);

// Builds the config (defaults, then `config_file` if non-empty, then
// `--key value` overrides), runs the subcommand, and maps errors to exit
// codes with a one-line message on `err`.
int RunCommand(std::string_view command, const std::filesystem::path& config_file,
               const std::vector<std::string>& overrides, std::ostream& out, std::ostream& err);

}  // namespace alphamine
