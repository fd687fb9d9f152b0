#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "alphamine/commands.h"
#include "alphamine/run_config.h"

namespace {

std::string SettingsHelp() {
  std::string text = "Settings (any subcommand; --key value):\n";
  for (const auto& k : alphamine::ConfigSchema()) {
    std::string left = "  --" + k.name;
    if (k.default_value.empty()) {
      left += " (unset)";
    } else {
      left += " (" + k.default_value + ")";
    }
    if (left.size() < 34) left.resize(34, ' ');
    text += left + " " + k.help + "\n";
  }
  return text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Formulaic alpha mining with a masked recurrent policy."};
  app.require_subcommand(1);
  app.footer(SettingsHelp() +
             "\nExit codes: 0 ok, 1 usage, 2 data error, 3 verification failure.");

  std::string config_file;
  const std::pair<const char*, const char*> commands[] = {
      {"mine", "train the policy and write a run directory"},
      {"verify", "check the estimator propositions on bandits and the token process"},
      {"backtest", "top-k backtest of a pool's combined signal"},
      {"eval", "IC, Rank IC and IR of a pool on a split"},
      {"synth", "write a synthetic market CSV"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->allow_extras();
    sub->add_option("--config", config_file, "flat key-value settings file");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? alphamine::kExitOk : alphamine::kExitUsage;
  }
  const CLI::App* chosen = app.get_subcommands().front();
  return alphamine::RunCommand(chosen->get_name(), config_file, chosen->remaining(), std::cout,
                               std::cerr);
}
