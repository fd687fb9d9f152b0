#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "alphamine/factor_matrix.h"
#include "alphamine/panel.h"

namespace alphamine {

// Long-only equal-weight holdings over a universe of assets.
struct Portfolio {
  std::vector<double> weights;  // per asset, sums to 1 when non-empty
  std::size_t as_of = 0;        // day index of the signal it was built from

  static Portfolio Empty(std::size_t assets) { return {std::vector<double>(assets, 0.0), 0}; }
  std::size_t holdings() const;
};

// 0.5 * sum |w_next - w_prev| (one-way), or the full sum when two-way.
double Turnover(const Portfolio& prev, const Portfolio& next, bool two_way = false);

struct RiskMetrics {
  double cumulative = 0;      // prod(1 + r) - 1
  double sharpe = Missing();  // mean / sd * sqrt(252); missing on zero sd or < 2 days
  double max_drawdown = 0;    // largest peak-to-trough fall of wealth, starting at 1
};
RiskMetrics ComputeRiskMetrics(const std::vector<double>& daily);

struct QuarterRow {
  std::string label;  // e.g. "2021Q3"
  RiskMetrics risk;
  double turnover = 0;  // summed daily turnover
  double benchmark_cumulative = 0;
  std::size_t days = 0;
};

struct BacktestOptions {
  std::size_t k = 50;
  double cost_bps = 0;
  bool two_way_turnover = false;
};

struct BacktestReport {
  std::vector<Date> dates;         // day each return is realized
  std::vector<double> daily;       // net of costs
  std::vector<double> gross;
  std::vector<double> turnover;
  std::vector<double> benchmark;   // equal weight over assets with a return
  std::vector<std::size_t> held;
  std::vector<bool> short_day;     // fewer than k rankable assets
  RiskMetrics risk;
  RiskMetrics benchmark_risk;
  std::vector<QuarterRow> quarters;
};

// The signal at day d ranks assets (descending, ties by asset order, missing
// excluded) and the top k are held equal-weight over the close(d) ->
// close(d+1) return. Assets without a close at d are not rankable; a held
// asset without a close at d+1 contributes 0. Warm-up days only supply
// history.
BacktestReport RunBacktest(const FactorMatrix& signal, const PanelTensor& panel,
                           const BacktestOptions& options = {});

// Next-day close-to-close returns placed at day d (perfect foresight).
FactorMatrix NextDayReturns(const PanelTensor& panel);

void WriteBacktest(const std::filesystem::path& dir, const BacktestReport& report);

}  // namespace alphamine
