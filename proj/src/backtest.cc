#include "alphamine/backtest.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace alphamine {

namespace {

double CloseReturn(const FactorMatrix& close, std::size_t i, std::size_t d) {
  const double a = close.at(i, d);
  const double b = close.at(i, d + 1);
  if (IsMissing(a) || IsMissing(b) || a == 0) return Missing();
  const double r = b / a - 1;
  return std::isfinite(r) ? r : Missing();
}

const FactorMatrix& CloseOf(const PanelTensor& panel) {
  const int j = panel.FeatureIndex("close");
  if (j < 0) throw DataError("backtest needs a close feature");
  return panel.feature(static_cast<std::size_t>(j));
}

std::string Num(double v) {
  if (IsMissing(v)) return "";
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::size_t Portfolio::holdings() const {
  return static_cast<std::size_t>(
      std::count_if(weights.begin(), weights.end(), [](double w) { return w != 0; }));
}

double Turnover(const Portfolio& prev, const Portfolio& next, bool two_way) {
  if (prev.weights.size() != next.weights.size()) {
    throw std::invalid_argument("portfolios cover different universes");
  }
  double sum = 0;
  for (std::size_t i = 0; i < prev.weights.size(); ++i) {
    sum += std::fabs(next.weights[i] - prev.weights[i]);
  }
  return two_way ? sum : 0.5 * sum;
}

RiskMetrics ComputeRiskMetrics(const std::vector<double>& daily) {
  RiskMetrics m;
  double wealth = 1, peak = 1;
  for (double r : daily) {
    wealth *= 1 + r;
    peak = std::max(peak, wealth);
    m.max_drawdown = std::max(m.max_drawdown, (peak - wealth) / peak);
  }
  m.cumulative = wealth - 1;
  if (daily.size() >= 2) {
    const double n = static_cast<double>(daily.size());
    const double mean = std::accumulate(daily.begin(), daily.end(), 0.0) / n;
    double ss = 0;
    for (double r : daily) ss += (r - mean) * (r - mean);
    const double sd = std::sqrt(ss / (n - 1));
    if (sd > 0) m.sharpe = mean / sd * std::sqrt(252.0);
  }
  return m;
}

FactorMatrix NextDayReturns(const PanelTensor& panel) {
  const FactorMatrix& close = CloseOf(panel);
  FactorMatrix out(panel.assets(), panel.days());
  for (std::size_t i = 0; i < panel.assets(); ++i) {
    for (std::size_t d = 0; d + 1 < panel.days(); ++d) out.at(i, d) = CloseReturn(close, i, d);
  }
  return out;
}

BacktestReport RunBacktest(const FactorMatrix& signal, const PanelTensor& panel,
                           const BacktestOptions& options) {
  const std::size_t n = panel.assets();
  if (signal.assets() != n || signal.days() != panel.days()) {
    throw std::invalid_argument("signal and panel are not aligned");
  }
  if (options.k == 0 || options.k > n) throw std::invalid_argument("k must lie in [1, assets]");
  const FactorMatrix& close = CloseOf(panel);
  BacktestReport report;
  Portfolio prev = Portfolio::Empty(n);
  std::vector<std::size_t> order;
  for (std::size_t d = panel.warmup_days(); d + 1 < panel.days(); ++d) {
    order.clear();
    for (std::size_t i = 0; i < n; ++i) {
      if (!IsMissing(signal.at(i, d)) && !IsMissing(close.at(i, d))) order.push_back(i);
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return signal.at(a, d) > signal.at(b, d);
    });
    const std::size_t take = std::min(options.k, order.size());
    Portfolio next = Portfolio::Empty(n);
    next.as_of = d;
    for (std::size_t j = 0; j < take; ++j) next.weights[order[j]] = 1.0 / static_cast<double>(take);

    double gross = 0, bench = 0;
    std::size_t bench_n = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = CloseReturn(close, i, d);
      if (IsMissing(r)) continue;
      gross += next.weights[i] * r;
      bench += r;
      ++bench_n;
    }
    const double to = Turnover(prev, next, options.two_way_turnover);
    report.dates.push_back(panel.dates()[d + 1]);
    report.gross.push_back(gross);
    report.turnover.push_back(to);
    report.daily.push_back(gross - options.cost_bps / 1e4 * to);
    report.benchmark.push_back(bench_n ? bench / static_cast<double>(bench_n) : 0.0);
    report.held.push_back(take);
    report.short_day.push_back(take < options.k);
    prev = std::move(next);
  }
  report.risk = ComputeRiskMetrics(report.daily);
  report.benchmark_risk = ComputeRiskMetrics(report.benchmark);

  for (std::size_t s = 0; s < report.dates.size();) {
    const Date& first = report.dates[s];
    std::size_t e = s;
    while (e < report.dates.size() && report.dates[e].Year() == first.Year() &&
           report.dates[e].Quarter() == first.Quarter()) {
      ++e;
    }
    QuarterRow row;
    row.label = std::to_string(first.Year()) + "Q" + std::to_string(first.Quarter());
    const std::vector<double> part(report.daily.begin() + static_cast<std::ptrdiff_t>(s),
                                   report.daily.begin() + static_cast<std::ptrdiff_t>(e));
    const std::vector<double> bench(report.benchmark.begin() + static_cast<std::ptrdiff_t>(s),
                                    report.benchmark.begin() + static_cast<std::ptrdiff_t>(e));
    row.risk = ComputeRiskMetrics(part);
    row.benchmark_cumulative = ComputeRiskMetrics(bench).cumulative;
    row.turnover = std::accumulate(report.turnover.begin() + static_cast<std::ptrdiff_t>(s),
                                   report.turnover.begin() + static_cast<std::ptrdiff_t>(e), 0.0);
    row.days = e - s;
    report.quarters.push_back(std::move(row));
    s = e;
  }
  return report;
}

void WriteBacktest(const std::filesystem::path& dir, const BacktestReport& report) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "daily.csv");
    out << "date,return,gross,turnover,benchmark,held,short\n";
    for (std::size_t t = 0; t < report.daily.size(); ++t) {
      out << report.dates[t].ToString() << ',' << Num(report.daily[t]) << ','
          << Num(report.gross[t]) << ',' << Num(report.turnover[t]) << ','
          << Num(report.benchmark[t]) << ',' << report.held[t] << ','
          << (report.short_day[t] ? 1 : 0) << '\n';
    }
  }
  {
    std::ofstream out(dir / "quarterly.csv");
    out << "quarter,cumulative_return,sharpe,max_drawdown,turnover,benchmark_return,days\n";
    for (const auto& q : report.quarters) {
      out << q.label << ',' << Num(q.risk.cumulative) << ',' << Num(q.risk.sharpe) << ','
          << Num(q.risk.max_drawdown) << ',' << Num(q.turnover) << ','
          << Num(q.benchmark_cumulative) << ',' << q.days << '\n';
    }
  }
  {
    std::ofstream out(dir / "summary");
    const double total_turnover =
        std::accumulate(report.turnover.begin(), report.turnover.end(), 0.0);
    const auto short_days = std::count(report.short_day.begin(), report.short_day.end(), true);
    out << "days " << report.daily.size() << '\n'
        << "cumulative_return " << Num(report.risk.cumulative) << '\n'
        << "sharpe " << Num(report.risk.sharpe) << '\n'
        << "max_drawdown " << Num(report.risk.max_drawdown) << '\n'
        << "turnover_total " << Num(total_turnover) << '\n'
        << "benchmark_cumulative_return " << Num(report.benchmark_risk.cumulative) << '\n'
        << "benchmark_sharpe " << Num(report.benchmark_risk.sharpe) << '\n'
        << "short_days " << short_days << '\n';
  }
}

}  // namespace alphamine
