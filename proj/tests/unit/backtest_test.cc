#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "alphamine/backtest.h"
#include "doctest.h"

namespace alphamine {
namespace {

// Close-only panel from per-asset price paths.
PanelTensor ClosePanel(const std::vector<std::vector<double>>& prices, std::size_t warmup = 0) {
  const std::size_t n = prices.size(), days = prices[0].size();
  FactorMatrix close(n, days);
  std::vector<std::string> symbols;
  for (std::size_t i = 0; i < n; ++i) {
    symbols.push_back("A" + std::to_string(i));
    for (std::size_t d = 0; d < days; ++d) close.at(i, d) = prices[i][d];
  }
  std::vector<Date> dates;
  const std::chrono::sys_days start = std::chrono::year{2021} / 3 / 29;
  for (std::size_t d = 0; d < days; ++d) {
    dates.push_back(Date{std::chrono::year_month_day(start + std::chrono::days(static_cast<int>(d)))});
  }
  return PanelTensor(symbols, dates, {"close"}, {close}, warmup);
}

PanelTensor RandomWalk(std::mt19937_64& rng, std::size_t n, std::size_t days, double missing = 0.0) {
  std::normal_distribution<double> g(0, 0.02);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<std::vector<double>> prices(n, std::vector<double>(days));
  for (auto& path : prices) {
    double p = 10 + 90 * u(rng);
    for (double& v : path) {
      p *= std::exp(g(rng));
      v = u(rng) < missing ? Missing() : p;
    }
  }
  return ClosePanel(prices);
}

Portfolio Holding(std::size_t n, const std::vector<std::size_t>& names) {
  Portfolio p = Portfolio::Empty(n);
  for (std::size_t i : names) p.weights[i] = 1.0 / static_cast<double>(names.size());
  return p;
}

TEST_CASE("turnover") {
  std::vector<std::size_t> first, disjoint, swapped;
  for (std::size_t i = 0; i < 50; ++i) {
    first.push_back(i);
    disjoint.push_back(50 + i);
    swapped.push_back(i < 45 ? i : 50 + i);
  }
  const Portfolio a = Holding(100, first);
  CHECK(Turnover(a, a) == 0.0);
  CHECK(Turnover(a, Holding(100, disjoint)) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(Turnover(a, Holding(100, swapped)) == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(Turnover(a, Holding(100, swapped), true) == doctest::Approx(0.2).epsilon(1e-14));
  CHECK(Turnover(Portfolio::Empty(100), a) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK_THROWS(Turnover(a, Portfolio::Empty(3)));
}

TEST_CASE("risk metrics on toy series") {
  const RiskMetrics two = ComputeRiskMetrics({0.01, -0.01});
  CHECK(two.cumulative == doctest::Approx(-0.0001).epsilon(1e-12));

  const RiskMetrics m = ComputeRiskMetrics({0.1, -0.2, 0.05});
  // Wealth 1.1, 0.88, 0.924.
  CHECK(m.cumulative == doctest::Approx(-0.076).epsilon(1e-14));
  CHECK(m.max_drawdown == doctest::Approx(0.2).epsilon(1e-14));
  // Mean -1/60, deviations (7, -11, 4)/60, sample variance 31/1200.
  CHECK(m.sharpe == doctest::Approx((-1.0 / 60) / std::sqrt(31.0 / 1200) * std::sqrt(252.0)).epsilon(1e-13));

  const RiskMetrics up = ComputeRiskMetrics({0.01, 0.02, 0.0, 0.03});
  CHECK(up.max_drawdown == 0.0);
  CHECK(IsMissing(ComputeRiskMetrics({0.01, 0.01, 0.01}).sharpe));
  CHECK(IsMissing(ComputeRiskMetrics({0.01}).sharpe));
}

TEST_CASE("three-day toy backtest") {
  // Day returns: A0 +10%, -10%, +0%; A1 -5%, +20%, +10%; A2 0, 0, -50%.
  const PanelTensor panel =
      ClosePanel({{100, 110, 99, 99}, {100, 95, 114, 125.4}, {100, 100, 100, 50}});
  FactorMatrix signal(3, 4);
  const double s[3][4] = {{3, 1, 2, 0}, {2, 3, 1, 0}, {1, 2, 3, 0}};
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t d = 0; d < 4; ++d) signal.at(i, d) = s[i][d];
  }
  BacktestOptions o;
  o.k = 1;
  o.cost_bps = 10;
  const BacktestReport r = RunBacktest(signal, panel, o);
  REQUIRE(r.daily.size() == 3);
  // Holdings A0, A1, A2.
  CHECK(r.gross[0] == doctest::Approx(0.10).epsilon(1e-14));
  CHECK(r.gross[1] == doctest::Approx(0.20).epsilon(1e-14));
  CHECK(r.gross[2] == doctest::Approx(-0.50).epsilon(1e-14));
  CHECK(r.turnover[0] == 0.5);
  CHECK(r.turnover[1] == 1.0);
  CHECK(r.turnover[2] == 1.0);
  CHECK(r.daily[1] == doctest::Approx(0.20 - 0.001).epsilon(1e-14));
  CHECK(r.benchmark[0] == doctest::Approx((0.10 - 0.05 + 0.0) / 3).epsilon(1e-13));
  CHECK(r.dates[0] == panel.dates()[1]);
  const RiskMetrics direct = ComputeRiskMetrics(r.daily);
  CHECK(r.risk.cumulative == direct.cumulative);
  CHECK(r.risk.sharpe == direct.sharpe);
  CHECK(r.risk.max_drawdown == direct.max_drawdown);
}

TEST_CASE("perfect foresight picks the best asset each day") {
  std::mt19937_64 rng(1);
  const PanelTensor panel = RandomWalk(rng, 8, 60);
  const FactorMatrix oracle = NextDayReturns(panel);
  BacktestOptions o;
  o.k = 1;
  const BacktestReport r = RunBacktest(oracle, panel, o);
  for (std::size_t d = 0; d < r.daily.size(); ++d) {
    double best = -1e300;
    for (std::size_t i = 0; i < 8; ++i) best = std::max(best, oracle.at(i, d));
    CHECK(r.daily[d] == best);
  }
}

TEST_CASE("perfect foresight dominates the benchmark across a battery") {
  std::mt19937_64 rng(2);
  for (int panel_id = 0; panel_id < 20; ++panel_id) {
    const std::size_t n = 5 + static_cast<std::size_t>(panel_id);
    const PanelTensor panel = RandomWalk(rng, n, 80, panel_id % 2 ? 0.05 : 0.0);
    for (std::size_t k : {std::size_t{1}, n / 2, n}) {
      BacktestOptions o;
      o.k = k;
      const BacktestReport r = RunBacktest(NextDayReturns(panel), panel, o);
      for (std::size_t d = 0; d < r.daily.size(); ++d) CHECK(r.daily[d] >= r.benchmark[d] - 1e-15);
      CHECK(r.risk.cumulative >= r.benchmark_risk.cumulative - 1e-12);
    }
  }
}

TEST_CASE("constant signal holds the first symbols without trading") {
  std::mt19937_64 rng(3);
  const PanelTensor panel = RandomWalk(rng, 6, 30);
  FactorMatrix flat(6, 30);
  for (double& v : flat.raw()) v = 1.0;
  BacktestOptions o;
  o.k = 2;
  const BacktestReport r = RunBacktest(flat, panel, o);
  for (std::size_t d = 1; d < r.turnover.size(); ++d) CHECK(r.turnover[d] == 0.0);
  const FactorMatrix ret = NextDayReturns(panel);
  for (std::size_t d = 0; d < r.daily.size(); ++d) {
    CHECK(r.gross[d] == doctest::Approx(0.5 * ret.at(0, d) + 0.5 * ret.at(1, d)).epsilon(1e-14));
  }
}

TEST_CASE("a random signal tracks the benchmark") {
  std::mt19937_64 rng(4);
  const PanelTensor panel = RandomWalk(rng, 40, 501);
  FactorMatrix noise(40, 501);
  std::normal_distribution<double> g(0, 1);
  for (double& v : noise.raw()) v = g(rng);
  BacktestOptions o;
  o.k = 10;
  const BacktestReport r = RunBacktest(noise, panel, o);
  std::vector<double> diff(r.daily.size());
  for (std::size_t d = 0; d < diff.size(); ++d) diff[d] = r.daily[d] - r.benchmark[d];
  const double n = static_cast<double>(diff.size());
  const double mean = std::accumulate(diff.begin(), diff.end(), 0.0) / n;
  double ss = 0;
  for (double v : diff) ss += (v - mean) * (v - mean);
  CHECK(std::fabs(mean) <= 3 * std::sqrt(ss / (n - 1) / n));
}

TEST_CASE("short days, missing closes and warm-up") {
  // A1 lacks a close on day 1 and so cannot be ranked there.
  const PanelTensor panel = ClosePanel({{1, 1, 1, 1}, {1, Missing(), 1, 1}, {1, 2, 2, 2}}, 1);
  FactorMatrix signal(3, 4);
  for (std::size_t d = 0; d < 4; ++d) {
    signal.at(0, d) = 1;
    signal.at(1, d) = 3;
    signal.at(2, d) = Missing();
  }
  BacktestOptions o;
  o.k = 2;
  const BacktestReport r = RunBacktest(signal, panel, o);
  REQUIRE(r.daily.size() == 2);  // day 0 is warm-up, the last day has no next close
  CHECK(r.short_day[0]);
  CHECK(r.held[0] == 1);
  CHECK(r.held[1] == 2);
  // Day 2: A1 held, its return 0; A0 return 0.
  CHECK(r.daily[1] == 0.0);
}

TEST_CASE("quarterly rows partition the days") {
  std::mt19937_64 rng(5);
  const PanelTensor panel = RandomWalk(rng, 10, 200);
  FactorMatrix noise(10, 200);
  std::normal_distribution<double> g(0, 1);
  for (double& v : noise.raw()) v = g(rng);
  BacktestOptions o;
  o.k = 3;
  const BacktestReport r = RunBacktest(noise, panel, o);
  std::size_t days = 0;
  double turnover = 0, wealth = 1;
  for (const auto& q : r.quarters) {
    days += q.days;
    turnover += q.turnover;
    wealth *= 1 + q.risk.cumulative;
  }
  CHECK(days == r.daily.size());
  CHECK(turnover == doctest::Approx(std::accumulate(r.turnover.begin(), r.turnover.end(), 0.0)));
  CHECK(wealth - 1 == doctest::Approx(r.risk.cumulative).epsilon(1e-12));
  CHECK(r.quarters.front().label == "2021Q1");
  CHECK(r.quarters[1].label == "2021Q2");
}

TEST_CASE("relabeling assets leaves the report unchanged") {
  std::mt19937_64 rng(6);
  const PanelTensor panel = RandomWalk(rng, 7, 50);
  FactorMatrix sig(7, 50);
  std::normal_distribution<double> g(0, 1);
  for (double& v : sig.raw()) v = g(rng);
  const std::vector<std::size_t> perm{3, 0, 6, 1, 5, 2, 4};
  const PanelTensor shuffled = panel.SelectAssets(perm);
  FactorMatrix sig2(7, 50);
  for (std::size_t i = 0; i < 7; ++i) {
    for (std::size_t d = 0; d < 50; ++d) sig2.at(i, d) = sig.at(perm[i], d);
  }
  BacktestOptions o;
  o.k = 3;
  const BacktestReport a = RunBacktest(sig, panel, o), b = RunBacktest(sig2, shuffled, o);
  for (std::size_t d = 0; d < a.daily.size(); ++d) {
    CHECK(a.daily[d] == doctest::Approx(b.daily[d]).epsilon(1e-14));
    CHECK(a.turnover[d] == doctest::Approx(b.turnover[d]).epsilon(1e-14));
  }
  o.k = 0;
  CHECK_THROWS_AS(RunBacktest(sig, panel, o), std::invalid_argument);
}

}  // namespace
}  // namespace alphamine
