#include "alphamine/metrics.h"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace alphamine {

namespace {

double PearsonOfPairs(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  if (n < 3) return Missing();
  const auto [alo, ahi] = std::minmax_element(a.begin(), a.end());
  const auto [blo, bhi] = std::minmax_element(b.begin(), b.end());
  if (*alo == *ahi || *blo == *bhi) return Missing();
  double ma = 0, mb = 0;
  for (std::size_t k = 0; k < n; ++k) {
    ma += a[k];
    mb += b[k];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double da = a[k] - ma;
    const double db = b[k] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (!(saa > 0) || !(sbb > 0)) return Missing();
  const double r = sab / std::sqrt(saa * sbb);
  return std::clamp(r, -1.0, 1.0);
}

void SurvivingPairs(std::span<const double> z, std::span<const double> y,
                    std::vector<double>* a, std::vector<double>* b) {
  a->clear();
  b->clear();
  const std::size_t n = std::min(z.size(), y.size());
  for (std::size_t k = 0; k < n; ++k) {
    if (IsMissing(z[k]) || IsMissing(y[k])) continue;
    a->push_back(z[k]);
    b->push_back(y[k]);
  }
}

template <typename DayFn>
DailyIcSeries Daily(const FactorMatrix& z, const FactorMatrix& y, std::size_t first_day,
                    DayFn&& fn) {
  DailyIcSeries out;
  const std::size_t days = std::min(z.days(), y.days());
  const std::size_t n = std::min(z.assets(), y.assets());
  std::vector<double> zc(n), yc(n);
  for (std::size_t t = first_day; t < days; ++t) {
    int valid = 0;
    for (std::size_t i = 0; i < n; ++i) {
      zc[i] = z.at(i, t);
      yc[i] = y.at(i, t);
      valid += (!IsMissing(zc[i]) && !IsMissing(yc[i])) ? 1 : 0;
    }
    out.ic.push_back(fn(zc, yc));
    out.n_valid_pairs.push_back(valid);
  }
  return out;
}

}  // namespace

double IcDay(std::span<const double> z, std::span<const double> y) {
  thread_local std::vector<double> a, b;
  SurvivingPairs(z, y, &a, &b);
  return PearsonOfPairs(a, b);
}

std::vector<double> AverageRanks(std::span<const double> x) {
  std::vector<std::size_t> order;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (!IsMissing(x[k])) order.push_back(k);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size(), Missing());
  std::size_t k = 0;
  while (k < order.size()) {
    std::size_t j = k;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[k]]) ++j;
    const double rank = 0.5 * static_cast<double>(k + j) + 1.0;
    for (std::size_t m = k; m <= j; ++m) ranks[order[m]] = rank;
    k = j + 1;
  }
  return ranks;
}

double RankIcDay(std::span<const double> z, std::span<const double> y) {
  std::vector<double> a, b;
  SurvivingPairs(z, y, &a, &b);
  if (a.size() < 3) return Missing();
  return PearsonOfPairs(AverageRanks(a), AverageRanks(b));
}

DailyIcSeries DailyIc(const FactorMatrix& z, const FactorMatrix& y, std::size_t first_day) {
  return Daily(z, y, first_day, [](const auto& a, const auto& b) { return IcDay(a, b); });
}

DailyIcSeries DailyRankIc(const FactorMatrix& z, const FactorMatrix& y, std::size_t first_day) {
  return Daily(z, y, first_day, [](const auto& a, const auto& b) { return RankIcDay(a, b); });
}

double MeanIc(const DailyIcSeries& series) {
  double sum = 0;
  std::size_t count = 0;
  for (double v : series.ic) {
    if (IsMissing(v)) continue;
    sum += v;
    ++count;
  }
  return count ? sum / static_cast<double>(count) : Missing();
}

double InformationRatio(const DailyIcSeries& series) {
  std::vector<double> defined;
  for (double v : series.ic) {
    if (!IsMissing(v)) defined.push_back(v);
  }
  if (defined.size() < 2) return Missing();
  const auto [lo, hi] = std::minmax_element(defined.begin(), defined.end());
  if (*lo == *hi) return Missing();  // rounding in the mean would fake a tiny variance
  const double n = static_cast<double>(defined.size());
  const double mean = std::accumulate(defined.begin(), defined.end(), 0.0) / n;
  double ss = 0;
  for (double v : defined) ss += (v - mean) * (v - mean);
  const double var = ss / (n - 1);
  if (!(var > 0)) return Missing();
  return mean / std::sqrt(var);
}

}  // namespace alphamine
