#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "alphamine/factor_matrix.h"

namespace alphamine {

// Per-day cross-sectional correlations over the non-warm-up days.
struct DailyIcSeries {
  std::vector<double> ic;  // missing where undefined
  std::vector<int> n_valid_pairs;
};

// Pearson correlation over pairs where both sides are present. Missing with
// fewer than 3 pairs or zero spread on either side.
double IcDay(std::span<const double> z, std::span<const double> y);

// IcDay on average ranks (ties share their mean rank) of the surviving pairs.
double RankIcDay(std::span<const double> z, std::span<const double> y);

// 1-based average ranks; missing entries stay missing and are not ranked.
std::vector<double> AverageRanks(std::span<const double> x);

// Daily IC / Rank IC for days [first_day, days).
DailyIcSeries DailyIc(const FactorMatrix& z, const FactorMatrix& y, std::size_t first_day);
DailyIcSeries DailyRankIc(const FactorMatrix& z, const FactorMatrix& y, std::size_t first_day);

// Mean over defined days; missing when none are defined.
double MeanIc(const DailyIcSeries& series);

// Mean over sample standard deviation of the defined days. Missing with fewer
// than 2 defined days or zero variance.
double InformationRatio(const DailyIcSeries& series);

}  // namespace alphamine
