#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "alphamine/factor_matrix.h"

namespace alphamine {

class RpnProgram;

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Calendar trading day. Ordered, printable as ISO-8601.
struct Date {
  std::chrono::year_month_day ymd{};

  static Date Parse(std::string_view text);  // throws DataError
  std::string ToString() const;
  std::int64_t Serial() const;  // days since epoch
  int Quarter() const { return (static_cast<int>(static_cast<unsigned>(ymd.month())) - 1) / 3 + 1; }
  int Year() const { return static_cast<int>(ymd.year()); }

  friend bool operator==(const Date&, const Date&) = default;
  friend auto operator<=>(const Date& a, const Date& b) { return a.ymd <=> b.ymd; }
};

inline const std::vector<std::string>& DefaultFeatures() {
  static const std::vector<std::string> kFeatures = {"open",   "high", "low",
                                                     "close", "volume", "vwap"};
  return kFeatures;
}

// Asset x feature x day market panel. Immutable once built.
//
// The first `warmup_days` days carry history only; time-series operators may
// read them but no averaged metric includes them.
class PanelTensor {
 public:
  PanelTensor() = default;
  PanelTensor(std::vector<std::string> symbols, std::vector<Date> dates,
              std::vector<std::string> feature_names,
              std::vector<FactorMatrix> features, std::size_t warmup_days = 0);

  std::size_t assets() const { return symbols_.size(); }
  std::size_t days() const { return dates_.size(); }
  std::size_t feature_count() const { return feature_names_.size(); }

  const std::vector<std::string>& symbols() const { return symbols_; }
  const std::vector<Date>& dates() const { return dates_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }
  std::size_t warmup_days() const { return warmup_days_; }
  bool IsWarmup(std::size_t day) const { return day < warmup_days_; }

  const FactorMatrix& feature(std::size_t j) const { return features_.at(j); }
  // Index of a named feature, or -1.
  int FeatureIndex(std::string_view name) const;
  double value(std::size_t asset, std::size_t feature, std::size_t day) const {
    return features_[feature].at(asset, day);
  }

  // Restriction to a contiguous day range [begin, end) with the first
  // `warmup` of those days flagged as warm-up.
  PanelTensor SliceDays(std::size_t begin, std::size_t end, std::size_t warmup) const;
  // Restriction to a subset of assets, in the given order.
  PanelTensor SelectAssets(const std::vector<std::size_t>& assets) const;

 private:
  std::vector<std::string> symbols_;
  std::vector<Date> dates_;
  std::vector<std::string> feature_names_;
  std::vector<FactorMatrix> features_;
  std::size_t warmup_days_ = 0;
};

struct TargetPanel {
  FactorMatrix returns;  // [asset][day] forward returns, missing at the tail
  int horizon_days = 5;
};

struct MarketData {
  PanelTensor panel;
  TargetPanel target;
};

// Close-to-close forward returns: r[t] = close[t+h] / close[t] - 1.
TargetPanel ForwardReturns(const PanelTensor& panel, int horizon_days);

// Reads `date,symbol,<features...>[,target]`. Missing (date, symbol) pairs
// become missing cells. Without a target column, forward close-to-close
// returns over `horizon_days` are used.
MarketData LoadCsv(const std::filesystem::path& path,
                   const std::vector<std::string>& features = DefaultFeatures(),
                   int horizon_days = 5);
void WriteCsv(const std::filesystem::path& path, const MarketData& data,
              bool include_target = true);

struct SynthParams {
  std::size_t n_assets = 50;
  std::size_t n_days = 750;
  double signal_strength = 0.9;
  std::uint64_t seed = 7;
  int horizon_days = 5;
  double asset_vol = 0.02;
  double market_vol = 0.01;
};

// Geometric-random-walk market whose targets load on a planted formula:
// y = s * zscore(signal) + (1 - s) * noise, re-standardized per day.
MarketData SynthMarket(const SynthParams& params, const RpnProgram& signal);

struct DateRange {
  Date first;
  Date last;  // inclusive
};

struct SplitSpec {
  DateRange train;
  DateRange valid;
  DateRange test;
};

// Chronological split by fractions of the day axis (test gets the rest).
SplitSpec FractionalSplit(const std::vector<Date>& dates, double train_frac,
                          double valid_frac);

// Each part keeps up to `lookback` earlier days as flagged warm-up.
std::array<MarketData, 3> Split(const MarketData& data, const SplitSpec& spec,
                                std::size_t lookback);

}  // namespace alphamine
