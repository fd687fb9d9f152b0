#include "alphamine/panel.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <system_error>

#include "alphamine/evaluator.h"
#include "alphamine/formula.h"

namespace alphamine {

// ---------------------------------------------------------------------------
// Date

Date Date::Parse(std::string_view text) {
  int y = 0;
  unsigned m = 0, d = 0;
  auto bad = [&] { return DataError("bad date '" + std::string(text) + "', want YYYY-MM-DD"); };
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') throw bad();
  auto parse = [&](std::string_view part, auto& out) {
    auto res = std::from_chars(part.data(), part.data() + part.size(), out);
    if (res.ec != std::errc() || res.ptr != part.data() + part.size()) throw bad();
  };
  parse(text.substr(0, 4), y);
  parse(text.substr(5, 2), m);
  parse(text.substr(8, 2), d);
  Date date;
  date.ymd = std::chrono::year{y} / std::chrono::month{m} / std::chrono::day{d};
  if (!date.ymd.ok()) throw bad();
  return date;
}

std::string Date::ToString() const {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

std::int64_t Date::Serial() const {
  return std::chrono::sys_days(ymd).time_since_epoch().count();
}

// ---------------------------------------------------------------------------
// PanelTensor

PanelTensor::PanelTensor(std::vector<std::string> symbols, std::vector<Date> dates,
                         std::vector<std::string> feature_names,
                         std::vector<FactorMatrix> features, std::size_t warmup_days)
    : symbols_(std::move(symbols)),
      dates_(std::move(dates)),
      feature_names_(std::move(feature_names)),
      features_(std::move(features)),
      warmup_days_(warmup_days) {
  if (features_.size() != feature_names_.size()) {
    throw DataError("feature count does not match feature names");
  }
  for (std::size_t k = 1; k < dates_.size(); ++k) {
    if (!(dates_[k - 1] < dates_[k])) throw DataError("dates must be strictly increasing");
  }
  for (const auto& m : features_) {
    if (m.assets() != symbols_.size() || m.days() != dates_.size()) {
      throw DataError("feature matrix shape does not match symbols x dates");
    }
  }
  const int vol = FeatureIndex("volume");
  if (vol >= 0) {
    for (double v : features_[static_cast<std::size_t>(vol)].raw()) {
      if (!IsMissing(v) && v < 0) throw DataError("negative volume");
    }
  }
  if (warmup_days_ > dates_.size()) throw DataError("warm-up longer than the panel");
}

int PanelTensor::FeatureIndex(std::string_view name) const {
  for (std::size_t j = 0; j < feature_names_.size(); ++j) {
    if (feature_names_[j] == name) return static_cast<int>(j);
  }
  return -1;
}

PanelTensor PanelTensor::SliceDays(std::size_t begin, std::size_t end, std::size_t warmup) const {
  std::vector<Date> dates(dates_.begin() + static_cast<std::ptrdiff_t>(begin),
                          dates_.begin() + static_cast<std::ptrdiff_t>(end));
  std::vector<FactorMatrix> features;
  for (const auto& m : features_) {
    FactorMatrix out(m.assets(), end - begin);
    for (std::size_t i = 0; i < m.assets(); ++i) {
      for (std::size_t t = begin; t < end; ++t) out.at(i, t - begin) = m.at(i, t);
    }
    features.push_back(std::move(out));
  }
  return PanelTensor(symbols_, std::move(dates), feature_names_, std::move(features), warmup);
}

PanelTensor PanelTensor::SelectAssets(const std::vector<std::size_t>& assets) const {
  std::vector<std::string> symbols;
  for (std::size_t i : assets) symbols.push_back(symbols_.at(i));
  std::vector<FactorMatrix> features;
  for (const auto& m : features_) {
    FactorMatrix out(assets.size(), m.days());
    for (std::size_t k = 0; k < assets.size(); ++k) {
      for (std::size_t t = 0; t < m.days(); ++t) out.at(k, t) = m.at(assets[k], t);
    }
    features.push_back(std::move(out));
  }
  return PanelTensor(std::move(symbols), dates_, feature_names_, std::move(features),
                     warmup_days_);
}

TargetPanel ForwardReturns(const PanelTensor& panel, int horizon_days) {
  if (horizon_days <= 0) throw DataError("horizon_days must be positive");
  const int close = panel.FeatureIndex("close");
  if (close < 0) throw DataError("forward returns need a close feature");
  const auto& c = panel.feature(static_cast<std::size_t>(close));
  TargetPanel target{FactorMatrix(panel.assets(), panel.days()), horizon_days};
  const std::size_t h = static_cast<std::size_t>(horizon_days);
  for (std::size_t i = 0; i < panel.assets(); ++i) {
    for (std::size_t t = 0; t + h < panel.days(); ++t) {
      const double a = c.at(i, t);
      const double b = c.at(i, t + h);
      if (!IsMissing(a) && !IsMissing(b) && a != 0) target.returns.at(i, t) = b / a - 1.0;
    }
  }
  return target;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string_view> SplitFields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? line.size() - start
                                                                      : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string_view Trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool ParseCell(std::string_view text, double* out) {
  text = Trim(text);
  if (text.empty() || text == "nan" || text == "NaN" || text == "NA") {
    *out = Missing();
    return true;
  }
  auto res = std::from_chars(text.data(), text.data() + text.size(), *out);
  return res.ec == std::errc() && res.ptr == text.data() + text.size();
}

std::string FormatCell(double v) {
  if (IsMissing(v)) return "";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

MarketData LoadCsv(const std::filesystem::path& path, const std::vector<std::string>& features,
                   int horizon_days) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  const auto header = SplitFields(line);
  const std::size_t m = features.size();
  bool bad_header = header.size() != m + 2 && header.size() != m + 3;
  if (!bad_header) {
    bad_header = Trim(header[0]) != "date" || Trim(header[1]) != "symbol";
    for (std::size_t j = 0; j < m && !bad_header; ++j) bad_header = Trim(header[j + 2]) != features[j];
    if (header.size() == m + 3 && Trim(header[m + 2]) != "target") bad_header = true;
  }
  if (bad_header) {
    std::string want = "date,symbol";
    for (const auto& f : features) want += "," + f;
    throw DataError(path.string() + ":1: header must be '" + want + "[,target]'");
  }
  const bool has_target = header.size() == m + 3;

  struct Row {
    std::vector<double> values;
    double target;
  };
  std::map<std::pair<Date, std::string>, Row> rows;
  std::set<Date> dates;
  std::set<std::string> symbols;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (Trim(line).empty()) continue;
    const auto fields = SplitFields(line);
    const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
    if (fields.size() != header.size()) {
      throw DataError(where + "expected " + std::to_string(header.size()) + " fields, got " +
                      std::to_string(fields.size()));
    }
    Date date;
    try {
      date = Date::Parse(Trim(fields[0]));
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
    std::string symbol(Trim(fields[1]));
    if (symbol.empty()) throw DataError(where + "empty symbol");
    Row row{std::vector<double>(m), Missing()};
    for (std::size_t j = 0; j < m; ++j) {
      if (!ParseCell(fields[j + 2], &row.values[j])) {
        throw DataError(where + "bad number '" + std::string(fields[j + 2]) + "'");
      }
    }
    if (has_target && !ParseCell(fields[m + 2], &row.target)) {
      throw DataError(where + "bad target '" + std::string(fields[m + 2]) + "'");
    }
    auto key = std::make_pair(date, symbol);
    if (rows.count(key)) {
      throw DataError(where + "duplicate row for (" + date.ToString() + ", " + symbol + ")");
    }
    rows.emplace(std::move(key), std::move(row));
    dates.insert(date);
    symbols.insert(symbol);
  }
  if (dates.size() < 2) throw DataError(path.string() + ": need at least 2 distinct dates");

  std::vector<Date> date_axis(dates.begin(), dates.end());
  std::vector<std::string> symbol_axis(symbols.begin(), symbols.end());
  std::map<Date, std::size_t> day_of;
  for (std::size_t t = 0; t < date_axis.size(); ++t) day_of[date_axis[t]] = t;
  std::map<std::string, std::size_t> asset_of;
  for (std::size_t i = 0; i < symbol_axis.size(); ++i) asset_of[symbol_axis[i]] = i;

  std::vector<FactorMatrix> mats(m, FactorMatrix(symbol_axis.size(), date_axis.size()));
  FactorMatrix target(symbol_axis.size(), date_axis.size());
  for (const auto& [key, row] : rows) {
    const std::size_t t = day_of[key.first];
    const std::size_t i = asset_of[key.second];
    for (std::size_t j = 0; j < m; ++j) mats[j].at(i, t) = row.values[j];
    target.at(i, t) = row.target;
  }
  MarketData data{PanelTensor(std::move(symbol_axis), std::move(date_axis), features,
                              std::move(mats)),
                  {}};
  if (has_target) {
    data.target = TargetPanel{std::move(target), horizon_days};
  } else {
    data.target = ForwardReturns(data.panel, horizon_days);
  }
  return data;
}

void WriteCsv(const std::filesystem::path& path, const MarketData& data, bool include_target) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  const auto& panel = data.panel;
  out << "date,symbol";
  for (const auto& f : panel.feature_names()) out << ',' << f;
  if (include_target) out << ",target";
  out << '\n';
  for (std::size_t t = 0; t < panel.days(); ++t) {
    const std::string date = panel.dates()[t].ToString();
    for (std::size_t i = 0; i < panel.assets(); ++i) {
      bool any = false;
      for (std::size_t j = 0; j < panel.feature_count(); ++j) {
        any = any || !IsMissing(panel.value(i, j, t));
      }
      if (include_target) any = any || !IsMissing(data.target.returns.at(i, t));
      if (!any) continue;
      out << date << ',' << panel.symbols()[i];
      for (std::size_t j = 0; j < panel.feature_count(); ++j) {
        out << ',' << FormatCell(panel.value(i, j, t));
      }
      if (include_target) out << ',' << FormatCell(data.target.returns.at(i, t));
      out << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Synthetic market

namespace {

// Cross-sectional z-score per day over defined cells; days with fewer than two
// defined cells or zero spread become missing.
void StandardizeDays(FactorMatrix& m) {
  for (std::size_t t = 0; t < m.days(); ++t) {
    double sum = 0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < m.assets(); ++i) {
      if (!IsMissing(m.at(i, t))) {
        sum += m.at(i, t);
        ++count;
      }
    }
    double sd = 0;
    const double mean = count ? sum / static_cast<double>(count) : 0;
    if (count >= 2) {
      double ss = 0;
      for (std::size_t i = 0; i < m.assets(); ++i) {
        if (!IsMissing(m.at(i, t))) ss += (m.at(i, t) - mean) * (m.at(i, t) - mean);
      }
      sd = std::sqrt(ss / static_cast<double>(count - 1));
    }
    for (std::size_t i = 0; i < m.assets(); ++i) {
      double& v = m.at(i, t);
      v = (count >= 2 && sd > 0 && !IsMissing(v)) ? (v - mean) / sd : Missing();
    }
  }
}

std::vector<Date> BusinessDays(std::size_t n) {
  std::vector<Date> out;
  std::chrono::sys_days day = std::chrono::sys_days(std::chrono::year{2020} / 1 / 1);
  while (out.size() < n) {
    const std::chrono::weekday wd{day};
    if (wd != std::chrono::Saturday && wd != std::chrono::Sunday) {
      out.push_back(Date{std::chrono::year_month_day(day)});
    }
    day += std::chrono::days{1};
  }
  return out;
}

}  // namespace

MarketData SynthMarket(const SynthParams& params, const RpnProgram& signal) {
  if (params.n_assets < 2) throw DataError("synthetic market needs at least 2 assets");
  if (params.n_days <= static_cast<std::size_t>(signal.Lookback())) {
    throw DataError("n_days must exceed the planted formula's lookback (" +
                    std::to_string(signal.Lookback()) + ")");
  }
  if (params.signal_strength < 0 || params.signal_strength > 1) {
    throw DataError("signal_strength must lie in [0, 1]");
  }
  const std::size_t n = params.n_assets;
  const std::size_t days = params.n_days;
  std::mt19937_64 rng(params.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> start_price(20.0, 100.0);

  std::vector<FactorMatrix> f(6, FactorMatrix(n, days));
  auto& open = f[0];
  auto& high = f[1];
  auto& low = f[2];
  auto& close = f[3];
  auto& volume = f[4];
  auto& vwap = f[5];
  std::vector<double> price(n);
  for (double& p : price) p = start_price(rng);
  for (std::size_t t = 0; t < days; ++t) {
    const double market = params.market_vol * gauss(rng);
    for (std::size_t i = 0; i < n; ++i) {
      const double prev = price[i];
      const double r = market + params.asset_vol * gauss(rng);
      price[i] = prev * std::exp(r);
      const double o = prev * std::exp(0.005 * gauss(rng));
      const double c = price[i];
      open.at(i, t) = o;
      close.at(i, t) = c;
      high.at(i, t) = std::max(o, c) * std::exp(std::fabs(0.005 * gauss(rng)));
      low.at(i, t) = std::min(o, c) * std::exp(-std::fabs(0.005 * gauss(rng)));
      vwap.at(i, t) = (high.at(i, t) + low.at(i, t) + c) / 3.0;
      volume.at(i, t) = std::exp(std::log(1e6) + 0.3 * gauss(rng));
    }
  }
  std::vector<std::string> symbols;
  for (std::size_t i = 0; i < n; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "S%04zu", i);
    symbols.emplace_back(buf);
  }
  MarketData data{PanelTensor(std::move(symbols), BusinessDays(days), DefaultFeatures(),
                              std::move(f)),
                  {}};

  FactorMatrix z = Evaluate(signal, data.panel);
  if (z.AllMissing()) throw DataError("planted formula evaluates to all-missing");
  StandardizeDays(z);
  FactorMatrix y(n, days);
  const double s = params.signal_strength;
  for (std::size_t t = 0; t < days; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const double noise = gauss(rng);
      if (!IsMissing(z.at(i, t))) y.at(i, t) = s * z.at(i, t) + (1.0 - s) * noise;
    }
  }
  StandardizeDays(y);
  const std::size_t h = static_cast<std::size_t>(params.horizon_days);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = days > h ? days - h : 0; t < days; ++t) y.at(i, t) = Missing();
  }
  data.target = TargetPanel{std::move(y), params.horizon_days};
  return data;
}

// ---------------------------------------------------------------------------
// Split

SplitSpec FractionalSplit(const std::vector<Date>& dates, double train_frac, double valid_frac) {
  const std::size_t n = dates.size();
  const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * train_frac));
  const auto n_valid = static_cast<std::size_t>(std::llround(static_cast<double>(n) * valid_frac));
  if (n_train == 0 || n_valid == 0 || n_train + n_valid >= n) {
    throw DataError("fractional split leaves an empty part");
  }
  return SplitSpec{{dates[0], dates[n_train - 1]},
                   {dates[n_train], dates[n_train + n_valid - 1]},
                   {dates[n_train + n_valid], dates[n - 1]}};
}

std::array<MarketData, 3> Split(const MarketData& data, const SplitSpec& spec,
                                std::size_t lookback) {
  const std::array<DateRange, 3> ranges = {spec.train, spec.valid, spec.test};
  for (const auto& r : ranges) {
    if (r.last < r.first) throw DataError("split range ends before it starts");
  }
  if (!(spec.train.last < spec.valid.first) || !(spec.valid.last < spec.test.first)) {
    throw DataError("split ranges must be disjoint and ordered train < valid < test");
  }
  const auto& dates = data.panel.dates();
  std::array<MarketData, 3> out;
  for (std::size_t k = 0; k < 3; ++k) {
    const auto begin = static_cast<std::size_t>(
        std::lower_bound(dates.begin(), dates.end(), ranges[k].first) - dates.begin());
    const auto end = static_cast<std::size_t>(
        std::upper_bound(dates.begin(), dates.end(), ranges[k].last) - dates.begin());
    if (begin >= end) {
      throw DataError("split part " + std::to_string(k) + " holds no trading days");
    }
    const std::size_t start = begin >= lookback ? begin - lookback : 0;
    out[k].panel = data.panel.SliceDays(start, end, begin - start);
    FactorMatrix y(data.panel.assets(), end - start);
    for (std::size_t i = 0; i < data.panel.assets(); ++i) {
      for (std::size_t t = start; t < end; ++t) y.at(i, t - start) = data.target.returns.at(i, t);
    }
    out[k].target = TargetPanel{std::move(y), data.target.horizon_days};
  }
  return out;
}

}  // namespace alphamine
