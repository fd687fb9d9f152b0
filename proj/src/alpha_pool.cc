#include "alphamine/alpha_pool.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>

#include "alphamine/evaluator.h"

namespace alphamine {

FactorMatrix NormalizeCrossSection(const FactorMatrix& raw) {
  FactorMatrix out(raw.assets(), raw.days());
  for (std::size_t t = 0; t < raw.days(); ++t) {
    double sum = 0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < raw.assets(); ++i) {
      const double v = raw.at(i, t);
      if (IsMissing(v)) continue;
      sum += v;
      ++count;
    }
    if (count == 0) continue;
    const double mean = sum / static_cast<double>(count);
    double scale = 0;
    for (std::size_t i = 0; i < raw.assets(); ++i) {
      const double v = raw.at(i, t);
      if (!IsMissing(v)) scale = std::max(scale, std::fabs(v - mean));
    }
    if (!(scale > 0) || !std::isfinite(scale)) continue;
    for (std::size_t i = 0; i < raw.assets(); ++i) {
      const double v = raw.at(i, t);
      if (!IsMissing(v)) out.at(i, t) = (v - mean) / scale;
    }
  }
  return out;
}

FactorPool::FactorPool(std::shared_ptr<const MarketData> data, std::size_t capacity,
                       WeightFitConfig fit)
    : data_(std::move(data)), capacity_(capacity), fit_(fit) {
  if (!data_) throw std::invalid_argument("factor pool needs data");
  if (capacity_ == 0) throw std::invalid_argument("pool capacity must be positive");
  const std::size_t warm = data_->panel.warmup_days();
  days_ = static_cast<double>(std::max<std::size_t>(1, data_->panel.days() - warm));
}

std::vector<double> FactorPool::weights() const {
  std::vector<double> w;
  for (const auto& e : entries_) w.push_back(e.weight);
  return w;
}

void FactorPool::set_weights(const std::vector<double>& w) {
  if (w.size() != entries_.size()) throw std::invalid_argument("weight count mismatch");
  for (std::size_t k = 0; k < w.size(); ++k) entries_[k].weight = w[k];
}

std::shared_ptr<const FactorMatrix> FactorPool::Prepare(const RpnProgram& program) const {
  return std::make_shared<const FactorMatrix>(
      NormalizeCrossSection(Evaluate(program, data_->panel)));
}

bool FactorPool::Contains(const RpnProgram& program) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const PoolEntry& e) { return e.program == program; });
}

std::vector<double> FactorPool::Masked(const FactorMatrix& values) const {
  const auto& y = data_->target.returns;
  const std::size_t first = data_->panel.warmup_days();
  std::vector<double> out(values.raw().size(), 0.0);
  for (std::size_t i = 0; i < values.assets(); ++i) {
    for (std::size_t t = first; t < values.days(); ++t) {
      const double f = values.at(i, t);
      if (!IsMissing(f) && !IsMissing(y.at(i, t))) out[i * values.days() + t] = f;
    }
  }
  return out;
}

void FactorPool::AppendGram(const FactorMatrix& values) {
  if (!target_) {
    target_ = std::make_shared<const std::vector<double>>(Masked(data_->target.returns));
  }
  auto f = std::make_shared<const std::vector<double>>(Masked(values));
  auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t c = 0; c < a.size(); ++c) s += a[c] * b[c];
    return s;
  };
  const std::size_t k_new = entries_.size();  // index the new entry will take
  std::vector<double> row(k_new + 1, 0.0);
  for (std::size_t k = 0; k < k_new; ++k) row[k] = dot(*f, *masked_[k]) / days_;
  row[k_new] = dot(*f, *f) / days_;
  for (std::size_t k = 0; k < k_new; ++k) gram_[k].push_back(row[k]);
  gram_.push_back(std::move(row));
  cross_.push_back(dot(*f, *target_) / days_);
  masked_.push_back(std::move(f));
}

void FactorPool::RemoveGram(std::size_t k) {
  gram_.erase(gram_.begin() + static_cast<std::ptrdiff_t>(k));
  for (auto& row : gram_) row.erase(row.begin() + static_cast<std::ptrdiff_t>(k));
  cross_.erase(cross_.begin() + static_cast<std::ptrdiff_t>(k));
  masked_.erase(masked_.begin() + static_cast<std::ptrdiff_t>(k));
}

double FactorPool::TargetEnergy() const {
  const auto& y = data_->target.returns;
  const std::size_t first = data_->panel.warmup_days();
  double sum = 0;
  for (std::size_t i = 0; i < y.assets(); ++i) {
    for (std::size_t t = first; t < y.days(); ++t) {
      const double v = y.at(i, t);
      if (IsMissing(v)) continue;
      const bool covered = std::any_of(entries_.begin(), entries_.end(), [&](const PoolEntry& e) {
        return !IsMissing(e.values->at(i, t));
      });
      if (covered) sum += v * v;
    }
  }
  return sum / days_;
}

double FactorPool::Quadratic(const std::vector<double>& w) const {
  double q = 0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    double gw = 0;
    for (std::size_t k = 0; k < w.size(); ++k) gw += gram_[j][k] * w[k];
    q += w[j] * gw - 2.0 * cross_[j] * w[j];
  }
  return q;
}

double FactorPool::Loss(const std::vector<double>& w) const {
  return Quadratic(w) + TargetEnergy();
}

double FactorPool::Loss() const { return Loss(weights()); }

std::vector<double> FactorPool::Gradient(const std::vector<double>& w) const {
  std::vector<double> g(w.size(), 0.0);
  for (std::size_t j = 0; j < w.size(); ++j) {
    double gw = 0;
    for (std::size_t k = 0; k < w.size(); ++k) gw += gram_[j][k] * w[k];
    g[j] = 2.0 * (gw - cross_[j]);
  }
  return g;
}

FitReport FactorPool::FitWeights(const WeightFitConfig& config) {
  const double energy = TargetEnergy();
  FitReport report = Descend(config);
  report.initial_loss += energy;
  report.final_loss += energy;
  return report;
}

// Gradient descent on q(w) = w'Gw - 2b'w. Along g = 2(Gw - b),
//   q(w - s g) = q(w) - s g'g + s^2 g'Gg,
// so each step needs one product Gg and Gw is updated in place.
FitReport FactorPool::Descend(const WeightFitConfig& config) {
  if (entries_.empty()) throw std::logic_error("cannot fit weights of an empty pool");
  bool overlap = false;
  for (std::size_t k = 0; k < gram_.size(); ++k) overlap = overlap || gram_[k][k] > 0;
  if (!overlap) throw DataError("pool factors share no defined cells with the target");

  const std::size_t m = entries_.size();
  std::vector<double> w = weights();
  std::vector<double> gw(m), g(m), gg(m);
  auto product = [&](const std::vector<double>& x, std::vector<double>& out) {
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < m; ++k) s += gram_[j][k] * x[k];
      out[j] = s;
    }
  };
  FitReport report;
  double q = Quadratic(w);
  report.initial_loss = q;
  double lr = config.lr;
  product(w, gw);
  for (int it = 0; it < config.max_iters; ++it) {
    if (it % 64 == 63) product(w, gw);  // bound drift of the running Gw
    double gg_norm = 0;
    for (std::size_t j = 0; j < m; ++j) {
      g[j] = 2.0 * (gw[j] - cross_[j]);
      gg_norm += g[j] * g[j];
    }
    if (std::sqrt(gg_norm) < config.tol) break;
    product(g, gg);
    double curv = 0;
    for (std::size_t j = 0; j < m; ++j) curv += g[j] * gg[j];
    // Halve the step until the loss does not increase.
    bool moved = false;
    for (int halvings = 0; halvings < 60; ++halvings) {
      const double change = -lr * gg_norm + lr * lr * curv;
      if (change <= 0) {
        for (std::size_t j = 0; j < m; ++j) {
          w[j] -= lr * g[j];
          gw[j] -= lr * gg[j];
        }
        q += change;
        moved = true;
        break;
      }
      lr *= 0.5;
    }
    report.iterations = it + 1;
    if (!moved) break;
  }
  set_weights(w);
  report.final_loss = Quadratic(w);
  return report;
}

FactorMatrix FactorPool::Combined() const {
  const std::size_t n = data_->panel.assets();
  const std::size_t days = data_->panel.days();
  FactorMatrix z(n, days);
  auto& raw = z.raw();
  std::vector<std::uint8_t> present(raw.size(), 0);
  std::fill(raw.begin(), raw.end(), 0.0);
  for (const auto& e : entries_) {
    const auto& v = e.values->raw();
    const double w = e.weight;
    for (std::size_t c = 0; c < raw.size(); ++c) {
      const bool ok = !IsMissing(v[c]);
      raw[c] += ok ? w * v[c] : 0.0;
      present[c] |= ok;
    }
  }
  for (std::size_t c = 0; c < raw.size(); ++c) {
    if (!present[c]) raw[c] = Missing();
  }
  return z;
}

double FactorPool::MeanIc() const {
  if (entries_.empty()) return Missing();
  return alphamine::MeanIc(DailyIc(Combined(), data_->target.returns, data_->panel.warmup_days()));
}

PoolMetrics FactorPool::Metrics() const {
  PoolMetrics m;
  if (entries_.empty()) return m;
  const FactorMatrix z = Combined();
  const std::size_t first = data_->panel.warmup_days();
  const DailyIcSeries ic = DailyIc(z, data_->target.returns, first);
  m.ic = alphamine::MeanIc(ic);
  m.ir = InformationRatio(ic);
  m.rank_ic = alphamine::MeanIc(DailyRankIc(z, data_->target.returns, first));
  return m;
}

void FactorPool::ScoreInto(ProposeResult& result) const {
  if (entries_.empty()) return;
  const DailyIcSeries ic =
      DailyIc(Combined(), data_->target.returns, data_->panel.warmup_days());
  result.ic = alphamine::MeanIc(ic);
  result.ir = InformationRatio(ic);
}

std::size_t FactorPool::EvictSmallest() {
  if (entries_.empty()) throw std::logic_error("cannot evict from an empty pool");
  std::size_t victim = 0;
  for (std::size_t k = 1; k < entries_.size(); ++k) {
    if (std::fabs(entries_[k].weight) < std::fabs(entries_[victim].weight)) victim = k;
  }
  entries_.erase(entries_.begin() + static_cast<std::ptrdiff_t>(victim));
  RemoveGram(victim);
  if (!entries_.empty()) Descend(fit_);
  return victim;
}

void FactorPool::AddWithWeight(const RpnProgram& program,
                               std::shared_ptr<const FactorMatrix> normalized, double weight) {
  AppendGram(*normalized);
  entries_.push_back(PoolEntry{program, std::move(normalized), weight});
}

ProposeResult FactorPool::Propose(const RpnProgram& candidate) {
  if (Contains(candidate)) return Propose(candidate, nullptr);
  return Propose(candidate, Prepare(candidate));
}

ProposeResult FactorPool::Propose(const RpnProgram& candidate,
                                  std::shared_ptr<const FactorMatrix> normalized) {
  ProposeResult result;
  if (Contains(candidate)) {
    result.duplicate = true;
    ScoreInto(result);
    return result;
  }
  if (!normalized) normalized = Prepare(candidate);
  // Unusable when no normalized cell meets a defined target cell.
  bool usable = false;
  {
    const auto& y = data_->target.returns;
    const std::size_t first = data_->panel.warmup_days();
    for (std::size_t i = 0; i < normalized->assets() && !usable; ++i) {
      for (std::size_t t = first; t < normalized->days(); ++t) {
        if (!IsMissing(normalized->at(i, t)) && !IsMissing(y.at(i, t))) {
          usable = true;
          break;
        }
      }
    }
  }
  if (!usable) {
    result.evaluable = false;
    return result;
  }
  AppendGram(*normalized);
  entries_.push_back(PoolEntry{candidate, std::move(normalized), 0.0});
  Descend(fit_);
  while (entries_.size() > capacity_) EvictSmallest();
  result.accepted = Contains(candidate);
  ScoreInto(result);
  return result;
}

ProposeResult FactorPool::Score(const RpnProgram& candidate,
                                std::shared_ptr<const FactorMatrix> normalized) const {
  FactorPool copy = *this;
  return copy.Propose(candidate, std::move(normalized));
}

// ---------------------------------------------------------------------------

FactorMatrix CombineOn(const std::vector<RpnProgram>& programs, const std::vector<double>& weights,
                       const PanelTensor& panel) {
  FactorMatrix z(panel.assets(), panel.days());
  auto& raw = z.raw();
  for (std::size_t k = 0; k < programs.size(); ++k) {
    const FactorMatrix v = NormalizeCrossSection(Evaluate(programs[k], panel));
    for (std::size_t c = 0; c < raw.size(); ++c) {
      if (IsMissing(v.raw()[c])) continue;
      raw[c] = (IsMissing(raw[c]) ? 0.0 : raw[c]) + weights[k] * v.raw()[c];
    }
  }
  return z;
}

PoolMetrics ScoreOn(const std::vector<RpnProgram>& programs, const std::vector<double>& weights,
                    const MarketData& data) {
  PoolMetrics m;
  if (programs.empty()) return m;
  const FactorMatrix z = CombineOn(programs, weights, data.panel);
  const std::size_t first = data.panel.warmup_days();
  const DailyIcSeries ic = DailyIc(z, data.target.returns, first);
  m.ic = MeanIc(ic);
  m.ir = InformationRatio(ic);
  m.rank_ic = MeanIc(DailyRankIc(z, data.target.returns, first));
  return m;
}

void SavePool(const std::filesystem::path& path, const FactorPool& pool) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& e : pool.entries()) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), e.weight);
    out << std::string(buf, res.ptr) << '\t' << ToInfix(e.program) << '\n';
  }
}

std::vector<WeightedProgram> LoadPool(const std::filesystem::path& path, const Grammar& grammar) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open pool file " + path.string());
  std::vector<WeightedProgram> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
    if (tab == std::string::npos) throw DataError(where + "expected 'weight<TAB>expression'");
    double w = 0;
    auto res = std::from_chars(line.data(), line.data() + tab, w);
    if (res.ec != std::errc() || res.ptr != line.data() + tab) {
      throw DataError(where + "bad weight '" + line.substr(0, tab) + "'");
    }
    try {
      out.push_back(WeightedProgram{w, ParseInfix(line.substr(tab + 1), grammar)});
    } catch (const FormulaError& e) {
      throw DataError(where + e.what());
    }
  }
  return out;
}

}  // namespace alphamine
