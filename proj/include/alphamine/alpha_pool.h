#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "alphamine/factor_matrix.h"
#include "alphamine/formula.h"
#include "alphamine/metrics.h"
#include "alphamine/panel.h"

namespace alphamine {

// Per day: subtract the cross-sectional mean, then divide by the largest
// absolute deviation. Days with no spread become missing.
FactorMatrix NormalizeCrossSection(const FactorMatrix& raw);

struct PoolEntry {
  RpnProgram program;
  std::shared_ptr<const FactorMatrix> values;  // normalized
  double weight = 0;
};

struct WeightFitConfig {
  double lr = 5e-3;
  int max_iters = 1000;
  double tol = 1e-8;
};

struct FitReport {
  double initial_loss = 0;
  double final_loss = 0;
  int iterations = 0;
};

struct ProposeResult {
  double ic = Missing();  // pooled mean IC; missing when the candidate is unusable
  double ir = Missing();
  bool accepted = false;   // candidate is in the pool afterwards
  bool duplicate = false;
  bool evaluable = true;
};

struct PoolMetrics {
  double ic = Missing();
  double rank_ic = Missing();
  double ir = Missing();
};

// Linear combination z' = sum_k w_k f_k of normalized factors, fitted to a
// target by gradient descent on
//   L(w) = (1/L) sum_days || z'_day - y_day ||^2
// over cells where the target and at least one factor are present. A missing
// factor cell contributes 0.
class FactorPool {
 public:
  FactorPool(std::shared_ptr<const MarketData> data, std::size_t capacity = 10,
             WeightFitConfig fit = {});

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t capacity() const { return capacity_; }
  const std::vector<PoolEntry>& entries() const { return entries_; }
  std::vector<double> weights() const;
  void set_weights(const std::vector<double>& w);
  const MarketData& data() const { return *data_; }
  const WeightFitConfig& fit_config() const { return fit_; }

  // Evaluate + normalize a program on this pool's panel.
  std::shared_ptr<const FactorMatrix> Prepare(const RpnProgram& program) const;

  bool Contains(const RpnProgram& program) const;

  // Gradient descent from the current weights.
  FitReport FitWeights() { return FitWeights(fit_); }
  FitReport FitWeights(const WeightFitConfig& config);

  double Loss() const;
  double Loss(const std::vector<double>& w) const;
  // Analytic dL/dw at w.
  std::vector<double> Gradient(const std::vector<double>& w) const;

  FactorMatrix Combined() const;
  double MeanIc() const;
  PoolMetrics Metrics() const;

  // Append (weight 0), refit, evict the smallest |weight| while over
  // capacity, and score the result.
  ProposeResult Propose(const RpnProgram& candidate);
  ProposeResult Propose(const RpnProgram& candidate,
                        std::shared_ptr<const FactorMatrix> normalized);
  // Propose on a copy; this pool is untouched.
  ProposeResult Score(const RpnProgram& candidate,
                      std::shared_ptr<const FactorMatrix> normalized) const;

  // Drop argmin |w| (earliest on ties) and refit. Returns the removed index.
  std::size_t EvictSmallest();

  // Adds a factor with a fixed weight, no refit (snapshot loading).
  void AddWithWeight(const RpnProgram& program, std::shared_ptr<const FactorMatrix> normalized,
                     double weight);

 private:
  double Quadratic(const std::vector<double>& w) const;  // loss minus the y'y term
  FitReport Descend(const WeightFitConfig& config);      // losses exclude the y'y term
  std::vector<double> Masked(const FactorMatrix& values) const;
  void AppendGram(const FactorMatrix& values);
  void RemoveGram(std::size_t k);
  double TargetEnergy() const;
  void ScoreInto(ProposeResult& result) const;

  std::shared_ptr<const MarketData> data_;
  std::size_t capacity_;
  WeightFitConfig fit_;
  std::vector<PoolEntry> entries_;
  std::vector<std::vector<double>> gram_;  // (1/L) <f_j, f_k>
  std::vector<double> cross_;              // (1/L) <f_k, y>
  // Factor values zeroed outside cells where both they and y are defined.
  std::vector<std::shared_ptr<const std::vector<double>>> masked_;
  std::shared_ptr<const std::vector<double>> target_;
  double days_ = 1;                        // L, non-warm-up days
};

// Combined-signal metrics of weighted programs on another data set.
FactorMatrix CombineOn(const std::vector<RpnProgram>& programs, const std::vector<double>& weights,
                       const PanelTensor& panel);
PoolMetrics ScoreOn(const std::vector<RpnProgram>& programs, const std::vector<double>& weights,
                    const MarketData& data);

// Snapshot file: one "weight<TAB>infix" line per factor.
struct WeightedProgram {
  double weight = 0;
  RpnProgram program;
};
void SavePool(const std::filesystem::path& path, const FactorPool& pool);
std::vector<WeightedProgram> LoadPool(const std::filesystem::path& path, const Grammar& grammar);

}  // namespace alphamine
