#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "alphamine/alpha_pool.h"
#include "alphamine/evaluator.h"
#include "alphamine/formula.h"
#include "alphamine/panel.h"
#include "alphamine/policy.h"

namespace alphamine {

// Information-ratio penalty schedule. The threshold is
//   clip((t - alpha) * eta, 0, delta)
// where t counts trainer steps.
struct ShapingSchedule {
  double lambda = 0.02;
  double alpha = 9e4;
  double eta = 2.65e-6;
  double delta = 0.3;
  std::int64_t t = 0;

  double Threshold() const;
  void Validate() const;
};

// ic - lambda * [ir <= threshold]. Missing ic maps to `floor`; missing ir
// always fails the threshold test.
double ShapedReward(double ic, double ir, const ShapingSchedule& schedule, double floor = -1.0);

enum class OptimizerKind { kSgd, kAdam };

struct TrainConfig {
  int batch_size = 16;
  double learning_rate = 1e-3;
  std::int64_t total_steps = 0;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double reward_floor = -1.0;
  bool use_baseline = true;
  int max_len = 20;
  std::size_t pool_capacity = 10;
  PolicyConfig policy;
  WeightFitConfig fit;
  int threads = 1;
  std::size_t cache_entries = 256;    // normalized factors
  std::size_t subtree_entries = 512;  // intermediate operator results
  int eval_every = 100;        // validation cadence in steps; 0 disables
  int checkpoint_every = 0;    // 0 disables
  std::int64_t patience = 0;   // early stop on validation IC; 0 disables
  bool diagnostics = false;    // per-step estimator variance in the report

  void Validate() const;
};

// Gradient ascent on the policy parameters.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr, std::size_t n);
  void Ascend(std::vector<double>& params, const std::vector<double>& grad);

 private:
  OptimizerKind kind_;
  double lr_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  std::int64_t t_ = 0;
  std::vector<double> m_, v_;
};

struct StepReport {
  std::int64_t step = 0;
  std::vector<double> rewards;  // sampled rollouts
  double baseline = 0;          // greedy rollout reward (0 when disabled)
  double greedy_reward = 0;
  double mean_reward = 0;
  double pool_ic = Missing();
  double pool_ir = Missing();
  double grad_norm = 0;
  double threshold = 0;
  double valid_ic = Missing();  // only on validation steps
  bool aborted = false;
  std::string diagnostic;
  std::string committed;        // infix of the proposed best sample

  // Filled when diagnostics are on. Estimator variances are the trace of
  // the sample covariance of the per-sample terms divided by N.
  double var_full = 0;
  double var_logit = 0;
  double r_max = 0;                // max |reward| over samples and baseline
  double score_norm_max = 0;       // max_i ||grad log pi(tau_i)|| / T_i
  int max_steps = 0;               // longest rollout in the batch
};

// Thread-safe LRU of normalized factor values keyed by program text. A null
// entry marks an unevaluable program.
class FactorCache {
 public:
  explicit FactorCache(std::size_t capacity) : capacity_(capacity) {}
  bool Get(const std::string& key, std::shared_ptr<const FactorMatrix>& out);
  void Put(const std::string& key, std::shared_ptr<const FactorMatrix> value);
  std::size_t size() const;

 private:
  using Entry = std::pair<std::string, std::shared_ptr<const FactorMatrix>>;
  std::size_t capacity_;
  mutable std::mutex mu_;
  std::list<Entry> order_;
  std::unordered_map<std::string, std::list<Entry>::iterator> index_;
};

class Trainer {
 public:
  Trainer(TrainConfig config, std::shared_ptr<const MarketData> train,
          std::shared_ptr<const MarketData> valid = nullptr, ShapingSchedule schedule = {});

  StepReport Step();

  // Validation pool IC of the current pool; missing without validation data
  // or with an empty pool.
  double ValidationIc() const;

  const PolicyParams& params() const { return params_; }
  PolicyParams& mutable_params() { return params_; }
  const FactorPool& pool() const { return pool_; }
  const ShapingSchedule& schedule() const { return schedule_; }
  const Grammar& grammar() const { return grammar_; }
  const TrainConfig& config() const { return config_; }

  // Shaped reward of one program against the current pool, no commit.
  double Reward(const RpnProgram& program, ProposeResult* detail = nullptr);

 private:
  std::shared_ptr<const FactorMatrix> Normalized(const RpnProgram& program);
  double Shape(const ProposeResult& r) const;

  TrainConfig config_;
  std::shared_ptr<const MarketData> train_;
  std::shared_ptr<const MarketData> valid_;
  ShapingSchedule schedule_;
  Grammar grammar_;
  PolicyParams params_;
  Optimizer optimizer_;
  FactorPool pool_;
  FactorCache cache_;
  SubtreeCache subtrees_;
  std::unordered_map<std::string, ProposeResult> memo_;  // valid for the current pool
  std::mt19937_64 rng_;
  double pool_ic_ = Missing();
  double pool_ir_ = Missing();
};

struct TrainResult {
  PolicyParams params;
  std::vector<WeightedProgram> pool;
  std::vector<StepReport> history;
  double best_valid_ic = Missing();
  bool stopped_early = false;
};

inline constexpr const char* kHistoryHeader =
    "step,mean_reward,baseline,pool_ic,pool_ir,grad_norm,threshold,valid_ic";
std::string HistoryRow(const StepReport& report);

// Runs total_steps trainer steps (or until early stop). With a run
// directory, appends history.csv per step, writes checkpoints/step_<t> and
// pool.txt.
// `on_step` sees every report after validation.
TrainResult Train(const TrainConfig& config, std::shared_ptr<const MarketData> train,
                  std::shared_ptr<const MarketData> valid, ShapingSchedule schedule = {},
                  const std::filesystem::path& run_dir = {},
                  const std::function<void(const StepReport&)>& on_step = {});

}  // namespace alphamine
