#include "alphamine/trainer.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <thread>

#include "alphamine/evaluator.h"

namespace alphamine {

double ShapingSchedule::Threshold() const {
  const double raw = (static_cast<double>(t) - alpha) * eta;
  return std::min(std::max(raw, 0.0), delta);
}

void ShapingSchedule::Validate() const {
  if (!(lambda >= 0) || !(alpha >= 0) || !(eta >= 0) || !(delta >= 0)) {
    throw std::invalid_argument("shaping parameters lambda, alpha, eta, delta must be >= 0");
  }
}

double ShapedReward(double ic, double ir, const ShapingSchedule& schedule, double floor) {
  if (IsMissing(ic)) return floor;
  const bool fails = IsMissing(ir) || ir <= schedule.Threshold();
  return ic - (fails ? schedule.lambda : 0.0);
}

void TrainConfig::Validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(learning_rate > 0)) throw std::invalid_argument("learning_rate must be > 0");
  if (total_steps < 0) throw std::invalid_argument("steps must be >= 0");
  if (max_len < 3) throw std::invalid_argument("max_len must be >= 3");
  if (pool_capacity < 1) throw std::invalid_argument("pool_capacity must be >= 1");
  if (threads < 1) throw std::invalid_argument("threads must be >= 1");
  if (eval_every < 0 || checkpoint_every < 0 || patience < 0) {
    throw std::invalid_argument("eval_every, checkpoint_every and patience must be >= 0");
  }
  if (patience > 0 && eval_every == 0) {
    throw std::invalid_argument("patience needs eval_every > 0");
  }
  if (!(fit.lr > 0) || fit.max_iters < 0 || fit.tol < 0) {
    throw std::invalid_argument("weight fit needs lr > 0, iters >= 0, tol >= 0");
  }
}

Optimizer::Optimizer(OptimizerKind kind, double lr, std::size_t n) : kind_(kind), lr_(lr) {
  if (kind_ == OptimizerKind::kAdam) {
    m_.assign(n, 0.0);
    v_.assign(n, 0.0);
  }
}

void Optimizer::Ascend(std::vector<double>& params, const std::vector<double>& grad) {
  if (kind_ == OptimizerKind::kSgd) {
    for (std::size_t k = 0; k < params.size(); ++k) params[k] += lr_ * grad[k];
    return;
  }
  ++t_;
  const double c1 = 1 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    m_[k] = beta1_ * m_[k] + (1 - beta1_) * grad[k];
    v_[k] = beta2_ * v_[k] + (1 - beta2_) * grad[k] * grad[k];
    params[k] += lr_ * (m_[k] / c1) / (std::sqrt(v_[k] / c2) + eps_);
  }
}

bool FactorCache::Get(const std::string& key, std::shared_ptr<const FactorMatrix>& out) {
  std::lock_guard<std::mutex> lock(mu_);
  const auto it = index_.find(key);
  if (it == index_.end()) return false;
  order_.splice(order_.begin(), order_, it->second);
  out = it->second->second;
  return true;
}

void FactorCache::Put(const std::string& key, std::shared_ptr<const FactorMatrix> value) {
  if (capacity_ == 0) return;
  std::lock_guard<std::mutex> lock(mu_);
  const auto it = index_.find(key);
  if (it != index_.end()) {
    order_.splice(order_.begin(), order_, it->second);
    return;
  }
  order_.emplace_front(key, std::move(value));
  index_[key] = order_.begin();
  while (order_.size() > capacity_) {
    index_.erase(order_.back().first);
    order_.pop_back();
  }
}

std::size_t FactorCache::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return order_.size();
}

namespace {

double SquaredNorm(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return s;
}

// Trace of the sample covariance of the rows, divided by the row count.
double EstimatorVariance(const std::vector<std::vector<double>>& terms) {
  const std::size_t n = terms.size();
  if (n < 2) return 0;
  const std::size_t d = terms[0].size();
  double total = 0;
  for (std::size_t k = 0; k < d; ++k) {
    double mean = 0;
    for (const auto& t : terms) mean += t[k];
    mean /= static_cast<double>(n);
    for (const auto& t : terms) total += (t[k] - mean) * (t[k] - mean);
  }
  return total / static_cast<double>(n - 1) / static_cast<double>(n);
}

template <typename Fn>
void ParallelFor(int threads, std::size_t n, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void AppendNumber(std::string& out, double v) {
  if (IsMissing(v)) return;
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

}  // namespace

Trainer::Trainer(TrainConfig config, std::shared_ptr<const MarketData> train,
                 std::shared_ptr<const MarketData> valid, ShapingSchedule schedule)
    : config_(std::move(config)),
      train_(std::move(train)),
      valid_(std::move(valid)),
      schedule_(schedule),
      grammar_(Vocabulary(), config_.max_len),
      params_(PolicyParams::Init(static_cast<int>(grammar_.vocab().size()), config_.policy,
                                 config_.seed)),
      optimizer_(config_.optimizer, config_.learning_rate, params_.values.size()),
      pool_(train_, config_.pool_capacity, config_.fit),
      cache_(config_.cache_entries),
      subtrees_(config_.subtree_entries),
      rng_(config_.seed ^ 0x9e3779b97f4a7c15ull) {
  config_.Validate();
  schedule_.Validate();
}

std::shared_ptr<const FactorMatrix> Trainer::Normalized(const RpnProgram& program) {
  const std::string key = program.Key();
  std::shared_ptr<const FactorMatrix> out;
  if (cache_.Get(key, out)) return out;
  out = std::make_shared<const FactorMatrix>(
      NormalizeCrossSection(Evaluate(program, train_->panel, &subtrees_)));
  cache_.Put(key, out);
  return out;
}

double Trainer::Shape(const ProposeResult& r) const {
  if (!r.evaluable) return config_.reward_floor;
  return ShapedReward(r.ic, r.ir, schedule_, config_.reward_floor);
}

double Trainer::Reward(const RpnProgram& program, ProposeResult* detail) {
  const ProposeResult r = pool_.Score(program, Normalized(program));
  if (detail) *detail = r;
  return Shape(r);
}

double Trainer::ValidationIc() const {
  if (!valid_ || pool_.empty()) return Missing();
  std::vector<RpnProgram> programs;
  for (const auto& e : pool_.entries()) programs.push_back(e.program);
  return ScoreOn(programs, pool_.weights(), *valid_).ic;
}

StepReport Trainer::Step() {
  StepReport report;
  report.step = schedule_.t + 1;
  report.threshold = schedule_.Threshold();
  const std::size_t n = static_cast<std::size_t>(config_.batch_size);

  // Rollouts are drawn serially so the sample stream does not depend on the
  // thread count.
  const Rollout greedy = GreedyRollout(params_, grammar_);
  std::vector<Rollout> samples;
  samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) samples.push_back(SampleRollout(params_, grammar_, rng_));

  std::vector<RpnProgram> programs;
  programs.reserve(n + 1);
  for (const auto& s : samples) programs.push_back(ProgramFromIds(s.actions, grammar_));
  programs.push_back(ProgramFromIds(greedy.actions, grammar_));
  // Pool scores depend only on the pool state, so repeats within a step and
  // across steps without a pool change are looked up.
  if (memo_.size() > 100000) memo_.clear();
  std::vector<std::size_t> fresh;
  {
    std::unordered_map<std::string, std::size_t> seen;
    for (std::size_t i = 0; i <= n; ++i) {
      const std::string key = programs[i].Key();
      if (memo_.count(key) || seen.count(key)) continue;
      seen.emplace(key, i);
      fresh.push_back(i);
    }
  }
  std::vector<ProposeResult> scored(fresh.size());
  ParallelFor(config_.threads, fresh.size(), [&](std::size_t j) {
    scored[j] = pool_.Score(programs[fresh[j]], Normalized(programs[fresh[j]]));
  });
  for (std::size_t j = 0; j < fresh.size(); ++j) memo_[programs[fresh[j]].Key()] = scored[j];
  std::vector<double> rewards(n + 1);
  for (std::size_t i = 0; i <= n; ++i) rewards[i] = Shape(memo_.at(programs[i].Key()));

  report.greedy_reward = rewards[n];
  report.baseline = config_.use_baseline ? rewards[n] : 0.0;
  report.rewards.assign(rewards.begin(), rewards.begin() + static_cast<std::ptrdiff_t>(n));
  double sum = 0;
  for (double r : report.rewards) sum += r;
  report.mean_reward = sum / static_cast<double>(n);

  std::vector<double> grad(params_.values.size(), 0.0);
  std::vector<std::vector<double>> full_terms, logit_terms;
  try {
    for (std::size_t i = 0; i < n; ++i) {
      const double coeff = (report.rewards[i] - report.baseline) / static_cast<double>(n);
      if (!config_.diagnostics) {
        if (coeff != 0) AccumulateScoreGradient(params_, samples[i], coeff, grad);
        continue;
      }
      std::vector<double> g(params_.values.size(), 0.0);
      AccumulateScoreGradient(params_, samples[i], 1.0, g);
      const double T = static_cast<double>(samples[i].actions.size());
      report.score_norm_max = std::max(report.score_norm_max, std::sqrt(SquaredNorm(g)) / T);
      report.max_steps = std::max(report.max_steps, static_cast<int>(samples[i].actions.size()));
      const double c = report.rewards[i] - report.baseline;
      for (std::size_t k = 0; k < g.size(); ++k) {
        grad[k] += g[k] * c / static_cast<double>(n);
        g[k] *= c;
      }
      full_terms.push_back(std::move(g));
      std::vector<double> s = LogitScore(params_, samples[i]);
      for (double& x : s) x *= c;
      logit_terms.push_back(std::move(s));
    }
  } catch (const PolicyError& e) {
    report.aborted = true;
    report.diagnostic = e.what();
  }
  if (!report.aborted) {
    for (double g : grad) {
      if (!std::isfinite(g)) {
        report.aborted = true;
        report.diagnostic = "non-finite gradient";
        break;
      }
    }
  }
  if (config_.diagnostics) {
    report.var_full = EstimatorVariance(full_terms);
    report.var_logit = EstimatorVariance(logit_terms);
    report.r_max = std::abs(report.baseline);
    for (double r : report.rewards) report.r_max = std::max(report.r_max, std::abs(r));
  }

  if (!report.aborted) {
    report.grad_norm = std::sqrt(SquaredNorm(grad));
    optimizer_.Ascend(params_.values, grad);

    // Commit the best sample; ties go to the earliest.
    const std::size_t best = static_cast<std::size_t>(
        std::max_element(report.rewards.begin(), report.rewards.end()) - report.rewards.begin());
    report.committed = ToInfix(programs[best]);
    const ProposeResult r = pool_.Propose(programs[best], Normalized(programs[best]));
    if (r.evaluable && !r.duplicate) memo_.clear();
    if (r.evaluable) {
      pool_ic_ = r.ic;
      pool_ir_ = r.ir;
    }
  }
  report.pool_ic = pool_ic_;
  report.pool_ir = pool_ir_;
  ++schedule_.t;
  return report;
}

std::string HistoryRow(const StepReport& r) {
  std::string row = std::to_string(r.step);
  for (double v : {r.mean_reward, r.baseline, r.pool_ic, r.pool_ir, r.grad_norm, r.threshold,
                   r.valid_ic}) {
    row += ',';
    AppendNumber(row, v);
  }
  return row;
}

TrainResult Train(const TrainConfig& config, std::shared_ptr<const MarketData> train,
                  std::shared_ptr<const MarketData> valid, ShapingSchedule schedule,
                  const std::filesystem::path& run_dir,
                  const std::function<void(const StepReport&)>& on_step) {
  Trainer trainer(config, std::move(train), std::move(valid), schedule);
  TrainResult result;
  std::ofstream history;
  if (!run_dir.empty()) {
    std::filesystem::create_directories(run_dir / "checkpoints");
    history.open(run_dir / "history.csv");
    if (!history) throw std::runtime_error("cannot write " + (run_dir / "history.csv").string());
    history << kHistoryHeader << '\n';
  }
  std::int64_t best_step = 0;
  for (std::int64_t s = 0; s < config.total_steps; ++s) {
    StepReport report = trainer.Step();
    if (config.eval_every > 0 &&
        (report.step % config.eval_every == 0 || report.step == config.total_steps)) {
      report.valid_ic = trainer.ValidationIc();
      if (!IsMissing(report.valid_ic) &&
          (IsMissing(result.best_valid_ic) || report.valid_ic > result.best_valid_ic)) {
        result.best_valid_ic = report.valid_ic;
        best_step = report.step;
      }
    }
    if (history.is_open()) history << HistoryRow(report) << '\n';
    if (on_step) on_step(report);
    if (!run_dir.empty() && config.checkpoint_every > 0 &&
        report.step % config.checkpoint_every == 0) {
      SaveCheckpoint(run_dir / "checkpoints" / ("step_" + std::to_string(report.step)),
                     trainer.params());
    }
    result.history.push_back(std::move(report));
    if (config.patience > 0 && result.history.back().step - best_step >= config.patience) {
      result.stopped_early = true;
      break;
    }
  }
  result.params = trainer.params();
  const auto& entries = trainer.pool().entries();
  for (const auto& e : entries) result.pool.push_back({e.weight, e.program});
  if (!run_dir.empty()) {
    SavePool(run_dir / "pool.txt", trainer.pool());
    SaveCheckpoint(run_dir / "checkpoints" /
                       ("step_" + std::to_string(trainer.schedule().t)),
                   trainer.params());
  }
  return result;
}

}  // namespace alphamine
