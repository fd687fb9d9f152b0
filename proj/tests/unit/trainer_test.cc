#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "alphamine/trainer.h"
#include "doctest.h"

namespace alphamine {
namespace {

namespace fs = std::filesystem;

std::shared_ptr<const MarketData> SmallMarket(std::uint64_t seed = 1) {
  const Grammar g;
  SynthParams sp;
  sp.n_assets = 12;
  sp.n_days = 90;
  sp.seed = seed;
  sp.signal_strength = 0.6;
  return std::make_shared<const MarketData>(SynthMarket(sp, ParseInfix("Delta(close, 10d)", g)));
}

TrainConfig SmallConfig() {
  TrainConfig c;
  c.batch_size = 4;
  c.total_steps = 6;
  c.seed = 3;
  c.policy = PolicyConfig{8, 8, 0.08};
  c.eval_every = 2;
  return c;
}

TEST_CASE("threshold schedule") {
  ShapingSchedule s;
  CHECK(s.Threshold() == 0.0);
  s.t = 100000;
  CHECK(s.Threshold() == doctest::Approx(1e4 * 2.65e-6).epsilon(1e-12));
  s.t = 10000000;
  CHECK(s.Threshold() == 0.3);
  s.lambda = -1;
  CHECK_THROWS_AS(s.Validate(), std::invalid_argument);
}

TEST_CASE("shaped reward") {
  ShapingSchedule s;
  s.t = 100000;  // threshold 0.0265
  CHECK(ShapedReward(0.05, 0.1, s) == 0.05);
  CHECK(ShapedReward(0.05, 0.01, s) == doctest::Approx(0.03).epsilon(1e-15));
  CHECK(ShapedReward(0.05, Missing(), s) == doctest::Approx(0.03).epsilon(1e-15));
  CHECK(ShapedReward(Missing(), 0.5, s) == -1.0);
  CHECK(ShapedReward(Missing(), 0.5, s, -0.25) == -0.25);
  s.lambda = 0;
  CHECK(ShapedReward(0.05, 0.01, s) == 0.05);
  // Monotone in ic at fixed ir.
  s.lambda = 0.02;
  double prev = -2;
  for (double ic = -0.5; ic <= 0.5; ic += 0.05) {
    for (double ir : {0.0, 0.1}) CHECK(ShapedReward(ic, ir, s) >= prev - 0.02 - 1e-15);
    const double r = ShapedReward(ic, 0.0, s);
    CHECK(r > prev);
    prev = r;
  }
}

TEST_CASE("optimizers") {
  std::vector<double> p{1.0, -2.0};
  Optimizer sgd(OptimizerKind::kSgd, 0.1, 2);
  sgd.Ascend(p, {1.0, 2.0});
  CHECK(p[0] == doctest::Approx(1.1));
  CHECK(p[1] == doctest::Approx(-1.8));
  // Adam's first step has magnitude lr along sign(grad).
  std::vector<double> q{0.0, 0.0};
  Optimizer adam(OptimizerKind::kAdam, 0.01, 2);
  adam.Ascend(q, {3.0, -0.5});
  CHECK(q[0] == doctest::Approx(0.01).epsilon(1e-6));
  CHECK(q[1] == doctest::Approx(-0.01).epsilon(1e-6));
}

TEST_CASE("factor cache evicts the least recently used") {
  FactorCache cache(2);
  auto m = std::make_shared<const FactorMatrix>(1, 1);
  cache.Put("a", m);
  cache.Put("b", m);
  std::shared_ptr<const FactorMatrix> out;
  CHECK(cache.Get("a", out));
  cache.Put("c", m);
  CHECK(cache.Get("a", out));
  CHECK_FALSE(cache.Get("b", out));
  cache.Put("bad", nullptr);
  CHECK(cache.Get("bad", out));
  CHECK(out == nullptr);
  CHECK(cache.size() == 2);
}

TEST_CASE("config validation") {
  TrainConfig c = SmallConfig();
  c.batch_size = 0;
  CHECK_THROWS_AS(c.Validate(), std::invalid_argument);
  c = SmallConfig();
  c.patience = 5;
  c.eval_every = 0;
  CHECK_THROWS_AS(c.Validate(), std::invalid_argument);
  c = SmallConfig();
  c.fit.lr = 0;
  CHECK_THROWS_AS(c.Validate(), std::invalid_argument);
}

TEST_CASE("zero steps leave the policy at its initialization") {
  TrainConfig c = SmallConfig();
  c.total_steps = 0;
  const TrainResult r = Train(c, SmallMarket(), nullptr);
  CHECK(r.history.empty());
  CHECK(r.pool.empty());
  CHECK(r.params.values ==
        PolicyParams::Init(static_cast<int>(Vocabulary().size()), c.policy, c.seed).values);
}

TEST_CASE("a step rewards against the pool and commits the best sample") {
  Trainer t(SmallConfig(), SmallMarket());
  const StepReport r = t.Step();
  CHECK(r.step == 1);
  CHECK(r.rewards.size() == 4);
  CHECK(r.baseline == r.greedy_reward);
  for (double v : r.rewards) CHECK(v >= -1.0);
  CHECK_FALSE(r.committed.empty());
  CHECK(t.schedule().t == 1);
  // The committed formula is in the pool unless it was unusable.
  const double best = *std::max_element(r.rewards.begin(), r.rewards.end());
  if (best > -1.0) {
    CHECK(t.pool().size() == 1);
    CHECK(ToInfix(t.pool().entries()[0].program) == r.committed);
  }
  // Reward agrees with scoring on a copy of the pool.
  const RpnProgram p = ParseInfix("Mean(close, 20d)", t.grammar());
  ProposeResult detail;
  const double reward = t.Reward(p, &detail);
  const ProposeResult direct = t.pool().Score(p, t.pool().Prepare(p));
  CHECK(detail.ic == direct.ic);
  CHECK(reward == ShapedReward(direct.ic, direct.ir, t.schedule()));
}

TEST_CASE("without a baseline the baseline column is zero") {
  TrainConfig c = SmallConfig();
  c.use_baseline = false;
  Trainer t(c, SmallMarket());
  const StepReport r = t.Step();
  CHECK(r.baseline == 0.0);
}

TEST_CASE("training is deterministic and independent of the thread count") {
  const auto market = SmallMarket();
  TrainConfig c = SmallConfig();
  const TrainResult a = Train(c, market, market);
  const TrainResult b = Train(c, market, market);
  c.threads = 3;
  const TrainResult d = Train(c, market, market);
  for (const TrainResult* other : {&b, &d}) {
    CHECK(other->params.values == a.params.values);
    REQUIRE(other->history.size() == a.history.size());
    for (std::size_t k = 0; k < a.history.size(); ++k) {
      CHECK(HistoryRow(other->history[k]) == HistoryRow(a.history[k]));
    }
    REQUIRE(other->pool.size() == a.pool.size());
    for (std::size_t k = 0; k < a.pool.size(); ++k) {
      CHECK(other->pool[k].program == a.pool[k].program);
      CHECK(other->pool[k].weight == a.pool[k].weight);
    }
  }
  c.seed = 4;
  c.threads = 1;
  CHECK(Train(c, market, market).params.values != a.params.values);
}

TEST_CASE("run directory receives history, checkpoints and the pool") {
  const fs::path dir = fs::temp_directory_path() / "alphamine_trainer_test";
  fs::remove_all(dir);
  TrainConfig c = SmallConfig();
  c.checkpoint_every = 3;
  const auto market = SmallMarket();
  int calls = 0;
  const TrainResult r = Train(c, market, market, {}, dir, [&](const StepReport&) { ++calls; });
  CHECK(calls == 6);
  std::ifstream in(dir / "history.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == kHistoryHeader);
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    const bool validation_step = rows % 2 == 0;
    CHECK((line.substr(line.rfind(',') + 1) != "") == validation_step);
  }
  CHECK(rows == 6);
  CHECK(fs::exists(dir / "checkpoints" / "step_3"));
  CHECK(fs::exists(dir / "checkpoints" / "step_6"));
  CHECK(fs::exists(dir / "pool.txt"));
  CHECK(LoadPool(dir / "pool.txt", Grammar()).size() == r.pool.size());
}

TEST_CASE("patience stops early") {
  TrainConfig c = SmallConfig();
  c.total_steps = 40;
  c.eval_every = 1;
  c.patience = 3;
  const auto market = SmallMarket();
  const TrainResult r = Train(c, market, market);
  if (r.stopped_early) {
    CHECK(r.history.size() < 40);
  } else {
    CHECK(r.history.size() == 40);
  }
}

TEST_CASE("diagnostics report estimator variances") {
  TrainConfig c = SmallConfig();
  c.diagnostics = true;
  Trainer t(c, SmallMarket());
  const StepReport r = t.Step();
  CHECK(r.var_full >= 0);
  CHECK(r.var_logit >= 0);
  CHECK(r.max_steps >= 2);
  CHECK(r.r_max >= 0);
}

}  // namespace
}  // namespace alphamine
