#include "alphamine/bandit_lab.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace alphamine {

namespace {

std::string Format(const char* fmt, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, fmt, a, b, c, d);
  return buf;
}

// One-sample estimator value for arm `a`.
void EstimatorTerm(const std::vector<double>& pi, const BanditSpec& spec, Estimator estimator,
                   double baseline, int a, std::vector<double>& out) {
  const double r = spec.rewards[static_cast<std::size_t>(a)] -
                   (estimator == Estimator::kGreedyBaseline ? baseline : 0.0);
  for (std::size_t j = 0; j < pi.size(); ++j) {
    out[j] = ((static_cast<int>(j) == a ? 1.0 : 0.0) - pi[j]) * r;
  }
}

}  // namespace

std::vector<double> BanditSpec::Probabilities() const {
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    p[k] = std::exp(logits[k] - top);
    sum += p[k];
  }
  for (double& v : p) v /= sum;
  return p;
}

int BanditSpec::GreedyArm() const {
  const std::vector<double> p = Probabilities();
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

void BanditSpec::Validate() const {
  if (rewards.size() < 2 || rewards.size() > 8) throw std::invalid_argument("bandit needs 2-8 arms");
  if (logits.size() != rewards.size()) throw std::invalid_argument("one logit per arm");
}

BanditSpec BanditSpec::TwoArm(double r1, double r2, double p) {
  if (!(p > 0 && p < 1)) throw std::invalid_argument("pi(a1) must lie in (0, 1)");
  return BanditSpec{{r1, r2}, {std::log(p), std::log1p(-p)}};
}

std::vector<double> ExactGradient(const BanditSpec& spec) {
  spec.Validate();
  const std::vector<double> pi = spec.Probabilities();
  std::vector<double> g(pi.size(), 0.0), term(pi.size());
  for (std::size_t a = 0; a < pi.size(); ++a) {
    EstimatorTerm(pi, spec, Estimator::kReinforce, 0.0, static_cast<int>(a), term);
    for (std::size_t j = 0; j < g.size(); ++j) g[j] += pi[a] * term[j];
  }
  return g;
}

double ExactVariance(const BanditSpec& spec, Estimator estimator) {
  spec.Validate();
  const std::vector<double> pi = spec.Probabilities();
  const double b = spec.rewards[static_cast<std::size_t>(spec.GreedyArm())];
  std::vector<double> mean(pi.size(), 0.0), term(pi.size());
  double second = 0;
  for (std::size_t a = 0; a < pi.size(); ++a) {
    EstimatorTerm(pi, spec, estimator, b, static_cast<int>(a), term);
    for (std::size_t j = 0; j < pi.size(); ++j) {
      mean[j] += pi[a] * term[j];
      second += pi[a] * term[j] * term[j];
    }
  }
  double m2 = 0;
  for (double v : mean) m2 += v * v;
  return second - m2;
}

double ClosedFormVarianceGap(const BanditSpec& spec) {
  if (spec.rewards.size() != 2) throw std::invalid_argument("closed form is for two arms");
  const double p = spec.Probabilities()[0];
  const double r1 = spec.rewards[0], r2 = spec.rewards[1];
  const double b = spec.rewards[static_cast<std::size_t>(spec.GreedyArm())];
  return 2 * p * (1 - p) * b * (b - 2 * (1 - p) * r1 - 2 * p * r2);
}

double VarianceReductionThreshold(double r1, double r2) {
  if (r1 <= 2 * r2) return std::numeric_limits<double>::infinity();
  return 0.5 + 0.5 * r2 / (r1 - r2);
}

MonteCarloReport MonteCarlo(const BanditSpec& spec, Estimator estimator, long n_samples,
                            std::mt19937_64& rng, int batch) {
  spec.Validate();
  if (n_samples < 2 || batch < 1) throw std::invalid_argument("need >= 2 samples, batch >= 1");
  const std::vector<double> pi = spec.Probabilities();
  const double b = spec.rewards[static_cast<std::size_t>(spec.GreedyArm())];
  std::discrete_distribution<int> arm(pi.begin(), pi.end());
  const std::size_t d = pi.size();
  std::vector<double> sum(d, 0.0), sum_sq(d, 0.0), term(d), avg(d);
  for (long s = 0; s < n_samples; ++s) {
    std::fill(avg.begin(), avg.end(), 0.0);
    for (int k = 0; k < batch; ++k) {
      EstimatorTerm(pi, spec, estimator, b, arm(rng), term);
      for (std::size_t j = 0; j < d; ++j) avg[j] += term[j] / batch;
    }
    for (std::size_t j = 0; j < d; ++j) {
      sum[j] += avg[j];
      sum_sq[j] += avg[j] * avg[j];
    }
  }
  MonteCarloReport report;
  report.samples = n_samples;
  const double n = static_cast<double>(n_samples);
  for (std::size_t j = 0; j < d; ++j) {
    const double m = sum[j] / n;
    const double var = std::max(0.0, (sum_sq[j] - n * m * m) / (n - 1));
    report.mean.push_back(m);
    report.std_err.push_back(std::sqrt(var / n));
    report.variance += var;
  }
  return report;
}

DiracReport DiracVsStochastic(const TokenMdp& mdp, double noise, long n_samples,
                              std::uint64_t seed) {
  if (mdp.horizon < 1 || mdp.horizon > 3 || mdp.tokens < 2 || mdp.tokens > 5 ||
      static_cast<int>(mdp.logits.size()) != mdp.tokens) {
    throw std::invalid_argument("token process must have <= 3 steps and 2-5 tokens");
  }
  if (!(noise >= 0 && noise <= 1)) throw std::invalid_argument("noise must lie in [0, 1]");
  const double center = 0.5 * (mdp.tokens - 1);
  auto run = [&](double eps) {
    std::mt19937_64 policy_rng(seed);
    std::mt19937_64 noise_rng(seed ^ 0x5851f42d4c957f2dull);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::size_t T = static_cast<std::size_t>(mdp.horizon);
    std::vector<double> sum(T, 0.0), sum_sq(T, 0.0), state(T), w(mdp.tokens);
    for (long s = 0; s < n_samples; ++s) {
      double last = center;
      for (std::size_t t = 0; t < T; ++t) {
        double top = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < mdp.tokens; ++k) {
          w[k] = mdp.logits[k] + mdp.coupling * k * (last - center);
          top = std::max(top, w[k]);
        }
        double total = 0;
        for (double& v : w) total += (v = std::exp(v - top));
        double draw = u(policy_rng) * total;
        int a = mdp.tokens - 1;
        for (int k = 0; k < mdp.tokens; ++k) {
          if (draw < w[k]) {
            a = k;
            break;
          }
          draw -= w[k];
        }
        double value = a;
        // Both draws are always taken so the noise stream stays aligned.
        const double hit = u(noise_rng);
        const double side = u(noise_rng);
        if (t + 1 < T && hit < eps) value += side < 0.5 ? -1.0 : 1.0;
        state[t] = value;
        last = value;
      }
      for (std::size_t t = 0; t < T; ++t) {
        sum[t] += state[t];
        sum_sq[t] += state[t] * state[t];
      }
    }
    const double n = static_cast<double>(n_samples);
    double total = 0;
    for (std::size_t t = 0; t < T; ++t) {
      const double m = sum[t] / n;
      total += (sum_sq[t] - n * m * m) / (n - 1);
    }
    return total;
  };
  DiracReport report;
  report.samples = n_samples;
  report.var_deterministic = run(0.0);
  report.var_stochastic = run(noise);
  return report;
}

long CountNondeterministicTransitions(const Grammar& grammar, int states, int repeats,
                                      std::mt19937_64& rng) {
  long mismatches = 0;
  const int sep = grammar.vocab().separator_id();
  for (int s = 0; s < states; ++s) {
    // Random legal prefix, then a random legal non-terminal token.
    StackState state = grammar.Initial();
    std::uniform_int_distribution<int> len(0, grammar.max_len() - 3);
    const int target = len(rng);
    for (int k = 0; k < target; ++k) {
      const auto& mask = grammar.LegalActions(state);
      std::vector<int> legal;
      for (int id = 0; id < sep; ++id) {
        if (mask[static_cast<std::size_t>(id)]) legal.push_back(id);
      }
      if (legal.empty()) break;
      std::uniform_int_distribution<std::size_t> pick(0, legal.size() - 1);
      state = Grammar::Apply(state, grammar.vocab().token(legal[pick(rng)]));
    }
    const auto& mask = grammar.LegalActions(state);
    std::vector<int> legal;
    for (int id = 0; id < sep; ++id) {
      if (mask[static_cast<std::size_t>(id)]) legal.push_back(id);
    }
    if (legal.empty()) continue;
    std::uniform_int_distribution<std::size_t> pick(0, legal.size() - 1);
    const Token token = grammar.vocab().token(legal[pick(rng)]);
    const StackState first = Grammar::Apply(state, token);
    for (int r = 1; r < repeats; ++r) {
      if (!(Grammar::Apply(state, token) == first)) ++mismatches;
    }
  }
  return mismatches;
}

EnumeratedObjective EnumerateObjective(
    const PolicyParams& params, const Grammar& grammar,
    const std::function<double(const std::vector<int>&)>& reward) {
  EnumeratedObjective out;
  out.gradient.assign(params.values.size(), 0.0);
  const int sep = grammar.vocab().separator_id();
  Rollout rollout;
  std::function<void(const StackState&, double)> walk = [&](const StackState& state,
                                                            double prob) {
    const auto& mask = grammar.LegalActions(state);
    const std::vector<double> pi = Distribution(params, rollout.actions, mask);
    for (int id = 0; id <= sep; ++id) {
      if (!mask[static_cast<std::size_t>(id)]) continue;
      rollout.actions.push_back(id);
      rollout.masks.push_back(mask);
      rollout.log_probs.push_back(std::log(pi[static_cast<std::size_t>(id)]));
      const double p = prob * pi[static_cast<std::size_t>(id)];
      if (id == sep) {
        const double r = reward(rollout.actions);
        out.value += p * r;
        AccumulateScoreGradient(params, rollout, p * r, out.gradient);
        ++out.sequences;
      } else {
        walk(Grammar::Apply(state, grammar.vocab().token(id)), p);
      }
      rollout.actions.pop_back();
      rollout.masks.pop_back();
      rollout.log_probs.pop_back();
    }
  };
  walk(grammar.Initial(), 1.0);
  return out;
}

VerifyOutcome RunVerification(const VerifyOptions& options) {
  VerifyOutcome out;
  std::vector<double> grid = options.grid;
  if (grid.empty()) {
    for (int k = 1; k <= 19; ++k) grid.push_back(k / 20.0);
  }
  const double r1 = options.r1, r2 = options.r2;
  if (!(r1 > r2 && r2 > 0)) throw std::invalid_argument("need r1 > r2 > 0");
  const long n = options.samples;
  if (n < 1000) throw std::invalid_argument("need at least 1000 samples");
  // Relative standard error of a variance estimate is at least sqrt(2/n).
  if (3 * std::sqrt(2.0 / static_cast<double>(n)) > 0.02) {
    out.warnings.push_back(
        Format("%.0f samples: standard error exceeds the 2%% variance tolerance", double(n)));
  }
  auto verdict = [&](bool ok, const std::string& what) {
    out.lines.push_back(std::string(ok ? "PASS " : "FAIL ") + what);
    out.passed = out.passed && ok;
  };

  // Unbiasedness at theta = 0.
  {
    const BanditSpec spec{{r1, r2}, {0.0, 0.0}};
    const std::vector<double> exact = ExactGradient(spec);
    bool ok = true;
    double worst = 0;
    for (Estimator e : {Estimator::kReinforce, Estimator::kGreedyBaseline}) {
      std::mt19937_64 rng(options.seed);
      const MonteCarloReport mc = MonteCarlo(spec, e, n, rng);
      for (std::size_t j = 0; j < exact.size(); ++j) {
        const double z = std::fabs(mc.mean[j] - exact[j]) / mc.std_err[j];
        worst = std::max(worst, z);
        ok = ok && z <= 3.0;
      }
    }
    verdict(ok, Format("prop1 unbiased: exact gradient (%.6g, %.6g), worst |z| %.3f <= 3",
                       exact[0], exact[1], worst));
  }

  // Deterministic transitions beat noised ones.
  {
    Grammar grammar;
    std::mt19937_64 rng(options.seed);
    const long mismatches = CountNondeterministicTransitions(grammar, 100, 10000, rng);
    const long m = std::min<long>(n, 100000);
    bool ok = mismatches == 0;
    double prev_gap = 0;
    std::string detail;
    for (double noise : {0.0, 0.1, 0.2, 0.4}) {
      const DiracReport r = DiracVsStochastic(TokenMdp{}, noise, m, options.seed);
      const double gap = r.var_stochastic - r.var_deterministic;
      if (noise == 0) {
        ok = ok && gap == 0;
      } else {
        ok = ok && gap >= 0 && gap >= prev_gap;
      }
      prev_gap = gap;
      detail += Format(" noise %.1f gap %.4f;", noise, gap);
    }
    verdict(ok, "prop2 dirac transitions: " + std::to_string(mismatches) +
                    " nondeterministic successors over 10^4 repeats;" + detail);
  }

  // Variance bound 8 r_max^2 T^2 / N at T = N = 1.
  {
    const double bound = 8 * std::max(r1, r2) * std::max(r1, r2);
    bool ok = true;
    double worst = 0;
    for (double p : grid) {
      const BanditSpec spec = BanditSpec::TwoArm(r1, r2, p);
      for (Estimator e : {Estimator::kReinforce, Estimator::kGreedyBaseline}) {
        std::mt19937_64 rng(options.seed + 1);
        const double v = MonteCarlo(spec, e, std::min<long>(n, 100000), rng).variance;
        worst = std::max(worst, v);
        ok = ok && v <= bound;
      }
    }
    verdict(ok, Format("prop3 bound: max variance %.6g <= 8 r_max^2 = %.6g", worst, bound));
  }

  // Condition-aware variance comparison with Monte-Carlo agreement.
  {
    const double threshold = VarianceReductionThreshold(r1, r2);
    bool ok = true;
    std::string failure;
    for (double p : grid) {
      const BanditSpec spec = BanditSpec::TwoArm(r1, r2, p);
      VerifyRow row;
      row.p = p;
      row.exact_reinforce = ExactVariance(spec, Estimator::kReinforce);
      row.exact_baseline = ExactVariance(spec, Estimator::kGreedyBaseline);
      std::mt19937_64 rng_a(options.seed + 2), rng_b(options.seed + 3);
      row.mc_reinforce = MonteCarlo(spec, Estimator::kReinforce, n, rng_a).variance;
      row.mc_baseline = MonteCarlo(spec, Estimator::kGreedyBaseline, n, rng_b).variance;
      row.bound = 8 * std::max(r1, r2) * std::max(r1, r2);
      out.rows.push_back(row);

      const double gap = row.exact_baseline - row.exact_reinforce;
      const double closed = ClosedFormVarianceGap(spec);
      // Expected sign from the reduction condition on the grid value.
      const bool expect_reduce = p < threshold;
      const bool expect_equal = p == threshold;
      bool point_ok = std::fabs(gap - closed) <= 1e-12;
      if (expect_equal) {
        point_ok = point_ok && std::fabs(gap) <= 1e-12;
      } else {
        point_ok = point_ok && (expect_reduce ? gap < 0 : gap > 0);
      }
      point_ok = point_ok &&
                 std::fabs(row.mc_reinforce - row.exact_reinforce) <= 0.02 * row.exact_reinforce &&
                 std::fabs(row.mc_baseline - row.exact_baseline) <= 0.02 * row.exact_baseline;
      if (!point_ok && failure.empty()) failure = Format(" first failure at p = %.4g", p);
      ok = ok && point_ok;
    }
    std::string cond = std::isinf(threshold)
                           ? std::string("r1 <= 2 r2: reduction expected at every p")
                           : Format("reduction expected for p < %.6g, none above", threshold);
    verdict(ok, "prop4 variance: " + cond + ", closed form and 2% Monte-Carlo agreement" +
                    failure);
  }
  return out;
}

}  // namespace alphamine
