#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "alphamine/formula.h"
#include "alphamine/policy.h"

namespace alphamine {

// Softmax-parameterized multi-armed bandit, one pull per episode.
struct BanditSpec {
  std::vector<double> rewards;  // per arm
  std::vector<double> logits;   // theta, one per arm

  std::vector<double> Probabilities() const;
  // argmax pi, ties to the lowest arm.
  int GreedyArm() const;
  void Validate() const;

  // Two arms with pi(a1) = p.
  static BanditSpec TwoArm(double r1, double r2, double p);
};

enum class Estimator { kReinforce, kGreedyBaseline };

// sum_a pi(a) (e_a - pi) r(a), the exact policy gradient for one pull.
std::vector<double> ExactGradient(const BanditSpec& spec);

// Total variance (trace of the covariance) of a one-sample estimator, by
// enumeration of the arms.
double ExactVariance(const BanditSpec& spec, Estimator estimator);

// 2 p (1-p) b (b - 2(1-p) r1 - 2p r2) with b the greedy arm's reward; the
// greedy-baseline variance minus the plain one for two arms.
double ClosedFormVarianceGap(const BanditSpec& spec);

// pi(a1) above which the greedy baseline stops reducing variance; +inf when
// r1 <= 2 r2 (reduction everywhere).
double VarianceReductionThreshold(double r1, double r2);

struct MonteCarloReport {
  std::vector<double> mean;
  std::vector<double> std_err;  // per coordinate
  double variance = 0;          // trace of the sample covariance
  long samples = 0;
};

// Sample statistics of the estimator averaged over `batch` pulls.
MonteCarloReport MonteCarlo(const BanditSpec& spec, Estimator estimator, long n_samples,
                            std::mt19937_64& rng, int batch = 1);

// Tiny token process used to compare deterministic and noisy transitions.
struct TokenMdp {
  int tokens = 5;       // token values 0 .. tokens-1
  int horizon = 3;      // steps per episode
  double coupling = 0.15;  // state dependence of the policy logits
  std::vector<double> logits{0.4, -0.2, 0.1, 0.3, -0.5};
};

struct DiracReport {
  double var_deterministic = 0;
  double var_stochastic = 0;
  long samples = 0;
};

// Rolls out the token process with exact successor states and with states
// whose newest entry is shifted by +/-1 (equally likely) with probability
// `noise` on every transition but the last. The statistic is the summed
// per-position variance of the final state. Policy draws and noise use
// separate streams seeded from `seed`, so noise = 0 reproduces the
// deterministic run exactly.
DiracReport DiracVsStochastic(const TokenMdp& mdp, double noise, long n_samples,
                              std::uint64_t seed);

// Applies each sampled (state, token) pair `repeats` times and checks the
// successors are identical. Returns the number of mismatches.
long CountNondeterministicTransitions(const Grammar& grammar, int states, int repeats,
                                      std::mt19937_64& rng);

// Exact gradient of E[r(tau)] for a recurrent policy on a grammar small
// enough to enumerate every legal sequence.
struct EnumeratedObjective {
  double value = 0;
  std::vector<double> gradient;
  long sequences = 0;
};
EnumeratedObjective EnumerateObjective(const PolicyParams& params, const Grammar& grammar,
                                       const std::function<double(const std::vector<int>&)>& reward);

struct VerifyOptions {
  double r1 = 1.0;
  double r2 = 0.6;
  std::vector<double> grid;  // pi(a1); empty -> 0.05, 0.10, ..., 0.95
  long samples = 1000000;
  std::uint64_t seed = 7;
};

struct VerifyRow {
  double p = 0;
  double exact_reinforce = 0;
  double exact_baseline = 0;
  double mc_reinforce = 0;
  double mc_baseline = 0;
  double bound = 0;
};

struct VerifyOutcome {
  std::vector<VerifyRow> rows;
  std::vector<std::string> lines;  // "PASS ..." / "FAIL ..."
  std::vector<std::string> warnings;
  bool passed = true;
};

// The proposition suite: unbiasedness, transition determinism, the variance
// bound, and the condition-aware variance comparison.
VerifyOutcome RunVerification(const VerifyOptions& options);

}  // namespace alphamine
