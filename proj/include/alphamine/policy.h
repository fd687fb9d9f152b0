#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "alphamine/formula.h"

namespace alphamine {

class PolicyError : public std::runtime_error {
 public:
  PolicyError(const std::string& what, int step) : std::runtime_error(what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

struct PolicyConfig {
  int embed = 32;
  int hidden = 64;
  double init_scale = 0.08;
};

// Offsets of each tensor inside the flat parameter vector.
struct PolicyLayout {
  int vocab = 0;   // action tokens; inputs add BEG
  int embed = 0;
  int hidden = 0;
  std::size_t emb = 0;                      // [(vocab+1) x embed]
  std::size_t wz = 0, wr = 0, wn = 0;       // [hidden x embed]
  std::size_t uz = 0, ur = 0, un = 0;       // [hidden x hidden]
  std::size_t bz = 0, br = 0, bn = 0;       // [hidden]
  std::size_t wo = 0;                       // [vocab x hidden]
  std::size_t bo = 0;                       // [vocab]
  std::size_t total = 0;

  static PolicyLayout For(int vocab, int embed, int hidden);
};

// Parameters of the autoregressive token policy: embedding -> gated
// recurrent cell -> linear projection -> masked softmax.
struct PolicyParams {
  PolicyLayout layout;
  std::vector<double> values;

  static PolicyParams Init(int vocab, const PolicyConfig& config, std::uint64_t seed);
  PolicyParams ZerosLike() const;

  std::span<double> output_weights() { return {values.data() + layout.wo, layout.bo - layout.wo}; }
  std::span<double> output_bias() {
    return {values.data() + layout.bo, static_cast<std::size_t>(layout.vocab)};
  }
  bool AllFinite() const;
  std::string ConfigHash() const;
};

struct Rollout {
  std::vector<int> actions;                 // vocab ids after BEG, ending with SEP
  std::vector<double> log_probs;            // per step, under the masked policy
  std::vector<std::vector<std::uint8_t>> masks;
  double reward = 0;

  double LogProb() const;
};

// Probability vector over the vocabulary after `prefix` (action ids, BEG
// implied). Illegal tokens get exactly 0. Throws PolicyError on an
// all-false mask.
std::vector<double> Distribution(const PolicyParams& params, std::span<const int> prefix,
                                 std::span<const std::uint8_t> mask);

Rollout SampleRollout(const PolicyParams& params, const Grammar& grammar, std::mt19937_64& rng);

// Argmax decoding under masks, ties to the lowest id.
Rollout GreedyRollout(const PolicyParams& params, const Grammar& grammar);

// grad += coeff * d/dtheta sum_t log pi(a_t | a_<t), by backpropagation
// through time. Throws PolicyError naming the step on non-finite values.
void AccumulateScoreGradient(const PolicyParams& params, const Rollout& rollout, double coeff,
                             std::vector<double>& grad);

// Score summed over steps in logit space: sum_t (onehot(a_t) - pi_t), a
// vocab-sized vector. This is the gradient with respect to a shared
// pre-softmax logit vector.
std::vector<double> LogitScore(const PolicyParams& params, const Rollout& rollout);

void SaveCheckpoint(const std::filesystem::path& path, const PolicyParams& params);
PolicyParams LoadCheckpoint(const std::filesystem::path& path);

}  // namespace alphamine
