#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace alphamine {

enum class Op : std::uint8_t {
  kAbs,
  kLog,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kLarger,
  kSmaller,
  kRef,
  kMean,
  kMed,
  kSum,
  kStd,
  kVar,
  kMax,
  kMin,
  kMad,
  kDelta,
  kWma,
  kEma,
  kCov,
  kCorr,
};
inline constexpr int kOpCount = 22;

enum class OpClass : std::uint8_t {
  kUnaryCrossSection,   // f(x)
  kBinaryCrossSection,  // f(x, y), constants allowed on one side
  kUnaryTimeSeries,     // f(x, l)
  kBinaryTimeSeries,    // f(x, y, l)
};

OpClass ClassOf(Op op);
std::string_view OpName(Op op);
std::optional<Op> OpFromName(std::string_view name);

// Canonical feature order. A feature token stores an index into this list.
inline constexpr int kFeatureCount = 6;
std::string_view FeatureName(int index);
std::optional<int> FeatureFromName(std::string_view name);

enum class TokenKind : std::uint8_t {
  kOperator,
  kFeature,
  kTimeDelta,
  kConstant,
  kBegin,
  kSeparator,
};

struct Token {
  TokenKind kind = TokenKind::kBegin;
  Op op = Op::kAbs;   // kOperator
  int index = 0;      // kFeature: feature index; kTimeDelta: day count
  double value = 0;   // kConstant

  static Token Operator(Op o) { return {TokenKind::kOperator, o, 0, 0}; }
  static Token Feature(int f) { return {TokenKind::kFeature, Op::kAbs, f, 0}; }
  static Token Delta(int days) { return {TokenKind::kTimeDelta, Op::kAbs, days, 0}; }
  static Token Constant(double v) { return {TokenKind::kConstant, Op::kAbs, 0, v}; }
  static Token Begin() { return {TokenKind::kBegin, Op::kAbs, 0, 0}; }
  static Token Separator() { return {TokenKind::kSeparator, Op::kAbs, 0, 0}; }

  friend bool operator==(const Token& a, const Token& b);
};

// Short display form: "close", "Mean", "10d", "-0.5", "BEG", "SEP".
std::string TokenText(const Token& token);

// Action alphabet. Ids are laid out as
//   [features][operators][time deltas][constants][SEP]
// and Begin gets id size() (a policy input, never an action).
class Vocabulary {
 public:
  Vocabulary();  // all features and operators, default deltas and constants
  Vocabulary(std::vector<int> features, std::vector<Op> ops,
             std::vector<int> time_deltas, std::vector<double> constants);

  static const std::vector<int>& DefaultTimeDeltas();
  static const std::vector<double>& DefaultConstants();

  std::size_t size() const { return tokens_.size(); }
  int begin_id() const { return static_cast<int>(tokens_.size()); }
  int separator_id() const { return static_cast<int>(tokens_.size()) - 1; }
  const Token& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  // -1 if the token is not part of this vocabulary.
  int IdOf(const Token& token) const;
  const std::vector<Token>& tokens() const { return tokens_; }
  const std::vector<int>& time_deltas() const { return time_deltas_; }
  int max_time_delta() const;

 private:
  std::vector<Token> tokens_;
  std::vector<int> time_deltas_;
};

// Operand types on the typed evaluation stack.
enum class Slot : std::uint8_t { kSeries, kConstant, kDelta };

struct StackState {
  std::vector<Slot> stack;
  int tokens_emitted = 0;  // tokens after BEG

  friend bool operator==(const StackState&, const StackState&) = default;
};

std::string DescribeStack(const StackState& state);

class FormulaError : public std::runtime_error {
 public:
  FormulaError(const std::string& what, std::size_t index, std::string stack)
      : std::runtime_error(what), index_(index), stack_(std::move(stack)) {}
  std::size_t index() const { return index_; }
  const std::string& stack() const { return stack_; }

 private:
  std::size_t index_;
  std::string stack_;
};

// Typed stack automaton over a vocabulary. Masks are precomputed per
// (stack signature, remaining budget), so LegalActions is a table lookup.
class Grammar {
 public:
  explicit Grammar(Vocabulary vocab = Vocabulary(), int max_len = 20);

  const Vocabulary& vocab() const { return vocab_; }
  int max_len() const { return max_len_; }

  StackState Initial() const { return {}; }
  // Tokens still allowed after the current prefix, Separator included.
  int BudgetRemaining(const StackState& state) const {
    return max_len_ - 1 - state.tokens_emitted;
  }
  // Structural applicability, ignoring budget.
  static bool Applicable(const StackState& state, const Token& token);
  // Dirac transition: the unique successor state.
  static StackState Apply(const StackState& state, const Token& token);
  // Fewest tokens (Separator included) that complete the stack.
  static int MinCompletion(const StackState& state);

  // mask[id] != 0 iff appending vocab token `id` keeps a completion
  // reachable within the budget.
  const std::vector<std::uint8_t>& LegalActions(const StackState& state,
                                                int budget_remaining) const;
  const std::vector<std::uint8_t>& LegalActions(const StackState& state) const {
    return LegalActions(state, BudgetRemaining(state));
  }

 private:
  std::size_t SignatureIndex(const StackState& state) const;

  Vocabulary vocab_;
  int max_len_;
  // masks_[signature * (max_len + 1) + budget]
  std::vector<std::vector<std::uint8_t>> masks_;
  std::vector<std::uint8_t> none_;
};

// Validated RPN token sequence, BEG ... SEP.
class RpnProgram {
 public:
  const std::vector<Token>& tokens() const { return tokens_; }
  std::size_t size() const { return tokens_.size(); }
  int max_len() const { return max_len_; }
  // Largest total look-back (sum of nested windows/shifts) along any path.
  int Lookback() const;
  // Stable text key for caching/dedup.
  std::string Key() const;

  friend bool operator==(const RpnProgram& a, const RpnProgram& b) {
    return a.tokens_ == b.tokens_;
  }

 private:
  friend RpnProgram Parse(const std::vector<Token>&, const Grammar&);
  std::vector<Token> tokens_;
  int max_len_ = 20;
};

// Accepts iff replaying the legality masks accepts every token.
RpnProgram Parse(const std::vector<Token>& tokens, const Grammar& grammar);

// Program from vocabulary action ids (BEG/SEP added when absent).
RpnProgram ProgramFromIds(const std::vector<int>& ids, const Grammar& grammar);

std::string ToInfix(const RpnProgram& program);
// Inverse of ToInfix: infix text to BEG ... SEP tokens (unvalidated).
std::vector<Token> TokenizeInfix(std::string_view text);
// TokenizeInfix followed by Parse.
RpnProgram ParseInfix(std::string_view text, const Grammar& grammar);

}  // namespace alphamine
