#include "alphamine/formula.h"

#include <algorithm>
#include <stdexcept>

namespace alphamine {

namespace {

// Compact view of a stack: count of non-delta slots, the two topmost
// non-delta slot types, and whether a delta sits on top. Applicability and
// completion cost depend on nothing else.
struct Signature {
  int length = 0;   // non-delta slots
  int top = 0;      // 0 none, 1 series, 2 constant
  int second = 0;
  bool delta = false;
};

int Code(Slot s) { return s == Slot::kSeries ? 1 : 2; }

Signature SignatureOf(const StackState& state) {
  Signature sig;
  const auto& st = state.stack;
  std::size_t n = st.size();
  if (n > 0 && st.back() == Slot::kDelta) {
    sig.delta = true;
    --n;
  }
  sig.length = static_cast<int>(n);
  if (n >= 1) sig.top = Code(st[n - 1]);
  if (n >= 2) sig.second = Code(st[n - 2]);
  return sig;
}

StackState Representative(const Signature& sig) {
  StackState state;
  state.stack.assign(static_cast<std::size_t>(sig.length), Slot::kSeries);
  auto slot = [](int code) { return code == 1 ? Slot::kSeries : Slot::kConstant; };
  if (sig.length >= 1) state.stack[static_cast<std::size_t>(sig.length - 1)] = slot(sig.top);
  if (sig.length >= 2) state.stack[static_cast<std::size_t>(sig.length - 2)] = slot(sig.second);
  if (sig.delta) state.stack.push_back(Slot::kDelta);
  return state;
}

bool Reachable(const Signature& sig) {
  if (sig.length == 0) return sig.top == 0 && sig.second == 0 && !sig.delta;
  if (sig.top == 0) return false;
  if (sig.length == 1 && sig.second != 0) return false;
  if (sig.length >= 2 && sig.second == 0) return false;
  if (sig.delta && sig.top != 1) return false;
  return true;
}

}  // namespace

bool Grammar::Applicable(const StackState& state, const Token& token) {
  const auto& st = state.stack;
  const std::size_t n = st.size();
  const bool delta_on_top = n > 0 && st.back() == Slot::kDelta;
  auto at = [&](std::size_t from_top) { return st[n - 1 - from_top]; };
  switch (token.kind) {
    case TokenKind::kBegin:
      return false;
    case TokenKind::kFeature:
    case TokenKind::kConstant:
      return !delta_on_top;
    case TokenKind::kTimeDelta:
      return n > 0 && at(0) == Slot::kSeries;
    case TokenKind::kSeparator:
      return n == 1 && at(0) == Slot::kSeries;
    case TokenKind::kOperator:
      switch (ClassOf(token.op)) {
        case OpClass::kUnaryCrossSection:
          return n >= 1 && at(0) == Slot::kSeries;
        case OpClass::kBinaryCrossSection:
          return n >= 2 && at(0) != Slot::kDelta && at(1) != Slot::kDelta &&
                 (at(0) == Slot::kSeries || at(1) == Slot::kSeries);
        case OpClass::kUnaryTimeSeries:
          return delta_on_top && n >= 2 && at(1) == Slot::kSeries;
        case OpClass::kBinaryTimeSeries:
          return delta_on_top && n >= 3 && at(1) == Slot::kSeries && at(2) == Slot::kSeries;
      }
  }
  return false;
}

StackState Grammar::Apply(const StackState& state, const Token& token) {
  StackState next = state;
  next.tokens_emitted += 1;
  auto& st = next.stack;
  switch (token.kind) {
    case TokenKind::kFeature:
      st.push_back(Slot::kSeries);
      break;
    case TokenKind::kConstant:
      st.push_back(Slot::kConstant);
      break;
    case TokenKind::kTimeDelta:
      st.push_back(Slot::kDelta);
      break;
    case TokenKind::kSeparator:
    case TokenKind::kBegin:
      break;
    case TokenKind::kOperator:
      switch (ClassOf(token.op)) {
        case OpClass::kUnaryCrossSection:
          break;
        case OpClass::kBinaryCrossSection:
          st.pop_back();
          st.back() = Slot::kSeries;
          break;
        case OpClass::kUnaryTimeSeries:
          st.pop_back();
          break;
        case OpClass::kBinaryTimeSeries:
          st.pop_back();
          st.pop_back();
          break;
      }
      break;
  }
  return next;
}

int Grammar::MinCompletion(const StackState& state) {
  const Signature sig = SignatureOf(state);
  const int n = sig.length;
  if (sig.delta) {
    // One time-series op; Cov/Corr also folds the series underneath.
    return sig.second == 1 ? n : n + 1;
  }
  if (n == 0) return 2;  // push a feature, then SEP
  if (sig.top == 1) return n;  // n-1 binary ops, then SEP
  if (n == 1) return 3;        // lone constant: feature, binary op, SEP
  if (sig.second == 1) return n;
  return n + 2;  // two constants on top need a series pushed first
}

Grammar::Grammar(Vocabulary vocab, int max_len) : vocab_(std::move(vocab)), max_len_(max_len) {
  if (max_len_ < 3) throw std::invalid_argument("max_len must be at least 3");
  const std::size_t signatures = static_cast<std::size_t>(max_len_ + 1) * 3 * 3 * 2;
  const std::size_t budgets = static_cast<std::size_t>(max_len_ + 1);
  masks_.assign(signatures * budgets, {});
  none_.assign(vocab_.size(), 0);
  for (int len = 0; len <= max_len_; ++len) {
    for (int top = 0; top < 3; ++top) {
      for (int second = 0; second < 3; ++second) {
        for (int d = 0; d < 2; ++d) {
          const Signature sig{len, top, second, d == 1};
          if (!Reachable(sig)) continue;
          const StackState rep = Representative(sig);
          const std::size_t s = SignatureIndex(rep);
          for (int budget = 0; budget <= max_len_; ++budget) {
            std::vector<std::uint8_t> mask(vocab_.size(), 0);
            for (std::size_t id = 0; id < vocab_.size(); ++id) {
              const Token& token = vocab_.token(static_cast<int>(id));
              if (!Applicable(rep, token)) continue;
              if (token.kind == TokenKind::kSeparator) {
                mask[id] = budget >= 1;
              } else {
                mask[id] = MinCompletion(Apply(rep, token)) <= budget - 1;
              }
            }
            masks_[s * budgets + static_cast<std::size_t>(budget)] = std::move(mask);
          }
        }
      }
    }
  }
}

std::size_t Grammar::SignatureIndex(const StackState& state) const {
  const Signature sig = SignatureOf(state);
  const int len = std::min(sig.length, max_len_);
  return ((static_cast<std::size_t>(len) * 3 + static_cast<std::size_t>(sig.top)) * 3 +
          static_cast<std::size_t>(sig.second)) *
             2 +
         (sig.delta ? 1 : 0);
}

const std::vector<std::uint8_t>& Grammar::LegalActions(const StackState& state,
                                                       int budget_remaining) const {
  if (budget_remaining < 0) return none_;
  const Signature sig = SignatureOf(state);
  if (sig.length > max_len_) return none_;
  const int budget = std::min(budget_remaining, max_len_);
  const auto& mask =
      masks_[SignatureIndex(state) * static_cast<std::size_t>(max_len_ + 1) +
             static_cast<std::size_t>(budget)];
  return mask.empty() ? none_ : mask;
}

RpnProgram Parse(const std::vector<Token>& tokens, const Grammar& grammar) {
  if (tokens.empty() || tokens.front().kind != TokenKind::kBegin) {
    throw FormulaError("program must start with BEG", 0, "[]");
  }
  if (static_cast<int>(tokens.size()) > grammar.max_len()) {
    throw FormulaError("program longer than max_len " + std::to_string(grammar.max_len()),
                       static_cast<std::size_t>(grammar.max_len()), "");
  }
  StackState state = grammar.Initial();
  const Vocabulary& vocab = grammar.vocab();
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    const Token& token = tokens[i];
    const int id = vocab.IdOf(token);
    const auto& mask = grammar.LegalActions(state);
    if (id < 0 || id == vocab.begin_id() || !mask[static_cast<std::size_t>(id)]) {
      throw FormulaError("illegal token '" + TokenText(token) + "' at index " +
                             std::to_string(i) + " with stack " + DescribeStack(state),
                         i, DescribeStack(state));
    }
    if (token.kind == TokenKind::kSeparator) {
      if (i + 1 != tokens.size()) {
        throw FormulaError("tokens after SEP at index " + std::to_string(i + 1), i + 1,
                           DescribeStack(state));
      }
      RpnProgram program;
      program.tokens_ = tokens;
      program.max_len_ = grammar.max_len();
      return program;
    }
    state = Grammar::Apply(state, token);
  }
  throw FormulaError("program does not end with SEP (stack " + DescribeStack(state) + ")",
                     tokens.size(), DescribeStack(state));
}

}  // namespace alphamine
