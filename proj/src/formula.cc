#include "alphamine/formula.h"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <sstream>
#include <system_error>

namespace alphamine {

namespace {

struct OpInfo {
  Op op;
  std::string_view name;
  OpClass cls;
};

constexpr std::array<OpInfo, kOpCount> kOps = {{
    {Op::kAbs, "Abs", OpClass::kUnaryCrossSection},
    {Op::kLog, "Log", OpClass::kUnaryCrossSection},
    {Op::kAdd, "Add", OpClass::kBinaryCrossSection},
    {Op::kSub, "Sub", OpClass::kBinaryCrossSection},
    {Op::kMul, "Mul", OpClass::kBinaryCrossSection},
    {Op::kDiv, "Div", OpClass::kBinaryCrossSection},
    {Op::kLarger, "Larger", OpClass::kBinaryCrossSection},
    {Op::kSmaller, "Smaller", OpClass::kBinaryCrossSection},
    {Op::kRef, "Ref", OpClass::kUnaryTimeSeries},
    {Op::kMean, "Mean", OpClass::kUnaryTimeSeries},
    {Op::kMed, "Med", OpClass::kUnaryTimeSeries},
    {Op::kSum, "Sum", OpClass::kUnaryTimeSeries},
    {Op::kStd, "Std", OpClass::kUnaryTimeSeries},
    {Op::kVar, "Var", OpClass::kUnaryTimeSeries},
    {Op::kMax, "Max", OpClass::kUnaryTimeSeries},
    {Op::kMin, "Min", OpClass::kUnaryTimeSeries},
    {Op::kMad, "Mad", OpClass::kUnaryTimeSeries},
    {Op::kDelta, "Delta", OpClass::kUnaryTimeSeries},
    {Op::kWma, "WMA", OpClass::kUnaryTimeSeries},
    {Op::kEma, "EMA", OpClass::kUnaryTimeSeries},
    {Op::kCov, "Cov", OpClass::kBinaryTimeSeries},
    {Op::kCorr, "Corr", OpClass::kBinaryTimeSeries},
}};

constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "open", "high", "low", "close", "volume", "vwap"};

std::string FormatConstant(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

OpClass ClassOf(Op op) { return kOps[static_cast<std::size_t>(op)].cls; }

std::string_view OpName(Op op) { return kOps[static_cast<std::size_t>(op)].name; }

std::optional<Op> OpFromName(std::string_view name) {
  for (const auto& info : kOps) {
    if (info.name == name) return info.op;
  }
  if (name == "Medium") return Op::kMed;
  return std::nullopt;
}

std::string_view FeatureName(int index) {
  return kFeatureNames.at(static_cast<std::size_t>(index));
}

std::optional<int> FeatureFromName(std::string_view name) {
  for (int i = 0; i < kFeatureCount; ++i) {
    if (kFeatureNames[static_cast<std::size_t>(i)] == name) return i;
  }
  return std::nullopt;
}

bool operator==(const Token& a, const Token& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case TokenKind::kOperator:
      return a.op == b.op;
    case TokenKind::kFeature:
    case TokenKind::kTimeDelta:
      return a.index == b.index;
    case TokenKind::kConstant:
      return a.value == b.value;
    case TokenKind::kBegin:
    case TokenKind::kSeparator:
      return true;
  }
  return false;
}

std::string TokenText(const Token& token) {
  switch (token.kind) {
    case TokenKind::kOperator:
      return std::string(OpName(token.op));
    case TokenKind::kFeature:
      return std::string(FeatureName(token.index));
    case TokenKind::kTimeDelta:
      return std::to_string(token.index) + "d";
    case TokenKind::kConstant:
      return FormatConstant(token.value);
    case TokenKind::kBegin:
      return "BEG";
    case TokenKind::kSeparator:
      return "SEP";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Vocabulary

const std::vector<int>& Vocabulary::DefaultTimeDeltas() {
  static const std::vector<int> kDeltas = {10, 20, 30, 40, 50};
  return kDeltas;
}

const std::vector<double>& Vocabulary::DefaultConstants() {
  static const std::vector<double> kConstants = {-30, -10, -5,  -2, -1, -0.5, -0.01,
                                                 0.01, 0.5, 1,  2,  5,  10,   30};
  return kConstants;
}

Vocabulary::Vocabulary() : Vocabulary({0, 1, 2, 3, 4, 5}, {}, DefaultTimeDeltas(),
                                      DefaultConstants()) {}

Vocabulary::Vocabulary(std::vector<int> features, std::vector<Op> ops,
                       std::vector<int> time_deltas, std::vector<double> constants)
    : time_deltas_(std::move(time_deltas)) {
  if (ops.empty()) {
    for (const auto& info : kOps) ops.push_back(info.op);
  }
  for (int f : features) {
    if (f < 0 || f >= kFeatureCount) throw std::invalid_argument("unknown feature index");
    tokens_.push_back(Token::Feature(f));
  }
  for (Op op : ops) tokens_.push_back(Token::Operator(op));
  for (int d : time_deltas_) {
    if (d <= 0) throw std::invalid_argument("time delta must be positive");
    tokens_.push_back(Token::Delta(d));
  }
  for (double c : constants) tokens_.push_back(Token::Constant(c));
  tokens_.push_back(Token::Separator());
}

int Vocabulary::IdOf(const Token& token) const {
  if (token.kind == TokenKind::kBegin) return begin_id();
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i] == token) return static_cast<int>(i);
  }
  return -1;
}

int Vocabulary::max_time_delta() const {
  int best = 0;
  for (int d : time_deltas_) best = std::max(best, d);
  return best;
}

std::string DescribeStack(const StackState& state) {
  std::string out = "[";
  for (std::size_t i = 0; i < state.stack.size(); ++i) {
    if (i) out += ", ";
    switch (state.stack[i]) {
      case Slot::kSeries:
        out += "Series";
        break;
      case Slot::kConstant:
        out += "Constant";
        break;
      case Slot::kDelta:
        out += "Delta";
        break;
    }
  }
  return out + "]";
}

// ---------------------------------------------------------------------------
// RpnProgram

int RpnProgram::Lookback() const {
  std::vector<int> stack;
  for (const Token& t : tokens_) {
    switch (t.kind) {
      case TokenKind::kFeature:
      case TokenKind::kConstant:
        stack.push_back(0);
        break;
      case TokenKind::kTimeDelta:
        stack.push_back(t.index);
        break;
      case TokenKind::kOperator: {
        const OpClass cls = ClassOf(t.op);
        if (cls == OpClass::kUnaryCrossSection) break;
        if (cls == OpClass::kBinaryCrossSection) {
          const int b = stack.back();
          stack.pop_back();
          stack.back() = std::max(stack.back(), b);
          break;
        }
        const int window = stack.back();
        stack.pop_back();
        int child = stack.back();
        stack.pop_back();
        if (cls == OpClass::kBinaryTimeSeries) {
          child = std::max(child, stack.back());
          stack.pop_back();
        }
        const bool shift = t.op == Op::kRef || t.op == Op::kDelta;
        stack.push_back(child + (shift ? window : window - 1));
        break;
      }
      case TokenKind::kBegin:
      case TokenKind::kSeparator:
        break;
    }
  }
  return stack.empty() ? 0 : stack.back();
}

std::string RpnProgram::Key() const {
  std::string out;
  for (std::size_t i = 1; i + 1 < tokens_.size(); ++i) {
    if (!out.empty()) out += ' ';
    out += TokenText(tokens_[i]);
  }
  return out;
}

RpnProgram ProgramFromIds(const std::vector<int>& ids, const Grammar& grammar) {
  const Vocabulary& vocab = grammar.vocab();
  std::vector<Token> tokens;
  tokens.reserve(ids.size() + 2);
  if (ids.empty() || ids.front() != vocab.begin_id()) tokens.push_back(Token::Begin());
  for (int id : ids) {
    if (id == vocab.begin_id()) {
      tokens.push_back(Token::Begin());
    } else {
      tokens.push_back(vocab.token(id));
    }
  }
  if (tokens.back().kind != TokenKind::kSeparator) tokens.push_back(Token::Separator());
  return Parse(tokens, grammar);
}

// ---------------------------------------------------------------------------
// Infix rendering and tokenizing

std::string ToInfix(const RpnProgram& program) {
  std::vector<std::string> stack;
  for (const Token& t : program.tokens()) {
    switch (t.kind) {
      case TokenKind::kBegin:
      case TokenKind::kSeparator:
        break;
      case TokenKind::kFeature:
      case TokenKind::kConstant:
      case TokenKind::kTimeDelta:
        stack.push_back(TokenText(t));
        break;
      case TokenKind::kOperator: {
        const std::string name(OpName(t.op));
        switch (ClassOf(t.op)) {
          case OpClass::kUnaryCrossSection:
            stack.back() = name + "(" + stack.back() + ")";
            break;
          case OpClass::kBinaryCrossSection: {
            // Later-pushed operand is the left-hand side: [low, high, Sub]
            // reads as (high - low).
            std::string rhs = std::move(stack[stack.size() - 2]);
            std::string lhs = std::move(stack.back());
            stack.pop_back();
            std::string_view symbol;
            if (t.op == Op::kAdd) symbol = "+";
            if (t.op == Op::kSub) symbol = "-";
            if (t.op == Op::kMul) symbol = "*";
            if (t.op == Op::kDiv) symbol = "/";
            if (!symbol.empty()) {
              stack.back() = "(" + lhs + " " + std::string(symbol) + " " + rhs + ")";
            } else {
              stack.back() = name + "(" + lhs + ", " + rhs + ")";
            }
            break;
          }
          case OpClass::kUnaryTimeSeries: {
            std::string window = std::move(stack.back());
            stack.pop_back();
            stack.back() = name + "(" + stack.back() + ", " + window + ")";
            break;
          }
          case OpClass::kBinaryTimeSeries: {
            std::string window = std::move(stack.back());
            stack.pop_back();
            std::string second = std::move(stack.back());
            stack.pop_back();
            stack.back() = name + "(" + stack.back() + ", " + second + ", " + window + ")";
            break;
          }
        }
        break;
      }
    }
  }
  return stack.empty() ? std::string() : stack.back();
}

namespace {

class InfixParser {
 public:
  explicit InfixParser(std::string_view text) : text_(text) {}

  std::vector<Token> Run() {
    out_.push_back(Token::Begin());
    Expression();
    SkipSpace();
    if (pos_ != text_.size()) Fail("trailing characters");
    out_.push_back(Token::Separator());
    return std::move(out_);
  }

 private:
  [[noreturn]] void Fail(const std::string& what) const {
    throw FormulaError("infix parse error at column " + std::to_string(pos_) + ": " + what +
                           " in '" + std::string(text_) + "'",
                       pos_, "");
  }

  void SkipSpace() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool Peek(char c) {
    SkipSpace();
    return pos_ < text_.size() && text_[pos_] == c;
  }

  void Expect(char c) {
    if (!Peek(c)) Fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  // Parses one operand and appends its RPN.
  void Expression() {
    SkipSpace();
    if (pos_ >= text_.size()) Fail("unexpected end");
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      // (lhs op rhs) => rhs lhs op
      std::vector<Token> saved = std::move(out_);
      out_.clear();
      Expression();
      std::vector<Token> lhs = std::move(out_);
      out_.clear();
      SkipSpace();
      if (pos_ >= text_.size()) Fail("expected operator");
      Op op;
      switch (text_[pos_]) {
        case '+':
          op = Op::kAdd;
          break;
        case '-':
          op = Op::kSub;
          break;
        case '*':
          op = Op::kMul;
          break;
        case '/':
          op = Op::kDiv;
          break;
        default:
          Fail("expected one of + - * /");
      }
      ++pos_;
      Expression();
      std::vector<Token> rhs = std::move(out_);
      Expect(')');
      out_ = std::move(saved);
      out_.insert(out_.end(), rhs.begin(), rhs.end());
      out_.insert(out_.end(), lhs.begin(), lhs.end());
      out_.push_back(Token::Operator(op));
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+' || c == '.') {
      Number();
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      const std::size_t start = pos_;
      while (pos_ < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) ||
                                     text_[pos_] == '_')) {
        ++pos_;
      }
      const std::string_view word = text_.substr(start, pos_ - start);
      if (auto f = FeatureFromName(word)) {
        out_.push_back(Token::Feature(*f));
        return;
      }
      auto op = OpFromName(word);
      if (!op) {
        pos_ = start;
        Fail("unknown name '" + std::string(word) + "'");
      }
      Call(*op);
      return;
    }
    Fail(std::string("unexpected character '") + c + "'");
  }

  void Call(Op op) {
    Expect('(');
    switch (ClassOf(op)) {
      case OpClass::kUnaryCrossSection:
        Expression();
        break;
      case OpClass::kBinaryCrossSection: {
        // Name(lhs, rhs) => rhs lhs op, same as the arithmetic form.
        std::vector<Token> saved = std::move(out_);
        out_.clear();
        Expression();
        std::vector<Token> lhs = std::move(out_);
        out_.clear();
        Expect(',');
        Expression();
        std::vector<Token> rhs = std::move(out_);
        out_ = std::move(saved);
        out_.insert(out_.end(), rhs.begin(), rhs.end());
        out_.insert(out_.end(), lhs.begin(), lhs.end());
        break;
      }
      case OpClass::kUnaryTimeSeries:
        Expression();
        Expect(',');
        Expression();
        break;
      case OpClass::kBinaryTimeSeries:
        Expression();
        Expect(',');
        Expression();
        Expect(',');
        Expression();
        break;
    }
    Expect(')');
    out_.push_back(Token::Operator(op));
  }

  void Number() {
    const std::size_t start = pos_;
    if (text_[pos_] == '+') ++pos_;
    const char* first = text_.data() + pos_;
    const char* last = text_.data() + text_.size();
    double value = 0;
    auto res = std::from_chars(first, last, value);
    if (res.ec != std::errc()) {
      pos_ = start;
      Fail("bad number");
    }
    pos_ = static_cast<std::size_t>(res.ptr - text_.data());
    if (pos_ < text_.size() && text_[pos_] == 'd') {
      ++pos_;
      const int days = static_cast<int>(value);
      if (static_cast<double>(days) != value || days <= 0) {
        pos_ = start;
        Fail("time delta must be a positive integer");
      }
      out_.push_back(Token::Delta(days));
      return;
    }
    out_.push_back(Token::Constant(value));
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::vector<Token> out_;
};

}  // namespace

std::vector<Token> TokenizeInfix(std::string_view text) { return InfixParser(text).Run(); }

RpnProgram ParseInfix(std::string_view text, const Grammar& grammar) {
  return Parse(TokenizeInfix(text), grammar);
}

}  // namespace alphamine
