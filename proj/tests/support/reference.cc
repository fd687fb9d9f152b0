#include "reference.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

namespace alphamine::testref {

namespace {

double Nan() { return std::numeric_limits<double>::quiet_NaN(); }
bool Bad(double v) { return !std::isfinite(v); }
double Clean(double v) { return std::isfinite(v) ? v : Nan(); }

int Arity(Op op) {
  switch (ClassOf(op)) {
    case OpClass::kUnaryCrossSection:
      return 1;
    case OpClass::kBinaryCrossSection:
    case OpClass::kUnaryTimeSeries:
      return 2;
    case OpClass::kBinaryTimeSeries:
      return 3;
  }
  return 0;
}

// Value of a node at every cell; constants broadcast, deltas unused.
using Grid = std::vector<std::vector<double>>;  // [asset][day]

Grid Walk(const Node& node, const PanelTensor& panel);

Grid Fill(const PanelTensor& panel, double v) {
  return Grid(panel.assets(), std::vector<double>(panel.days(), v));
}

// Trailing window ending at `day`, oldest first; empty if it does not fit or
// holds a missing cell.
std::vector<double> Window(const std::vector<double>& series, std::size_t day, int l) {
  if (day + 1 < static_cast<std::size_t>(l)) return {};
  std::vector<double> w(series.begin() + static_cast<std::ptrdiff_t>(day + 1 - l),
                        series.begin() + static_cast<std::ptrdiff_t>(day + 1));
  for (double v : w) {
    if (Bad(v)) return {};
  }
  return w;
}

double Average(const std::vector<double>& w) {
  double s = 0;
  for (double v : w) s += v;
  return s / static_cast<double>(w.size());
}

double SampleVariance(const std::vector<double>& w) {
  if (w.size() < 2) return Nan();
  const double m = Average(w);
  double ss = 0;
  for (double v : w) ss += (v - m) * (v - m);
  return ss / static_cast<double>(w.size() - 1);
}

double Reduce(Op op, const std::vector<double>& w) {
  const int l = static_cast<int>(w.size());
  switch (op) {
    case Op::kMean:
      return Average(w);
    case Op::kSum: {
      double s = 0;
      for (double v : w) s += v;
      return s;
    }
    case Op::kVar:
      return SampleVariance(w);
    case Op::kStd:
      return std::sqrt(SampleVariance(w));
    case Op::kMax:
      return *std::max_element(w.begin(), w.end());
    case Op::kMin:
      return *std::min_element(w.begin(), w.end());
    case Op::kMed: {
      std::vector<double> s = w;
      std::sort(s.begin(), s.end());
      const std::size_t h = s.size() / 2;
      return s.size() % 2 == 1 ? s[h] : 0.5 * (s[h - 1] + s[h]);
    }
    case Op::kMad: {
      const double m = Average(w);
      double s = 0;
      for (double v : w) s += std::fabs(v - m);
      return s / l;
    }
    case Op::kWma: {
      // Oldest cell weight 1, today weight l.
      double s = 0;
      for (int k = 0; k < l; ++k) s += (k + 1) * w[static_cast<std::size_t>(k)];
      return s / (0.5 * l * (l + 1.0));
    }
    case Op::kEma: {
      const double a = 2.0 / (l + 1.0);
      double s = 0, norm = 0;
      std::vector<double> weight(w.size());
      for (int k = 0; k < l; ++k) {
        weight[static_cast<std::size_t>(k)] = std::pow(1.0 - a, static_cast<double>(l - 1 - k));
        norm += weight[static_cast<std::size_t>(k)];
      }
      for (int k = 0; k < l; ++k) s += weight[static_cast<std::size_t>(k)] * w[static_cast<std::size_t>(k)];
      return s / norm;
    }
    default:
      throw std::logic_error("not a window reduction");
  }
}

double PairReduce(Op op, const std::vector<double>& a, const std::vector<double>& b) {
  const int l = static_cast<int>(a.size());
  if (l < 2) return Nan();
  const double ma = Average(a), mb = Average(b);
  double sab = 0, saa = 0, sbb = 0;
  for (int k = 0; k < l; ++k) {
    const double da = a[static_cast<std::size_t>(k)] - ma;
    const double db = b[static_cast<std::size_t>(k)] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (op == Op::kCov) return sab / (l - 1);
  if (saa > 0 && sbb > 0) return sab / std::sqrt(saa * sbb);
  return Nan();
}

double Arith(Op op, double lhs, double rhs) {
  if (Bad(lhs) || Bad(rhs)) return Nan();
  switch (op) {
    case Op::kAdd:
      return Clean(lhs + rhs);
    case Op::kSub:
      return Clean(lhs - rhs);
    case Op::kMul:
      return Clean(lhs * rhs);
    case Op::kDiv:
      return rhs == 0 ? Nan() : Clean(lhs / rhs);
    case Op::kLarger:
      return lhs > rhs ? lhs : rhs;
    case Op::kSmaller:
      return lhs < rhs ? lhs : rhs;
    default:
      throw std::logic_error("not arithmetic");
  }
}

Grid Walk(const Node& node, const PanelTensor& panel) {
  const Token& t = node.token;
  const std::size_t n = panel.assets(), days = panel.days();
  if (t.kind == TokenKind::kFeature) {
    const int j = panel.FeatureIndex(FeatureName(t.index));
    if (j < 0) throw std::runtime_error("feature missing from panel");
    Grid g = Fill(panel, 0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t d = 0; d < days; ++d) g[i][d] = panel.value(i, static_cast<std::size_t>(j), d);
    }
    return g;
  }
  if (t.kind == TokenKind::kConstant) return Fill(panel, t.value);
  if (t.kind != TokenKind::kOperator) throw std::logic_error("unexpected leaf");

  Grid out = Fill(panel, Nan());
  switch (ClassOf(t.op)) {
    case OpClass::kUnaryCrossSection: {
      const Grid x = Walk(*node.kids[0], panel);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < days; ++d) {
          const double v = x[i][d];
          if (Bad(v)) continue;
          if (t.op == Op::kAbs) out[i][d] = std::fabs(v);
          if (t.op == Op::kLog && v > 0) out[i][d] = Clean(std::log(v));
        }
      }
      break;
    }
    case OpClass::kBinaryCrossSection: {
      // The later-pushed child is the left-hand side.
      const Grid rhs = Walk(*node.kids[0], panel);
      const Grid lhs = Walk(*node.kids[1], panel);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < days; ++d) out[i][d] = Arith(t.op, lhs[i][d], rhs[i][d]);
      }
      break;
    }
    case OpClass::kUnaryTimeSeries: {
      const Grid x = Walk(*node.kids[0], panel);
      const int l = node.kids[1]->token.index;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < days; ++d) {
          if (t.op == Op::kRef || t.op == Op::kDelta) {
            if (d < static_cast<std::size_t>(l)) continue;
            const double past = x[i][d - static_cast<std::size_t>(l)];
            out[i][d] = t.op == Op::kRef ? past : Arith(Op::kSub, x[i][d], past);
            continue;
          }
          const auto w = Window(x[i], d, l);
          if (!w.empty()) out[i][d] = Clean(Reduce(t.op, w));
        }
      }
      break;
    }
    case OpClass::kBinaryTimeSeries: {
      const Grid a = Walk(*node.kids[0], panel);
      const Grid b = Walk(*node.kids[1], panel);
      const int l = node.kids[2]->token.index;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < days; ++d) {
          const auto wa = Window(a[i], d, l);
          const auto wb = Window(b[i], d, l);
          if (!wa.empty() && !wb.empty()) out[i][d] = Clean(PairReduce(t.op, wa, wb));
        }
      }
      break;
    }
  }
  return out;
}

// Random subtree description, serialized in push order.
void Grow(std::vector<Token>& out, std::mt19937_64& rng, int depth, bool allow_constant) {
  std::uniform_int_distribution<int> coin(0, 99);
  auto leaf = [&] {
    if (allow_constant && coin(rng) < 25) {
      const auto& cs = Vocabulary::DefaultConstants();
      out.push_back(Token::Constant(cs[std::uniform_int_distribution<std::size_t>(0, cs.size() - 1)(rng)]));
    } else {
      out.push_back(Token::Feature(std::uniform_int_distribution<int>(0, kFeatureCount - 1)(rng)));
    }
  };
  if (depth == 0 || coin(rng) < 20) {
    if (allow_constant) {
      leaf();
    } else {
      out.push_back(Token::Feature(std::uniform_int_distribution<int>(0, kFeatureCount - 1)(rng)));
    }
    return;
  }
  const Op op = static_cast<Op>(std::uniform_int_distribution<int>(0, kOpCount - 1)(rng));
  const auto& deltas = Vocabulary::DefaultTimeDeltas();
  // Short windows keep most cells defined on 30-day panels.
  const int l = deltas[std::uniform_int_distribution<std::size_t>(0, 2)(rng)];
  switch (ClassOf(op)) {
    case OpClass::kUnaryCrossSection:
      Grow(out, rng, depth - 1, false);
      break;
    case OpClass::kBinaryCrossSection: {
      const int constant_side = coin(rng) % 3;  // 0: none, 1: first, 2: second
      Grow(out, rng, depth - 1, constant_side == 1);
      if (constant_side == 1 && out.back().kind == TokenKind::kConstant) {
        Grow(out, rng, depth - 1, false);
      } else {
        Grow(out, rng, depth - 1, constant_side == 2);
      }
      break;
    }
    case OpClass::kUnaryTimeSeries:
      Grow(out, rng, depth - 1, false);
      out.push_back(Token::Delta(l));
      break;
    case OpClass::kBinaryTimeSeries:
      Grow(out, rng, depth - 1, false);
      Grow(out, rng, depth - 1, false);
      out.push_back(Token::Delta(l));
      break;
  }
  out.push_back(Token::Operator(op));
}

using Memo = std::map<std::pair<std::vector<Tag>, int>, bool>;

bool Push(std::vector<Tag> stack, const Token& token, std::vector<Tag>& next) {
  const std::size_t n = stack.size();
  const bool delta_top = n > 0 && stack.back() == Tag::kDelta;
  auto from_top = [&](std::size_t k) { return stack[n - 1 - k]; };
  switch (token.kind) {
    case TokenKind::kFeature:
      if (delta_top) return false;
      stack.push_back(Tag::kSeries);
      break;
    case TokenKind::kConstant:
      if (delta_top) return false;
      stack.push_back(Tag::kConst);
      break;
    case TokenKind::kTimeDelta:
      if (n == 0 || from_top(0) != Tag::kSeries) return false;
      stack.push_back(Tag::kDelta);
      break;
    case TokenKind::kOperator:
      switch (ClassOf(token.op)) {
        case OpClass::kUnaryCrossSection:
          if (n == 0 || from_top(0) != Tag::kSeries) return false;
          break;
        case OpClass::kBinaryCrossSection:
          if (n < 2 || from_top(0) == Tag::kDelta || from_top(1) == Tag::kDelta) return false;
          if (from_top(0) == Tag::kConst && from_top(1) == Tag::kConst) return false;
          stack.pop_back();
          stack.back() = Tag::kSeries;
          break;
        case OpClass::kUnaryTimeSeries:
          if (!delta_top || n < 2 || from_top(1) != Tag::kSeries) return false;
          stack.pop_back();
          break;
        case OpClass::kBinaryTimeSeries:
          if (!delta_top || n < 3 || from_top(1) != Tag::kSeries || from_top(2) != Tag::kSeries) {
            return false;
          }
          stack.pop_back();
          stack.pop_back();
          break;
      }
      break;
    default:
      return false;
  }
  next = std::move(stack);
  return true;
}

bool Search(const std::vector<Tag>& stack, int budget, Memo& memo) {
  if (budget <= 0) return false;
  if (stack.size() == 1 && stack[0] == Tag::kSeries) return true;  // SEP fits
  // Every token removes at most one non-delta entry and SEP needs one left.
  if (std::count_if(stack.begin(), stack.end(), [](Tag t) { return t != Tag::kDelta; }) > budget) {
    return false;
  }
  const auto key = std::make_pair(stack, budget);
  if (const auto it = memo.find(key); it != memo.end()) return it->second;
  static const Token kProbes[] = {
      Token::Feature(0),          Token::Constant(1.0),         Token::Delta(10),
      Token::Operator(Op::kAbs),  Token::Operator(Op::kAdd),    Token::Operator(Op::kMean),
      Token::Operator(Op::kCorr),
  };
  bool ok = false;
  for (const Token& probe : kProbes) {
    std::vector<Tag> next;
    if (Push(stack, probe, next) && Search(next, budget - 1, memo)) {
      ok = true;
      break;
    }
  }
  memo[key] = ok;
  return ok;
}

}  // namespace

std::unique_ptr<Node> BuildTree(const RpnProgram& program) {
  std::vector<std::unique_ptr<Node>> stack;
  for (const Token& t : program.tokens()) {
    if (t.kind == TokenKind::kBegin || t.kind == TokenKind::kSeparator) continue;
    auto node = std::make_unique<Node>();
    node->token = t;
    if (t.kind == TokenKind::kOperator) {
      const int k = Arity(t.op);
      if (static_cast<int>(stack.size()) < k) throw std::logic_error("stack underflow");
      for (int j = 0; j < k; ++j) {
        node->kids.push_back(std::move(stack[stack.size() - static_cast<std::size_t>(k - j)]));
      }
      stack.resize(stack.size() - static_cast<std::size_t>(k));
    }
    stack.push_back(std::move(node));
  }
  if (stack.size() != 1) throw std::logic_error("program does not reduce to one node");
  return std::move(stack[0]);
}

FactorMatrix TreeEvaluate(const RpnProgram& program, const PanelTensor& panel) {
  const auto root = BuildTree(program);
  const Grid g = Walk(*root, panel);
  FactorMatrix out(panel.assets(), panel.days());
  for (std::size_t i = 0; i < panel.assets(); ++i) {
    for (std::size_t d = 0; d < panel.days(); ++d) out.at(i, d) = Clean(g[i][d]);
  }
  return out;
}

RpnProgram RandomProgram(const Grammar& grammar, std::mt19937_64& rng, int max_depth) {
  for (;;) {
    std::vector<Token> tokens{Token::Begin()};
    Grow(tokens, rng, max_depth, false);
    tokens.push_back(Token::Separator());
    if (static_cast<int>(tokens.size()) > grammar.max_len()) continue;
    return Parse(tokens, grammar);
  }
}

PanelTensor RandomPanel(std::size_t assets, std::size_t days, std::mt19937_64& rng,
                        double missing_rate) {
  std::vector<std::string> symbols;
  for (std::size_t i = 0; i < assets; ++i) symbols.push_back("A" + std::to_string(i));
  std::vector<Date> dates;
  for (std::size_t d = 0; d < days; ++d) {
    const auto day = std::chrono::sys_days(std::chrono::year{2020} / 1 / 1) + std::chrono::days(d);
    dates.push_back(Date{std::chrono::year_month_day(day)});
  }
  std::uniform_real_distribution<double> u(0, 1);
  std::normal_distribution<double> z(0, 1);
  std::vector<FactorMatrix> features;
  for (int f = 0; f < kFeatureCount; ++f) {
    FactorMatrix m(assets, days);
    for (std::size_t i = 0; i < assets; ++i) {
      for (std::size_t d = 0; d < days; ++d) {
        const double r = u(rng);
        if (r < missing_rate) continue;
        if (r < missing_rate + 0.02) {
          m.at(i, d) = 0.0;
        } else if (f == 4) {
          m.at(i, d) = std::floor(1000 * u(rng));  // volume-like, non-negative
        } else {
          m.at(i, d) = 10 + 3 * z(rng);
          if (u(rng) < 0.05) m.at(i, d) = -m.at(i, d);
        }
      }
    }
    features.push_back(std::move(m));
  }
  std::vector<std::string> names;
  for (int f = 0; f < kFeatureCount; ++f) names.emplace_back(FeatureName(f));
  return PanelTensor(symbols, dates, names, std::move(features));
}

bool Completable(std::vector<Tag> stack, int budget) {
  static thread_local Memo memo;
  return Search(stack, budget, memo);
}

bool TokenLegal(const std::vector<Tag>& stack, const Token& token, int budget) {
  if (budget <= 0) return false;
  if (token.kind == TokenKind::kSeparator) return stack.size() == 1 && stack[0] == Tag::kSeries;
  std::vector<Tag> next;
  if (!Push(stack, token, next)) return false;
  return Completable(next, budget - 1);
}

}  // namespace alphamine::testref
