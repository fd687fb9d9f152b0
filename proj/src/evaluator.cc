#include "alphamine/evaluator.h"

#include <algorithm>
#include <cmath>
#include <string>
#include <variant>
#include <vector>

namespace alphamine {

namespace kernels {

namespace {

double Finite(double v) { return std::isfinite(v) ? v : Missing(); }

double WindowMean(const double* w, int l) {
  double s = 0;
  for (int k = 0; k < l; ++k) s += w[k];
  return s / l;
}

double WindowVar(const double* w, int l) {
  if (l < 2) return Missing();
  const double m = WindowMean(w, l);
  double ss = 0;
  for (int k = 0; k < l; ++k) ss += (w[k] - m) * (w[k] - m);
  return ss / (l - 1);
}

// prefix[t + 1] = number of missing cells in x[0..t].
void MissingPrefix(std::span<const double> x, std::vector<int>& prefix) {
  prefix.resize(x.size() + 1);
  prefix[0] = 0;
  for (std::size_t t = 0; t < x.size(); ++t) prefix[t + 1] = prefix[t] + (IsMissing(x[t]) ? 1 : 0);
}

}  // namespace

void Ref(std::span<const double> x, int l, std::span<double> out) {
  const std::size_t n = x.size();
  for (std::size_t t = 0; t < n; ++t) {
    out[t] = t >= static_cast<std::size_t>(l) ? x[t - static_cast<std::size_t>(l)] : Missing();
  }
}

void Rolling(Op op, std::span<const double> x, int l, std::span<double> out) {
  const std::size_t n = x.size();
  const std::size_t win = static_cast<std::size_t>(l);
  if (op == Op::kRef) {
    Ref(x, l, out);
    return;
  }
  if (op == Op::kDelta) {
    for (std::size_t t = 0; t < n; ++t) {
      out[t] = t >= win ? Finite(x[t] - x[t - win]) : Missing();
    }
    return;
  }
  thread_local std::vector<int> missing;
  MissingPrefix(x, missing);
  thread_local std::vector<double> scratch;
  std::vector<double> ema_weights;
  double ema_norm = 0;
  if (op == Op::kEma) {
    const double alpha = 2.0 / (l + 1.0);
    ema_weights.resize(win);
    for (std::size_t k = 0; k < win; ++k) {
      ema_weights[k] = std::pow(1.0 - alpha, static_cast<double>(win - 1 - k));
      ema_norm += ema_weights[k];
    }
  }
  for (std::size_t t = 0; t < n; ++t) {
    if (t + 1 < win || missing[t + 1] - missing[t + 1 - win] > 0) {
      out[t] = Missing();
      continue;
    }
    const double* w = x.data() + (t + 1 - win);
    double v = 0;
    switch (op) {
      case Op::kMean:
        v = WindowMean(w, l);
        break;
      case Op::kSum: {
        double s = 0;
        for (int k = 0; k < l; ++k) s += w[k];
        v = s;
        break;
      }
      case Op::kVar:
        v = WindowVar(w, l);
        break;
      case Op::kStd:
        v = std::sqrt(WindowVar(w, l));
        break;
      case Op::kMax:
        v = *std::max_element(w, w + l);
        break;
      case Op::kMin:
        v = *std::min_element(w, w + l);
        break;
      case Op::kMed: {
        scratch.assign(w, w + l);
        std::sort(scratch.begin(), scratch.end());
        v = (l % 2 == 1) ? scratch[win / 2] : 0.5 * (scratch[win / 2 - 1] + scratch[win / 2]);
        break;
      }
      case Op::kMad: {
        const double m = WindowMean(w, l);
        double s = 0;
        for (int k = 0; k < l; ++k) s += std::fabs(w[k] - m);
        v = s / l;
        break;
      }
      case Op::kWma: {
        double s = 0;
        for (int k = 0; k < l; ++k) s += (k + 1) * w[k];
        v = s / (0.5 * l * (l + 1.0));
        break;
      }
      case Op::kEma: {
        double s = 0;
        for (std::size_t k = 0; k < win; ++k) s += ema_weights[k] * w[k];
        v = s / ema_norm;
        break;
      }
      default:
        v = Missing();
        break;
    }
    out[t] = Finite(v);
  }
}

void RollingPair(Op op, std::span<const double> x, std::span<const double> y, int l,
                 std::span<double> out) {
  const std::size_t n = x.size();
  const std::size_t win = static_cast<std::size_t>(l);
  thread_local std::vector<int> mx, my;
  MissingPrefix(x, mx);
  MissingPrefix(y, my);
  for (std::size_t t = 0; t < n; ++t) {
    if (l < 2 || t + 1 < win || mx[t + 1] - mx[t + 1 - win] > 0 ||
        my[t + 1] - my[t + 1 - win] > 0) {
      out[t] = Missing();
      continue;
    }
    const double* a = x.data() + (t + 1 - win);
    const double* b = y.data() + (t + 1 - win);
    const double ma = WindowMean(a, l);
    const double mb = WindowMean(b, l);
    double sab = 0, saa = 0, sbb = 0;
    for (int k = 0; k < l; ++k) {
      const double da = a[k] - ma;
      const double db = b[k] - mb;
      sab += da * db;
      saa += da * da;
      sbb += db * db;
    }
    double v;
    if (op == Op::kCov) {
      v = sab / (l - 1);
    } else {
      v = (saa > 0 && sbb > 0) ? sab / std::sqrt(saa * sbb) : Missing();
    }
    out[t] = Finite(v);
  }
}

double CrossSection(Op op, double lhs, double rhs) {
  if (IsMissing(lhs) || IsMissing(rhs)) return Missing();
  switch (op) {
    case Op::kAdd:
      return Finite(lhs + rhs);
    case Op::kSub:
      return Finite(lhs - rhs);
    case Op::kMul:
      return Finite(lhs * rhs);
    case Op::kDiv:
      return rhs == 0 ? Missing() : Finite(lhs / rhs);
    case Op::kLarger:
      return std::max(lhs, rhs);
    case Op::kSmaller:
      return std::min(lhs, rhs);
    default:
      return Missing();
  }
}

double Unary(Op op, double x) {
  if (IsMissing(x)) return Missing();
  if (op == Op::kAbs) return std::fabs(x);
  if (op == Op::kLog) return x > 0 ? Finite(std::log(x)) : Missing();
  return Missing();
}

}  // namespace kernels

namespace {

using Series = std::shared_ptr<const FactorMatrix>;
using Operand = std::variant<Series, double, int>;  // series, constant, window

void CrossSectionLoop(Op op, const double* a, std::size_t sa, const double* b, std::size_t sb,
                      double* out, std::size_t n) {
  // sa / sb are 1 for a series and 0 for a broadcast constant.
  switch (op) {
    case Op::kAdd:
      for (std::size_t k = 0; k < n; ++k) out[k] = kernels::CrossSection(Op::kAdd, a[k * sa], b[k * sb]);
      break;
    case Op::kSub:
      for (std::size_t k = 0; k < n; ++k) out[k] = kernels::CrossSection(Op::kSub, a[k * sa], b[k * sb]);
      break;
    case Op::kMul:
      for (std::size_t k = 0; k < n; ++k) out[k] = kernels::CrossSection(Op::kMul, a[k * sa], b[k * sb]);
      break;
    case Op::kDiv:
      for (std::size_t k = 0; k < n; ++k) out[k] = kernels::CrossSection(Op::kDiv, a[k * sa], b[k * sb]);
      break;
    case Op::kLarger:
      for (std::size_t k = 0; k < n; ++k) out[k] = kernels::CrossSection(Op::kLarger, a[k * sa], b[k * sb]);
      break;
    case Op::kSmaller:
      for (std::size_t k = 0; k < n; ++k) out[k] = kernels::CrossSection(Op::kSmaller, a[k * sa], b[k * sb]);
      break;
    default:
      for (std::size_t k = 0; k < n; ++k) out[k] = Missing();
  }
}

Series Borrow(const FactorMatrix& m) { return Series(Series{}, &m); }

}  // namespace

std::shared_ptr<const FactorMatrix> SubtreeCache::Find(const std::string& key) {
  std::lock_guard<std::mutex> lock(mu_);
  const auto it = index_.find(key);
  if (it == index_.end()) {
    ++misses_;
    return nullptr;
  }
  ++hits_;
  order_.splice(order_.begin(), order_, it->second);
  return it->second->second;
}

void SubtreeCache::Insert(const std::string& key, std::shared_ptr<const FactorMatrix> value) {
  if (capacity_ == 0) return;
  std::lock_guard<std::mutex> lock(mu_);
  if (index_.count(key)) return;
  order_.emplace_front(key, std::move(value));
  index_[key] = order_.begin();
  while (order_.size() > capacity_) {
    index_.erase(order_.back().first);
    order_.pop_back();
  }
}

FactorMatrix Evaluate(const RpnProgram& program, const PanelTensor& panel, SubtreeCache* cache) {
  const std::size_t n = panel.assets();
  const std::size_t days = panel.days();
  std::vector<Operand> stack;
  std::vector<std::string> keys;  // RPN text of each stack entry, for the cache
  for (const Token& t : program.tokens()) {
    switch (t.kind) {
      case TokenKind::kBegin:
      case TokenKind::kSeparator:
        break;
      case TokenKind::kFeature: {
        const int j = panel.FeatureIndex(FeatureName(t.index));
        if (j < 0) {
          throw DataError("factor '" + ToInfix(program) + "' reads feature '" +
                          std::string(FeatureName(t.index)) + "' absent from the panel");
        }
        stack.emplace_back(Borrow(panel.feature(static_cast<std::size_t>(j))));
        if (cache) keys.push_back(TokenText(t));
        break;
      }
      case TokenKind::kConstant:
        stack.emplace_back(t.value);
        if (cache) keys.push_back(TokenText(t));
        break;
      case TokenKind::kTimeDelta:
        stack.emplace_back(t.index);
        if (cache) keys.push_back(TokenText(t));
        break;
      case TokenKind::kOperator: {
        const int arity = ClassOf(t.op) == OpClass::kUnaryCrossSection    ? 1
                          : ClassOf(t.op) == OpClass::kBinaryTimeSeries ? 3
                                                                          : 2;
        std::string key;
        if (cache) {
          for (std::size_t k = keys.size() - static_cast<std::size_t>(arity); k < keys.size(); ++k) {
            key += keys[k];
            key += ' ';
          }
          key += OpName(t.op);
          if (Series hit = cache->Find(key)) {
            stack.resize(stack.size() - static_cast<std::size_t>(arity));
            keys.resize(keys.size() - static_cast<std::size_t>(arity));
            stack.emplace_back(std::move(hit));
            keys.push_back(std::move(key));
            break;
          }
        }
        auto out = std::make_shared<FactorMatrix>(n, days);
        switch (ClassOf(t.op)) {
          case OpClass::kUnaryCrossSection: {
            const auto& x = std::get<Series>(stack.back())->raw();
            auto& raw = out->raw();
            for (std::size_t k = 0; k < raw.size(); ++k) raw[k] = kernels::Unary(t.op, x[k]);
            break;
          }
          case OpClass::kBinaryCrossSection: {
            const Operand& lhs = stack[stack.size() - 1];
            const Operand& rhs = stack[stack.size() - 2];
            auto view = [](const Operand& o, std::size_t& stride) -> const double* {
              if (const auto* m = std::get_if<Series>(&o)) {
                stride = 1;
                return (*m)->raw().data();
              }
              stride = 0;
              return &std::get<double>(o);
            };
            std::size_t sa = 0, sb = 0;
            const double* a = view(lhs, sa);
            const double* b = view(rhs, sb);
            CrossSectionLoop(t.op, a, sa, b, sb, out->raw().data(), out->raw().size());
            break;
          }
          case OpClass::kUnaryTimeSeries: {
            const int l = std::get<int>(stack[stack.size() - 1]);
            const FactorMatrix& x = *std::get<Series>(stack[stack.size() - 2]);
            for (std::size_t i = 0; i < n; ++i) kernels::Rolling(t.op, x.row(i), l, out->row(i));
            break;
          }
          case OpClass::kBinaryTimeSeries: {
            const int l = std::get<int>(stack[stack.size() - 1]);
            const FactorMatrix& y = *std::get<Series>(stack[stack.size() - 2]);
            const FactorMatrix& x = *std::get<Series>(stack[stack.size() - 3]);
            for (std::size_t i = 0; i < n; ++i) {
              kernels::RollingPair(t.op, x.row(i), y.row(i), l, out->row(i));
            }
            break;
          }
        }
        stack.resize(stack.size() - static_cast<std::size_t>(arity));
        Series result = std::move(out);
        if (cache) {
          keys.resize(keys.size() - static_cast<std::size_t>(arity));
          cache->Insert(key, result);
          keys.push_back(std::move(key));
        }
        stack.emplace_back(std::move(result));
        break;
      }
    }
  }
  FactorMatrix result = *std::get<Series>(stack.back());
  for (double& v : result.raw()) {
    if (!std::isfinite(v)) v = Missing();
  }
  return result;
}

}  // namespace alphamine
