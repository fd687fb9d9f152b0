#include <random>
#include <vector>

#include "alphamine/evaluator.h"
#include "doctest.h"
#include "reference.h"

namespace alphamine {
namespace {

std::vector<double> Run(Op op, std::vector<double> x, int l) {
  std::vector<double> out(x.size());
  kernels::Rolling(op, x, l, out);
  return out;
}

bool SameSeries(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (IsMissing(a[k]) != IsMissing(b[k])) return false;
    if (!IsMissing(a[k]) && a[k] != b[k]) return false;
  }
  return true;
}

const double kNa = Missing();

TEST_CASE("window kernels on short series") {
  CHECK(SameSeries(Run(Op::kRef, {1, 2, 3}, 1), {kNa, 1, 2}));
  CHECK(SameSeries(Run(Op::kMean, {1, 2, 3}, 2), {kNa, 1.5, 2.5}));
  CHECK(SameSeries(Run(Op::kDelta, {1, 4, 9}, 1), {kNa, 3, 5}));
  CHECK(SameSeries(Run(Op::kSum, {1, kNa, 3, 4}, 2), {kNa, kNa, kNa, 7}));
  CHECK(SameSeries(Run(Op::kStd, {1, 3, 5}, 2), {kNa, std::sqrt(2.0), std::sqrt(2.0)}));
  CHECK(SameSeries(Run(Op::kVar, {1, 3, 5}, 3), {kNa, kNa, 4}));
  CHECK(SameSeries(Run(Op::kMed, {5, 1, 3, 2}, 3), {kNa, kNa, 3, 2}));
  CHECK(SameSeries(Run(Op::kMed, {5, 1, 3, 2}, 2), {kNa, 3, 2, 2.5}));
  CHECK(SameSeries(Run(Op::kMax, {5, 1, 3}, 2), {kNa, 5, 3}));
  CHECK(SameSeries(Run(Op::kMin, {5, 1, 3}, 2), {kNa, 1, 1}));
  // Today carries the largest weight.
  CHECK(SameSeries(Run(Op::kWma, {0, 3}, 2), {kNa, 2}));
  CHECK(Run(Op::kMad, {1, 2, 3, 6}, 4)[3] == doctest::Approx(1.5));
  const auto ema = Run(Op::kEma, {0, 0, 3}, 3);
  CHECK(ema[2] == doctest::Approx(3.0 / (0.25 + 0.5 + 1)));
}

TEST_CASE("pair kernels") {
  std::vector<double> x{1, 2, 3, 4}, y{2, 4, 6, 9}, out(4);
  kernels::RollingPair(Op::kCov, x, y, 3, out);
  CHECK(IsMissing(out[1]));
  CHECK(out[2] == doctest::Approx(2.0));
  kernels::RollingPair(Op::kCorr, x, x, 3, out);
  CHECK(out[3] == doctest::Approx(1.0));
  std::vector<double> flat{1, 1, 1, 1};
  kernels::RollingPair(Op::kCorr, x, flat, 3, out);
  CHECK(IsMissing(out[3]));
}

TEST_CASE("cross-section kernels") {
  CHECK(IsMissing(kernels::CrossSection(Op::kDiv, 1, 0)));
  CHECK(IsMissing(kernels::Unary(Op::kLog, 0)));
  CHECK(IsMissing(kernels::Unary(Op::kLog, -1)));
  CHECK(kernels::Unary(Op::kAbs, -2) == 2);
  CHECK(kernels::CrossSection(Op::kLarger, 1, 2) == 2);
  CHECK(kernels::CrossSection(Op::kSmaller, 1, 2) == 1);
  CHECK(IsMissing(kernels::CrossSection(Op::kAdd, kNa, 1)));
  CHECK(IsMissing(kernels::CrossSection(Op::kMul, 1e300, 1e300)));
}

TEST_CASE("identity program returns the feature") {
  std::mt19937_64 rng(1);
  const PanelTensor panel = testref::RandomPanel(4, 12, rng);
  const Grammar g;
  const FactorMatrix out = Evaluate(ParseInfix("close", g), panel);
  CHECK(out.SameAs(panel.feature(static_cast<std::size_t>(panel.FeatureIndex("close")))));
}

TEST_CASE("later-pushed operand is the left-hand side") {
  std::mt19937_64 rng(2);
  const PanelTensor panel = testref::RandomPanel(3, 5, rng, 0.0);
  const Grammar g;
  const RpnProgram p = Parse({Token::Begin(), Token::Feature(2), Token::Feature(1),
                              Token::Operator(Op::kSub), Token::Separator()},
                             g);  // low high Sub
  const FactorMatrix out = Evaluate(p, panel);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t d = 0; d < 5; ++d) {
      CHECK(out.at(i, d) == panel.value(i, 1, d) - panel.value(i, 2, d));
    }
  }
}

TEST_CASE("stack machine equals the tree-walk reference") {
  const Grammar g;
  std::mt19937_64 rng(20240601);
  SubtreeCache cache(64);
  for (int k = 0; k < 1000; ++k) {
    const PanelTensor panel = testref::RandomPanel(3, 30, rng);
    const RpnProgram p = testref::RandomProgram(g, rng, 3);
    const FactorMatrix want = testref::TreeEvaluate(p, panel);
    REQUIRE_MESSAGE(Evaluate(p, panel).SameAs(want), ToInfix(p));
  }
  // The cache must not change results on a fixed panel.
  const PanelTensor panel = testref::RandomPanel(3, 30, rng);
  for (int k = 0; k < 300; ++k) {
    const RpnProgram p = testref::RandomProgram(g, rng, 3);
    REQUIRE_MESSAGE(Evaluate(p, panel, &cache).SameAs(testref::TreeEvaluate(p, panel)), ToInfix(p));
  }
  CHECK(cache.hits() > 0);
}

TEST_CASE("evaluation is pure and local") {
  const Grammar g;
  std::mt19937_64 rng(9);
  const PanelTensor panel = testref::RandomPanel(5, 40, rng);
  const RpnProgram cs = ParseInfix("Abs((close / open))", g);
  const RpnProgram ts = ParseInfix("Corr(close, volume, 10d)", g);
  CHECK(Evaluate(ts, panel).SameAs(Evaluate(ts, panel)));

  // Cross-section operators commute with restricting days.
  const FactorMatrix full = Evaluate(cs, panel);
  const FactorMatrix part = Evaluate(cs, panel.SliceDays(10, 25, 0));
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t d = 0; d < 15; ++d) {
      CHECK((IsMissing(part.at(i, d)) ? IsMissing(full.at(i, d + 10)) : part.at(i, d) == full.at(i, d + 10)));
    }
  }
  // Time-series operators commute with restricting assets.
  const FactorMatrix all = Evaluate(ts, panel);
  const FactorMatrix two = Evaluate(ts, panel.SelectAssets({3, 1}));
  for (std::size_t d = 0; d < 40; ++d) {
    CHECK((IsMissing(two.at(0, d)) ? IsMissing(all.at(3, d)) : two.at(0, d) == all.at(3, d)));
    CHECK((IsMissing(two.at(1, d)) ? IsMissing(all.at(1, d)) : two.at(1, d) == all.at(1, d)));
  }
}

TEST_CASE("missing feature is reported") {
  std::mt19937_64 rng(4);
  const PanelTensor full = testref::RandomPanel(2, 5, rng);
  std::vector<FactorMatrix> features{full.feature(3)};
  const PanelTensor close_only(full.symbols(), full.dates(), {"close"}, features);
  const Grammar g;
  CHECK_NOTHROW(Evaluate(ParseInfix("Abs(close)", g), close_only));
  CHECK_THROWS_AS(Evaluate(ParseInfix("(close - vwap)", g), close_only), DataError);
}

}  // namespace
}  // namespace alphamine
