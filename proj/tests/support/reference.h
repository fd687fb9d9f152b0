#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "alphamine/factor_matrix.h"
#include "alphamine/formula.h"
#include "alphamine/panel.h"

namespace alphamine::testref {

// Expression tree rebuilt from RPN; children are kept in push order.
struct Node {
  Token token;
  std::vector<std::unique_ptr<Node>> kids;
};

std::unique_ptr<Node> BuildTree(const RpnProgram& program);

// Recursive evaluator working cell by cell from the operator definitions.
// Shares no code with the library evaluator.
FactorMatrix TreeEvaluate(const RpnProgram& program, const PanelTensor& panel);

// Random valid program whose tree has at most `max_depth` operator levels.
RpnProgram RandomProgram(const Grammar& grammar, std::mt19937_64& rng, int max_depth);

// Panel over all six features with occasional missing, zero and negative
// cells.
PanelTensor RandomPanel(std::size_t assets, std::size_t days, std::mt19937_64& rng,
                        double missing_rate = 0.05);

// Legality by explicit search: can `stack` (a sequence of type tags) be
// reduced to a single series followed by the separator within `budget`
// tokens? Independent of the library's tables.
enum class Tag { kSeries, kConst, kDelta };
bool Completable(std::vector<Tag> stack, int budget);
// Whether appending `token` to a prefix with stack `stack` and `budget`
// remaining tokens keeps a completion reachable.
bool TokenLegal(const std::vector<Tag>& stack, const Token& token, int budget);

}  // namespace alphamine::testref
