#pragma once

#include <cstddef>
#include <list>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>

#include "alphamine/factor_matrix.h"
#include "alphamine/formula.h"
#include "alphamine/panel.h"

namespace alphamine {

// Stack-machine evaluation of a validated program over every asset and day.
//
// Binary arithmetic takes the later-pushed operand as the left-hand side.
// Windowed operators cover the trailing `l` days including today; a window
// with any missing cell, a non-positive Log argument, a zero divisor, or a
// non-finite result yields a missing cell. Throws DataError when the program
// reads a feature the panel lacks.
//
// With a cache, intermediate operator results are looked up and stored by
// subexpression; the cache must only ever be used with one panel.
class SubtreeCache;
FactorMatrix Evaluate(const RpnProgram& program, const PanelTensor& panel,
                      SubtreeCache* cache = nullptr);

// Thread-safe LRU of operator results keyed by subexpression RPN text.
class SubtreeCache {
 public:
  explicit SubtreeCache(std::size_t capacity) : capacity_(capacity) {}
  std::shared_ptr<const FactorMatrix> Find(const std::string& key);
  void Insert(const std::string& key, std::shared_ptr<const FactorMatrix> value);
  long hits() const { return hits_; }
  long misses() const { return misses_; }

 private:
  using Entry = std::pair<std::string, std::shared_ptr<const FactorMatrix>>;
  std::size_t capacity_;
  std::mutex mu_;
  std::list<Entry> order_;
  std::unordered_map<std::string, std::list<Entry>::iterator> index_;
  long hits_ = 0, misses_ = 0;
};

namespace kernels {

// Per-series time-series kernels, exposed for tests. `out` has the same
// length as the inputs.
void Ref(std::span<const double> x, int l, std::span<double> out);
void Rolling(Op op, std::span<const double> x, int l, std::span<double> out);
void RollingPair(Op op, std::span<const double> x, std::span<const double> y, int l,
                 std::span<double> out);
double CrossSection(Op op, double lhs, double rhs);
double Unary(Op op, double x);

}  // namespace kernels

}  // namespace alphamine
