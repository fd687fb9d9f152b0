#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace alphamine {

// Missing cells are quiet NaN everywhere in the library.
inline double Missing() { return std::numeric_limits<double>::quiet_NaN(); }
inline bool IsMissing(double v) { return !std::isfinite(v); }

// Dense [asset][day] matrix, row-major by asset so per-asset time series are
// contiguous.
class FactorMatrix {
 public:
  FactorMatrix() = default;
  FactorMatrix(std::size_t n_assets, std::size_t n_days, double fill = Missing())
      : n_assets_(n_assets), n_days_(n_days), data_(n_assets * n_days, fill) {}

  std::size_t assets() const { return n_assets_; }
  std::size_t days() const { return n_days_; }
  bool empty() const { return data_.empty(); }

  double& at(std::size_t asset, std::size_t day) { return data_[asset * n_days_ + day]; }
  double at(std::size_t asset, std::size_t day) const { return data_[asset * n_days_ + day]; }

  std::span<double> row(std::size_t asset) {
    return {data_.data() + asset * n_days_, n_days_};
  }
  std::span<const double> row(std::size_t asset) const {
    return {data_.data() + asset * n_days_, n_days_};
  }

  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }

  // Cross-section of one day, gathered across assets.
  std::vector<double> Column(std::size_t day) const {
    std::vector<double> out(n_assets_);
    for (std::size_t i = 0; i < n_assets_; ++i) out[i] = at(i, day);
    return out;
  }

  bool AllMissing() const {
    for (double v : data_) {
      if (!IsMissing(v)) return false;
    }
    return true;
  }

  // Bitwise comparison that treats any two missing cells as equal.
  bool SameAs(const FactorMatrix& other) const {
    if (n_assets_ != other.n_assets_ || n_days_ != other.n_days_) return false;
    for (std::size_t k = 0; k < data_.size(); ++k) {
      const bool ma = IsMissing(data_[k]);
      const bool mb = IsMissing(other.data_[k]);
      if (ma != mb) return false;
      if (!ma && data_[k] != other.data_[k]) return false;
    }
    return true;
  }

 private:
  std::size_t n_assets_ = 0;
  std::size_t n_days_ = 0;
  std::vector<double> data_;
};

}  // namespace alphamine
