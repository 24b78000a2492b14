#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

namespace pescal {

/// Dense row-major table over a finite product of index ranges.
template <std::size_t Rank>
class Table {
 public:
  using Dims = std::array<std::size_t, Rank>;

  Table() = default;
  explicit Table(Dims dims, double fill = 0.0)
      : dims_(dims),
        values_(std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>()),
                fill) {}

  template <typename... I>
    requires(sizeof...(I) == Rank)
  double& operator()(I... idx) {
    return values_[offset({static_cast<std::size_t>(idx)...})];
  }
  template <typename... I>
    requires(sizeof...(I) == Rank)
  double operator()(I... idx) const {
    return values_[offset({static_cast<std::size_t>(idx)...})];
  }

  /// Slice over the last dimension at a fixed prefix.
  template <typename... I>
    requires(sizeof...(I) == Rank - 1)
  std::span<double> row(I... prefix) {
    return {values_.data() + offset({static_cast<std::size_t>(prefix)..., 0}), dims_[Rank - 1]};
  }
  template <typename... I>
    requires(sizeof...(I) == Rank - 1)
  std::span<const double> row(I... prefix) const {
    return {values_.data() + offset({static_cast<std::size_t>(prefix)..., 0}), dims_[Rank - 1]};
  }

  const Dims& dims() const { return dims_; }
  std::size_t dim(std::size_t k) const { return dims_[k]; }
  std::size_t size() const { return values_.size(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  double min() const { return *std::min_element(values_.begin(), values_.end()); }
  double max() const { return *std::max_element(values_.begin(), values_.end()); }

  bool operator==(const Table&) const = default;

 private:
  std::size_t offset(const Dims& idx) const {
    std::size_t off = 0;
    for (std::size_t k = 0; k < Rank; ++k) off = off * dims_[k] + idx[k];
    return off;
  }

  Dims dims_{};
  std::vector<double> values_;
};

using Table2 = Table<2>;
using Table3 = Table<3>;
using Table4 = Table<4>;

/// Sup-norm distance between two same-shaped tables.
template <std::size_t Rank>
double sup_distance(const Table<Rank>& a, const Table<Rank>& b) {
  double d = 0.0;
  auto va = a.values();
  auto vb = b.values();
  for (std::size_t i = 0; i < va.size(); ++i) d = std::max(d, std::abs(va[i] - vb[i]));
  return d;
}

}  // namespace pescal
