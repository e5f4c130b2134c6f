#pragma once

#include <cstdint>
#include <vector>

#include "inftucker/tensor.hpp"

namespace inftucker {

/// The set of observed cells of a tensor grid, stored densely in vec order.
class ObservationMask {
 public:
  ObservationMask() = default;
  explicit ObservationMask(Dims dims, bool observed = false)
      : dims_(std::move(dims)), observed_(static_cast<std::size_t>(num_elements(dims_)), observed ? 1 : 0) {
    check_dims(dims_);
  }

  static ObservationMask full(const Dims& dims) { return ObservationMask(dims, true); }
  static ObservationMask none(const Dims& dims) { return ObservationMask(dims, false); }

  const Dims& dims() const { return dims_; }
  Index size() const { return static_cast<Index>(observed_.size()); }

  bool observed(Index offset) const { return observed_[static_cast<std::size_t>(offset)] != 0; }
  bool observed(const MultiIndex& idx) const { return observed(vec_index(idx, dims_) - 1); }
  void set(Index offset, bool value) { observed_[static_cast<std::size_t>(offset)] = value ? 1 : 0; }
  void set(const MultiIndex& idx, bool value) { set(vec_index(idx, dims_) - 1, value); }

  Index count() const {
    Index c = 0;
    for (auto v : observed_) c += v;
    return c;
  }

  /// 0-based vec offsets of observed cells, ascending.
  std::vector<Index> offsets() const {
    std::vector<Index> out;
    for (std::size_t i = 0; i < observed_.size(); ++i)
      if (observed_[i]) out.push_back(static_cast<Index>(i));
    return out;
  }

  ObservationMask complement() const {
    ObservationMask out = *this;
    for (auto& v : out.observed_) v = v ? 0 : 1;
    return out;
  }

  bool operator==(const ObservationMask&) const = default;

 private:
  Dims dims_;
  std::vector<std::uint8_t> observed_;
};

}  // namespace inftucker
