#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tsdiff/errors.hpp"

namespace tsdiff {

/// N x d row-major block of states. One row is one sample (flattened).
class SampleBatch {
 public:
  SampleBatch() = default;
  SampleBatch(std::size_t rows, std::size_t dim, double fill = 0.0)
      : rows_(rows), dim_(dim), data_(rows * dim, fill) {}
  SampleBatch(std::size_t rows, std::size_t dim, std::vector<double> data)
      : rows_(rows), dim_(dim), data_(std::move(data)) {
    require(data_.size() == rows_ * dim_, ErrorCategory::dimension,
            "batch storage does not match rows x dim");
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> row(std::size_t i) { return {data_.data() + i * dim_, dim_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * dim_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * dim_ + j]; }

  std::vector<double>& values() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  bool same_shape(const SampleBatch& other) const noexcept {
    return rows_ == other.rows_ && dim_ == other.dim_;
  }

  bool all_finite() const noexcept {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  /// Rows [first, first + count) as a new batch.
  SampleBatch slice(std::size_t first, std::size_t count) const {
    require(first + count <= rows_, ErrorCategory::dimension, "slice out of range");
    return SampleBatch(count, dim_,
                       std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(first * dim_),
                                           data_.begin() + static_cast<std::ptrdiff_t>((first + count) * dim_)));
  }

  void set_rows(std::size_t first, const SampleBatch& src) {
    require(src.dim_ == dim_ && first + src.rows_ <= rows_, ErrorCategory::dimension,
            "set_rows shape mismatch");
    std::copy(src.data_.begin(), src.data_.end(),
              data_.begin() + static_cast<std::ptrdiff_t>(first * dim_));
  }

  friend bool operator==(const SampleBatch&, const SampleBatch&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

inline void require_same_shape(const SampleBatch& a, const SampleBatch& b, const char* what) {
  if (!a.same_shape(b))
    fail(ErrorCategory::dimension,
         std::string(what) + ": shape " + std::to_string(a.rows()) + "x" + std::to_string(a.dim()) +
             " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.dim()));
}

}  // namespace tsdiff
