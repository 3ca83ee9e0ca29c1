#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <vector>

#include "bernflow/errors.hpp"

namespace bernflow {

// Dense 2-d tensor of doubles, row major. Scalars are 1x1, column vectors
// n x 1. Everything the model needs fits in two dimensions.
class Tensor {
 public:
  Tensor() = default;

  Tensor(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
      : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (data_.size() != rows_ * cols_) {
      throw StructuralError("tensor: value count does not match shape");
    }
  }

  static Tensor scalar(double v) { return Tensor(1, 1, {v}); }

  static Tensor column(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor(n, 1, std::move(values));
  }

  static Tensor row(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor(1, n, std::move(values));
  }

  static Tensor full(std::size_t rows, std::size_t cols, double v) {
    Tensor t(rows, cols);
    for (auto& x : t.data_) x = v;
    return t;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  std::vector<std::size_t> shape() const { return {rows_, cols_}; }

  bool same_shape(const Tensor& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  double& operator()(std::size_t i, std::size_t j) {
    return data_[i * cols_ + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * cols_ + j];
  }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  double* ptr() { return data_.data(); }
  const double* ptr() const { return data_.data(); }

  // Scalar convenience for 1x1 tensors.
  double item() const {
    if (size() != 1) throw StructuralError("tensor: item() on non-scalar");
    return data_[0];
  }

  void fill(double v) {
    for (auto& x : data_) x = v;
  }

  bool all_finite() const {
    for (double x : data_) {
      if (!std::isfinite(x)) return false;
    }
    return true;
  }

  void resize_like(const Tensor& o) {
    rows_ = o.rows_;
    cols_ = o.cols_;
    data_.assign(rows_ * cols_, 0.0);
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

}  // namespace bernflow
