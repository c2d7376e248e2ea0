#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace mmil {

using Vec = std::vector<double>;

// Dense row-major matrix, sized at construction.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t r, std::size_t c) {
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  // y = A x + b
  Vec affine(const Vec& x, const Vec& b) const {
    assert(x.size() == cols_ && b.size() == rows_);
    Vec y(rows_);
    for (std::size_t r = 0; r < rows_; ++r) {
      double acc = b[r];
      const double* row = &data_[r * cols_];
      for (std::size_t c = 0; c < cols_; ++c) acc += row[c] * x[c];
      y[r] = acc;
    }
    return y;
  }

  // x^T A, used for backprop: given dL/dy returns dL/dx.
  Vec transpose_times(const Vec& dy) const {
    assert(dy.size() == rows_);
    Vec dx(cols_, 0.0);
    for (std::size_t r = 0; r < rows_; ++r) {
      const double* row = &data_[r * cols_];
      const double g = dy[r];
      for (std::size_t c = 0; c < cols_; ++c) dx[c] += g * row[c];
    }
    return dx;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double squared_distance(const Vec& a, const Vec& b) {
  assert(a.size() == b.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

}  // namespace mmil
