#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace flowstate {

/// Dense row-major matrix of doubles. Column vectors are stored as n x 1.
struct Tensor {
  long rows = 0;
  long cols = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(long r, long c, double fill = 0.0);

  static Tensor vec(std::vector<double> values);

  double& at(long i, long j) { return v[static_cast<std::size_t>(i) * cols + j]; }
  double at(long i, long j) const { return v[static_cast<std::size_t>(i) * cols + j]; }
  double& operator[](long i) { return v[static_cast<std::size_t>(i)]; }
  double operator[](long i) const { return v[static_cast<std::size_t>(i)]; }

  long size() const { return rows * cols; }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
  bool all_finite() const;
  std::string shape_str() const;
};

/// a * b with BLAS-style transpose flags. Shapes are checked.
Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);

}  // namespace flowstate
