#include "flowstate/tensor.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace flowstate {

Tensor::Tensor(long r, long c, double fill)
    : rows(r), cols(c), v(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {
  if (r < 0 || c < 0) throw std::invalid_argument("Tensor: negative dimension");
}

Tensor Tensor::vec(std::vector<double> values) {
  Tensor t;
  t.rows = static_cast<long>(values.size());
  t.cols = 1;
  t.v = std::move(values);
  return t;
}

bool Tensor::all_finite() const {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

std::string Tensor::shape_str() const {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const EMat>;

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  const long ar = trans_a ? a.cols : a.rows;
  const long ac = trans_a ? a.rows : a.cols;
  const long br = trans_b ? b.cols : b.rows;
  const long bc = trans_b ? b.rows : b.cols;
  if (ac != br) {
    throw std::invalid_argument("matmul: inner dimensions mismatch " + a.shape_str() + " vs " +
                                b.shape_str());
  }
  Tensor out(ar, bc);
  CMap ma(a.v.data(), a.rows, a.cols);
  CMap mb(b.v.data(), b.rows, b.cols);
  Eigen::Map<EMat> mo(out.v.data(), ar, bc);
  if (!trans_a && !trans_b) {
    mo.noalias() = ma * mb;
  } else if (trans_a && !trans_b) {
    mo.noalias() = ma.transpose() * mb;
  } else if (!trans_a && trans_b) {
    mo.noalias() = ma * mb.transpose();
  } else {
    mo.noalias() = ma.transpose() * mb.transpose();
  }
  return out;
}

}  // namespace flowstate
