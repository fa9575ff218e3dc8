// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <complex>

namespace koopman {

using Index = Eigen::Index;
using Complex = std::complex<double>;

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Weighted empirical inner product <f, g> = (1/n) sum_n w_n conj(f_n) g_n.
/// Eigen's dot() already conjugates its left operand.
template <typename A, typename B>
typename A::Scalar weighted_inner(const Vector& weights, const Eigen::MatrixBase<A>& f,
                                  const Eigen::MatrixBase<B>& g) {
  using Scalar = typename A::Scalar;
  return f.cwiseProduct(weights.cast<Scalar>()).dot(g) /
         Scalar(static_cast<double>(weights.size()));
}

}  // namespace koopman
