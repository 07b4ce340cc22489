#pragma once

#include <Eigen/Dense>

#include "allocrisk/model.hpp"

namespace allocrisk::detail {

// Every Cholesky pivot L_ii^2 must exceed kPdTol relative to the largest diagonal entry.
inline bool cholesky_ok(const Eigen::LLT<MatrixXd>& llt, const MatrixXd& m) {
  if (llt.info() != Eigen::Success) return false;
  if (m.rows() == 0) return true;
  const double scale = std::max(1e-300, m.diagonal().cwiseAbs().maxCoeff());
  const MatrixXd& l = llt.matrixLLT();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double pivot = l(i, i) * l(i, i);
    if (!(pivot > kPdTol * scale)) return false;
  }
  return true;
}

// In place; the naive m = 0.5 * (m + m') aliases and leaves m slightly asymmetric.
inline void symmetrize(MatrixXd& m) {
  const MatrixXd t = m.transpose();
  m = 0.5 * (m + t);
}

}  // namespace allocrisk::detail
