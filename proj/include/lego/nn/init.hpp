#pragma once

#include <cmath>

#include <Eigen/QR>

#include "lego/core/random.hpp"
#include "lego/nn/tensor.hpp"

namespace lego::nn {

/// Fills `w` with a (semi-)orthogonal matrix scaled by `gain`.
template <class S>
void orthogonal_init(Matrix<S>& w, double gain, Rng& rng) {
  const auto rows = w.rows(), cols = w.cols();
  if (rows == 0 || cols == 0) return;
  const bool tall = rows >= cols;
  const auto big = tall ? rows : cols, small = tall ? cols : rows;
  Eigen::MatrixXd a(big, small);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = standard_normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
  const Eigen::MatrixXd r = qr.matrixQR();
  for (Eigen::Index j = 0; j < small; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  q *= gain;
  if (tall)
    w = q.cast<S>();
  else
    w = q.transpose().cast<S>();
}

inline constexpr double kReluGain = 1.4142135623730951;

}  // namespace lego::nn
