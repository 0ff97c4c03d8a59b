#pragma once

#include <algorithm>

#include <Eigen/Dense>

#include "wavecomm/parallel.hpp"

namespace wavecomm::detail {

// X * X^T computed in fixed-size row blocks so the result does not depend on
// the worker count.
inline Eigen::MatrixXd gram_matrix(const Eigen::MatrixXd& x) {
  constexpr Eigen::Index kBlock = 64;
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd gram(n, n);
  const Eigen::MatrixXd xt = x.transpose();
  const auto blocks = static_cast<std::size_t>((n + kBlock - 1) / kBlock);
  parallel_for(blocks, [&](std::size_t b) {
    const Eigen::Index start = static_cast<Eigen::Index>(b) * kBlock;
    const Eigen::Index len = std::min(kBlock, n - start);
    gram.middleRows(start, len).noalias() = x.middleRows(start, len) * xt;
  });
  return gram;
}

}  // namespace wavecomm::detail
