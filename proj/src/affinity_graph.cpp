#include "wavecomm/affinity_graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <fmt/format.h>

#include "linalg_detail.hpp"
#include "wavecomm/error.hpp"
#include "wavecomm/parallel.hpp"

namespace wavecomm {
namespace {

std::string row_name(std::span<const std::string> ids, Eigen::Index i) {
  if (static_cast<std::size_t>(i) < ids.size()) return fmt::format("'{}'", ids[static_cast<std::size_t>(i)]);
  return fmt::format("row {}", i);
}

void mirror_upper(Eigen::MatrixXd& d) {
  const Eigen::Index n = d.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    d(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) d(j, i) = d(i, j);
  }
}

}  // namespace

Metric parse_metric(std::string_view name) {
  if (name == "correlation") return Metric::correlation;
  if (name == "cosine") return Metric::cosine;
  if (name == "euclidean") return Metric::euclidean;
  throw Error(ErrorKind::config,
              fmt::format("unknown distance metric '{}' (expected correlation, cosine or euclidean)", name));
}

std::string_view to_string(Metric metric) noexcept {
  switch (metric) {
    case Metric::correlation: return "correlation";
    case Metric::cosine: return "cosine";
    case Metric::euclidean: return "euclidean";
  }
  return "unknown";
}

Normalization parse_normalization(std::string_view name) {
  if (name == "symmetric" || name == "sym") return Normalization::symmetric;
  if (name == "unnormalized" || name == "none") return Normalization::unnormalized;
  throw Error(ErrorKind::config, fmt::format("unknown Laplacian normalization '{}'", name));
}

std::string_view to_string(Normalization normalization) noexcept {
  return normalization == Normalization::symmetric ? "symmetric" : "unnormalized";
}

KernelForm parse_kernel(std::string_view name) {
  if (name == "gaussian") return KernelForm::gaussian;
  if (name == "literal") return KernelForm::literal;
  throw Error(ErrorKind::config, fmt::format("unknown affinity kernel '{}' (expected gaussian or literal)", name));
}

std::string_view to_string(KernelForm kernel) noexcept {
  return kernel == KernelForm::gaussian ? "gaussian" : "literal";
}

DistanceMatrix pairwise_distances(const CoefficientMatrix& c, Metric metric) {
  return pairwise_distances(c.values, metric, c.image_ids);
}

DistanceMatrix pairwise_distances(const Eigen::MatrixXd& rows, Metric metric,
                                  std::span<const std::string> row_ids) {
  const Eigen::Index n = rows.rows();
  const Eigen::Index m = rows.cols();
  if (n < 2) throw Error(ErrorKind::input, fmt::format("pairwise distances need at least 2 rows (got {})", n));
  if (m < 2) throw Error(ErrorKind::input, fmt::format("pairwise distances need at least 2 features (got {})", m));
  if (!rows.allFinite()) throw Error(ErrorKind::input, "coefficient matrix contains non-finite values");

  DistanceMatrix out;
  out.metric = metric;
  out.values.resize(n, n);

  if (metric == Metric::euclidean) {
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t ui) {
      const auto i = static_cast<Eigen::Index>(ui);
      for (Eigen::Index j = i + 1; j < n; ++j) out.values(i, j) = (rows.row(i) - rows.row(j)).norm();
    });
    mirror_upper(out.values);
    return out;
  }

  // Unit-normalise (and centre, for correlation) so distances are 1 - z_i . z_j.
  Eigen::MatrixXd z = rows;
  for (Eigen::Index i = 0; i < n; ++i) {
    auto row = z.row(i);
    const double scale = row.cwiseAbs().maxCoeff();
    if (metric == Metric::correlation) row.array() -= row.mean();
    const double norm = row.norm();
    if (!(norm > 1e-12 * std::max(scale, 1e-300))) {
      throw Error(ErrorKind::degenerate_feature,
                  fmt::format("{} has {} selected coefficients; {} distance is undefined for it",
                              row_name(row_ids, i),
                              metric == Metric::correlation ? "constant" : "all-zero",
                              to_string(metric)));
    }
    row /= norm;
  }
  const Eigen::MatrixXd gram = detail::gram_matrix(z);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) out.values(i, j) = std::clamp(1.0 - gram(i, j), 0.0, 2.0);
  mirror_upper(out.values);
  return out;
}

double off_diagonal_std(const Eigen::MatrixXd& d) {
  const Eigen::Index n = d.rows();
  const auto count = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  if (count < 2.0) return 0.0;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) sum += d(i, j);
  const double mean = sum / count;
  double ss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) ss += (d(i, j) - mean) * (d(i, j) - mean);
  return std::sqrt(ss / (count - 1.0));
}

AffinityMatrix affinity_from_distances(const DistanceMatrix& d, KernelForm kernel) {
  const Eigen::Index n = d.values.rows();
  if (n < 2 || d.values.cols() != n) throw Error(ErrorKind::input, "distance matrix must be square with n >= 2");
  AffinityMatrix w;
  w.sigma = off_diagonal_std(d.values);
  if (!(w.sigma > 0.0)) {
    throw Error(ErrorKind::degenerate_geometry,
                "all pairwise distances are equal; the Gaussian bandwidth (their standard deviation) is 0");
  }
  w.values.resize(n, n);
  const double two_sigma_sq = 2.0 * w.sigma * w.sigma;
  for (Eigen::Index i = 0; i < n; ++i) {
    w.values(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double dist = d.values(i, j);
      const double value = kernel == KernelForm::gaussian ? std::exp(-dist * dist / two_sigma_sq)
                                                          : std::exp(dist * dist) / w.sigma;
      w.values(i, j) = value;
      w.values(j, i) = value;
    }
  }
  return w;
}

AffinityMatrix sparsify_knn(const AffinityMatrix& w, std::size_t k) {
  const Eigen::Index n = w.values.rows();
  if (k < 1 || static_cast<Eigen::Index>(k) >= n)
    throw Error(ErrorKind::config, fmt::format("affinity kNN must be in [1, {}] (got {})", n - 1, k));
  Eigen::Matrix<char, Eigen::Dynamic, Eigen::Dynamic> keep =
      Eigen::Matrix<char, Eigen::Dynamic, Eigen::Dynamic>::Zero(n, n);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::erase(order, i);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](Eigen::Index a, Eigen::Index b) {
                        if (w.values(i, a) != w.values(i, b)) return w.values(i, a) > w.values(i, b);
                        return a < b;
                      });
    for (std::size_t r = 0; r < k; ++r) {
      keep(i, order[r]) = 1;
      keep(order[r], i) = 1;
    }
    order.resize(static_cast<std::size_t>(n));
  }
  AffinityMatrix out = w;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (!keep(i, j)) out.values(i, j) = 0.0;
  return out;
}

LaplacianMatrix graph_laplacian(const AffinityMatrix& w, Normalization normalization) {
  return graph_laplacian(w.values, normalization);
}

LaplacianMatrix graph_laplacian(const Eigen::MatrixXd& w, Normalization normalization) {
  const Eigen::Index n = w.rows();
  if (n == 0 || w.cols() != n) throw Error(ErrorKind::invalid_affinity, "affinity matrix must be square and non-empty");
  if (!w.allFinite()) throw Error(ErrorKind::invalid_affinity, "affinity matrix contains non-finite entries");
  const double scale = std::max(1.0, w.cwiseAbs().maxCoeff());
  const double asymmetry = (w - w.transpose()).cwiseAbs().maxCoeff();
  if (asymmetry > 1e-10 * scale)
    throw Error(ErrorKind::invalid_affinity, fmt::format("affinity matrix is asymmetric (max |W - W^T| = {})", asymmetry));
  if (w.diagonal().cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw Error(ErrorKind::invalid_affinity, "affinity matrix must have a zero diagonal");

  const Eigen::VectorXd degree = w.rowwise().sum();
  LaplacianMatrix lap;
  lap.normalization = normalization;
  if (normalization == Normalization::unnormalized) {
    lap.values = -w;
    lap.values.diagonal() = degree - w.diagonal();
    return lap;
  }

  Eigen::VectorXd inv_sqrt(n);
  for (Eigen::Index i = 0; i < n; ++i) inv_sqrt(i) = degree(i) > 0.0 ? 1.0 / std::sqrt(degree(i)) : 0.0;
  lap.values.resize(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) lap.values(i, j) = -inv_sqrt(i) * w(i, j) * inv_sqrt(j);
  lap.values.diagonal().setOnes();
  // Mirror the strict upper triangle so the result is exactly symmetric.
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) lap.values(j, i) = lap.values(i, j);
  return lap;
}

}  // namespace wavecomm
