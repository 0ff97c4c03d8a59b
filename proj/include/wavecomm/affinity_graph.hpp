#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "wavecomm/feature_select.hpp"

namespace wavecomm {

enum class Metric { correlation, cosine, euclidean };

Metric parse_metric(std::string_view name);
std::string_view to_string(Metric metric) noexcept;

// Symmetric, non-negative, zero diagonal.
struct DistanceMatrix {
  Eigen::MatrixXd values;
  Metric metric = Metric::correlation;
};

// Symmetric, zero diagonal; entries in [0, 1] for the Gaussian kernel.
struct AffinityMatrix {
  Eigen::MatrixXd values;
  double sigma = 0.0;
};

enum class Normalization { unnormalized, symmetric };

Normalization parse_normalization(std::string_view name);
std::string_view to_string(Normalization normalization) noexcept;

struct LaplacianMatrix {
  Eigen::MatrixXd values;
  Normalization normalization = Normalization::symmetric;
};

/// Pairwise distances between the rows of C.
///
/// correlation: 1 - Pearson(u, v); cosine: 1 - cos(u, v); euclidean: ||u - v||.
/// A zero-variance row (correlation) or zero row (cosine) is a
/// degenerate_feature error naming the offending image.
DistanceMatrix pairwise_distances(const CoefficientMatrix& c, Metric metric);
DistanceMatrix pairwise_distances(const Eigen::MatrixXd& rows, Metric metric,
                                  std::span<const std::string> row_ids = {});

enum class KernelForm {
  gaussian,  // exp(-D^2 / (2 sigma^2))
  literal,   // exp(D .* D) / sigma, the printed form; grows with distance
};

KernelForm parse_kernel(std::string_view name);
std::string_view to_string(KernelForm kernel) noexcept;

// Sample standard deviation (n - 1 denominator) of the strictly upper-triangular entries.
double off_diagonal_std(const Eigen::MatrixXd& d);

AffinityMatrix affinity_from_distances(const DistanceMatrix& d, KernelForm kernel = KernelForm::gaussian);

// Keeps W(i,j) only when j is among i's k strongest affinities or vice versa.
AffinityMatrix sparsify_knn(const AffinityMatrix& w, std::size_t k);

// Unnormalized: Deg - W. Symmetric: I - Deg^-1/2 W Deg^-1/2, with identity rows
// for isolated (zero-degree) nodes.
LaplacianMatrix graph_laplacian(const AffinityMatrix& w, Normalization normalization = Normalization::symmetric);
LaplacianMatrix graph_laplacian(const Eigen::MatrixXd& w, Normalization normalization = Normalization::symmetric);

}  // namespace wavecomm
