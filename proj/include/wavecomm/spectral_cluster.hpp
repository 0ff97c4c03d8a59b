#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "wavecomm/affinity_graph.hpp"

namespace wavecomm {

struct LaplacianSpectrum {
  std::vector<double> eigenvalues;  // ascending
  Eigen::MatrixXd eigenvectors;     // n x k, column j pairs with eigenvalues[j]
};

// k smallest eigenpairs of a symmetric matrix. Each eigenvector is signed so
// that its largest-magnitude entry (first on ties) is positive.
LaplacianSpectrum eigendecompose(const Eigen::MatrixXd& l, std::size_t k);
LaplacianSpectrum eigendecompose(const LaplacianMatrix& l, std::size_t k);

enum class CountMode { eigengap, near_zero };

CountMode parse_count_mode(std::string_view name);
std::string_view to_string(CountMode mode) noexcept;

inline constexpr double kDefaultNearZeroTolerance = 1e-6;

struct ClusterCountEstimate {
  std::size_t n_c = 1;                   // the estimate selected by `mode`
  CountMode mode = CountMode::eigengap;
  std::size_t eigengap_count = 1;        // argmax_i (lambda_{i+1} - lambda_i), 1-based, i <= max_k
  std::size_t near_zero_count = 1;       // #{lambda_i < tau_c}, at least 1
  double tau_c = kDefaultNearZeroTolerance;
  std::size_t max_k = 0;
  std::vector<double> gaps;              // lambda_{i+1} - lambda_i for i = 1..max_k
  bool undifferentiated = false;         // every gap below 1e-12
  bool ambiguous = false;                // largest gap not unique
};

/// Cluster-count estimate from ascending Laplacian eigenvalues.
///
/// The eigengap heuristic takes the largest of the first `max_k` consecutive
/// gaps, breaking ties toward the smallest index. The near-zero reading counts
/// eigenvalues below `tau_c`. Both are always reported; `mode` picks n_c.
ClusterCountEstimate estimate_num_clusters(std::span<const double> eigenvalues, std::size_t max_k,
                                           std::optional<double> tau_c = std::nullopt,
                                           CountMode mode = CountMode::eigengap);

// min(50, n / 4), at least 1 and at most n - 1.
std::size_t default_max_k(std::size_t n);

struct KMeansOptions {
  std::size_t restarts = 50;
  std::size_t max_iterations = 300;
};

struct KMeansResult {
  std::vector<int> labels;
  Eigen::MatrixXd centroids;  // k x dims
  double inertia = 0.0;
};

// k-means++ seeding and Lloyd iterations; best inertia over restarts.
KMeansResult kmeans(const Eigen::MatrixXd& points, std::size_t k, std::uint64_t seed,
                    const KMeansOptions& options = {});

/// Detected communities.
///
/// Cluster ids are canonical: ordered by size (descending), ties by smallest
/// member index. `permutation` lists image indices cluster by cluster (members
/// ascending), and `block_boundaries` holds the n_c + 1 offsets of each block.
struct CommunityResult {
  std::size_t n_c = 0;
  std::vector<std::string> image_ids;
  std::vector<int> assignments;
  std::vector<std::size_t> permutation;
  std::vector<std::size_t> block_boundaries;
  std::vector<double> eigenvalues;
  std::vector<double> gaps;
  std::optional<ClusterCountEstimate> estimate;  // empty when n_c was overridden
  std::vector<std::size_t> isolated_nodes;
  double inertia = 0.0;

  std::vector<std::size_t> cluster_sizes() const;
  std::vector<std::size_t> members(int cluster) const;
};

// Normalized spectral clustering (row-normalized L_sym eigenvectors + k-means).
CommunityResult spectral_cluster(const AffinityMatrix& w, std::size_t n_c, std::uint64_t seed,
                                 const KMeansOptions& options = {});

// Same, reusing an eigendecomposition of L_sym holding at least n_c eigenpairs.
CommunityResult spectral_cluster(const AffinityMatrix& w, const LaplacianSpectrum& spectrum,
                                 std::size_t n_c, std::uint64_t seed, const KMeansOptions& options = {});

// Relabels clusters canonically (size descending, then smallest member index).
std::vector<int> canonical_labels(std::span<const int> assignments);

struct ReorderedSimilarity {
  Eigen::MatrixXd values;
  std::vector<std::size_t> permutation;
  std::vector<std::size_t> block_boundaries;
};

// Groups clusters contiguously: size descending, ties by smallest member index.
ReorderedSimilarity reorder_similarity(const Eigen::MatrixXd& w, std::span<const int> assignments);

// Fraction of items whose cluster's majority truth label equals their own.
double purity(std::span<const int> assignments, std::span<const int> truth);

}  // namespace wavecomm
