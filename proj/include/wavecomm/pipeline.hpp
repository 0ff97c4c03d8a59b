#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wavecomm/affinity_graph.hpp"
#include "wavecomm/feature_select.hpp"
#include "wavecomm/spectral_cluster.hpp"
#include "wavecomm/wavelet.hpp"

namespace wavecomm {

// Numerical settings of the community-detection pipeline.
struct PipelineConfig {
  BasisName basis = BasisName::db3;
  int levels = 3;
  Threshold threshold = Threshold::keep_top(0.2);
  Metric metric = Metric::correlation;
  KernelForm kernel = KernelForm::gaussian;
  std::optional<std::size_t> knn;  // sparsify the affinity to a kNN graph
  Normalization normalization = Normalization::symmetric;
  std::optional<std::size_t> max_k;  // default: default_max_k(n)
  std::optional<double> tau_c;
  CountMode count_mode = CountMode::eigengap;
  std::optional<std::size_t> n_c;  // skips the estimate
  std::uint64_t seed = 7;
  std::size_t kmeans_restarts = 50;

  // Throws config errors for out-of-range values.
  void validate() const;
};

struct Decomposition {
  Bookkeeping beta;
  CoefficientMatrix coefficients;
};

struct Selection {
  FeatureScores scores;
  std::vector<std::size_t> kept;
  CoefficientMatrix selected;
};

struct Graph {
  DistanceMatrix distance;
  AffinityMatrix affinity;
};

Decomposition decompose_images(std::span<const Eigen::MatrixXd> images, std::span<const std::string> ids,
                               BasisName basis, int levels);

Selection score_and_select(const CoefficientMatrix& coefficients, Threshold threshold);

Graph build_graph(const CoefficientMatrix& selected, Metric metric, KernelForm kernel,
                  std::optional<std::size_t> knn);

// Laplacian, eigendecomposition, cluster-count estimate and spectral clustering.
CommunityResult find_communities(const AffinityMatrix& affinity, std::span<const std::string> ids,
                                 const PipelineConfig& config);

struct PipelineResult {
  Decomposition decomposition;
  Selection selection;
  Graph graph;
  CommunityResult communities;
};

// Every stage in order. Errors carry the stage name and a remediation hint.
PipelineResult detect_communities(std::span<const Eigen::MatrixXd> images, std::span<const std::string> ids,
                                  const PipelineConfig& config);

// Ratio of the selected eigengap to the median of the reported gaps; 0 when undefined.
double knee_ratio(const ClusterCountEstimate& estimate);

}  // namespace wavecomm
