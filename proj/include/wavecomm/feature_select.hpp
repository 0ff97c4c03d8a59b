#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wavecomm/wavelet.hpp"

namespace wavecomm {

// Rows are images, columns are wavelet coefficients.
struct CoefficientMatrix {
  Eigen::MatrixXd values;
  std::vector<std::string> image_ids;
  std::vector<std::string> feature_ids;

  std::size_t rows() const noexcept { return static_cast<std::size_t>(values.rows()); }
  std::size_t cols() const noexcept { return static_cast<std::size_t>(values.cols()); }
};

// Throws heterogeneous_dataset when the bookkeeping tables differ.
CoefficientMatrix assemble_coefficient_matrix(std::span<const DecompResult> decomps,
                                              std::span<const std::string> image_ids);

struct ScoringOptions {
  std::optional<std::size_t> k_neighbors;  // default min(5, n-1)
  std::optional<double> bandwidth;         // default: median kNN distance
};

/// Laplacian-score importance per column.
///
/// `raw` is the classic locality score (f^T L f) / (f^T D f) on the
/// degree-centred column, where small means the feature varies smoothly over
/// the kNN graph. `importance = 1 / (1 + raw)` flips the polarity so larger is
/// better; constant columns get importance 0.
struct FeatureScores {
  std::vector<std::string> ids;
  std::vector<double> importance;
  std::vector<double> raw;
  std::vector<std::size_t> constant_columns;
  std::size_t k_neighbors = 0;
  double bandwidth = 0.0;
};

// Symmetric kNN graph over the rows with heat-kernel weights exp(-(d/bandwidth)^2).
// An edge exists when either endpoint is among the other's k nearest rows.
Eigen::MatrixXd heat_kernel_knn_graph(const Eigen::MatrixXd& rows, std::size_t k,
                                      std::optional<double> bandwidth = std::nullopt,
                                      double* used_bandwidth = nullptr);

FeatureScores laplacian_score(const CoefficientMatrix& c, const ScoringOptions& options = {});

// Either an absolute importance cutoff or the top fraction of columns to keep.
struct Threshold {
  enum class Mode { absolute, keep_top };
  Mode mode = Mode::keep_top;
  double value = 0.2;

  static Threshold absolute(double tau) { return {Mode::absolute, tau}; }
  static Threshold keep_top(double fraction) { return {Mode::keep_top, fraction}; }
};

// Surviving column indices in ascending order.
std::vector<std::size_t> selected_columns(const FeatureScores& scores, Threshold threshold);

CoefficientMatrix select_features(const CoefficientMatrix& c, const FeatureScores& scores,
                                  Threshold threshold);

CoefficientMatrix select_columns(const CoefficientMatrix& c, std::span<const std::size_t> columns);

// CSV with header feature_id,importance,raw_score,kept.
void write_feature_scores_csv(const std::filesystem::path& path, const FeatureScores& scores,
                              std::span<const std::size_t> kept);

struct FeatureScoresFile {
  FeatureScores scores;
  std::vector<std::size_t> kept;
};

FeatureScoresFile read_feature_scores_csv(const std::filesystem::path& path);

}  // namespace wavecomm
