#include "wavecomm/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "wavecomm/disease_spectrum.hpp"
#include "wavecomm/error.hpp"
#include "wavecomm/parallel.hpp"

namespace wavecomm {

void PipelineConfig::validate() const {
  if (levels < 1) throw Error(ErrorKind::config, fmt::format("--levels must be at least 1 (got {})", levels));
  if (threshold.mode == Threshold::Mode::keep_top) {
    if (!(threshold.value > 0.0 && threshold.value <= 1.0))
      throw Error(ErrorKind::config, fmt::format("--keep-top must be in (0, 1] (got {})", threshold.value));
  } else if (!std::isfinite(threshold.value) || threshold.value < 0.0) {
    throw Error(ErrorKind::config, fmt::format("--tau-w must be a finite non-negative score (got {})", threshold.value));
  }
  if (max_k && *max_k < 1) throw Error(ErrorKind::config, "--max-k must be at least 1");
  if (tau_c && !(std::isfinite(*tau_c) && *tau_c > 0.0))
    throw Error(ErrorKind::config, fmt::format("--tau-c must be positive (got {})", *tau_c));
  if (n_c && *n_c < 1) throw Error(ErrorKind::config, "--n-c must be at least 1");
  if (knn && *knn < 1) throw Error(ErrorKind::config, "--knn must be at least 1");
  if (kmeans_restarts < 1) throw Error(ErrorKind::config, "--restarts must be at least 1");
}

Decomposition decompose_images(std::span<const Eigen::MatrixXd> images, std::span<const std::string> ids,
                               BasisName basis, int levels) {
  if (images.empty()) throw Error(ErrorKind::input, "no images to decompose");
  if (images.size() != ids.size()) throw Error(ErrorKind::input, "image and id counts differ");
  const auto rows = static_cast<std::size_t>(images.front().rows());
  const auto cols = static_cast<std::size_t>(images.front().cols());
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (static_cast<std::size_t>(images[i].rows()) != rows || static_cast<std::size_t>(images[i].cols()) != cols) {
      throw Error(ErrorKind::heterogeneous_dataset,
                  fmt::format("image '{}' is {}x{} but '{}' is {}x{}", ids[i], images[i].cols(), images[i].rows(),
                              ids.front(), cols, rows));
    }
  }

  Decomposition out;
  out.beta = plan_decomposition(rows, cols, basis, levels);
  const WaveletBasis filters = basis_filters(basis);
  std::vector<DecompResult> decomps(images.size());
  parallel_for(images.size(), [&](std::size_t i) { decomps[i] = wavedec2(images[i], filters, levels); });
  out.coefficients = assemble_coefficient_matrix(decomps, ids);
  return out;
}

Selection score_and_select(const CoefficientMatrix& coefficients, Threshold threshold) {
  Selection out;
  out.scores = laplacian_score(coefficients);
  out.kept = selected_columns(out.scores, threshold);
  out.selected = select_columns(coefficients, out.kept);
  spdlog::info("kept {} of {} wavelet features", out.kept.size(), coefficients.cols());
  return out;
}

Graph build_graph(const CoefficientMatrix& selected, Metric metric, KernelForm kernel, std::optional<std::size_t> knn) {
  Graph out;
  out.distance = pairwise_distances(selected, metric);
  out.affinity = affinity_from_distances(out.distance, kernel);
  if (knn) out.affinity = sparsify_knn(out.affinity, *knn);
  return out;
}

CommunityResult find_communities(const AffinityMatrix& affinity, std::span<const std::string> ids,
                                 const PipelineConfig& config) {
  const auto n = static_cast<std::size_t>(affinity.values.rows());
  if (n != ids.size()) throw Error(ErrorKind::input, "affinity size and id count differ");
  if (n < 2) throw Error(ErrorKind::degenerate_geometry, "community detection needs at least two images");

  const LaplacianMatrix l = graph_laplacian(affinity, config.normalization);
  const LaplacianSpectrum spectrum = eigendecompose(l, n);

  std::optional<ClusterCountEstimate> estimate;
  std::size_t n_c = 0;
  if (config.n_c) {
    if (*config.n_c > n) throw Error(ErrorKind::config, fmt::format("--n-c {} exceeds the {} images", *config.n_c, n));
    n_c = *config.n_c;
  } else {
    std::size_t max_k = config.max_k.value_or(default_max_k(n));
    if (max_k > n - 1) {
      spdlog::warn("max_k {} exceeds n - 1 for {} images; using {}", max_k, n, n - 1);
      max_k = n - 1;
    }
    estimate = estimate_num_clusters(spectrum.eigenvalues, max_k, config.tau_c, config.count_mode);
    n_c = estimate->n_c;
  }

  const KMeansOptions options{config.kmeans_restarts, KMeansOptions{}.max_iterations};
  CommunityResult result = config.normalization == Normalization::symmetric
                               ? spectral_cluster(affinity, spectrum, n_c, config.seed, options)
                               : spectral_cluster(affinity, n_c, config.seed, options);
  result.image_ids.assign(ids.begin(), ids.end());
  result.eigenvalues = spectrum.eigenvalues;
  if (estimate) result.gaps = estimate->gaps;
  result.estimate = estimate;
  return result;
}

PipelineResult detect_communities(std::span<const Eigen::MatrixXd> images, std::span<const std::string> ids,
                                  const PipelineConfig& config) {
  run_stage("config", [&] { config.validate(); });
  PipelineResult out;
  out.decomposition = run_stage("decompose", [&] { return decompose_images(images, ids, config.basis, config.levels); });
  out.selection = run_stage("select", [&] { return score_and_select(out.decomposition.coefficients, config.threshold); });
  out.graph = run_stage("graph", [&] { return build_graph(out.selection.selected, config.metric, config.kernel, config.knn); });
  out.communities = run_stage("cluster", [&] { return find_communities(out.graph.affinity, ids, config); });
  return out;
}

double knee_ratio(const ClusterCountEstimate& estimate) {
  if (estimate.gaps.empty() || estimate.eigengap_count < 1) return 0.0;
  const double median = quantile(estimate.gaps, 0.5);
  if (!(median > 0.0)) return 0.0;
  return estimate.gaps[estimate.eigengap_count - 1] / median;
}

}  // namespace wavecomm
