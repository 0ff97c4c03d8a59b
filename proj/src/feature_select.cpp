#include "wavecomm/feature_select.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "linalg_detail.hpp"
#include "wavecomm/csv.hpp"
#include "wavecomm/error.hpp"
#include "wavecomm/parallel.hpp"

namespace wavecomm {
namespace {

double median_of(std::vector<double> values) {
  if (values.empty()) return 0.0;
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

struct Adjacency {
  std::vector<std::vector<std::pair<std::size_t, double>>> edges;
  std::vector<double> degree;
};

Adjacency to_adjacency(const Eigen::MatrixXd& w) {
  const auto n = static_cast<std::size_t>(w.rows());
  Adjacency adj;
  adj.edges.resize(n);
  adj.degree.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double v = w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (v != 0.0) {
        adj.edges[i].emplace_back(j, v);
        adj.degree[i] += v;
      }
    }
  }
  return adj;
}

}  // namespace

CoefficientMatrix assemble_coefficient_matrix(std::span<const DecompResult> decomps,
                                              std::span<const std::string> image_ids) {
  if (decomps.empty()) throw Error(ErrorKind::input, "cannot assemble a coefficient matrix from zero images");
  if (decomps.size() != image_ids.size()) {
    throw Error(ErrorKind::input, fmt::format("{} decompositions but {} image ids", decomps.size(),
                                              image_ids.size()));
  }
  const Bookkeeping& reference = decomps.front().beta;
  for (std::size_t i = 1; i < decomps.size(); ++i) {
    if (!(decomps[i].beta == reference)) {
      throw Error(ErrorKind::heterogeneous_dataset,
                  fmt::format("image '{}' has a {}x{} decomposition layout but '{}' has {}x{}; resize "
                              "all images to a common size first",
                              image_ids[i], decomps[i].beta.rows, decomps[i].beta.cols, image_ids[0],
                              reference.rows, reference.cols));
    }
  }

  CoefficientMatrix c;
  const auto n = static_cast<Eigen::Index>(decomps.size());
  const auto m = static_cast<Eigen::Index>(reference.coefficient_count());
  c.values.resize(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& omega = decomps[static_cast<std::size_t>(i)].omega;
    if (static_cast<Eigen::Index>(omega.size()) != m)
      throw Error(ErrorKind::corrupt_decomposition, "omega length disagrees with its bookkeeping");
    c.values.row(i) = Eigen::Map<const Eigen::RowVectorXd>(omega.data(), m);
  }
  c.image_ids.assign(image_ids.begin(), image_ids.end());
  c.feature_ids = coefficient_labels(reference);
  return c;
}

Eigen::MatrixXd heat_kernel_knn_graph(const Eigen::MatrixXd& rows, std::size_t k,
                                      std::optional<double> bandwidth, double* used_bandwidth) {
  const auto n = static_cast<std::size_t>(rows.rows());
  if (n < 2) throw Error(ErrorKind::input, "kNN graph needs at least two rows");
  if (k < 1 || k >= n)
    throw Error(ErrorKind::config, fmt::format("k_neighbors must be in [1, {}] (got {})", n - 1, k));

  const Eigen::MatrixXd gram = detail::gram_matrix(rows);
  const Eigen::VectorXd sq = gram.diagonal();

  std::vector<std::vector<std::pair<double, std::size_t>>> nearest(n);
  parallel_for(n, [&](std::size_t i) {
    std::vector<std::pair<double, std::size_t>> candidates;
    candidates.reserve(n - 1);
    const auto ii = static_cast<Eigen::Index>(i);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const auto jj = static_cast<Eigen::Index>(j);
      const double d2 = std::max(0.0, sq(ii) + sq(jj) - 2.0 * gram(ii, jj));
      candidates.emplace_back(std::sqrt(d2), j);
    }
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k),
                      candidates.end());
    candidates.resize(k);
    nearest[i] = std::move(candidates);
  });

  double sigma = 0.0;
  if (bandwidth) {
    if (!(*bandwidth > 0.0) || !std::isfinite(*bandwidth))
      throw Error(ErrorKind::config, fmt::format("heat-kernel bandwidth must be positive (got {})", *bandwidth));
    sigma = *bandwidth;
  } else {
    std::vector<double> distances;
    distances.reserve(n * k);
    for (const auto& list : nearest)
      for (const auto& [d, j] : list) distances.push_back(d);
    sigma = median_of(distances);
    if (sigma <= 0.0) {
      double total = 0.0;
      std::size_t count = 0;
      for (double d : distances) {
        if (d > 0.0) {
          total += d;
          ++count;
        }
      }
      sigma = count > 0 ? total / static_cast<double>(count) : 1.0;
    }
  }
  if (used_bandwidth) *used_bandwidth = sigma;

  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& [d, j] : nearest[i]) {
      const double weight = std::exp(-(d / sigma) * (d / sigma));
      const auto ii = static_cast<Eigen::Index>(i);
      const auto jj = static_cast<Eigen::Index>(j);
      w(ii, jj) = weight;
      w(jj, ii) = weight;
    }
  }
  return w;
}

FeatureScores laplacian_score(const CoefficientMatrix& c, const ScoringOptions& options) {
  const std::size_t n = c.rows();
  const std::size_t m = c.cols();
  if (n < 3) throw Error(ErrorKind::input, fmt::format("Laplacian score needs at least 3 images (got {})", n));
  if (m == 0) throw Error(ErrorKind::input, "Laplacian score needs at least one feature");
  const std::size_t k = options.k_neighbors.value_or(std::min<std::size_t>(5, n - 1));
  if (k < 1 || k >= n)
    throw Error(ErrorKind::config, fmt::format("k_neighbors must be < number of images ({}), got {}", n, k));

  FeatureScores scores;
  scores.k_neighbors = k;
  const Eigen::MatrixXd w = heat_kernel_knn_graph(c.values, k, options.bandwidth, &scores.bandwidth);
  const Adjacency adj = to_adjacency(w);
  const double total_degree = std::accumulate(adj.degree.begin(), adj.degree.end(), 0.0);

  scores.ids = c.feature_ids;
  if (scores.ids.size() != m) {
    scores.ids.resize(m);
    for (std::size_t j = 0; j < m; ++j)
      if (scores.ids[j].empty()) scores.ids[j] = fmt::format("f{}", j);
  }
  scores.importance.assign(m, 0.0);
  scores.raw.assign(m, std::numeric_limits<double>::infinity());
  std::vector<char> constant(m, 0);

  parallel_for(m, [&](std::size_t col) {
    const auto column = c.values.col(static_cast<Eigen::Index>(col));
    const double lo = column.minCoeff();
    const double hi = column.maxCoeff();
    if (lo == hi) {
      constant[col] = 1;
      return;
    }
    double weighted_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) weighted_sum += adj.degree[i] * column(static_cast<Eigen::Index>(i));
    const double mean = weighted_sum / total_degree;
    std::vector<double> centred(n);
    double scale = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      centred[i] = column(static_cast<Eigen::Index>(i)) - mean;
      scale = std::max(scale, std::abs(column(static_cast<Eigen::Index>(i))));
    }
    double variance = 0.0;   // f^T D f
    double adjacency = 0.0;  // f^T W f
    for (std::size_t i = 0; i < n; ++i) {
      variance += adj.degree[i] * centred[i] * centred[i];
      double row = 0.0;
      for (const auto& [j, weight] : adj.edges[i]) row += weight * centred[j];
      adjacency += centred[i] * row;
    }
    if (variance <= 1e-28 * total_degree * scale * scale) {
      constant[col] = 1;
      return;
    }
    const double raw = std::max(0.0, (variance - adjacency) / variance);
    scores.raw[col] = raw;
    scores.importance[col] = 1.0 / (1.0 + raw);
  });

  for (std::size_t col = 0; col < m; ++col)
    if (constant[col]) scores.constant_columns.push_back(col);
  if (!scores.constant_columns.empty()) {
    spdlog::warn("laplacian_score: {} zero-variance feature(s) assigned importance 0",
                 scores.constant_columns.size());
  }
  return scores;
}

std::vector<std::size_t> selected_columns(const FeatureScores& scores, Threshold threshold) {
  const std::size_t m = scores.importance.size();
  if (m == 0) throw Error(ErrorKind::input, "no feature scores to threshold");
  std::vector<std::size_t> kept;
  if (threshold.mode == Threshold::Mode::absolute) {
    if (!std::isfinite(threshold.value))
      throw Error(ErrorKind::config, "absolute feature threshold must be finite");
    for (std::size_t j = 0; j < m; ++j)
      if (!(scores.importance[j] < threshold.value)) kept.push_back(j);
    if (kept.empty()) {
      const double best = *std::max_element(scores.importance.begin(), scores.importance.end());
      throw Error(ErrorKind::threshold_too_aggressive,
                  fmt::format("threshold {} discards every feature; the largest importance is {}",
                              threshold.value, best));
    }
    return kept;
  }

  if (!(threshold.value > 0.0 && threshold.value <= 1.0))
    throw Error(ErrorKind::config, fmt::format("keep-top fraction must be in (0, 1] (got {})", threshold.value));
  auto count = static_cast<std::size_t>(std::ceil(threshold.value * static_cast<double>(m) - 1e-9));
  count = std::clamp<std::size_t>(count, 1, m);
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores.importance[a] > scores.importance[b];
  });
  kept.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
  std::sort(kept.begin(), kept.end());
  return kept;
}

CoefficientMatrix select_columns(const CoefficientMatrix& c, std::span<const std::size_t> columns) {
  CoefficientMatrix out;
  out.image_ids = c.image_ids;
  out.values.resize(c.values.rows(), static_cast<Eigen::Index>(columns.size()));
  out.feature_ids.reserve(columns.size());
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (columns[j] >= c.cols()) throw Error(ErrorKind::input, "selected column index out of range");
    out.values.col(static_cast<Eigen::Index>(j)) = c.values.col(static_cast<Eigen::Index>(columns[j]));
    if (columns[j] < c.feature_ids.size()) out.feature_ids.push_back(c.feature_ids[columns[j]]);
  }
  return out;
}

CoefficientMatrix select_features(const CoefficientMatrix& c, const FeatureScores& scores,
                                  Threshold threshold) {
  if (scores.importance.size() != c.cols()) {
    throw Error(ErrorKind::input, fmt::format("{} scores for a matrix with {} columns",
                                              scores.importance.size(), c.cols()));
  }
  const auto kept = selected_columns(scores, threshold);
  return select_columns(c, kept);
}

void write_feature_scores_csv(const std::filesystem::path& path, const FeatureScores& scores,
                              std::span<const std::size_t> kept) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, fmt::format("cannot write '{}'", path.string()));
  std::vector<char> is_kept(scores.importance.size(), 0);
  for (std::size_t j : kept)
    if (j < is_kept.size()) is_kept[j] = 1;
  out << "feature_id,importance,raw_score,kept\n";
  for (std::size_t j = 0; j < scores.importance.size(); ++j) {
    out << csv::format_row({scores.ids[j], csv::format_double(scores.importance[j]),
                            csv::format_double(scores.raw[j]), is_kept[j] ? "1" : "0"})
        << '\n';
  }
}

FeatureScoresFile read_feature_scores_csv(const std::filesystem::path& path) {
  const auto rows = csv::read_file(path);
  if (rows.empty() || rows.front() != csv::Row{"feature_id", "importance", "raw_score", "kept"})
    throw Error(ErrorKind::corrupt_artifact, fmt::format("'{}' is not a feature score table", path.string()));
  FeatureScoresFile file;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != 4) throw Error(ErrorKind::corrupt_artifact, fmt::format("'{}': malformed row {}", path.string(), r));
    try {
      file.scores.ids.push_back(row[0]);
      file.scores.importance.push_back(std::stod(row[1]));
      file.scores.raw.push_back(row[2] == "inf" ? std::numeric_limits<double>::infinity() : std::stod(row[2]));
    } catch (const std::exception&) {
      throw Error(ErrorKind::corrupt_artifact, fmt::format("'{}': unparseable number in row {}", path.string(), r));
    }
    if (row[3] == "1") file.kept.push_back(r - 1);
    if (file.scores.importance.back() == 0.0 && std::isinf(file.scores.raw.back()))
      file.scores.constant_columns.push_back(r - 1);
  }
  return file;
}

}  // namespace wavecomm
