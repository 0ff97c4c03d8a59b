#include "wavecomm/spectral_cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "wavecomm/error.hpp"

namespace wavecomm {
namespace {

// Bit-exact uniform draw in [0, 1); std::uniform_real_distribution is not
// specified tightly enough to reproduce across standard libraries.
double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)));
}

struct LloydRun {
  std::vector<int> labels;
  Eigen::MatrixXd centroids;
  double inertia = 0.0;
};

Eigen::MatrixXd seed_plus_plus(const Eigen::MatrixXd& points, std::size_t k, std::mt19937_64& rng) {
  const auto n = static_cast<std::size_t>(points.rows());
  Eigen::MatrixXd centroids(static_cast<Eigen::Index>(k), points.cols());
  std::vector<char> chosen(n, 0);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());

  std::size_t pick = uniform_index(rng, n);
  for (std::size_t c = 0; c < k; ++c) {
    if (c > 0) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) total += chosen[i] ? 0.0 : nearest[i];
      if (total > 0.0) {
        const double target = uniform01(rng) * total;
        double acc = 0.0;
        pick = n;
        std::size_t last_candidate = n;
        for (std::size_t i = 0; i < n; ++i) {
          if (chosen[i] || nearest[i] <= 0.0) continue;
          last_candidate = i;
          acc += nearest[i];
          if (acc > target) {
            pick = i;
            break;
          }
        }
        if (pick == n) pick = last_candidate;
      } else {
        // Every remaining point coincides with a centre; pick any unchosen one.
        std::vector<std::size_t> free;
        for (std::size_t i = 0; i < n; ++i)
          if (!chosen[i]) free.push_back(i);
        pick = free[uniform_index(rng, free.size())];
      }
    }
    chosen[pick] = 1;
    centroids.row(static_cast<Eigen::Index>(c)) = points.row(static_cast<Eigen::Index>(pick));
    for (std::size_t i = 0; i < n; ++i) {
      const double d2 = (points.row(static_cast<Eigen::Index>(i)) - centroids.row(static_cast<Eigen::Index>(c))).squaredNorm();
      nearest[i] = std::min(nearest[i], d2);
    }
  }
  return centroids;
}

LloydRun lloyd(const Eigen::MatrixXd& points, Eigen::MatrixXd centroids, std::size_t max_iterations) {
  const Eigen::Index n = points.rows();
  const Eigen::Index k = centroids.rows();
  LloydRun run;
  run.labels.assign(static_cast<std::size_t>(n), -1);
  std::vector<double> dist(static_cast<std::size_t>(n), 0.0);

  for (std::size_t iter = 0; iter < max_iterations; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (Eigen::Index c = 0; c < k; ++c) {
        const double d2 = (points.row(i) - centroids.row(c)).squaredNorm();
        if (d2 < best_d) {
          best_d = d2;
          best = static_cast<int>(c);
        }
      }
      dist[static_cast<std::size_t>(i)] = best_d;
      if (run.labels[static_cast<std::size_t>(i)] != best) {
        run.labels[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    if (!changed && iter > 0) break;

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int c = run.labels[static_cast<std::size_t>(i)];
      sums.row(c) += points.row(i);
      ++counts[static_cast<std::size_t>(c)];
    }
    for (Eigen::Index c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
        continue;
      }
      // Empty cluster: steal the point farthest from its centre among clusters with > 1 member.
      Eigen::Index far = -1;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto owner = static_cast<std::size_t>(run.labels[static_cast<std::size_t>(i)]);
        if (counts[owner] > 1 && dist[static_cast<std::size_t>(i)] > far_d) {
          far_d = dist[static_cast<std::size_t>(i)];
          far = i;
        }
      }
      if (far < 0) continue;
      --counts[static_cast<std::size_t>(run.labels[static_cast<std::size_t>(far)])];
      run.labels[static_cast<std::size_t>(far)] = static_cast<int>(c);
      counts[static_cast<std::size_t>(c)] = 1;
      dist[static_cast<std::size_t>(far)] = 0.0;
      centroids.row(c) = points.row(far);
    }
  }

  run.inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    run.inertia += (points.row(i) - centroids.row(run.labels[static_cast<std::size_t>(i)])).squaredNorm();
  run.centroids = std::move(centroids);
  return run;
}

void fill_blocks(CommunityResult& result) {
  const auto reordered_order = [&] {
    std::vector<std::size_t> perm(result.assignments.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::stable_sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) {
      return result.assignments[a] < result.assignments[b];
    });
    return perm;
  }();
  result.permutation = reordered_order;
  result.block_boundaries.assign(1, 0);
  const auto sizes = result.cluster_sizes();
  for (std::size_t size : sizes) result.block_boundaries.push_back(result.block_boundaries.back() + size);
}

}  // namespace

LaplacianSpectrum eigendecompose(const LaplacianMatrix& l, std::size_t k) { return eigendecompose(l.values, k); }

LaplacianSpectrum eigendecompose(const Eigen::MatrixXd& l, std::size_t k) {
  const Eigen::Index n = l.rows();
  if (n == 0 || l.cols() != n) throw Error(ErrorKind::input, "eigendecompose: matrix must be square and non-empty");
  if (k < 1 || static_cast<Eigen::Index>(k) > n)
    throw Error(ErrorKind::input, fmt::format("eigendecompose: k must be in [1, {}] (got {})", n, k));
  if (!l.allFinite()) throw Error(ErrorKind::numerical, "eigendecompose: matrix contains non-finite entries");
  const double scale = std::max(1.0, l.cwiseAbs().maxCoeff());
  if ((l - l.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw Error(ErrorKind::input, "eigendecompose: matrix is not symmetric");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(l);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorKind::numerical,
                fmt::format("symmetric eigensolver did not converge (n = {}, max |L| = {}, info = {})", n,
                            scale, static_cast<int>(solver.info())));
  }
  LaplacianSpectrum spectrum;
  const auto kk = static_cast<Eigen::Index>(k);
  spectrum.eigenvalues.resize(k);
  for (Eigen::Index j = 0; j < kk; ++j) spectrum.eigenvalues[static_cast<std::size_t>(j)] = solver.eigenvalues()(j);
  spectrum.eigenvectors = solver.eigenvectors().leftCols(kk);
  for (Eigen::Index j = 0; j < kk; ++j) {
    auto v = spectrum.eigenvectors.col(j);
    Eigen::Index pivot = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (std::abs(v(i)) > best) {
        best = std::abs(v(i));
        pivot = i;
      }
    }
    if (v(pivot) < 0.0) v = -v;
  }
  return spectrum;
}

CountMode parse_count_mode(std::string_view name) {
  if (name == "eigengap") return CountMode::eigengap;
  if (name == "near-zero" || name == "near_zero") return CountMode::near_zero;
  throw Error(ErrorKind::config, fmt::format("unknown cluster-count mode '{}' (expected eigengap or near-zero)", name));
}

std::string_view to_string(CountMode mode) noexcept {
  return mode == CountMode::eigengap ? "eigengap" : "near-zero";
}

std::size_t default_max_k(std::size_t n) {
  if (n < 2) return 1;
  return std::clamp<std::size_t>(std::min<std::size_t>(50, n / 4), 1, n - 1);
}

ClusterCountEstimate estimate_num_clusters(std::span<const double> eigenvalues, std::size_t max_k,
                                           std::optional<double> tau_c, CountMode mode) {
  if (max_k < 1) throw Error(ErrorKind::config, "max_k must be at least 1");
  if (eigenvalues.size() < max_k + 1) {
    throw Error(ErrorKind::input, fmt::format("eigengap estimate with max_k = {} needs {} eigenvalues (got {})",
                                              max_k, max_k + 1, eigenvalues.size()));
  }
  for (std::size_t i = 1; i < eigenvalues.size(); ++i)
    if (eigenvalues[i] < eigenvalues[i - 1])
      throw Error(ErrorKind::input, "eigenvalues must be sorted ascending");

  ClusterCountEstimate est;
  est.mode = mode;
  est.max_k = max_k;
  est.tau_c = tau_c.value_or(kDefaultNearZeroTolerance);
  est.gaps.resize(max_k);
  for (std::size_t i = 0; i < max_k; ++i) est.gaps[i] = eigenvalues[i + 1] - eigenvalues[i];

  const auto best = static_cast<std::size_t>(std::max_element(est.gaps.begin(), est.gaps.end()) - est.gaps.begin());
  const double best_gap = est.gaps[best];
  if (best_gap < 1e-12) {
    est.undifferentiated = true;
    est.eigengap_count = 1;
    spdlog::warn("estimate_num_clusters: undifferentiated spectrum (all gaps < 1e-12); using 1 cluster");
  } else {
    est.eigengap_count = best + 1;
    for (std::size_t i = 0; i < max_k; ++i) {
      if (i != best && best_gap - est.gaps[i] <= 1e-9 * best_gap) {
        est.ambiguous = true;
        break;
      }
    }
    if (est.ambiguous) {
      spdlog::warn("estimate_num_clusters: several equal largest gaps; taking the smallest index ({})",
                   est.eigengap_count);
    }
  }

  est.near_zero_count = static_cast<std::size_t>(
      std::count_if(eigenvalues.begin(), eigenvalues.end(), [&](double v) { return v < est.tau_c; }));
  est.near_zero_count = std::max<std::size_t>(1, est.near_zero_count);
  est.n_c = mode == CountMode::eigengap ? est.eigengap_count : est.near_zero_count;
  return est;
}

KMeansResult kmeans(const Eigen::MatrixXd& points, std::size_t k, std::uint64_t seed, const KMeansOptions& options) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (k < 1 || k > n) throw Error(ErrorKind::input, fmt::format("k-means: k must be in [1, {}] (got {})", n, k));
  std::mt19937_64 rng(seed);
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  const std::size_t restarts = std::max<std::size_t>(1, options.restarts);
  for (std::size_t r = 0; r < restarts; ++r) {
    LloydRun run = lloyd(points, seed_plus_plus(points, k, rng), std::max<std::size_t>(1, options.max_iterations));
    if (run.inertia < best.inertia) {
      best.labels = std::move(run.labels);
      best.centroids = std::move(run.centroids);
      best.inertia = run.inertia;
    }
  }
  return best;
}

std::vector<int> canonical_labels(std::span<const int> assignments) {
  std::map<int, std::pair<std::size_t, std::size_t>> stats;  // label -> (size, first index)
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    auto [it, inserted] = stats.try_emplace(assignments[i], 0, i);
    ++it->second.first;
  }
  std::vector<std::pair<int, std::pair<std::size_t, std::size_t>>> order(stats.begin(), stats.end());
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.second.first != b.second.first) return a.second.first > b.second.first;
    return a.second.second < b.second.second;
  });
  std::map<int, int> relabel;
  for (std::size_t c = 0; c < order.size(); ++c) relabel[order[c].first] = static_cast<int>(c);
  std::vector<int> out(assignments.size());
  for (std::size_t i = 0; i < assignments.size(); ++i) out[i] = relabel[assignments[i]];
  return out;
}

std::vector<std::size_t> CommunityResult::cluster_sizes() const {
  std::vector<std::size_t> sizes(n_c, 0);
  for (int a : assignments)
    if (a >= 0 && static_cast<std::size_t>(a) < n_c) ++sizes[static_cast<std::size_t>(a)];
  return sizes;
}

std::vector<std::size_t> CommunityResult::members(int cluster) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignments.size(); ++i)
    if (assignments[i] == cluster) out.push_back(i);
  return out;
}

CommunityResult spectral_cluster(const AffinityMatrix& w, std::size_t n_c, std::uint64_t seed,
                                 const KMeansOptions& options) {
  const auto n = static_cast<std::size_t>(w.values.rows());
  if (n_c < 1 || n_c > n)
    throw Error(ErrorKind::input, fmt::format("spectral_cluster: n_c must be in [1, {}] (got {})", n, n_c));
  const LaplacianMatrix l = graph_laplacian(w, Normalization::symmetric);
  return spectral_cluster(w, eigendecompose(l, n_c), n_c, seed, options);
}

CommunityResult spectral_cluster(const AffinityMatrix& w, const LaplacianSpectrum& spectrum, std::size_t n_c,
                                 std::uint64_t seed, const KMeansOptions& options) {
  const Eigen::Index n = w.values.rows();
  if (n_c < 1 || static_cast<Eigen::Index>(n_c) > n)
    throw Error(ErrorKind::input, fmt::format("spectral_cluster: n_c must be in [1, {}] (got {})", n, n_c));
  if (spectrum.eigenvectors.rows() != n || spectrum.eigenvectors.cols() < static_cast<Eigen::Index>(n_c))
    throw Error(ErrorKind::input, "spectral_cluster: spectrum does not hold n_c eigenvectors for this matrix");

  CommunityResult result;
  result.n_c = n_c;
  result.eigenvalues = spectrum.eigenvalues;
  result.assignments.assign(static_cast<std::size_t>(n), 0);

  if (n_c > 1) {
    Eigen::MatrixXd embedding = spectrum.eigenvectors.leftCols(static_cast<Eigen::Index>(n_c));
    std::vector<std::size_t> active;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double norm = embedding.row(i).norm();
      if (norm < 1e-12) {
        result.isolated_nodes.push_back(static_cast<std::size_t>(i));
      } else {
        embedding.row(i) /= norm;
        active.push_back(static_cast<std::size_t>(i));
      }
    }
    const std::size_t isolated = result.isolated_nodes.size();
    if (isolated > 0 && isolated < n_c && !active.empty()) {
      spdlog::warn("spectral_cluster: {} isolated node(s) placed in singleton clusters", isolated);
      Eigen::MatrixXd points(static_cast<Eigen::Index>(active.size()), embedding.cols());
      for (std::size_t r = 0; r < active.size(); ++r)
        points.row(static_cast<Eigen::Index>(r)) = embedding.row(static_cast<Eigen::Index>(active[r]));
      const std::size_t k_rest = std::min(n_c - isolated, active.size());
      const KMeansResult km = kmeans(points, k_rest, seed, options);
      for (std::size_t r = 0; r < active.size(); ++r) result.assignments[active[r]] = km.labels[r];
      for (std::size_t s = 0; s < isolated; ++s)
        result.assignments[result.isolated_nodes[s]] = static_cast<int>(k_rest + s);
      result.inertia = km.inertia;
      result.n_c = k_rest + isolated;
    } else {
      if (isolated > 0)
        spdlog::warn("spectral_cluster: {} isolated node(s) assigned to the nearest centroid", isolated);
      const KMeansResult km = kmeans(embedding, n_c, seed, options);
      for (Eigen::Index i = 0; i < n; ++i) result.assignments[static_cast<std::size_t>(i)] = km.labels[static_cast<std::size_t>(i)];
      result.inertia = km.inertia;
    }
  }

  result.assignments = canonical_labels(result.assignments);
  result.n_c = static_cast<std::size_t>(*std::max_element(result.assignments.begin(), result.assignments.end()) + 1);
  fill_blocks(result);
  return result;
}

ReorderedSimilarity reorder_similarity(const Eigen::MatrixXd& w, std::span<const int> assignments) {
  const Eigen::Index n = w.rows();
  if (w.cols() != n || static_cast<Eigen::Index>(assignments.size()) != n)
    throw Error(ErrorKind::input, "reorder_similarity: assignments must cover every row of the matrix");
  const std::vector<int> labels = canonical_labels(assignments);
  ReorderedSimilarity out;
  out.permutation.resize(static_cast<std::size_t>(n));
  std::iota(out.permutation.begin(), out.permutation.end(), 0);
  std::stable_sort(out.permutation.begin(), out.permutation.end(),
                   [&](std::size_t a, std::size_t b) { return labels[a] < labels[b]; });
  out.block_boundaries.push_back(0);
  for (std::size_t i = 1; i < out.permutation.size(); ++i)
    if (labels[out.permutation[i]] != labels[out.permutation[i - 1]]) out.block_boundaries.push_back(i);
  out.block_boundaries.push_back(static_cast<std::size_t>(n));
  if (n == 0) out.block_boundaries = {0};
  out.values.resize(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i)
      out.values(i, j) = w(static_cast<Eigen::Index>(out.permutation[static_cast<std::size_t>(i)]),
                           static_cast<Eigen::Index>(out.permutation[static_cast<std::size_t>(j)]));
  return out;
}

double purity(std::span<const int> assignments, std::span<const int> truth) {
  if (assignments.size() != truth.size() || assignments.empty())
    throw Error(ErrorKind::input, "purity: assignments and truth must be non-empty and equal length");
  std::map<int, std::map<int, std::size_t>> table;
  for (std::size_t i = 0; i < assignments.size(); ++i) ++table[assignments[i]][truth[i]];
  std::size_t majority_total = 0;
  for (const auto& [cluster, counts] : table) {
    std::size_t best = 0;
    for (const auto& [label, count] : counts) best = std::max(best, count);
    majority_total += best;
  }
  return static_cast<double>(majority_total) / static_cast<double>(assignments.size());
}

}  // namespace wavecomm
