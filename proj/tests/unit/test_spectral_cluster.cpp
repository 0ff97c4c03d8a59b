#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "oracles.hpp"
#include "wavecomm/error.hpp"
#include "wavecomm/spectral_cluster.hpp"

using namespace wavecomm;

TEST_SUITE("spectral_cluster") {

TEST_CASE("eigenpairs have small residuals and reconstruct the matrix") {
  std::mt19937_64 rng(3);
  const Eigen::MatrixXd a = oracle::random_matrix(12, 12, rng);
  const Eigen::MatrixXd s = a + a.transpose();
  const auto full = eigendecompose(s, 12);
  REQUIRE(full.eigenvalues.size() == 12);
  CHECK(std::is_sorted(full.eigenvalues.begin(), full.eigenvalues.end()));
  Eigen::VectorXd lambda(12);
  for (Eigen::Index i = 0; i < 12; ++i) {
    lambda(i) = full.eigenvalues[static_cast<std::size_t>(i)];
    const Eigen::VectorXd v = full.eigenvectors.col(i);
    CHECK((s * v - lambda(i) * v).norm() < 1e-10);
    CHECK(std::abs(v.norm() - 1.0) < 1e-12);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    CHECK(v(arg) > 0.0);
  }
  const Eigen::MatrixXd rebuilt = full.eigenvectors * lambda.asDiagonal() * full.eigenvectors.transpose();
  CHECK((rebuilt - s).cwiseAbs().maxCoeff() < 1e-10);

  const auto partial = eigendecompose(s, 3);
  CHECK(partial.eigenvalues.size() == 3);
  CHECK(partial.eigenvectors.cols() == 3);
  CHECK(partial.eigenvalues[2] == doctest::Approx(full.eigenvalues[2]));
}

TEST_CASE("identity and diagonal matrices") {
  const auto id = eigendecompose(Eigen::MatrixXd::Identity(5, 5), 5);
  for (double v : id.eigenvalues) CHECK(v == doctest::Approx(1.0));
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(3, 3);
  d.diagonal() << 3.0, -1.0, 2.0;
  const auto r = eigendecompose(d, 3);
  CHECK(r.eigenvalues == std::vector<double>{-1.0, 2.0, 3.0});
  CHECK(std::abs(r.eigenvectors(1, 0)) == doctest::Approx(1.0));
}

TEST_CASE("eigendecompose rejects bad input") {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(3, 3);
  a(0, 1) = 1.0;
  CHECK_THROWS_AS(eigendecompose(a, 2), Error);
  CHECK_THROWS_AS(eigendecompose(Eigen::MatrixXd::Identity(3, 3), 4), Error);
}

TEST_CASE("eigengap estimate on planted blocks") {
  std::mt19937_64 rng(11);
  const Eigen::MatrixXd w = oracle::planted_blocks(4, 10, 0.9, 0.05, 0.05, 0.02, rng);
  const auto spectrum = eigendecompose(graph_laplacian(w), 40);
  const auto est = estimate_num_clusters(spectrum.eigenvalues, 10);
  CHECK(est.n_c == 4);
  CHECK(est.eigengap_count == 4);
  CHECK(est.gaps.size() == 10);
  CHECK_FALSE(est.ambiguous);
  CHECK_FALSE(est.undifferentiated);
}

TEST_CASE("eigengap picks the largest gap, smallest index on ties") {
  const std::vector<double> ev{0.0, 0.0, 0.0, 0.9, 1.0, 1.1};
  auto est = estimate_num_clusters(ev, 5);
  CHECK(est.n_c == 3);
  CHECK(est.gaps.front() == 0.0);

  const std::vector<double> even{0.0, 0.25, 0.5, 0.75, 1.0};
  est = estimate_num_clusters(even, 4);
  CHECK(est.n_c == 1);
  CHECK(est.ambiguous);

  const std::vector<double> flat{1.0, 1.0, 1.0, 1.0};
  est = estimate_num_clusters(flat, 3);
  CHECK(est.undifferentiated);
  CHECK(est.n_c == 1);
}

TEST_CASE("near-zero reading") {
  const std::vector<double> ev{0.0, 1e-9, 2e-8, 0.4, 0.5};
  const auto est = estimate_num_clusters(ev, 4, std::nullopt, CountMode::near_zero);
  CHECK(est.near_zero_count == 3);
  CHECK(est.n_c == 3);
  const auto loose = estimate_num_clusters(ev, 4, 0.45, CountMode::near_zero);
  CHECK(loose.n_c == 4);
}

TEST_CASE("estimate input checks") {
  const std::vector<double> ev{0.0, 0.5, 0.2};
  CHECK_THROWS_AS(estimate_num_clusters(ev, 2), Error);
  CHECK_THROWS_AS(estimate_num_clusters(std::vector<double>{0.0, 1.0}, 2), Error);
  CHECK_THROWS_AS(estimate_num_clusters(std::vector<double>{0.0, 1.0}, 0), Error);
}

TEST_CASE("default max_k") {
  CHECK(default_max_k(2) == 1);
  CHECK(default_max_k(45) == 11);
  CHECK(default_max_k(1000) == 50);
}

TEST_CASE("two blocks are recovered") {
  std::mt19937_64 rng(5);
  const Eigen::MatrixXd w = oracle::planted_blocks(2, 8, 0.8, 0.1, 0.05, 0.03, rng);
  const auto r = spectral_cluster({w, 1.0}, 2, 7);
  CHECK(r.n_c == 2);
  for (int i = 0; i < 16; ++i) CHECK(r.assignments[static_cast<std::size_t>(i)] == (i < 8 ? 0 : 1));
  CHECK(r.block_boundaries == std::vector<std::size_t>{0, 8, 16});
  CHECK(purity(r.assignments, std::vector<int>{1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0}) == 1.0);
}

TEST_CASE("one cluster") {
  std::mt19937_64 rng(6);
  const Eigen::MatrixXd w = oracle::planted_blocks(1, 6, 0.5, 0.2, 0, 0, rng);
  const auto r = spectral_cluster({w, 1.0}, 1, 7);
  CHECK(std::all_of(r.assignments.begin(), r.assignments.end(), [](int a) { return a == 0; }));
  CHECK(r.cluster_sizes() == std::vector<std::size_t>{6});
  CHECK(r.block_boundaries == std::vector<std::size_t>{0, 6});
}

TEST_CASE("clustering is deterministic and permutation-equivariant") {
  std::mt19937_64 rng(7);
  const Eigen::MatrixXd w = oracle::planted_blocks(3, 7, 0.85, 0.1, 0.1, 0.05, rng);
  const auto a = spectral_cluster({w, 1.0}, 3, 42);
  const auto b = spectral_cluster({w, 1.0}, 3, 42);
  CHECK(a.assignments == b.assignments);
  CHECK(a.inertia == b.inertia);

  std::vector<Eigen::Index> p(21);
  std::iota(p.begin(), p.end(), 0);
  std::shuffle(p.begin(), p.end(), rng);
  Eigen::MatrixXd wp(21, 21);
  for (Eigen::Index i = 0; i < 21; ++i)
    for (Eigen::Index j = 0; j < 21; ++j) wp(i, j) = w(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(j)]);
  const auto c = spectral_cluster({wp, 1.0}, 3, 42);
  // Same partition, regardless of label names.
  for (std::size_t i = 0; i < 21; ++i) {
    for (std::size_t j = 0; j < 21; ++j) {
      const bool together = c.assignments[i] == c.assignments[j];
      const bool before = a.assignments[static_cast<std::size_t>(p[i])] == a.assignments[static_cast<std::size_t>(p[j])];
      CHECK(together == before);
    }
  }
}

TEST_CASE("k-means on separated points") {
  Eigen::MatrixXd pts(6, 2);
  pts << 0, 0, 0.1, 0, 0, 0.1, 5, 5, 5.1, 5, 5, 5.1;
  const auto r = kmeans(pts, 2, 1);
  CHECK(r.labels[0] == r.labels[1]);
  CHECK(r.labels[1] == r.labels[2]);
  CHECK(r.labels[3] == r.labels[4]);
  CHECK(r.labels[0] != r.labels[3]);
  CHECK(r.inertia == doctest::Approx(4 * 0.01 * 2.0 / 3.0).epsilon(1e-9));
}

TEST_CASE("canonical labels") {
  const std::vector<int> raw{2, 2, 0, 1, 1, 1, 0};
  CHECK(canonical_labels(raw) == std::vector<int>{1, 1, 2, 0, 0, 0, 2});
}

TEST_CASE("reordering groups clusters contiguously") {
  Eigen::MatrixXd w(5, 5);
  for (Eigen::Index i = 0; i < 5; ++i)
    for (Eigen::Index j = 0; j < 5; ++j) w(i, j) = static_cast<double>(10 * i + j);
  const std::vector<int> assign{1, 0, 1, 0, 0};
  const auto r = reorder_similarity(w, assign);
  CHECK(r.permutation == std::vector<std::size_t>{1, 3, 4, 0, 2});
  CHECK(r.block_boundaries == std::vector<std::size_t>{0, 3, 5});
  CHECK(r.values(0, 1) == w(1, 3));
  CHECK(r.values(3, 4) == w(0, 2));
  CHECK(r.values(4, 0) == w(2, 1));

  // Equal sizes: the block holding the smaller index goes first.
  const std::vector<int> tie{1, 0, 0, 1};
  CHECK(reorder_similarity(Eigen::MatrixXd::Zero(4, 4), tie).permutation == std::vector<std::size_t>{0, 3, 1, 2});
  CHECK_THROWS_AS(reorder_similarity(w, std::vector<int>{0, 1}), Error);
}

TEST_CASE("purity") {
  CHECK(purity(std::vector<int>{0, 0, 1, 1}, std::vector<int>{5, 5, 6, 6}) == 1.0);
  CHECK(purity(std::vector<int>{0, 0, 0, 0}, std::vector<int>{1, 1, 1, 2}) == 0.75);
}

}  // TEST_SUITE
