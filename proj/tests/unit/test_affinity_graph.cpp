#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "wavecomm/affinity_graph.hpp"
#include "wavecomm/error.hpp"

using namespace wavecomm;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected wavecomm::Error");
  return ErrorKind::io;
}

Eigen::MatrixXd permute(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& p) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out(i, j) = m(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(j)]);
  return out;
}

}  // namespace

TEST_SUITE("affinity_graph") {

TEST_CASE("distances match scalar oracles") {
  std::mt19937_64 rng(1);
  const Eigen::MatrixXd x = oracle::random_matrix(9, 13, rng, -3, 3);
  const auto corr = pairwise_distances(x, Metric::correlation);
  const auto cos = pairwise_distances(x, Metric::cosine);
  const auto euc = pairwise_distances(x, Metric::euclidean);
  for (Eigen::Index i = 0; i < 9; ++i) {
    CHECK(corr.values(i, i) == 0.0);
    CHECK(cos.values(i, i) == 0.0);
    for (Eigen::Index j = 0; j < 9; ++j) {
      if (i == j) continue;
      CHECK(std::abs(corr.values(i, j) - oracle::correlation_distance(x.row(i), x.row(j))) < 1e-12);
      CHECK(std::abs(cos.values(i, j) - oracle::cosine_distance(x.row(i), x.row(j))) < 1e-12);
      CHECK(std::abs(euc.values(i, j) - oracle::euclidean_distance(x.row(i), x.row(j))) < 1e-12);
      CHECK(corr.values(i, j) == corr.values(j, i));
    }
  }
}

TEST_CASE("correlation distance extremes and affine invariance") {
  Eigen::MatrixXd x(3, 4);
  x << 1, 2, 3, 4,
      -1, -2, -3, -4,
      10, 20, 30, 40;
  x.row(1).array() += 7.0;
  const auto d = pairwise_distances(x, Metric::correlation);
  CHECK(d.values(0, 1) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(std::abs(d.values(0, 2)) < 1e-12);

  std::mt19937_64 rng(2);
  Eigen::MatrixXd y = oracle::random_matrix(5, 8, rng);
  const auto before = pairwise_distances(y, Metric::correlation);
  y.row(3) = 4.0 * y.row(3).array() - 2.0;
  const auto after = pairwise_distances(y, Metric::correlation);
  CHECK((before.values - after.values).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("degenerate rows are rejected") {
  Eigen::MatrixXd x(3, 4);
  x << 1, 2, 3, 4,
       5, 5, 5, 5,
       0, 1, 0, 1;
  const std::vector<std::string> ids{"a", "flat", "c"};
  try {
    pairwise_distances(x, Metric::correlation, ids);
    FAIL("expected degenerate_feature");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::degenerate_feature);
    CHECK(std::string(e.what()).find("flat") != std::string::npos);
  }
  x.row(1).setZero();
  CHECK(kind_of([&] { pairwise_distances(x, Metric::cosine, ids); }) == ErrorKind::degenerate_feature);
  CHECK_NOTHROW(pairwise_distances(x, Metric::euclidean, ids));
}

TEST_CASE("bandwidth of a hand-built distance matrix") {
  // Off-diagonal distances 1..6: mean 3.5, sample variance 3.5.
  Eigen::MatrixXd d(4, 4);
  d << 0, 1, 2, 3,
       1, 0, 4, 5,
       2, 4, 0, 6,
       3, 5, 6, 0;
  CHECK(off_diagonal_std(d) == doctest::Approx(std::sqrt(3.5)).epsilon(1e-14));
  const auto w = affinity_from_distances({d, Metric::euclidean});
  CHECK(w.sigma == doctest::Approx(std::sqrt(3.5)).epsilon(1e-14));
  CHECK(w.values(0, 1) == doctest::Approx(std::exp(-1.0 / 7.0)).epsilon(1e-14));
  CHECK(w.values(2, 3) == doctest::Approx(std::exp(-36.0 / 7.0)).epsilon(1e-14));
  CHECK(w.values.diagonal().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("affinity matches the oracle and is permutation-equivariant") {
  std::mt19937_64 rng(6);
  const Eigen::MatrixXd x = oracle::random_matrix(15, 20, rng);
  const auto d = pairwise_distances(x, Metric::correlation);
  const auto w = affinity_from_distances(d);
  CHECK((w.values - oracle::gaussian_affinity(d.values)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(w.values.minCoeff() >= 0.0);
  CHECK(w.values.maxCoeff() <= 1.0);

  std::vector<Eigen::Index> p(15);
  std::iota(p.begin(), p.end(), 0);
  std::shuffle(p.begin(), p.end(), rng);
  Eigen::MatrixXd xp(15, 20);
  for (Eigen::Index i = 0; i < 15; ++i) xp.row(i) = x.row(p[static_cast<std::size_t>(i)]);
  const auto wp = affinity_from_distances(pairwise_distances(xp, Metric::correlation));
  CHECK((wp.values - permute(w.values, p)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("literal kernel form") {
  Eigen::MatrixXd d(3, 3);
  d << 0, 1, 2,
       1, 0, 3,
       2, 3, 0;
  const auto w = affinity_from_distances({d, Metric::euclidean}, KernelForm::literal);
  const double sigma = off_diagonal_std(d);
  CHECK(w.values(0, 2) == doctest::Approx(std::exp(4.0) / sigma).epsilon(1e-14));
  CHECK(w.values(1, 1) == 0.0);
}

TEST_CASE("identical rows make the bandwidth degenerate") {
  const Eigen::MatrixXd d = Eigen::MatrixXd::Zero(3, 3);
  CHECK(kind_of([&] { affinity_from_distances({d, Metric::euclidean}); }) == ErrorKind::degenerate_geometry);
}

TEST_CASE("kNN sparsification keeps the union of neighbourhoods") {
  Eigen::MatrixXd v(4, 4);
  v << 0, 0.9, 0.1, 0.2,
       0.9, 0, 0.3, 0.05,
       0.1, 0.3, 0, 0.8,
       0.2, 0.05, 0.8, 0;
  const auto s = sparsify_knn({v, 1.0}, 1);
  CHECK(s.values(0, 1) == 0.9);
  CHECK(s.values(2, 3) == 0.8);
  CHECK(s.values(0, 2) == 0.0);
  CHECK(s.values(1, 3) == 0.0);
  CHECK((s.values - s.values.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("Laplacian of a triangle") {
  Eigen::MatrixXd k3 = Eigen::MatrixXd::Ones(3, 3);
  k3.diagonal().setZero();
  const auto l = graph_laplacian(k3, Normalization::unnormalized);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(l.values);
  CHECK(std::abs(es.eigenvalues()(0)) < 1e-12);
  CHECK(es.eigenvalues()(1) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(es.eigenvalues()(2) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(l.values.rowwise().sum().cwiseAbs().maxCoeff() < 1e-14);

  const auto sym = graph_laplacian(k3, Normalization::symmetric);
  CHECK(sym.values(0, 0) == doctest::Approx(1.0));
  CHECK(sym.values(0, 1) == doctest::Approx(-0.5));
}

TEST_CASE("zero eigenvalue multiplicity counts components") {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(4, 4);
  w(0, 1) = w(1, 0) = 0.7;
  w(2, 3) = w(3, 2) = 0.4;
  for (auto norm : {Normalization::unnormalized, Normalization::symmetric}) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(graph_laplacian(w, norm).values);
    CHECK(std::abs(es.eigenvalues()(0)) < 1e-12);
    CHECK(std::abs(es.eigenvalues()(1)) < 1e-12);
    CHECK(es.eigenvalues()(2) > 0.1);
  }
}

TEST_CASE("isolated nodes get identity rows") {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(3, 3);
  w(0, 1) = w(1, 0) = 1.0;
  const auto l = graph_laplacian(w, Normalization::symmetric);
  CHECK(l.values(2, 2) == 1.0);
  CHECK(l.values.row(2).sum() == 1.0);
}

TEST_CASE("invalid affinity matrices") {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(3, 3);
  w(0, 1) = 0.5;
  CHECK(kind_of([&] { graph_laplacian(w); }) == ErrorKind::invalid_affinity);
  w(1, 0) = 0.5;
  w(2, 2) = 0.1;
  CHECK(kind_of([&] { graph_laplacian(w); }) == ErrorKind::invalid_affinity);
  CHECK(kind_of([&] { graph_laplacian(Eigen::MatrixXd::Zero(2, 3)); }) == ErrorKind::invalid_affinity);
}

TEST_CASE("enum names round trip") {
  for (auto m : {Metric::correlation, Metric::cosine, Metric::euclidean}) CHECK(parse_metric(to_string(m)) == m);
  for (auto n : {Normalization::unnormalized, Normalization::symmetric})
    CHECK(parse_normalization(to_string(n)) == n);
  for (auto k : {KernelForm::gaussian, KernelForm::literal}) CHECK(parse_kernel(to_string(k)) == k);
  CHECK(kind_of([] { parse_metric("manhattan"); }) == ErrorKind::config);
}

}  // TEST_SUITE
