#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "oracles.hpp"
#include "wavecomm/disease_spectrum.hpp"
#include "wavecomm/error.hpp"
#include "wavecomm/pipeline.hpp"
#include "wavecomm/synthetic.hpp"

using namespace wavecomm;

namespace {

std::vector<std::string> ids_for(std::size_t n) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("i" + std::to_string(i));
  return ids;
}

}  // namespace

TEST_SUITE("disease_spectrum") {

TEST_CASE("hand-computed class means") {
  Eigen::MatrixXd w(4, 4);
  w << 0, 0.8, 0.2, 0.4,
       0.8, 0, 0.6, 0.1,
       0.2, 0.6, 0, 0.9,
       0.4, 0.1, 0.9, 0;
  const std::vector<std::string> labels{"a", "a", "b", "b"};
  const auto s = class_similarity_stats(w, labels);
  CHECK(s.in_class[0] == doctest::Approx(0.8));
  CHECK(s.out_class[0] == doctest::Approx(0.3));
  CHECK(s.out_class[1] == doctest::Approx(0.35));
  CHECK(s.out_class[2] == doctest::Approx(0.4));
  CHECK(s.in_class[3] == doctest::Approx(0.9));
  CHECK(s.out_class[3] == doctest::Approx(0.25));
}

TEST_CASE("uniform and block-diagonal affinities") {
  Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(6, 6);
  ones.diagonal().setZero();
  const std::vector<std::string> labels{"a", "a", "a", "b", "b", "b"};
  auto s = class_similarity_stats(ones, labels);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(s.in_class[i] == 1.0);
    CHECK(s.out_class[i] == 1.0);
    CHECK(spectrum_position(s.in_class[i], s.out_class[i], 1) == 0.0);
  }

  Eigen::MatrixXd blocks = Eigen::MatrixXd::Zero(6, 6);
  blocks.topLeftCorner(3, 3).setConstant(0.7);
  blocks.bottomRightCorner(3, 3).setConstant(0.7);
  blocks.diagonal().setZero();
  s = class_similarity_stats(blocks, labels);
  for (double out : s.out_class) CHECK(out == 0.0);
}

TEST_CASE("position sign and extremes") {
  CHECK(spectrum_position(1.0, 0.0, 1) == 1.0);
  CHECK(spectrum_position(1.0, 0.0, -1) == -1.0);
  CHECK(spectrum_position(0.4, 0.4, -1) == 0.0);
}

TEST_CASE("class size requirements") {
  Eigen::MatrixXd w = Eigen::MatrixXd::Ones(3, 3);
  w.diagonal().setZero();
  const std::vector<std::string> lonely{"a", "a", "b"};
  try {
    class_similarity_stats(w, lonely);
    FAIL("expected insufficient_class");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::insufficient_class);
  }
  Eigen::MatrixXd w6 = Eigen::MatrixXd::Ones(6, 6);
  w6.diagonal().setZero();
  const std::vector<std::string> three{"a", "a", "b", "b", "c", "c"};
  CHECK_NOTHROW(class_similarity_stats(w6, three));
  CHECK_THROWS_AS(infer_spectrum(w6, ids_for(6), three), Error);
}

TEST_CASE("quantile uses linear interpolation") {
  CHECK(quantile({1, 2, 3, 4}, 0.5) == 2.5);
  CHECK(quantile({4, 1, 3, 2}, 0.0) == 1.0);
  CHECK(quantile({1, 2, 3, 4, 5}, 0.1) == doctest::Approx(1.4));
}

TEST_CASE("isolated images") {
  const std::size_t n = 40;
  std::vector<std::string> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = i < 20 ? "a" : "b";
  Eigen::MatrixXd w = Eigen::MatrixXd::Constant(n, n, 0.5);
  w.diagonal().setZero();
  CHECK(find_isolated(w, labels, 0.05).indices.empty());

  for (std::size_t j = 0; j < 20; ++j) {
    if (j == 7) continue;
    w(7, static_cast<Eigen::Index>(j)) = w(static_cast<Eigen::Index>(j), 7) = 0.0;
  }
  CHECK(find_isolated(w, labels, 0.05).indices == std::vector<std::size_t>{7});

  const std::vector<std::string> small{"a", "a", "a", "b", "b", "b"};
  Eigen::MatrixXd w6 = Eigen::MatrixXd::Constant(6, 6, 0.5);
  w6.diagonal().setZero();
  const auto skipped = find_isolated(w6, small, 0.05);
  CHECK(skipped.indices.empty());
  CHECK(skipped.skipped_classes.size() == 2);
  CHECK_THROWS_AS(find_isolated(w6, small, 1.0), Error);
}

TEST_CASE("a template-swapped member is the isolated one") {
  synthetic::NormalStream rng(99);
  const ImageSize size{32, 32};
  const Eigen::MatrixXd ta = synthetic::make_template(size, rng);
  const Eigen::MatrixXd tb = synthetic::make_template(size, rng);
  std::vector<Eigen::MatrixXd> images;
  std::vector<std::string> labels;
  for (int i = 0; i < 24; ++i) {
    const bool first = i < 12;
    const bool swapped = i == 5;
    images.push_back(synthetic::add_noise((first != swapped) ? ta : tb, 12.75, rng));
    labels.push_back(first ? "a" : "b");
  }
  PipelineConfig config;
  config.levels = 2;
  config.n_c = 2;
  const auto ids = ids_for(images.size());
  const auto result = detect_communities(images, ids, config);
  // The other class always loses its minimum to a quantile cut, so look at the planted class only.
  std::vector<std::size_t> in_a;
  for (std::size_t i : find_isolated(result.graph.affinity.values, labels, 0.05).indices)
    if (labels[i] == "a") in_a.push_back(i);
  CHECK(in_a == std::vector<std::size_t>{5});
}

TEST_CASE("borderline band") {
  std::vector<SpectrumPlacement> p(5);
  const double pos[] = {0.5, -0.05, 0.01, -0.9, 0.3};
  for (std::size_t i = 0; i < 5; ++i) {
    p[i].image_id = "i" + std::to_string(i);
    p[i].label = i % 2 ? "neg" : "pos";
    p[i].position = pos[i];
  }
  auto b = find_borderline(p, 0.2);
  CHECK(b.per_class["pos"] == std::vector<std::size_t>{2});
  CHECK(b.per_class["neg"] == std::vector<std::size_t>{1});

  b = find_borderline(p, std::numeric_limits<double>::infinity());
  CHECK(b.per_class["pos"] == std::vector<std::size_t>{2, 4, 0});
  CHECK(b.per_class["neg"] == std::vector<std::size_t>{1, 3});

  b = find_borderline(p, 0.005);
  CHECK(b.per_class.empty());
  CHECK_THROWS_AS(find_borderline(p, 0.0), Error);

  b = find_borderline(p);
  CHECK(b.band == doctest::Approx(quantile({0.5, 0.05, 0.01, 0.9, 0.3}, 0.1)));
}

TEST_CASE("swapping the class labels negates positions and keeps flags") {
  std::mt19937_64 rng(4);
  const Eigen::MatrixXd a = oracle::random_matrix(16, 16, rng, 0, 1);
  Eigen::MatrixXd w = 0.5 * (a + a.transpose());
  w.diagonal().setZero();
  std::vector<std::string> labels(16), swapped(16);
  for (std::size_t i = 0; i < 16; ++i) {
    labels[i] = i < 8 ? "x" : "y";
    swapped[i] = i < 8 ? "y" : "x";
  }
  SpectrumOptions options;
  options.positive_label = "y";
  const auto r1 = infer_spectrum(w, ids_for(16), labels, options);
  const auto r2 = infer_spectrum(w, ids_for(16), swapped, options);
  for (std::size_t i = 0; i < 16; ++i) {
    CHECK(r2.placements[i].position == -r1.placements[i].position);
    CHECK(r2.placements[i].isolated == r1.placements[i].isolated);
    CHECK(r2.placements[i].borderline == r1.placements[i].borderline);
    CHECK(r2.placements[i].extreme == r1.placements[i].extreme);
  }
  for (const auto& p : r1.placements) CHECK_FALSE((p.borderline && p.extreme));
}

TEST_CASE("positions follow a relabeling of the images") {
  std::mt19937_64 rng(5);
  const Eigen::MatrixXd a = oracle::random_matrix(10, 10, rng, 0, 1);
  Eigen::MatrixXd w = 0.5 * (a + a.transpose());
  w.diagonal().setZero();
  std::vector<std::string> labels(10);
  for (std::size_t i = 0; i < 10; ++i) labels[i] = i % 3 ? "p" : "q";
  const auto ids = ids_for(10);
  const auto base = infer_spectrum(w, ids, labels);

  std::vector<std::size_t> perm(10);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Eigen::MatrixXd wp(10, 10);
  std::vector<std::string> lp(10), ip(10);
  for (std::size_t i = 0; i < 10; ++i) {
    lp[i] = labels[perm[i]];
    ip[i] = ids[perm[i]];
    for (std::size_t j = 0; j < 10; ++j)
      wp(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          w(static_cast<Eigen::Index>(perm[i]), static_cast<Eigen::Index>(perm[j]));
  }
  const auto moved = infer_spectrum(wp, ip, lp);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(moved.placements[i].image_id == base.placements[perm[i]].image_id);
    CHECK(std::abs(moved.placements[i].position - base.placements[perm[i]].position) < 1e-12);
  }
}

TEST_CASE("duplicated cross-class pair sits closest to the borderline") {
  const auto toy = synthetic::make_spectrum_toy({});
  std::vector<Eigen::MatrixXd> images;
  std::vector<std::string> ids, labels;
  for (const auto& img : toy.images) {
    images.push_back(img.pixels);
    ids.push_back(img.id);
    labels.push_back(img.label);
  }
  PipelineConfig config;
  config.n_c = 2;
  const auto result = detect_communities(images, ids, config);
  const auto report = infer_spectrum(result.graph.affinity.values, ids, labels);
  CHECK(report.positive_label == "severe");

  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(report.placements[a].position) < std::abs(report.placements[b].position);
  });
  const std::set<std::size_t> nearest{order[0], order[1]};
  CHECK(nearest == std::set<std::size_t>{toy.duplicate_a, toy.duplicate_b});
}

}  // TEST_SUITE
