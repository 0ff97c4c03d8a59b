#include <doctest.h>

#include <fstream>

#include "temp_dir.hpp"
#include "wavecomm/artifacts.hpp"
#include "wavecomm/commands.hpp"
#include "wavecomm/error.hpp"
#include "wavecomm/synthetic.hpp"

using namespace wavecomm;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Three templates, fifteen variants each, written once per test process.
const fs::path& planted_dataset() {
  static testing::TempDir dir("wavecomm-planted");
  static const bool written = [] {
    synthetic::write_dataset(dir.path(), synthetic::make_template_dataset({}));
    return true;
  }();
  (void)written;
  return dir.path();
}

RunConfig config_for(const fs::path& out) {
  RunConfig c;
  c.dataset = planted_dataset() / "manifest.csv";
  c.out = out;
  c.size = {64, 64};
  return c;
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected wavecomm::Error");
  return ErrorKind::io;
}

}  // namespace

TEST_SUITE("commands") {

TEST_CASE("detect then report on the planted dataset") {
  testing::TempDir run;
  const auto summary = cmd_detect(config_for(run.path()));
  CHECK(summary.n_images == 45);
  CHECK(summary.n_c == 3);
  CHECK(summary.cluster_sizes == std::vector<std::size_t>{15, 15, 15});
  CHECK(summary.n_features == 64 * 64);
  CHECK(summary.knee_ratio > 3.0);
  const RunLayout layout{run.path()};
  for (const auto& p : {layout.config(), layout.manifest(), layout.dataset(), layout.decomposition(),
                        layout.coefficients(), layout.feature_scores(), layout.distance(), layout.affinity(),
                        layout.graph(), layout.communities(), layout.summary()})
    CHECK_MESSAGE(fs::exists(p), p.string());

  const auto report = cmd_report(run.path());
  CHECK(report.blocks == 3);
  CHECK(fs::exists(layout.report()));
  for (const char* name : {"similarity_raw.png", "similarity_raw.csv", "similarity_reordered.png",
                           "similarity_reordered.csv", "eigenvalues.csv", "eigenvalues.png", "blocks.json"})
    CHECK_MESSAGE(fs::exists(run.path() / "report" / name), name);
  const json blocks = json::parse(slurp(run.path() / "report" / "blocks.json"));
  CHECK(blocks.at("block_boundaries") == json({0, 15, 30, 45}));
  CHECK(slurp(run.path() / "report" / "eigenvalues.csv").rfind("index,eigenvalue\n1,", 0) == 0);
}

TEST_CASE("repeated runs write byte-identical communities") {
  testing::TempDir a, b;
  cmd_detect(config_for(a.path()));
  cmd_detect(config_for(b.path()));
  CHECK(slurp(a / "communities.json") == slurp(b / "communities.json"));
  CHECK(slurp(a / "affinity.wcm") == slurp(b / "affinity.wcm"));
}

TEST_CASE("stage-by-stage equals detect") {
  testing::TempDir whole, staged;
  const RunConfig cw = config_for(whole.path());
  cmd_detect(cw);
  RunConfig cs = config_for(staged.path());
  cmd_decompose(cs);
  cmd_graph(staged.path(), cs.pipeline);
  cmd_cluster(staged.path(), cs.pipeline);
  for (const char* name : {"coeffs.wcm", "affinity.wcm", "distance.wcm", "feature_scores.csv", "communities.json"})
    CHECK_MESSAGE(slurp(whole / name) == slurp(staged / name), name);
}

TEST_CASE("forcing one community") {
  testing::TempDir run;
  RunConfig c = config_for(run.path());
  c.pipeline.n_c = 1;
  CHECK(cmd_detect(c).n_c == 1);
  CHECK(cmd_report(run.path()).blocks == 1);
  CHECK(load_run_config(run.path()).pipeline.n_c == std::optional<std::size_t>(1));
}

TEST_CASE("re-running a stage drops later artifacts") {
  testing::TempDir run;
  RunConfig c = config_for(run.path());
  cmd_detect(c);
  cmd_report(run.path());
  c.pipeline.threshold = Threshold::keep_top(0.5);
  cmd_graph(run.path(), c.pipeline);
  CHECK_FALSE(fs::exists(run / "communities.json"));
  CHECK_FALSE(fs::exists(run / "report.html"));
  CHECK_FALSE(fs::exists(run / "report"));
  CHECK(load_run_config(run.path()).pipeline.threshold.value == 0.5);
  CHECK(kind_of([&] { cmd_report(run.path()); }) == ErrorKind::missing_artifact);
}

TEST_CASE("missing prerequisites") {
  testing::TempDir run;
  CHECK(kind_of([&] { cmd_report(run.path()); }) == ErrorKind::missing_artifact);
  CHECK(kind_of([&] { cmd_graph(run.path(), PipelineConfig{}); }) == ErrorKind::missing_artifact);
  CHECK(kind_of([&] { cmd_spectrum({.run_dir = run.path()}); }) == ErrorKind::missing_artifact);
  RunConfig c = config_for(run / "out");
  c.dataset = run / "nothing-here";
  CHECK(kind_of([&] { cmd_detect(c); }) == ErrorKind::ingestion);
  c = config_for(run / "out");
  c.pipeline.levels = 9;
  CHECK(is_input_error(kind_of([&] { cmd_detect(c); })));
}

TEST_CASE("spectrum from a labels file") {
  testing::TempDir run;
  cmd_detect(config_for(run.path()));
  {
    std::ofstream labels(run / "labels.csv");
    labels << "id,label\n";
    for (int t = 0; t < 2; ++t)
      for (int v = 0; v < 15; ++v) labels << "t" << t << "_v" << (v < 10 ? "0" : "") << v << "," << (t ? "b" : "a") << "\n";
    labels << "ghost,a\n";
  }
  const auto out = cmd_spectrum({.run_dir = run.path(), .labels = run / "labels.csv", .positive_label = "b"});
  CHECK(out.unknown_ids == std::vector<std::string>{"ghost"});
  CHECK(out.unlabeled.size() == 15);
  CHECK(out.report.placements.size() == 30);
  CHECK(out.report.positive_label == "b");
  for (const auto& p : out.report.placements) CHECK((p.label == "b") == (p.position > 0.0));
  CHECK(fs::exists(run / "spectrum.json"));
  CHECK(fs::exists(run / "spectrum.csv"));
  const json j = json::parse(slurp(run / "spectrum.json"));
  CHECK(j.at("unknown_ids") == json({"ghost"}));
  CHECK(j.at("excluded").size() == 15);

  cmd_report(run.path());
  CHECK(slurp(run / "report.html").find("Spectrum") != std::string::npos);
}

TEST_CASE("spectrum needs exactly two classes") {
  testing::TempDir run;
  cmd_detect(config_for(run.path()));
  CHECK(kind_of([&] { cmd_spectrum({.run_dir = run.path()}); }) == ErrorKind::insufficient_class);
}

TEST_CASE("label files") {
  testing::TempDir dir;
  std::ofstream(dir / "ok.csv") << "label,id,extra\nx,a,1\n,b,2\ny,c,3\n";
  const auto rows = read_label_file(dir / "ok.csv");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0] == std::pair<std::string, std::string>{"a", "x"});
  std::ofstream(dir / "dup.csv") << "id,label\na,x\na,y\n";
  CHECK(kind_of([&] { read_label_file(dir / "dup.csv"); }) == ErrorKind::input);
  std::ofstream(dir / "nohead.csv") << "name,label\na,x\n";
  CHECK(kind_of([&] { read_label_file(dir / "nohead.csv"); }) == ErrorKind::input);
  CHECK(kind_of([&] { read_label_file(dir / "absent.csv"); }) == ErrorKind::input);
}

TEST_CASE("run config JSON round trip") {
  RunConfig c;
  c.dataset = "/data/x";
  c.out = "/runs/y";
  c.size = {128, 96};
  c.color = ColorMode::channels;
  c.pipeline.basis = BasisName::db2;
  c.pipeline.levels = 4;
  c.pipeline.threshold = Threshold::absolute(0.7);
  c.pipeline.metric = Metric::cosine;
  c.pipeline.knn = 8;
  c.pipeline.max_k = 12;
  c.pipeline.tau_c = 1e-4;
  c.pipeline.count_mode = CountMode::near_zero;
  c.pipeline.seed = 99;
  const RunConfig back = run_config_from_json(to_json(c));
  CHECK(back.dataset == c.dataset);
  CHECK(back.size == c.size);
  CHECK(back.color == c.color);
  CHECK(back.pipeline.basis == BasisName::db2);
  CHECK(back.pipeline.levels == 4);
  CHECK(back.pipeline.threshold.mode == Threshold::Mode::absolute);
  CHECK(back.pipeline.threshold.value == 0.7);
  CHECK(back.pipeline.metric == Metric::cosine);
  CHECK(back.pipeline.knn == std::optional<std::size_t>(8));
  CHECK(back.pipeline.max_k == std::optional<std::size_t>(12));
  CHECK(back.pipeline.tau_c == std::optional<double>(1e-4));
  CHECK(back.pipeline.count_mode == CountMode::near_zero);
  CHECK(back.pipeline.seed == 99);
  CHECK_FALSE(back.pipeline.n_c.has_value());
}

}  // TEST_SUITE
