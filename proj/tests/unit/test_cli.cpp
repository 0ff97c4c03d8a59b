#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <string>

#include <sys/wait.h>

#include "temp_dir.hpp"
#include "wavecomm/synthetic.hpp"

namespace fs = std::filesystem;

#ifdef WAVECOMM_CLI_PATH

namespace {

int run_cli(const std::string& args) {
  const std::string command = std::string("\"") + WAVECOMM_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(command.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("exit codes") {
  testing::TempDir dir;
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("") == 2);
  CHECK(run_cli("frobnicate") == 2);
  CHECK(run_cli("detect " + (dir / "missing").string() + " --out " + (dir / "run").string()) == 2);
  CHECK(run_cli("report --run " + (dir / "run").string()) == 2);

  wavecomm::synthetic::TemplateOptions opt;
  opt.templates = 2;
  opt.variants = 5;
  opt.size = {32, 32};
  wavecomm::synthetic::write_dataset(dir / "data", wavecomm::synthetic::make_template_dataset(opt));
  const std::string data = (dir / "data").string();
  CHECK(run_cli("detect " + data + " --out " + (dir / "bad").string() + " --size 32x32 --levels 9") == 2);
  CHECK(run_cli("detect " + data + " --out " + (dir / "bad").string() + " --size banana") == 2);
  CHECK(run_cli("detect " + data + " --out " + (dir / "bad").string() + " --basis sym8") == 2);
  CHECK(run_cli("detect " + data + " --out " + (dir / "bad").string() + " --keep-top 2") == 2);

  const std::string flags = " --basis db3 --levels 2 --metric correlation --keep-top 0.2 --max-k 4 --seed 7 --size 32x32";
  CHECK(run_cli("detect " + data + flags + " --out " + (dir / "run").string()) == 0);
  CHECK(fs::exists(dir / "run" / "communities.json"));
  CHECK(run_cli("report --run " + (dir / "run").string()) == 0);
  CHECK(fs::exists(dir / "run" / "report.html"));
  // Manifest labels are template0/template1: two classes.
  CHECK(run_cli("spectrum --run " + (dir / "run").string()) == 0);
  CHECK(fs::exists(dir / "run" / "spectrum.json"));

  CHECK(run_cli("decompose " + data + " --levels 2 --size 32x32 --out " + (dir / "staged").string()) == 0);
  CHECK(run_cli("graph --run " + (dir / "staged").string() + " --keep-top 0.2") == 0);
  CHECK(run_cli("cluster --run " + (dir / "staged").string() + " --max-k 4 --seed 7") == 0);
  CHECK(slurp(dir / "staged" / "communities.json") == slurp(dir / "run" / "communities.json"));
}

TEST_CASE("thread cap does not change results") {
  testing::TempDir dir;
  wavecomm::synthetic::TemplateOptions opt;
  opt.templates = 2;
  opt.variants = 5;
  opt.size = {32, 32};
  wavecomm::synthetic::write_dataset(dir / "data", wavecomm::synthetic::make_template_dataset(opt));
  const std::string base = "detect " + (dir / "data" / "manifest.csv").string() + " --size 32x32 --levels 2 --out ";
  CHECK(run_cli(base + (dir / "a").string()) == 0);
  ::setenv("WAVECOMM_THREADS", "1", 1);
  CHECK(run_cli(base + (dir / "b").string()) == 0);
  ::unsetenv("WAVECOMM_THREADS");
  CHECK(slurp(dir / "a" / "communities.json") == slurp(dir / "b" / "communities.json"));
}

TEST_CASE("synth writes a dataset") {
  testing::TempDir dir;
  CHECK(run_cli("synth --out " + (dir / "s").string() + " --templates 2 --variants 3 --size 16x16") == 0);
  CHECK(fs::exists(dir / "s" / "manifest.csv"));
  CHECK(fs::exists(dir / "s" / "t0_v00.png"));
}

}  // TEST_SUITE

#endif
