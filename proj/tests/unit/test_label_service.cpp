#include <doctest.h>

#include <fstream>
#include <set>
#include <thread>

#include "temp_dir.hpp"
#include "wavecomm/artifacts.hpp"
#include "wavecomm/commands.hpp"
#include "wavecomm/label_service.hpp"
#include "wavecomm/synthetic.hpp"

// After Eigen: <resolv.h> defines a `_res` macro that breaks Eigen headers.
#include <httplib.h>

using namespace wavecomm;
namespace fs = std::filesystem;

namespace {

// A finished detect run over 2 templates x 7 variants at 32x32, made once.
const fs::path& finished_run() {
  static testing::TempDir dir("wavecomm-served");
  static const bool ready = [] {
    synthetic::TemplateOptions opt;
    opt.templates = 2;
    opt.variants = 7;
    opt.size = {32, 32};
    synthetic::write_dataset(dir / "data", synthetic::make_template_dataset(opt));
    RunConfig c;
    c.dataset = dir / "data" / "manifest.csv";
    c.out = dir / "run";
    c.size = {32, 32};
    c.pipeline.levels = 2;
    cmd_detect(c);
    return true;
  }();
  (void)ready;
  static const fs::path run = dir / "run";
  return run;
}

// Copy of the finished run so each test starts without labels.
struct RunCopy {
  testing::TempDir dir{"wavecomm-run"};
  RunCopy() {
    fs::copy(finished_run(), dir.path(), fs::copy_options::recursive | fs::copy_options::overwrite_existing);
  }
  const fs::path& path() const { return dir.path(); }
};

class Served {
 public:
  explicit Served(ServeOptions o) : server_(std::move(o)) {
    port_ = server_.bind();
    thread_ = std::thread([this] { server_.listen(); });
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    for (int attempt = 0; attempt < 100 && !client_->Get("/api/run"); ++attempt)
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  ~Served() {
    server_.stop();
    thread_.join();
  }
  httplib::Client& client() { return *client_; }

 private:
  LabelServer server_;
  int port_ = 0;
  std::thread thread_;
  std::unique_ptr<httplib::Client> client_;
};

ServeOptions options_for(const fs::path& run) {
  ServeOptions o;
  o.run_dir = run;
  o.port = 0;
  o.page_size = 4;
  return o;
}

json post(httplib::Client& c, const json& body, int expected) {
  const auto res = c.Post("/api/labels", body.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == expected);
  return json::parse(res->body);
}

std::map<std::string, std::string> parse_export(const std::string& csv_text, const fs::path& dir) {
  std::ofstream(dir / "export.csv") << csv_text;
  std::map<std::string, std::string> out;
  for (const auto& e : read_manifest(dir / "export.csv")) out[e.id] = e.label.value_or("");
  return out;
}

}  // namespace

TEST_SUITE("label_service") {

TEST_CASE("label store folds writes and replays its audit log") {
  const std::vector<std::string> ids{"a", "b", "c", "d"};
  const std::vector<int> clusters{0, 0, 1, 1};
  LabelStore store(ids, clusters);
  CHECK(store.cluster_count() == 2);
  CHECK(store.undecided() == 4);
  store.label_cluster(0, "covid", "ann", "t1");
  store.label_cluster(1, "normal", "ann", "t2");
  store.label_image("c", "covid", "bob", "t3");
  store.label_cluster(0, "pneumonia", "ann", "t4");
  store.record_conflict({0, "t5", "eve", "label_cluster", 1, std::nullopt, "x"});
  CHECK(store.version() == 4);
  CHECK(store.audit().size() == 5);
  CHECK(store.effective_label(0) == std::optional<std::string>("pneumonia"));
  CHECK(store.effective_label(2) == std::optional<std::string>("covid"));
  CHECK(store.effective_label(3) == std::optional<std::string>("normal"));
  CHECK(store.label_counts() == std::map<std::string, std::size_t>{{"covid", 1}, {"normal", 1}, {"pneumonia", 2}});
  CHECK(store.undecided() == 0);

  const LabelStore again = LabelStore::replay(ids, clusters, store.audit());
  CHECK(again.effective_labels() == store.effective_labels());
  CHECK(again.version() == store.version());
  CHECK(again.to_json() == store.to_json());

  for (const auto& e : store.audit()) CHECK(audit_entry_from_json(to_json(e)) == e);
  CHECK_THROWS(store.label_cluster(5, "x", "a", "t"));
  CHECK_THROWS(store.label_image("zzz", "x", "a", "t"));
}

TEST_CASE("no run in the directory gives 404") {
  testing::TempDir empty;
  Served s(options_for(empty.path()));
  const auto res = s.client().Get("/api/run");
  REQUIRE(res);
  CHECK(res->status == 404);
}

TEST_CASE("run summary and paged cluster members") {
  RunCopy run;
  Served s(options_for(run.path()));
  auto res = s.client().Get("/api/run");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->get_header_value("Access-Control-Allow-Origin") == "*");
  const json summary = json::parse(res->body);
  CHECK(summary.at("n_c") == 2);
  CHECK(summary.at("n_images") == 14);
  CHECK(summary.at("labels_version") == 0);
  CHECK(summary.at("has_spectrum") == false);

  std::set<std::string> seen;
  for (int c = 0; c < 2; ++c) {
    for (int page = 0;; ++page) {
      res = s.client().Get("/api/clusters/" + std::to_string(c) + "/images?page=" + std::to_string(page));
      REQUIRE(res);
      REQUIRE(res->status == 200);
      const json body = json::parse(res->body);
      CHECK(body.at("pages") == 2);
      if (body.at("images").empty()) break;
      CHECK(body.at("images").size() <= 4);
      for (const auto& img : body.at("images")) CHECK(seen.insert(img.at("id").get<std::string>()).second);
    }
  }
  CHECK(seen.size() == 14);

  res = s.client().Get("/api/clusters/7/images");
  REQUIRE(res);
  CHECK(res->status == 404);
  res = s.client().Get("/api/clusters/0/images?page=abc");
  REQUIRE(res);
  CHECK(res->status == 422);

  res = s.client().Options("/api/labels");
  REQUIRE(res);
  CHECK(res->status == 204);
  CHECK(res->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);
}

TEST_CASE("label a cluster, override a member, export") {
  RunCopy run;
  Served s(options_for(run.path()));
  const json summary = json::parse(s.client().Get("/api/run")->body);
  const std::vector<std::string> ids = summary.at("image_ids");
  const auto first_member = [&](int cluster) {
    const json page = json::parse(s.client().Get("/api/clusters/" + std::to_string(cluster) + "/images")->body);
    return page.at("images").at(0).at("id").get<std::string>();
  };

  json r = post(s.client(), {{"cluster_id", 0}, {"label", "covid"}, {"base_version", 0}}, 200);
  CHECK(r.at("version") == 1);
  CHECK(r.at("counts").at("covid") == 7);
  CHECK(r.at("undecided") == 7);

  const std::string moved = first_member(0);
  r = post(s.client(), {{"image_id", moved}, {"label", "normal"}, {"actor", "qa"}}, 200);
  CHECK(r.at("version") == 2);

  // Stale base version: rejected and audited.
  r = post(s.client(), {{"cluster_id", 1}, {"label", "normal"}, {"base_version", 0}}, 409);
  CHECK(r.at("version") == 2);

  post(s.client(), {{"label", "x"}}, 422);
  post(s.client(), {{"cluster_id", 0}, {"image_id", moved}, {"label", "x"}}, 422);
  post(s.client(), {{"cluster_id", 0}, {"label", "  "}}, 422);
  post(s.client(), {{"cluster_id", 9}, {"label", "x"}}, 404);
  post(s.client(), {{"image_id", "nope"}, {"label", "x"}}, 404);
  const auto garbage = s.client().Post("/api/labels", "{oops", "application/json");
  REQUIRE(garbage);
  CHECK(garbage->status == 422);

  const auto exported = s.client().Get("/api/export");
  REQUIRE(exported);
  CHECK(exported->status == 200);
  CHECK(exported->body.rfind("id,path,label\n", 0) == 0);
  const auto labels = parse_export(exported->body, run.path());
  CHECK(labels.size() == 14);
  CHECK(labels.at(moved) == "normal");
  std::size_t covid = 0, blank = 0;
  for (const auto& [id, label] : labels) {
    covid += label == "covid";
    blank += label.empty();
  }
  CHECK(covid == 6);
  CHECK(blank == 7);

  // The exported CSV is a valid manifest for a fresh run.
  std::ofstream(run.path() / "export.csv") << exported->body;
  const auto reloaded = load_dataset(run.path() / "export.csv", {32, 32});
  CHECK(reloaded.records.size() == 14);

  const json state = json::parse(s.client().Get("/api/labels")->body);
  CHECK(state.at("version") == 2);
  CHECK(state.at("audit").size() == 3);
  CHECK(state.at("audit").at(2).at("action") == "conflict");
}

TEST_CASE("labels survive a restart") {
  RunCopy run;
  {
    Served s(options_for(run.path()));
    post(s.client(), {{"cluster_id", 1}, {"label", "normal"}}, 200);
  }
  CHECK(fs::exists(run.path() / "labels.json"));
  Served s(options_for(run.path()));
  const json summary = json::parse(s.client().Get("/api/run")->body);
  CHECK(summary.at("labels_version") == 1);
  CHECK(summary.at("clusters").at(1).at("label") == "normal");
}

TEST_CASE("bearer token guards writes") {
  RunCopy run;
  ServeOptions o = options_for(run.path());
  o.token = "s3cret";
  o.cors_origin = "http://localhost:5173";
  Served s(o);
  post(s.client(), {{"cluster_id", 0}, {"label", "x"}}, 401);
  s.client().set_bearer_token_auth("s3cret");
  post(s.client(), {{"cluster_id", 0}, {"label", "x"}}, 200);
  const auto res = s.client().Get("/api/run");
  CHECK(res->get_header_value("Access-Control-Allow-Origin") == "http://localhost:5173");
}

TEST_CASE("thumbnails are rendered once and cached") {
  RunCopy run;
  Served s(options_for(run.path()));
  auto res = s.client().Get("/api/images/3/thumbnail");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->get_header_value("Content-Type") == "image/png");
  const fs::path cached = run.path() / "thumbnails" / "3.png";
  REQUIRE(fs::exists(cached));
  const auto planes = decode_image(cached);
  CHECK(std::max(planes[0].rows(), planes[0].cols()) == 128);
  const auto stamp = fs::last_write_time(cached);
  res = s.client().Get("/api/images/3/thumbnail");
  CHECK(res->status == 200);
  CHECK(fs::last_write_time(cached) == stamp);
  CHECK(s.client().Get("/api/images/999/thumbnail")->status == 404);
}

TEST_CASE("report assets and spectrum") {
  RunCopy run;
  cmd_report(run.path());
  Served s(options_for(run.path()));
  auto res = s.client().Get("/api/assets/similarity_reordered.png");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->get_header_value("Content-Type") == "image/png");
  CHECK(s.client().Get("/api/assets/missing.png")->status == 404);
  CHECK(s.client().Get("/api/spectrum")->status == 404);
}

}  // TEST_SUITE
