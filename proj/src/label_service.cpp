#include "wavecomm/label_service.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <mutex>
#include <shared_mutex>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "wavecomm/artifacts.hpp"
#include "wavecomm/csv.hpp"
#include "wavecomm/dataset_io.hpp"
#include "wavecomm/error.hpp"

// After Eigen: <resolv.h>, pulled in by httplib, defines a `_res` macro.
#include <httplib.h>

namespace fs = std::filesystem;

namespace wavecomm {

json to_json(const AuditEntry& e) {
  json j{{"sequence", e.sequence}, {"timestamp", e.timestamp}, {"actor", e.actor}, {"action", e.action},
         {"label", e.label}};
  j["cluster_id"] = e.cluster_id ? json(*e.cluster_id) : json(nullptr);
  j["image_id"] = e.image_id ? json(*e.image_id) : json(nullptr);
  return j;
}

AuditEntry audit_entry_from_json(const json& j) {
  AuditEntry e;
  e.sequence = j.at("sequence").get<std::uint64_t>();
  e.timestamp = j.at("timestamp").get<std::string>();
  e.actor = j.at("actor").get<std::string>();
  e.action = j.at("action").get<std::string>();
  e.label = j.at("label").get<std::string>();
  if (!j.at("cluster_id").is_null()) e.cluster_id = j.at("cluster_id").get<int>();
  if (!j.at("image_id").is_null()) e.image_id = j.at("image_id").get<std::string>();
  return e;
}

LabelStore::LabelStore(std::vector<std::string> image_ids, std::vector<int> assignments)
    : image_ids_(std::move(image_ids)), assignments_(std::move(assignments)) {
  if (image_ids_.size() != assignments_.size())
    throw Error(ErrorKind::input, "label store: image ids and cluster assignments differ in length");
  for (std::size_t i = 0; i < image_ids_.size(); ++i) {
    if (!index_.emplace(image_ids_[i], i).second)
      throw Error(ErrorKind::input, fmt::format("label store: duplicate image id '{}'", image_ids_[i]));
    if (assignments_[i] < 0) throw Error(ErrorKind::input, "label store: negative cluster id");
    cluster_count_ = std::max(cluster_count_, static_cast<std::size_t>(assignments_[i]) + 1);
  }
}

std::optional<std::size_t> LabelStore::index_of(const std::string& image_id) const {
  const auto it = index_.find(image_id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void LabelStore::append(AuditEntry entry) {
  entry.sequence = audit_.size() + 1;
  if (entry.action != "conflict") ++version_;
  audit_.push_back(std::move(entry));
}

void LabelStore::label_cluster(int cluster_id, const std::string& label, const std::string& actor,
                               const std::string& timestamp) {
  if (cluster_id < 0 || static_cast<std::size_t>(cluster_id) >= cluster_count_)
    throw Error(ErrorKind::input, fmt::format("unknown cluster {}", cluster_id));
  if (label.empty()) throw Error(ErrorKind::input, "label must be non-empty");
  cluster_labels_[cluster_id] = label;
  append({0, timestamp, actor, "label_cluster", cluster_id, std::nullopt, label});
}

void LabelStore::label_image(const std::string& image_id, const std::string& label, const std::string& actor,
                             const std::string& timestamp) {
  if (!index_.contains(image_id)) throw Error(ErrorKind::input, fmt::format("unknown image '{}'", image_id));
  if (label.empty()) throw Error(ErrorKind::input, "label must be non-empty");
  image_overrides_[image_id] = label;
  append({0, timestamp, actor, "label_image", std::nullopt, image_id, label});
}

void LabelStore::record_conflict(const AuditEntry& attempted) {
  AuditEntry entry = attempted;
  entry.action = "conflict";
  append(std::move(entry));
}

std::optional<std::string> LabelStore::effective_label(std::size_t index) const {
  if (index >= image_ids_.size()) return std::nullopt;
  if (const auto it = image_overrides_.find(image_ids_[index]); it != image_overrides_.end()) return it->second;
  if (const auto it = cluster_labels_.find(assignments_[index]); it != cluster_labels_.end()) return it->second;
  return std::nullopt;
}

std::vector<std::optional<std::string>> LabelStore::effective_labels() const {
  std::vector<std::optional<std::string>> out;
  out.reserve(image_ids_.size());
  for (std::size_t i = 0; i < image_ids_.size(); ++i) out.push_back(effective_label(i));
  return out;
}

std::map<std::string, std::size_t> LabelStore::label_counts() const {
  std::map<std::string, std::size_t> counts;
  for (const auto& label : effective_labels())
    if (label) ++counts[*label];
  return counts;
}

std::size_t LabelStore::undecided() const {
  const auto labels = effective_labels();
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::nullopt));
}

LabelStore LabelStore::replay(std::vector<std::string> image_ids, std::vector<int> assignments,
                              const std::vector<AuditEntry>& audit) {
  LabelStore store(std::move(image_ids), std::move(assignments));
  for (const auto& entry : audit) {
    if (entry.action == "label_cluster" && entry.cluster_id) {
      store.label_cluster(*entry.cluster_id, entry.label, entry.actor, entry.timestamp);
    } else if (entry.action == "label_image" && entry.image_id) {
      store.label_image(*entry.image_id, entry.label, entry.actor, entry.timestamp);
    } else if (entry.action == "conflict") {
      store.record_conflict(entry);
    } else {
      throw Error(ErrorKind::corrupt_artifact, fmt::format("audit entry {} has unknown action '{}'", entry.sequence, entry.action));
    }
  }
  return store;
}

json LabelStore::to_json() const {
  json clusters = json::object();
  for (const auto& [id, label] : cluster_labels_) clusters[std::to_string(id)] = label;
  json audit = json::array();
  for (const auto& e : audit_) audit.push_back(wavecomm::to_json(e));
  return {{"format_version", kFormatVersion},
          {"version", version_},
          {"cluster_labels", std::move(clusters)},
          {"image_overrides", image_overrides_},
          {"audit", std::move(audit)}};
}

namespace {

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buffer[32];
  std::strftime(buffer, sizeof(buffer), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buffer;
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view message) {
  send_json(res, status, {{"error", message}});
}

std::string content_type_for(const fs::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".png") return "image/png";
  if (ext == ".csv") return "text/csv";
  if (ext == ".json") return "application/json";
  if (ext == ".html") return "text/html";
  return "application/octet-stream";
}

std::optional<std::string> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::optional<std::size_t> parse_count(const std::string& text) {
  if (text.empty() || text.size() > 9 || !std::all_of(text.begin(), text.end(), ::isdigit)) return std::nullopt;
  return static_cast<std::size_t>(std::stoul(text));
}

struct RunState {
  std::vector<ManifestEntry> manifest;
  CommunityResult communities;
  std::map<std::string, double> positions;
  std::optional<std::string> spectrum_text;
  LabelStore store;
};

}  // namespace

struct LabelServer::Impl {
  ServeOptions options;
  RunLayout layout;
  httplib::Server server;
  std::shared_mutex mutex;  // readers share; label writes are serialized
  std::mutex thumbnail_mutex;
  std::optional<RunState> run;

  explicit Impl(ServeOptions o) : options(std::move(o)), layout{options.run_dir} {
    try {
      ensure_run();
    } catch (const std::exception& e) {
      spdlog::warn("no run loaded yet: {}", e.what());
    }
    routes();
  }

  // Loads the run on first use; throws when it is missing or unreadable.
  RunState& ensure_run() {
    {
      std::shared_lock lock(mutex);
      if (run) return *run;
    }
    std::unique_lock lock(mutex);
    if (run) return *run;
    if (!fs::exists(layout.communities()) || !fs::exists(layout.manifest()))
      throw Error(ErrorKind::missing_artifact, fmt::format("no completed run in '{}'", layout.dir.string()));
    auto manifest = read_manifest(layout.manifest());
    CommunityResult communities = community_from_json(read_json_artifact(layout.communities()));
    if (manifest.size() != communities.image_ids.size())
      throw Error(ErrorKind::corrupt_artifact, "manifest.csv and communities.json disagree on the images");

    std::map<std::string, double> positions;
    std::optional<std::string> spectrum_text;
    if (fs::exists(layout.spectrum())) {
      const SpectrumReport spectrum = spectrum_from_json(read_json_artifact(layout.spectrum()));
      for (const auto& p : spectrum.placements) positions[p.image_id] = p.position;
      spectrum_text = read_file(layout.spectrum());
    }

    std::vector<AuditEntry> audit;
    if (fs::exists(layout.labels())) {
      const json labels = read_json_artifact(layout.labels());
      for (const auto& e : labels.at("audit")) audit.push_back(audit_entry_from_json(e));
    }
    LabelStore store = LabelStore::replay(communities.image_ids, communities.assignments, audit);
    run.emplace(RunState{std::move(manifest), std::move(communities), std::move(positions), std::move(spectrum_text),
                         std::move(store)});
    spdlog::info("serving run '{}' ({} images, {} communities)", layout.dir.string(), run->manifest.size(),
                 run->communities.n_c);
    return *run;
  }

  // Wraps a handler so a missing run becomes 404 and other failures 500.
  template <class Fn>
  httplib::Server::Handler with_run(Fn fn) {
    return [this, fn](const httplib::Request& req, httplib::Response& res) {
      RunState* state = nullptr;
      try {
        state = &ensure_run();
      } catch (const Error& e) {
        send_error(res, e.kind() == ErrorKind::missing_artifact ? 404 : 500, e.what());
        return;
      }
      try {
        fn(*state, req, res);
      } catch (const std::exception& e) {
        send_error(res, 500, e.what());
      }
    };
  }

  void routes() {
    server.set_default_headers({{"Access-Control-Allow-Origin", options.cors_origin},
                                {"Access-Control-Allow-Headers", "Content-Type, Authorization"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server.Get("/api/run", with_run([this](RunState& s, const httplib::Request&, httplib::Response& res) {
      std::shared_lock lock(mutex);
      send_json(res, 200, run_summary(s));
    }));
    server.Get(R"(/api/clusters/(-?\d+)/images)",
               with_run([this](RunState& s, const httplib::Request& req, httplib::Response& res) {
                 std::shared_lock lock(mutex);
                 cluster_images(s, req, res);
               }));
    server.Get("/api/labels", with_run([this](RunState& s, const httplib::Request&, httplib::Response& res) {
      std::shared_lock lock(mutex);
      send_json(res, 200, s.store.to_json());
    }));
    server.Post("/api/labels", with_run([this](RunState& s, const httplib::Request& req, httplib::Response& res) {
      post_label(s, req, res);
    }));
    server.Get("/api/export", with_run([this](RunState& s, const httplib::Request&, httplib::Response& res) {
      std::shared_lock lock(mutex);
      res.set_content(export_csv(s), "text/csv");
      res.set_header("Content-Disposition", "attachment; filename=\"labels.csv\"");
    }));
    server.Get("/api/spectrum", with_run([](RunState& s, const httplib::Request&, httplib::Response& res) {
      if (!s.spectrum_text) return send_error(res, 404, "this run has no spectrum; run `wavecomm spectrum` first");
      res.set_content(*s.spectrum_text, "application/json");
    }));
    server.Get(R"(/api/images/(\d+)/thumbnail)",
               with_run([this](RunState& s, const httplib::Request& req, httplib::Response& res) {
                 thumbnail(s, req, res);
               }));
    server.Get(R"(/api/assets/([A-Za-z0-9_.-]+))", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string name = req.matches[1];
      if (name.find("..") != std::string::npos) return send_error(res, 404, "no such asset");
      const fs::path path = layout.dir / "report" / name;
      const auto bytes = read_file(path);
      if (!bytes) return send_error(res, 404, fmt::format("asset '{}' not found; run `wavecomm report` first", name));
      res.set_content(*bytes, content_type_for(path));
    });
    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty()) send_json(res, res.status, {{"error", httplib::status_message(res.status)}});
    });
  }

  json run_summary(const RunState& s) const {
    const auto& c = s.communities;
    json clusters = json::array();
    const auto sizes = c.cluster_sizes();
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      const auto it = s.store.cluster_labels().find(static_cast<int>(k));
      clusters.push_back({{"id", k},
                          {"size", sizes[k]},
                          {"label", it == s.store.cluster_labels().end() ? json(nullptr) : json(it->second)}});
    }
    return {{"n_images", c.image_ids.size()},
            {"n_c", c.n_c},
            {"eigenvalues", c.eigenvalues},
            {"gaps", c.gaps},
            {"estimate", c.estimate ? to_json(*c.estimate) : json(nullptr)},
            {"cluster_sizes", sizes},
            {"clusters", std::move(clusters)},
            {"image_ids", c.image_ids},
            {"permutation", c.permutation},
            {"block_boundaries", c.block_boundaries},
            {"has_spectrum", s.spectrum_text.has_value()},
            {"labels_version", s.store.version()},
            {"page_size", options.page_size}};
  }

  void cluster_images(const RunState& s, const httplib::Request& req, httplib::Response& res) const {
    const int cluster = std::stoi(req.matches[1]);
    if (cluster < 0 || static_cast<std::size_t>(cluster) >= s.communities.n_c)
      return send_error(res, 404, fmt::format("unknown cluster {}", cluster));
    std::size_t page = 0;
    std::size_t page_size = options.page_size;
    if (req.has_param("page")) {
      const auto parsed = parse_count(req.get_param_value("page"));
      if (!parsed) return send_error(res, 422, "page must be a non-negative integer");
      page = *parsed;
    }
    if (req.has_param("page_size")) {
      const auto parsed = parse_count(req.get_param_value("page_size"));
      if (!parsed || *parsed == 0 || *parsed > 1000) return send_error(res, 422, "page_size must be in [1, 1000]");
      page_size = *parsed;
    }

    auto members = s.communities.members(cluster);
    auto position = [&](std::size_t i) -> std::optional<double> {
      const auto it = s.positions.find(s.communities.image_ids[i]);
      if (it == s.positions.end()) return std::nullopt;
      return it->second;
    };
    std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
      const auto pa = position(a);
      const auto pb = position(b);
      if (pa.has_value() != pb.has_value()) return pa.has_value();
      if (pa && *pa != *pb) return *pa < *pb;
      return s.communities.image_ids[a] < s.communities.image_ids[b];
    });

    json images = json::array();
    const std::size_t begin = std::min(members.size(), page * page_size);
    const std::size_t end = std::min(members.size(), begin + page_size);
    for (std::size_t m = begin; m < end; ++m) {
      const std::size_t i = members[m];
      const auto& id = s.communities.image_ids[i];
      const auto label = s.store.effective_label(i);
      const auto pos = position(i);
      images.push_back({{"index", i},
                        {"id", id},
                        {"label", label ? json(*label) : json(nullptr)},
                        {"override", s.store.image_overrides().contains(id)},
                        {"position", pos ? json(*pos) : json(nullptr)},
                        {"thumbnail", fmt::format("/api/images/{}/thumbnail", i)}});
    }
    send_json(res, 200, {{"cluster_id", cluster},
                         {"size", members.size()},
                         {"page", page},
                         {"page_size", page_size},
                         {"pages", (members.size() + page_size - 1) / page_size},
                         {"images", std::move(images)}});
  }

  void post_label(RunState& s, const httplib::Request& req, httplib::Response& res) {
    if (options.token && req.get_header_value("Authorization") != "Bearer " + *options.token)
      return send_error(res, 401, "missing or wrong bearer token");
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::parse_error&) {
      return send_error(res, 422, "body must be a JSON object");
    }
    if (!body.is_object()) return send_error(res, 422, "body must be a JSON object");
    const bool by_cluster = body.contains("cluster_id");
    const bool by_image = body.contains("image_id");
    if (by_cluster == by_image) return send_error(res, 422, "give exactly one of cluster_id and image_id");
    if (by_cluster && !body["cluster_id"].is_number_integer()) return send_error(res, 422, "cluster_id must be an integer");
    if (by_image && !body["image_id"].is_string()) return send_error(res, 422, "image_id must be a string");
    if (!body.contains("label") || !body["label"].is_string() ||
        body["label"].get<std::string>().find_first_not_of(" \t\r\n") == std::string::npos)
      return send_error(res, 422, "label must be a non-empty string");
    if (body.contains("actor") && !body["actor"].is_string()) return send_error(res, 422, "actor must be a string");
    if (body.contains("base_version") && !body["base_version"].is_number_unsigned())
      return send_error(res, 422, "base_version must be a non-negative integer");

    const std::string label = body["label"];
    const std::string actor = body.value("actor", std::string("reviewer"));
    AuditEntry attempt{0, utc_now(), actor, by_cluster ? "label_cluster" : "label_image", std::nullopt, std::nullopt, label};
    if (by_cluster) attempt.cluster_id = body["cluster_id"].get<int>();
    if (by_image) attempt.image_id = body["image_id"].get<std::string>();

    std::unique_lock lock(mutex);
    if (by_cluster && (*attempt.cluster_id < 0 || static_cast<std::size_t>(*attempt.cluster_id) >= s.store.cluster_count()))
      return send_error(res, 404, fmt::format("unknown cluster {}", *attempt.cluster_id));
    if (by_image && !s.store.index_of(*attempt.image_id))
      return send_error(res, 404, fmt::format("unknown image '{}'", *attempt.image_id));
    if (body.contains("base_version") && body["base_version"].get<std::uint64_t>() != s.store.version()) {
      s.store.record_conflict(attempt);
      persist(s);
      return send_json(res, 409, {{"error", "labels changed since base_version; reload and retry"},
                                  {"version", s.store.version()}});
    }
    if (by_cluster) {
      s.store.label_cluster(*attempt.cluster_id, label, actor, attempt.timestamp);
    } else {
      s.store.label_image(*attempt.image_id, label, actor, attempt.timestamp);
    }
    persist(s);
    send_json(res, 200, {{"version", s.store.version()},
                         {"counts", s.store.label_counts()},
                         {"undecided", s.store.undecided()}});
  }

  void persist(const RunState& s) const { write_json(layout.labels(), s.store.to_json()); }

  static std::string export_csv(const RunState& s) {
    std::string text = "id,path,label\n";
    for (std::size_t i = 0; i < s.manifest.size(); ++i) {
      const auto& entry = s.manifest[i];
      const auto index = s.store.index_of(entry.id);
      const auto label = index ? s.store.effective_label(*index) : std::nullopt;
      text += csv::format_row({entry.id, entry.path.string(), label.value_or("")});
      text.push_back('\n');
    }
    return text;
  }

  void thumbnail(const RunState& s, const httplib::Request& req, httplib::Response& res) {
    const auto index = parse_count(req.matches[1]);
    if (!index || *index >= s.manifest.size()) return send_error(res, 404, "unknown image index");
    const fs::path cached = layout.thumbnails() / fmt::format("{}.png", *index);
    std::lock_guard lock(thumbnail_mutex);
    if (!fs::exists(cached)) {
      try {
        const Eigen::MatrixXd pixels = to_grayscale(decode_image(s.manifest[*index].path));
        const double side = static_cast<double>(options.thumbnail_size);
        const double scale = side / static_cast<double>(std::max(pixels.rows(), pixels.cols()));
        const ImageSize size{std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(pixels.cols() * scale))),
                             std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(pixels.rows() * scale)))};
        fs::create_directories(layout.thumbnails());
        fs::path tmp = cached;
        tmp += ".tmp.png";
        write_png(tmp, resize_bilinear(pixels, size));
        fs::rename(tmp, cached);
      } catch (const std::exception& e) {
        return send_error(res, 404, fmt::format("cannot render thumbnail: {}", e.what()));
      }
    }
    const auto bytes = read_file(cached);
    if (!bytes) return send_error(res, 500, "thumbnail cache unreadable");
    res.set_content(*bytes, "image/png");
  }
};

LabelServer::LabelServer(ServeOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

LabelServer::~LabelServer() { stop(); }

int LabelServer::bind() {
  auto& o = impl_->options;
  if (o.port == 0) return impl_->server.bind_to_any_port(o.host);
  if (!impl_->server.bind_to_port(o.host, o.port))
    throw Error(ErrorKind::io, fmt::format("cannot listen on {}:{}", o.host, o.port));
  return o.port;
}

void LabelServer::listen() {
  if (!impl_->server.listen_after_bind()) throw Error(ErrorKind::io, "HTTP server stopped unexpectedly");
}

void LabelServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace wavecomm
