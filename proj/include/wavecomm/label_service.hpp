#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace wavecomm {

struct AuditEntry {
  std::uint64_t sequence = 0;
  std::string timestamp;  // ISO 8601, UTC
  std::string actor;
  std::string action;     // "label_cluster", "label_image" or "conflict"
  std::optional<int> cluster_id;
  std::optional<std::string> image_id;
  std::string label;

  bool operator==(const AuditEntry&) const = default;
};

nlohmann::json to_json(const AuditEntry& entry);
AuditEntry audit_entry_from_json(const nlohmann::json& j);

/// Reviewer decisions over one run.
///
/// An image's effective label is its override if present, else its cluster's
/// label. Every accepted write bumps `version` and appends to the audit log;
/// rejected conflicting writes are audited without changing state.
class LabelStore {
 public:
  LabelStore(std::vector<std::string> image_ids, std::vector<int> assignments);

  std::size_t size() const noexcept { return image_ids_.size(); }
  std::size_t cluster_count() const noexcept { return cluster_count_; }
  std::uint64_t version() const noexcept { return version_; }

  std::optional<std::size_t> index_of(const std::string& image_id) const;

  void label_cluster(int cluster_id, const std::string& label, const std::string& actor,
                     const std::string& timestamp);
  void label_image(const std::string& image_id, const std::string& label, const std::string& actor,
                   const std::string& timestamp);
  void record_conflict(const AuditEntry& attempted);

  std::optional<std::string> effective_label(std::size_t index) const;
  std::vector<std::optional<std::string>> effective_labels() const;

  // Images per effective label; undecided images are not counted.
  std::map<std::string, std::size_t> label_counts() const;
  std::size_t undecided() const;

  const std::map<int, std::string>& cluster_labels() const noexcept { return cluster_labels_; }
  const std::map<std::string, std::string>& image_overrides() const noexcept { return image_overrides_; }
  const std::vector<AuditEntry>& audit() const noexcept { return audit_; }

  // Rebuilds a store by folding an audit log over an empty one.
  static LabelStore replay(std::vector<std::string> image_ids, std::vector<int> assignments,
                           const std::vector<AuditEntry>& audit);

  nlohmann::json to_json() const;

 private:
  void append(AuditEntry entry);

  std::vector<std::string> image_ids_;
  std::vector<int> assignments_;
  std::size_t cluster_count_ = 0;
  std::map<std::string, std::size_t> index_;
  std::map<int, std::string> cluster_labels_;
  std::map<std::string, std::string> image_overrides_;
  std::vector<AuditEntry> audit_;
  std::uint64_t version_ = 0;
};

struct ServeOptions {
  std::filesystem::path run_dir;
  std::string host = "127.0.0.1";
  int port = 8080;                         // 0 picks a free port
  std::string cors_origin = "*";
  std::optional<std::string> token;        // required as "Bearer <token>" on POST when set
  std::size_t page_size = 24;
  int thumbnail_size = 128;
};

/// HTTP API over a completed run:
///   GET  /api/run                         summary of communities.json
///   GET  /api/clusters/{id}/images?page=  paged members (0-based pages)
///   POST /api/labels                      {cluster_id | image_id, label, actor?, base_version?}
///   GET  /api/labels                      current label state
///   GET  /api/export                      id,path,label CSV
///   GET  /api/spectrum                    spectrum.json
///   GET  /api/images/{index}/thumbnail    PNG, cached under thumbnails/
///   GET  /api/assets/{name}               files written by `report`
/// Label state lives in labels.json; pipeline artifacts are never modified.
class LabelServer {
 public:
  explicit LabelServer(ServeOptions options);
  ~LabelServer();
  LabelServer(const LabelServer&) = delete;
  LabelServer& operator=(const LabelServer&) = delete;

  // Binds the socket and returns the bound port.
  int bind();
  // Serves until stop(); call bind() first.
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace wavecomm
