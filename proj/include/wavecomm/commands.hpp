#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wavecomm/dataset_io.hpp"
#include "wavecomm/disease_spectrum.hpp"
#include "wavecomm/pipeline.hpp"

namespace wavecomm {

// Everything a run needs; serialized to config.json in the run directory.
struct RunConfig {
  std::filesystem::path dataset;
  std::filesystem::path out;
  ImageSize size;
  ColorMode color = ColorMode::luma;
  PipelineConfig pipeline;

  void validate() const;
};

nlohmann::json to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& j);

// Reads config.json from a run directory.
RunConfig load_run_config(const std::filesystem::path& run_dir);

struct RunSummary {
  std::size_t n_images = 0;
  std::size_t n_failed = 0;
  std::size_t n_features = 0;
  std::size_t n_features_kept = 0;
  std::size_t n_c = 0;
  std::vector<std::size_t> cluster_sizes;
  std::vector<double> eigenvalues;  // leading eigenvalues, at most max_k + 1
  std::vector<double> gaps;
  double knee_ratio = 0.0;
};

nlohmann::json to_json(const RunSummary& summary);

// Full pipeline: load, decompose, select, graph, cluster; writes every artifact
// and summary.json. Artifacts of completed stages are kept when a later stage fails.
RunSummary cmd_detect(const RunConfig& config);

// Stage-by-stage equivalents of cmd_detect. The graph and cluster stages take
// the effective pipeline settings and record them in config.json.
void cmd_decompose(const RunConfig& config);
void cmd_graph(const std::filesystem::path& run_dir, const PipelineConfig& config);
RunSummary cmd_cluster(const std::filesystem::path& run_dir, const PipelineConfig& config);

struct SpectrumRequest {
  std::filesystem::path run_dir;
  std::optional<std::filesystem::path> labels;  // CSV with id and label columns; default: the run manifest
  std::optional<std::string> positive_label;
  double isolation_quantile = 0.05;
  std::optional<double> band;
};

struct SpectrumOutcome {
  SpectrumReport report;
  std::vector<std::string> unlabeled;    // run images without a label, excluded
  std::vector<std::string> unknown_ids;  // label rows naming no run image, ignored
};

SpectrumOutcome cmd_spectrum(const SpectrumRequest& request);

struct ReportOutcome {
  std::filesystem::path html;
  std::size_t blocks = 0;
};

// Heatmap PNG + CSV pairs (raw and reordered affinity), eigenvalue CSV and
// scatter PNG, blocks.json and report.html. Assets go to RUN/report/.
ReportOutcome cmd_report(const std::filesystem::path& run_dir);

// Labels by image id from a CSV with `id` and `label` columns.
std::vector<std::pair<std::string, std::string>> read_label_file(const std::filesystem::path& path);

}  // namespace wavecomm
