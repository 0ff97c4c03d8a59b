#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "wavecomm/affinity_graph.hpp"
#include "wavecomm/dataset_io.hpp"
#include "wavecomm/disease_spectrum.hpp"
#include "wavecomm/feature_select.hpp"
#include "wavecomm/spectral_cluster.hpp"
#include "wavecomm/wavelet.hpp"

namespace wavecomm {

using json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

/// Binary matrix file: the 4 magic bytes "WCM1", a little-endian u64 row
/// count n, then the matrix in row-major order as little-endian f64.
///
/// Square matrices hold exactly n*n values. Rectangular matrices (the
/// coefficient matrix) use the same header; the column count follows from the
/// payload length and must be passed to the reader.
void write_wcm(const std::filesystem::path& path, const Eigen::MatrixXd& matrix);

// Square unless `cols` is given. Truncation or trailing bytes are corrupt_artifact;
// a "WCM<n>" header with another version is version_mismatch.
Eigen::MatrixXd read_wcm(const std::filesystem::path& path, std::optional<std::size_t> cols = std::nullopt);

void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& matrix);

// Writes to a temporary sibling and renames it into place.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
void write_json(const std::filesystem::path& path, const json& document);

// Reads a JSON artifact and checks its "format_version".
json read_json_artifact(const std::filesystem::path& path);

json to_json(const Bookkeeping& beta);
Bookkeeping bookkeeping_from_json(const json& j);

json to_json(const ClusterCountEstimate& estimate);
ClusterCountEstimate estimate_from_json(const json& j);

json to_json(const CommunityResult& result);
CommunityResult community_from_json(const json& j);

json to_json(const SpectrumReport& report);
SpectrumReport spectrum_from_json(const json& j);

void write_spectrum_csv(const std::filesystem::path& path, const SpectrumReport& report);

// File names inside a run directory.
struct RunLayout {
  std::filesystem::path dir;

  std::filesystem::path config() const { return dir / "config.json"; }
  std::filesystem::path manifest() const { return dir / "manifest.csv"; }
  std::filesystem::path dataset() const { return dir / "dataset.json"; }
  std::filesystem::path decomposition() const { return dir / "decomposition.json"; }
  std::filesystem::path coefficients() const { return dir / "coeffs.wcm"; }
  std::filesystem::path feature_scores() const { return dir / "feature_scores.csv"; }
  std::filesystem::path distance() const { return dir / "distance.wcm"; }
  std::filesystem::path affinity() const { return dir / "affinity.wcm"; }
  std::filesystem::path graph() const { return dir / "graph.json"; }
  std::filesystem::path communities() const { return dir / "communities.json"; }
  std::filesystem::path summary() const { return dir / "summary.json"; }
  std::filesystem::path spectrum() const { return dir / "spectrum.json"; }
  std::filesystem::path spectrum_csv() const { return dir / "spectrum.csv"; }
  std::filesystem::path labels() const { return dir / "labels.json"; }
  std::filesystem::path thumbnails() const { return dir / "thumbnails"; }
  std::filesystem::path report() const { return dir / "report.html"; }
};

struct GraphInfo {
  Metric metric = Metric::correlation;
  KernelForm kernel = KernelForm::gaussian;
  double sigma = 0.0;
  std::optional<std::size_t> knn;
};

struct RunArtifacts {
  std::optional<std::vector<ManifestEntry>> manifest;
  std::optional<Bookkeeping> beta;
  std::optional<CoefficientMatrix> coefficients;  // full, before selection
  std::optional<FeatureScoresFile> feature_scores;
  std::optional<DistanceMatrix> distance;
  std::optional<AffinityMatrix> affinity;
  std::optional<GraphInfo> graph;
  std::optional<CommunityResult> communities;
  std::optional<SpectrumReport> spectrum;
};

// Writes every artifact that is present.
void save_artifacts(const std::filesystem::path& run_dir, const RunArtifacts& artifacts);

// Loads every artifact that exists in the directory.
RunArtifacts load_artifacts(const std::filesystem::path& run_dir);

}  // namespace wavecomm
