#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace wavecomm {

// Per-image mean affinity to its own class and to the other class(es), self excluded.
struct ClassSimilarity {
  std::vector<double> in_class;
  std::vector<double> out_class;
};

// Two classes give in/out directly; with more than two classes each image is
// compared one-vs-rest. Every class needs at least two members.
ClassSimilarity class_similarity_stats(const Eigen::MatrixXd& w, std::span<const std::string> labels);

// class_sign * (in - out): zero on the borderline, far from zero for images
// that are strongly similar to their own class only.
double spectrum_position(double in_class_sim, double out_class_sim, int class_sign);

// Linear-interpolation quantile (the common "type 7" definition).
double quantile(std::vector<double> values, double q);

struct IsolatedImages {
  std::vector<std::size_t> indices;  // ascending
  std::vector<std::string> skipped_classes;  // fewer than 5 members
};

// Images whose in-class similarity falls strictly below their class's q-quantile.
IsolatedImages find_isolated(const Eigen::MatrixXd& w, std::span<const std::string> labels, double q = 0.05);

struct SpectrumPlacement {
  std::string image_id;
  std::string label;
  double in_class_sim = 0.0;
  double out_class_sim = 0.0;
  double position = 0.0;
  bool isolated = false;
  bool borderline = false;
  bool extreme = false;
};

struct BorderlineImages {
  double band = 0.0;
  // label -> placement indices sorted by |position| ascending (ties by id).
  std::map<std::string, std::vector<std::size_t>> per_class;
};

// |position| < band; the default band is the 10th percentile of |position|.
BorderlineImages find_borderline(std::span<const SpectrumPlacement> placements,
                                 std::optional<double> band = std::nullopt);

struct SpectrumOptions {
  std::optional<std::string> positive_label;  // default: the lexicographically last class
  double isolation_quantile = 0.05;
  std::optional<double> band;
  double extreme_fraction = 0.10;
};

struct SpectrumReport {
  std::string positive_label;
  std::string negative_label;
  std::vector<SpectrumPlacement> placements;
  double isolation_quantile = 0.05;
  double band = 0.0;
  double extreme_threshold = 0.0;  // |position| at or above this is flagged extreme
  std::vector<std::string> isolated;
  std::map<std::string, std::vector<std::string>> borderline;
  std::vector<std::string> warnings;
};

// Two-class severity axis over an affinity matrix.
SpectrumReport infer_spectrum(const Eigen::MatrixXd& w, std::span<const std::string> image_ids,
                              std::span<const std::string> labels, const SpectrumOptions& options = {});

}  // namespace wavecomm
