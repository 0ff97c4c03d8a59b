#include "wavecomm/disease_spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "wavecomm/error.hpp"

namespace wavecomm {
namespace {

void check_inputs(const Eigen::MatrixXd& w, std::size_t labels) {
  if (w.rows() != w.cols()) throw Error(ErrorKind::input, "affinity matrix must be square");
  if (static_cast<std::size_t>(w.rows()) != labels)
    throw Error(ErrorKind::input, fmt::format("{} labels for a {}x{} affinity matrix", labels, w.rows(), w.cols()));
}

std::map<std::string, std::size_t> class_sizes(std::span<const std::string> labels) {
  std::map<std::string, std::size_t> sizes;
  for (const auto& label : labels) ++sizes[label];
  return sizes;
}

}  // namespace

ClassSimilarity class_similarity_stats(const Eigen::MatrixXd& w, std::span<const std::string> labels) {
  check_inputs(w, labels.size());
  const auto sizes = class_sizes(labels);
  if (sizes.size() < 2) {
    throw Error(ErrorKind::insufficient_class,
                fmt::format("need at least two classes, found {}", sizes.size()));
  }
  for (const auto& [label, count] : sizes) {
    if (count < 2)
      throw Error(ErrorKind::insufficient_class, fmt::format("class '{}' has {} member(s); at least 2 required", label, count));
  }

  const auto n = labels.size();
  ClassSimilarity stats;
  stats.in_class.resize(n);
  stats.out_class.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double in_sum = 0.0;
    double out_sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double v = w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      (labels[j] == labels[i] ? in_sum : out_sum) += v;
    }
    const std::size_t same = sizes.at(labels[i]);
    stats.in_class[i] = in_sum / static_cast<double>(same - 1);
    stats.out_class[i] = out_sum / static_cast<double>(n - same);
  }
  return stats;
}

double spectrum_position(double in_class_sim, double out_class_sim, int class_sign) {
  return (class_sign >= 0 ? 1.0 : -1.0) * (in_class_sim - out_class_sim);
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(ErrorKind::input, "quantile of an empty sample");
  std::sort(values.begin(), values.end());
  if (std::isinf(q) && q > 0) return values.back();
  q = std::clamp(q, 0.0, 1.0);
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

IsolatedImages find_isolated(const Eigen::MatrixXd& w, std::span<const std::string> labels, double q) {
  if (!(q > 0.0 && q < 1.0)) throw Error(ErrorKind::config, fmt::format("isolation quantile must be in (0, 1) (got {})", q));
  const ClassSimilarity stats = class_similarity_stats(w, labels);
  IsolatedImages out;
  for (const auto& [label, count] : class_sizes(labels)) {
    if (count < 5) {
      spdlog::warn("find_isolated: class '{}' has only {} members; no quantile computed", label, count);
      out.skipped_classes.push_back(label);
      continue;
    }
    std::vector<double> in_values;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == label) in_values.push_back(stats.in_class[i]);
    const double cutoff = quantile(in_values, q);
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == label && stats.in_class[i] < cutoff) out.indices.push_back(i);
  }
  std::sort(out.indices.begin(), out.indices.end());
  return out;
}

BorderlineImages find_borderline(std::span<const SpectrumPlacement> placements, std::optional<double> band) {
  BorderlineImages out;
  if (placements.empty()) return out;
  if (band) {
    if (!(*band > 0.0)) throw Error(ErrorKind::config, fmt::format("borderline band must be positive (got {})", *band));
    out.band = *band;
  } else {
    std::vector<double> magnitudes;
    for (const auto& p : placements) magnitudes.push_back(std::abs(p.position));
    out.band = quantile(magnitudes, 0.10);
  }
  for (std::size_t i = 0; i < placements.size(); ++i)
    if (std::abs(placements[i].position) < out.band) out.per_class[placements[i].label].push_back(i);
  for (auto& [label, indices] : out.per_class) {
    std::sort(indices.begin(), indices.end(), [&](std::size_t a, std::size_t b) {
      const double pa = std::abs(placements[a].position);
      const double pb = std::abs(placements[b].position);
      if (pa != pb) return pa < pb;
      return placements[a].image_id < placements[b].image_id;
    });
  }
  return out;
}

SpectrumReport infer_spectrum(const Eigen::MatrixXd& w, std::span<const std::string> image_ids,
                              std::span<const std::string> labels, const SpectrumOptions& options) {
  check_inputs(w, labels.size());
  if (image_ids.size() != labels.size()) throw Error(ErrorKind::input, "image ids and labels differ in length");
  const auto sizes = class_sizes(labels);
  if (sizes.size() != 2) {
    throw Error(ErrorKind::insufficient_class,
                fmt::format("the severity axis needs exactly two classes, found {}", sizes.size()));
  }

  SpectrumReport report;
  report.isolation_quantile = options.isolation_quantile;
  report.positive_label = options.positive_label.value_or(sizes.rbegin()->first);
  if (!sizes.contains(report.positive_label))
    throw Error(ErrorKind::config, fmt::format("positive class '{}' does not occur in the labels", report.positive_label));
  report.negative_label = sizes.begin()->first == report.positive_label ? sizes.rbegin()->first : sizes.begin()->first;

  const ClassSimilarity stats = class_similarity_stats(w, labels);
  const std::size_t n = labels.size();
  report.placements.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& p = report.placements[i];
    p.image_id = image_ids[i];
    p.label = labels[i];
    p.in_class_sim = stats.in_class[i];
    p.out_class_sim = stats.out_class[i];
    p.position = spectrum_position(p.in_class_sim, p.out_class_sim, labels[i] == report.positive_label ? 1 : -1);
  }

  const IsolatedImages isolated = find_isolated(w, labels, options.isolation_quantile);
  for (const auto& label : isolated.skipped_classes)
    report.warnings.push_back(fmt::format("class '{}' has fewer than 5 members; isolation not assessed", label));
  for (std::size_t i : isolated.indices) {
    report.placements[i].isolated = true;
    report.isolated.push_back(image_ids[i]);
  }

  const BorderlineImages borderline = find_borderline(report.placements, options.band);
  report.band = borderline.band;
  for (const auto& [label, indices] : borderline.per_class) {
    auto& ids = report.borderline[label];
    for (std::size_t i : indices) {
      report.placements[i].borderline = true;
      ids.push_back(image_ids[i]);
    }
  }

  std::vector<double> magnitudes;
  for (const auto& p : report.placements) magnitudes.push_back(std::abs(p.position));
  report.extreme_threshold = quantile(magnitudes, 1.0 - options.extreme_fraction);
  for (auto& p : report.placements)
    p.extreme = std::abs(p.position) >= report.extreme_threshold && !(std::abs(p.position) < report.band);
  return report;
}

}  // namespace wavecomm
