#include "report.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <fmt/format.h>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "wavecomm/error.hpp"

namespace fs = std::filesystem;

namespace wavecomm {
namespace {

constexpr int kMinHeatmapSide = 256;

void write_image(const fs::path& path, const cv::Mat& image) {
  if (!cv::imwrite(path.string(), image)) throw Error(ErrorKind::io, fmt::format("cannot write '{}'", path.string()));
}

// Grayscale heatmap, brighter is more similar, upscaled by an integer factor.
// Block boundaries are drawn as thin mid-gray lines.
void write_heatmap(const fs::path& path, const Eigen::MatrixXd& values, const std::vector<std::size_t>& boundaries) {
  const int n = static_cast<int>(values.rows());
  const int scale = std::max(1, (kMinHeatmapSide + n - 1) / std::max(1, n));
  const double peak = values.size() > 0 ? values.maxCoeff() : 0.0;
  const double factor = peak > 0.0 ? 255.0 / peak : 0.0;
  cv::Mat image(n * scale, n * scale, CV_8UC1);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const auto v = static_cast<unsigned char>(std::lround(std::clamp(values(r, c) * factor, 0.0, 255.0)));
      image(cv::Rect(c * scale, r * scale, scale, scale)).setTo(v);
    }
  }
  for (std::size_t b : boundaries) {
    const int at = std::min(static_cast<int>(b) * scale, n * scale - 1);
    if (b == 0 || static_cast<int>(b) >= n) continue;
    cv::line(image, {at, 0}, {at, n * scale - 1}, cv::Scalar(128));
    cv::line(image, {0, at}, {n * scale - 1, at}, cv::Scalar(128));
  }
  write_image(path, image);
}

// Eigenvalue index vs value, with a marker at the chosen cluster count.
void write_scatter(const fs::path& path, const std::vector<double>& eigenvalues, std::size_t n_c) {
  constexpr int kWidth = 640;
  constexpr int kHeight = 400;
  constexpr int kMargin = 40;
  cv::Mat image(kHeight, kWidth, CV_8UC3, cv::Scalar(255, 255, 255));
  const cv::Point origin(kMargin, kHeight - kMargin);
  cv::line(image, origin, {kWidth - kMargin / 2, kHeight - kMargin}, cv::Scalar(0, 0, 0));
  cv::line(image, origin, {kMargin, kMargin / 2}, cv::Scalar(0, 0, 0));
  if (!eigenvalues.empty()) {
    const double top = std::max(1e-12, *std::max_element(eigenvalues.begin(), eigenvalues.end()));
    const double span = static_cast<double>(std::max<std::size_t>(1, eigenvalues.size()));
    auto x_of = [&](std::size_t i) {
      return kMargin + static_cast<int>(std::lround((static_cast<double>(i) + 0.5) / span * (kWidth - 1.5 * kMargin)));
    };
    auto y_of = [&](double v) {
      return kHeight - kMargin - static_cast<int>(std::lround(std::max(0.0, v) / top * (kHeight - 1.5 * kMargin)));
    };
    if (n_c >= 1 && n_c <= eigenvalues.size()) {
      const int x = (x_of(n_c - 1) + x_of(std::min(n_c, eigenvalues.size() - 1))) / 2;
      cv::line(image, {x, kMargin / 2}, {x, kHeight - kMargin}, cv::Scalar(0, 0, 200));
      cv::putText(image, fmt::format("n_c = {}", n_c), {x + 4, kMargin}, cv::FONT_HERSHEY_SIMPLEX, 0.45,
                  cv::Scalar(0, 0, 200));
    }
    for (std::size_t i = 0; i < eigenvalues.size(); ++i)
      cv::circle(image, {x_of(i), y_of(eigenvalues[i])}, 3, cv::Scalar(120, 60, 0), cv::FILLED);
    cv::putText(image, fmt::format("{:.3g}", top), {2, kMargin / 2 + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.35,
                cv::Scalar(0, 0, 0));
  }
  cv::putText(image, "eigenvalue index", {kWidth / 2 - 50, kHeight - 12}, cv::FONT_HERSHEY_SIMPLEX, 0.45,
              cv::Scalar(0, 0, 0));
  write_image(path, image);
}

std::string html_escape(std::string_view text) {
  std::string out;
  for (char ch : text) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(ch);
    }
  }
  return out;
}

std::string render_html(const CommunityResult& communities, const std::optional<SpectrumReport>& spectrum) {
  std::ostringstream html;
  html << "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>wavecomm report</title>\n"
       << "<style>body{font-family:sans-serif;margin:2em}img{image-rendering:pixelated;max-width:45%;margin:0.5em}"
       << "table{border-collapse:collapse}td,th{border:1px solid #ccc;padding:2px 8px}</style></head><body>\n";
  html << fmt::format("<h1>Communities</h1>\n<p>{} images in {} communities.</p>\n", communities.image_ids.size(),
                      communities.n_c);
  html << "<img src=\"report/similarity_raw.png\" alt=\"similarity matrix\">\n"
       << "<img src=\"report/similarity_reordered.png\" alt=\"reordered similarity matrix\">\n"
       << "<h2>Laplacian eigenvalues</h2>\n<img src=\"report/eigenvalues.png\" alt=\"eigenvalues\">\n";
  html << "<h2>Community sizes</h2>\n<table><tr><th>community</th><th>size</th><th>first members</th></tr>\n";
  const auto sizes = communities.cluster_sizes();
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    std::string members;
    const auto idx = communities.members(static_cast<int>(c));
    for (std::size_t m = 0; m < std::min<std::size_t>(5, idx.size()); ++m)
      members += (m ? ", " : "") + html_escape(communities.image_ids[idx[m]]);
    html << fmt::format("<tr><td>{}</td><td>{}</td><td>{}</td></tr>\n", c, sizes[c], members);
  }
  html << "</table>\n";
  if (spectrum) {
    html << fmt::format("<h2>Spectrum ({} vs {})</h2>\n<p>Borderline band {:.4g}; {} isolated image(s).</p>\n",
                        html_escape(spectrum->negative_label), html_escape(spectrum->positive_label), spectrum->band,
                        spectrum->isolated.size());
    html << "<table><tr><th>class</th><th>borderline images</th></tr>\n";
    for (const auto& [label, ids] : spectrum->borderline) {
      std::string list;
      for (std::size_t i = 0; i < ids.size(); ++i) list += (i ? ", " : "") + html_escape(ids[i]);
      html << fmt::format("<tr><td>{}</td><td>{}</td></tr>\n", html_escape(label), list);
    }
    html << "</table>\n";
  }
  html << "</body></html>\n";
  return html.str();
}

}  // namespace

ReportOutcome render_report(const RunLayout& layout, const AffinityMatrix& affinity,
                            const CommunityResult& communities, const std::optional<SpectrumReport>& spectrum) {
  const fs::path assets = layout.dir / "report";
  fs::create_directories(assets);

  const ReorderedSimilarity reordered = reorder_similarity(affinity.values, communities.assignments);
  write_matrix_csv(assets / "similarity_raw.csv", affinity.values);
  write_heatmap(assets / "similarity_raw.png", affinity.values, {});
  write_matrix_csv(assets / "similarity_reordered.csv", reordered.values);
  write_heatmap(assets / "similarity_reordered.png", reordered.values, reordered.block_boundaries);

  std::string eig_csv = "index,eigenvalue\n";
  for (std::size_t i = 0; i < communities.eigenvalues.size(); ++i)
    eig_csv += fmt::format("{},{}\n", i + 1, communities.eigenvalues[i]);
  write_text_atomic(assets / "eigenvalues.csv", eig_csv);
  const std::size_t plotted = std::min(communities.eigenvalues.size(),
                                       std::max<std::size_t>({communities.gaps.size() + 1, 2 * communities.n_c, 20}));
  write_scatter(assets / "eigenvalues.png",
                std::vector<double>(communities.eigenvalues.begin(),
                                    communities.eigenvalues.begin() + static_cast<std::ptrdiff_t>(plotted)),
                communities.n_c);

  std::vector<std::string> ordered_ids;
  for (std::size_t i : reordered.permutation) ordered_ids.push_back(communities.image_ids[i]);
  const std::size_t blocks = reordered.block_boundaries.empty() ? 0 : reordered.block_boundaries.size() - 1;
  write_json(assets / "blocks.json", {{"format_version", kFormatVersion},
                                      {"blocks", blocks},
                                      {"block_boundaries", reordered.block_boundaries},
                                      {"permutation", reordered.permutation},
                                      {"ordered_ids", ordered_ids},
                                      {"cluster_sizes", communities.cluster_sizes()}});
  write_text_atomic(layout.report(), render_html(communities, spectrum));
  return {layout.report(), blocks};
}

}  // namespace wavecomm
