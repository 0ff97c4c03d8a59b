#include "wavecomm/artifacts.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "wavecomm/csv.hpp"
#include "wavecomm/error.hpp"

namespace fs = std::filesystem;

namespace wavecomm {
namespace {

static_assert(std::endian::native == std::endian::little, "WCM I/O assumes a little-endian host");

constexpr char kMagic[4] = {'W', 'C', 'M', '1'};

std::string read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::missing_artifact, fmt::format("cannot open '{}'", path.string()));
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

Subband subband_from_code(const std::string& code) {
  if (code == "A") return Subband::approximation;
  if (code == "H") return Subband::horizontal;
  if (code == "V") return Subband::vertical;
  if (code == "D") return Subband::diagonal;
  throw Error(ErrorKind::corrupt_artifact, fmt::format("unknown subband code '{}'", code));
}

template <class Fn>
auto parse_or_corrupt(const fs::path& path, Fn&& fn) {
  try {
    return fn();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(ErrorKind::corrupt_artifact, fmt::format("'{}' is malformed: {}", path.string(), e.what()));
  }
}

}  // namespace

void write_wcm(const fs::path& path, const Eigen::MatrixXd& matrix) {
  std::string bytes;
  const auto rows = static_cast<std::uint64_t>(matrix.rows());
  bytes.reserve(12 + static_cast<std::size_t>(matrix.size()) * 8);
  bytes.append(kMagic, 4);
  bytes.append(reinterpret_cast<const char*>(&rows), sizeof(rows));
  for (Eigen::Index r = 0; r < matrix.rows(); ++r) {
    for (Eigen::Index c = 0; c < matrix.cols(); ++c) {
      const double v = matrix(r, c);
      bytes.append(reinterpret_cast<const char*>(&v), sizeof(v));
    }
  }
  write_text_atomic(path, bytes);
}

Eigen::MatrixXd read_wcm(const fs::path& path, std::optional<std::size_t> cols) {
  const std::string bytes = read_all(path);
  if (bytes.size() < 12) throw Error(ErrorKind::corrupt_artifact, fmt::format("'{}' is truncated (no header)", path.string()));
  if (bytes.compare(0, 3, "WCM") != 0)
    throw Error(ErrorKind::corrupt_artifact, fmt::format("'{}' is not a WCM matrix file", path.string()));
  if (bytes[3] != kMagic[3]) {
    throw Error(ErrorKind::version_mismatch,
                fmt::format("'{}' uses matrix format version '{}' but this build reads version 1; "
                            "regenerate it with this build or migrate it first",
                            path.string(), bytes[3]));
  }
  std::uint64_t rows = 0;
  std::memcpy(&rows, bytes.data() + 4, sizeof(rows));
  const std::uint64_t columns = cols.value_or(rows);
  const std::uint64_t payload = bytes.size() - 12;
  if (rows != 0 && columns > (payload / 8) / rows + 1)
    throw Error(ErrorKind::corrupt_artifact, fmt::format("'{}' is truncated", path.string()));
  if (payload != rows * columns * 8) {
    throw Error(ErrorKind::corrupt_artifact,
                fmt::format("'{}' holds {} payload bytes but a {}x{} matrix needs {}", path.string(), payload,
                            rows, columns, rows * columns * 8));
  }
  Eigen::MatrixXd matrix(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(columns));
  const char* cursor = bytes.data() + 12;
  for (Eigen::Index r = 0; r < matrix.rows(); ++r) {
    for (Eigen::Index c = 0; c < matrix.cols(); ++c) {
      double v = 0.0;
      std::memcpy(&v, cursor, sizeof(v));
      cursor += sizeof(v);
      matrix(r, c) = v;
    }
  }
  return matrix;
}

void write_matrix_csv(const fs::path& path, const Eigen::MatrixXd& matrix) {
  std::string text;
  for (Eigen::Index r = 0; r < matrix.rows(); ++r) {
    for (Eigen::Index c = 0; c < matrix.cols(); ++c) {
      if (c > 0) text.push_back(',');
      text += csv::format_double(matrix(r, c));
    }
    text.push_back('\n');
  }
  write_text_atomic(path, text);
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, fmt::format("cannot write '{}'", tmp.string()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw Error(ErrorKind::io, fmt::format("short write to '{}'", tmp.string()));
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::io, fmt::format("cannot move '{}' into place: {}", path.string(), ec.message()));
}

void write_json(const fs::path& path, const json& document) { write_text_atomic(path, document.dump(2) + "\n"); }

json read_json_artifact(const fs::path& path) {
  const std::string text = read_all(path);
  json document = parse_or_corrupt(path, [&] { return json::parse(text); });
  if (!document.is_object() || !document.contains("format_version"))
    throw Error(ErrorKind::corrupt_artifact, fmt::format("'{}' has no format_version", path.string()));
  const auto& version = document["format_version"];
  if (!version.is_number_integer() || version.get<int>() != kFormatVersion) {
    throw Error(ErrorKind::version_mismatch,
                fmt::format("'{}' has format_version {} but this build reads {}; regenerate or migrate it",
                            path.string(), version.dump(), kFormatVersion));
  }
  return document;
}

json to_json(const Bookkeeping& beta) {
  json j;
  j["format_version"] = kFormatVersion;
  j["basis"] = std::string(to_string(beta.basis));
  j["levels"] = beta.levels;
  j["rows"] = beta.rows;
  j["cols"] = beta.cols;
  j["level_shapes"] = json::array();
  for (const auto& s : beta.level_shapes)
    j["level_shapes"].push_back({{"level", s.level}, {"rows", s.rows}, {"cols", s.cols},
                                 {"padded_rows", s.padded_rows}, {"padded_cols", s.padded_cols}});
  j["subbands"] = json::array();
  for (const auto& s : beta.subbands)
    j["subbands"].push_back({{"level", s.level}, {"band", std::string(1, subband_code(s.band))},
                             {"rows", s.rows}, {"cols", s.cols}});
  return j;
}

Bookkeeping bookkeeping_from_json(const json& j) {
  Bookkeeping beta;
  beta.basis = parse_basis(j.at("basis").get<std::string>());
  beta.levels = j.at("levels").get<int>();
  beta.rows = j.at("rows").get<std::size_t>();
  beta.cols = j.at("cols").get<std::size_t>();
  for (const auto& s : j.at("level_shapes"))
    beta.level_shapes.push_back({s.at("level").get<int>(), s.at("rows").get<std::size_t>(), s.at("cols").get<std::size_t>(),
                                 s.at("padded_rows").get<std::size_t>(), s.at("padded_cols").get<std::size_t>()});
  for (const auto& s : j.at("subbands"))
    beta.subbands.push_back({s.at("level").get<int>(), subband_from_code(s.at("band").get<std::string>()),
                             s.at("rows").get<std::size_t>(), s.at("cols").get<std::size_t>()});
  return beta;
}

json to_json(const ClusterCountEstimate& e) {
  return {{"n_c", e.n_c},
          {"mode", std::string(to_string(e.mode))},
          {"eigengap", e.eigengap_count},
          {"near_zero", e.near_zero_count},
          {"tau_c", e.tau_c},
          {"max_k", e.max_k},
          {"undifferentiated", e.undifferentiated},
          {"ambiguous", e.ambiguous}};
}

ClusterCountEstimate estimate_from_json(const json& j) {
  ClusterCountEstimate e;
  e.n_c = j.at("n_c").get<std::size_t>();
  e.mode = parse_count_mode(j.at("mode").get<std::string>());
  e.eigengap_count = j.at("eigengap").get<std::size_t>();
  e.near_zero_count = j.at("near_zero").get<std::size_t>();
  e.tau_c = j.at("tau_c").get<double>();
  e.max_k = j.at("max_k").get<std::size_t>();
  e.undifferentiated = j.at("undifferentiated").get<bool>();
  e.ambiguous = j.at("ambiguous").get<bool>();
  return e;
}

json to_json(const CommunityResult& r) {
  json j;
  j["format_version"] = kFormatVersion;
  j["n_c"] = r.n_c;
  j["eigenvalues"] = r.eigenvalues;
  j["gaps"] = r.gaps;
  j["estimate"] = r.estimate ? to_json(*r.estimate) : json(nullptr);
  j["image_ids"] = r.image_ids;
  j["clusters"] = json::array();
  for (std::size_t c = 0; c < r.n_c; ++c) {
    json members = json::array();
    for (std::size_t i : r.members(static_cast<int>(c)))
      members.push_back(i < r.image_ids.size() ? json(r.image_ids[i]) : json(i));
    j["clusters"].push_back({{"id", c}, {"size", members.size()}, {"members", std::move(members)}});
  }
  j["permutation"] = r.permutation;
  j["block_boundaries"] = r.block_boundaries;
  j["isolated_nodes"] = r.isolated_nodes;
  j["inertia"] = r.inertia;
  return j;
}

CommunityResult community_from_json(const json& j) {
  CommunityResult r;
  r.n_c = j.at("n_c").get<std::size_t>();
  r.eigenvalues = j.at("eigenvalues").get<std::vector<double>>();
  r.gaps = j.at("gaps").get<std::vector<double>>();
  if (!j.at("estimate").is_null()) {
    r.estimate = estimate_from_json(j.at("estimate"));
    r.estimate->gaps = r.gaps;
  }
  r.image_ids = j.at("image_ids").get<std::vector<std::string>>();
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < r.image_ids.size(); ++i) index[r.image_ids[i]] = i;
  r.assignments.assign(r.image_ids.size(), -1);
  for (const auto& cluster : j.at("clusters")) {
    const int id = cluster.at("id").get<int>();
    for (const auto& member : cluster.at("members")) {
      const auto it = index.find(member.get<std::string>());
      if (it == index.end())
        throw Error(ErrorKind::corrupt_artifact, fmt::format("cluster {} lists unknown image '{}'", id, member.get<std::string>()));
      r.assignments[it->second] = id;
    }
  }
  for (int a : r.assignments)
    if (a < 0) throw Error(ErrorKind::corrupt_artifact, "communities file leaves an image unassigned");
  r.permutation = j.at("permutation").get<std::vector<std::size_t>>();
  r.block_boundaries = j.at("block_boundaries").get<std::vector<std::size_t>>();
  r.isolated_nodes = j.value("isolated_nodes", std::vector<std::size_t>{});
  r.inertia = j.value("inertia", 0.0);
  return r;
}

json to_json(const SpectrumReport& report) {
  json j;
  j["format_version"] = kFormatVersion;
  j["positive_label"] = report.positive_label;
  j["negative_label"] = report.negative_label;
  j["isolation_quantile"] = report.isolation_quantile;
  j["band"] = report.band;
  j["extreme_threshold"] = report.extreme_threshold;
  j["images"] = json::array();
  for (const auto& p : report.placements) {
    json flags = json::array();
    if (p.isolated) flags.push_back("isolated");
    if (p.borderline) flags.push_back("borderline");
    if (p.extreme) flags.push_back("extreme");
    j["images"].push_back({{"id", p.image_id}, {"label", p.label}, {"in", p.in_class_sim},
                           {"out", p.out_class_sim}, {"position", p.position}, {"flags", std::move(flags)}});
  }
  j["isolated"] = report.isolated;
  j["borderline"] = report.borderline;
  j["warnings"] = report.warnings;
  return j;
}

SpectrumReport spectrum_from_json(const json& j) {
  SpectrumReport report;
  report.positive_label = j.at("positive_label").get<std::string>();
  report.negative_label = j.at("negative_label").get<std::string>();
  report.isolation_quantile = j.at("isolation_quantile").get<double>();
  report.band = j.at("band").get<double>();
  report.extreme_threshold = j.at("extreme_threshold").get<double>();
  for (const auto& image : j.at("images")) {
    SpectrumPlacement p;
    p.image_id = image.at("id").get<std::string>();
    p.label = image.at("label").get<std::string>();
    p.in_class_sim = image.at("in").get<double>();
    p.out_class_sim = image.at("out").get<double>();
    p.position = image.at("position").get<double>();
    for (const auto& flag : image.at("flags")) {
      const auto f = flag.get<std::string>();
      p.isolated |= f == "isolated";
      p.borderline |= f == "borderline";
      p.extreme |= f == "extreme";
    }
    report.placements.push_back(std::move(p));
  }
  report.isolated = j.at("isolated").get<std::vector<std::string>>();
  report.borderline = j.at("borderline").get<std::map<std::string, std::vector<std::string>>>();
  report.warnings = j.value("warnings", std::vector<std::string>{});
  return report;
}

void write_spectrum_csv(const fs::path& path, const SpectrumReport& report) {
  std::string text = "id,label,in_class_sim,out_class_sim,position,isolated,borderline,extreme\n";
  for (const auto& p : report.placements) {
    text += csv::format_row({p.image_id, p.label, csv::format_double(p.in_class_sim),
                             csv::format_double(p.out_class_sim), csv::format_double(p.position),
                             p.isolated ? "1" : "0", p.borderline ? "1" : "0", p.extreme ? "1" : "0"});
    text.push_back('\n');
  }
  write_text_atomic(path, text);
}

void save_artifacts(const fs::path& run_dir, const RunArtifacts& a) {
  fs::create_directories(run_dir);
  const RunLayout layout{run_dir};
  if (a.manifest) write_manifest(layout.manifest(), *a.manifest);
  if (a.beta) write_json(layout.decomposition(), to_json(*a.beta));
  if (a.coefficients) write_wcm(layout.coefficients(), a.coefficients->values);
  if (a.feature_scores) write_feature_scores_csv(layout.feature_scores(), a.feature_scores->scores, a.feature_scores->kept);
  if (a.distance) write_wcm(layout.distance(), a.distance->values);
  if (a.affinity) write_wcm(layout.affinity(), a.affinity->values);
  if (a.graph) {
    json g;
    g["format_version"] = kFormatVersion;
    g["metric"] = std::string(to_string(a.graph->metric));
    g["kernel"] = std::string(to_string(a.graph->kernel));
    g["sigma"] = a.graph->sigma;
    g["knn"] = a.graph->knn ? json(*a.graph->knn) : json(nullptr);
    write_json(layout.graph(), g);
  }
  if (a.communities) write_json(layout.communities(), to_json(*a.communities));
  if (a.spectrum) {
    write_json(layout.spectrum(), to_json(*a.spectrum));
    write_spectrum_csv(layout.spectrum_csv(), *a.spectrum);
  }
}

RunArtifacts load_artifacts(const fs::path& run_dir) {
  if (!fs::is_directory(run_dir))
    throw Error(ErrorKind::missing_artifact, fmt::format("run directory '{}' does not exist", run_dir.string()));
  const RunLayout layout{run_dir};
  RunArtifacts a;
  if (fs::exists(layout.manifest())) a.manifest = read_manifest(layout.manifest());
  if (fs::exists(layout.decomposition())) {
    const json j = read_json_artifact(layout.decomposition());
    a.beta = parse_or_corrupt(layout.decomposition(), [&] { return bookkeeping_from_json(j); });
  }
  if (fs::exists(layout.coefficients())) {
    if (!a.beta || !a.manifest)
      throw Error(ErrorKind::missing_artifact, "coeffs.wcm needs decomposition.json and manifest.csv alongside it");
    CoefficientMatrix c;
    c.values = read_wcm(layout.coefficients(), a.beta->coefficient_count());
    if (static_cast<std::size_t>(c.values.rows()) != a.manifest->size())
      throw Error(ErrorKind::corrupt_artifact, "coeffs.wcm row count disagrees with manifest.csv");
    for (const auto& e : *a.manifest) c.image_ids.push_back(e.id);
    c.feature_ids = coefficient_labels(*a.beta);
    a.coefficients = std::move(c);
  }
  if (fs::exists(layout.feature_scores())) a.feature_scores = read_feature_scores_csv(layout.feature_scores());
  if (fs::exists(layout.graph())) {
    const json g = read_json_artifact(layout.graph());
    a.graph = parse_or_corrupt(layout.graph(), [&] {
      GraphInfo info;
      info.metric = parse_metric(g.at("metric").get<std::string>());
      info.kernel = parse_kernel(g.at("kernel").get<std::string>());
      info.sigma = g.at("sigma").get<double>();
      if (!g.at("knn").is_null()) info.knn = g.at("knn").get<std::size_t>();
      return info;
    });
  }
  if (fs::exists(layout.distance())) {
    a.distance = DistanceMatrix{read_wcm(layout.distance()), a.graph ? a.graph->metric : Metric::correlation};
  }
  if (fs::exists(layout.affinity())) {
    a.affinity = AffinityMatrix{read_wcm(layout.affinity()), a.graph ? a.graph->sigma : 0.0};
  }
  if (fs::exists(layout.communities())) {
    const json j = read_json_artifact(layout.communities());
    a.communities = parse_or_corrupt(layout.communities(), [&] { return community_from_json(j); });
  }
  if (fs::exists(layout.spectrum())) {
    const json j = read_json_artifact(layout.spectrum());
    a.spectrum = parse_or_corrupt(layout.spectrum(), [&] { return spectrum_from_json(j); });
  }
  return a;
}

}  // namespace wavecomm
