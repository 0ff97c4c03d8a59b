#include "wavecomm/commands.hpp"

#include <algorithm>
#include <map>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "wavecomm/artifacts.hpp"
#include "wavecomm/csv.hpp"
#include "wavecomm/error.hpp"
#include "report.hpp"

namespace fs = std::filesystem;

namespace wavecomm {

namespace {

template <class T>
json optional_json(const std::optional<T>& value) {
  return value ? json(*value) : json(nullptr);
}

template <class T>
std::optional<T> optional_from(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

json pipeline_to_json(const PipelineConfig& p) {
  return {{"basis", std::string(to_string(p.basis))},
          {"levels", p.levels},
          {"threshold",
           {{"mode", p.threshold.mode == Threshold::Mode::keep_top ? "keep_top" : "absolute"},
            {"value", p.threshold.value}}},
          {"metric", std::string(to_string(p.metric))},
          {"kernel", std::string(to_string(p.kernel))},
          {"knn", optional_json(p.knn)},
          {"normalization", std::string(to_string(p.normalization))},
          {"max_k", optional_json(p.max_k)},
          {"tau_c", optional_json(p.tau_c)},
          {"count_mode", std::string(to_string(p.count_mode))},
          {"n_c", optional_json(p.n_c)},
          {"seed", p.seed},
          {"kmeans_restarts", p.kmeans_restarts}};
}

PipelineConfig pipeline_from_json(const json& j) {
  PipelineConfig p;
  p.basis = parse_basis(j.at("basis").get<std::string>());
  p.levels = j.at("levels").get<int>();
  const auto& t = j.at("threshold");
  const double value = t.at("value").get<double>();
  p.threshold = t.at("mode").get<std::string>() == "keep_top" ? Threshold::keep_top(value) : Threshold::absolute(value);
  p.metric = parse_metric(j.at("metric").get<std::string>());
  p.kernel = parse_kernel(j.at("kernel").get<std::string>());
  p.knn = optional_from<std::size_t>(j, "knn");
  p.normalization = parse_normalization(j.at("normalization").get<std::string>());
  p.max_k = optional_from<std::size_t>(j, "max_k");
  p.tau_c = optional_from<double>(j, "tau_c");
  p.count_mode = parse_count_mode(j.at("count_mode").get<std::string>());
  p.n_c = optional_from<std::size_t>(j, "n_c");
  p.seed = j.at("seed").get<std::uint64_t>();
  p.kmeans_restarts = j.at("kmeans_restarts").get<std::size_t>();
  return p;
}

std::vector<std::string> ids_of(const std::vector<ManifestEntry>& manifest) {
  std::vector<std::string> ids;
  ids.reserve(manifest.size());
  for (const auto& e : manifest) ids.push_back(e.id);
  return ids;
}

void write_dataset_artifacts(const RunLayout& layout, const Dataset& dataset, const fs::path& source) {
  std::vector<ManifestEntry> manifest;
  json images = json::array();
  for (const auto& r : dataset.records) {
    const fs::path path = fs::absolute(r.source_path).lexically_normal();
    manifest.push_back({r.id, path, r.label});
    images.push_back({{"id", r.id}, {"path", path.string()}, {"checksum", r.checksum}, {"label", optional_json(r.label)}});
  }
  json failures = json::array();
  for (const auto& f : dataset.failures) failures.push_back({{"path", f.path}, {"message", f.message}});
  write_manifest(layout.manifest(), manifest);
  write_json(layout.dataset(), {{"format_version", kFormatVersion},
                                {"source", fs::absolute(source).lexically_normal().string()},
                                {"size", to_string(dataset.target)},
                                {"color", std::string(to_string(dataset.color))},
                                {"images", std::move(images)},
                                {"failures", std::move(failures)}});
}

void save_decomposition(const RunLayout& layout, const Decomposition& d) {
  write_json(layout.decomposition(), to_json(d.beta));
  write_wcm(layout.coefficients(), d.coefficients.values);
}

void save_graph(const RunLayout& layout, const Selection& selection, const Graph& graph, const PipelineConfig& p) {
  write_feature_scores_csv(layout.feature_scores(), selection.scores, selection.kept);
  write_wcm(layout.distance(), graph.distance.values);
  write_wcm(layout.affinity(), graph.affinity.values);
  write_json(layout.graph(), {{"format_version", kFormatVersion},
                              {"metric", std::string(to_string(p.metric))},
                              {"kernel", std::string(to_string(p.kernel))},
                              {"sigma", graph.affinity.sigma},
                              {"knn", optional_json(p.knn)},
                              {"features_kept", selection.kept.size()},
                              {"features_total", selection.scores.importance.size()}});
}

RunSummary summarize(const CommunityResult& communities, std::size_t n_features, std::size_t n_kept,
                     std::size_t n_failed) {
  RunSummary s;
  s.n_images = communities.image_ids.size();
  s.n_failed = n_failed;
  s.n_features = n_features;
  s.n_features_kept = n_kept;
  s.n_c = communities.n_c;
  s.cluster_sizes = communities.cluster_sizes();
  s.gaps = communities.gaps;
  const std::size_t shown = std::min(communities.eigenvalues.size(), std::max(s.gaps.size(), s.n_c) + 1);
  s.eigenvalues.assign(communities.eigenvalues.begin(), communities.eigenvalues.begin() + static_cast<std::ptrdiff_t>(shown));
  if (communities.estimate) s.knee_ratio = knee_ratio(*communities.estimate);
  return s;
}

std::size_t count_failures(const RunLayout& layout) {
  if (!fs::exists(layout.dataset())) return 0;
  return read_json_artifact(layout.dataset()).at("failures").size();
}

void require(const fs::path& path, std::string_view producer) {
  if (!fs::exists(path)) {
    throw Error(ErrorKind::missing_artifact,
                fmt::format("'{}' is missing; run `wavecomm {}` first", path.string(), producer));
  }
}

// Drops outputs of later stages so a re-run never mixes generations.
void remove_stale(const RunLayout& layout, std::initializer_list<fs::path> files) {
  for (const auto& f : files) fs::remove(f);
  fs::remove_all(layout.dir / "report");
  fs::remove(layout.report());
}

void save_run_config(const RunLayout& layout, RunConfig config) {
  write_json(layout.config(), to_json(config));
}

}  // namespace

void RunConfig::validate() const {
  if (dataset.empty()) throw Error(ErrorKind::config, "a dataset path is required");
  if (out.empty()) throw Error(ErrorKind::config, "an output directory (--out) is required");
  if (size.width == 0 || size.height == 0) throw Error(ErrorKind::config, "--size must be positive");
  pipeline.validate();
  const std::size_t rows = color == ColorMode::channels ? 3 * size.height : size.height;
  try {
    plan_decomposition(rows, size.width, pipeline.basis, pipeline.levels);
  } catch (const Error& e) {
    throw Error(ErrorKind::config, e.what());
  }
}

json to_json(const RunConfig& config) {
  return {{"format_version", kFormatVersion},
          {"dataset", config.dataset.string()},
          {"out", config.out.string()},
          {"size", to_string(config.size)},
          {"color", std::string(to_string(config.color))},
          {"pipeline", pipeline_to_json(config.pipeline)}};
}

RunConfig run_config_from_json(const json& j) {
  RunConfig config;
  config.dataset = j.at("dataset").get<std::string>();
  config.out = j.at("out").get<std::string>();
  config.size = parse_image_size(j.at("size").get<std::string>());
  config.color = parse_color_mode(j.at("color").get<std::string>());
  config.pipeline = pipeline_from_json(j.at("pipeline"));
  return config;
}

RunConfig load_run_config(const fs::path& run_dir) {
  const RunLayout layout{run_dir};
  require(layout.config(), "detect");
  const json j = read_json_artifact(layout.config());
  try {
    return run_config_from_json(j);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(ErrorKind::corrupt_artifact, fmt::format("'{}' is malformed: {}", layout.config().string(), e.what()));
  }
}

json to_json(const RunSummary& s) {
  return {{"format_version", kFormatVersion},
          {"n_images", s.n_images},
          {"n_failed", s.n_failed},
          {"n_features", s.n_features},
          {"n_features_kept", s.n_features_kept},
          {"n_c", s.n_c},
          {"cluster_sizes", s.cluster_sizes},
          {"eigenvalues", s.eigenvalues},
          {"gaps", s.gaps},
          {"knee_ratio", s.knee_ratio}};
}

void cmd_decompose(const RunConfig& config) {
  run_stage("config", [&] { config.validate(); });
  const RunLayout layout{config.out};
  fs::create_directories(config.out);
  save_run_config(layout, config);
  remove_stale(layout, {layout.coefficients(), layout.decomposition(), layout.feature_scores(), layout.distance(),
                        layout.affinity(), layout.graph(), layout.communities(), layout.summary(), layout.spectrum(),
                        layout.spectrum_csv()});
  const Dataset dataset = run_stage("load", [&] { return load_dataset(config.dataset, config.size, config.color); });
  write_dataset_artifacts(layout, dataset, config.dataset);

  std::vector<Eigen::MatrixXd> images;
  std::vector<std::string> ids;
  for (const auto& r : dataset.records) {
    images.push_back(r.pixels);
    ids.push_back(r.id);
  }
  const Decomposition d = run_stage("decompose", [&] {
    return decompose_images(images, ids, config.pipeline.basis, config.pipeline.levels);
  });
  save_decomposition(layout, d);
}

void cmd_graph(const fs::path& run_dir, const PipelineConfig& config) {
  run_stage("config", [&] { config.validate(); });
  const RunLayout layout{run_dir};
  RunConfig run = load_run_config(run_dir);
  require(layout.coefficients(), "decompose");
  require(layout.decomposition(), "decompose");
  require(layout.manifest(), "decompose");
  const CoefficientMatrix coefficients = run_stage("load", [&] {
    const Bookkeeping beta = bookkeeping_from_json(read_json_artifact(layout.decomposition()));
    const auto manifest = read_manifest(layout.manifest());
    CoefficientMatrix c;
    c.values = read_wcm(layout.coefficients(), beta.coefficient_count());
    if (static_cast<std::size_t>(c.values.rows()) != manifest.size())
      throw Error(ErrorKind::corrupt_artifact, "coeffs.wcm and manifest.csv disagree on the number of images");
    c.image_ids = ids_of(manifest);
    c.feature_ids = coefficient_labels(beta);
    return c;
  });
  run.pipeline = config;
  save_run_config(layout, run);
  remove_stale(layout, {layout.communities(), layout.summary(), layout.spectrum(), layout.spectrum_csv()});

  const Selection selection = run_stage("select", [&] { return score_and_select(coefficients, config.threshold); });
  const Graph graph = run_stage("graph", [&] { return build_graph(selection.selected, config.metric, config.kernel, config.knn); });
  save_graph(layout, selection, graph, config);
}

RunSummary cmd_cluster(const fs::path& run_dir, const PipelineConfig& config) {
  run_stage("config", [&] { config.validate(); });
  const RunLayout layout{run_dir};
  RunConfig run = load_run_config(run_dir);
  require(layout.affinity(), "graph");
  require(layout.manifest(), "decompose");
  const auto manifest = run_stage("load", [&] { return read_manifest(layout.manifest()); });
  const Eigen::MatrixXd w = run_stage("load", [&] { return read_wcm(layout.affinity()); });
  if (static_cast<std::size_t>(w.rows()) != manifest.size())
    throw Error(ErrorKind::corrupt_artifact, "affinity.wcm and manifest.csv disagree on the number of images")
        .at_stage("load", std::string(remediation_hint(ErrorKind::corrupt_artifact)));
  run.pipeline = config;
  save_run_config(layout, run);
  remove_stale(layout, {layout.communities(), layout.summary()});

  const std::vector<std::string> ids = ids_of(manifest);
  const CommunityResult communities = run_stage("cluster", [&] {
    return find_communities(AffinityMatrix{w, 0.0}, ids, config);
  });
  write_json(layout.communities(), to_json(communities));

  std::size_t n_features = 0;
  std::size_t n_kept = 0;
  if (fs::exists(layout.feature_scores())) {
    const auto scores = read_feature_scores_csv(layout.feature_scores());
    n_features = scores.scores.importance.size();
    n_kept = scores.kept.size();
  }
  const RunSummary summary = summarize(communities, n_features, n_kept, count_failures(layout));
  write_json(layout.summary(), to_json(summary));
  return summary;
}

RunSummary cmd_detect(const RunConfig& config) {
  run_stage("config", [&] { config.validate(); });
  cmd_decompose(config);
  const RunLayout layout{config.out};
  cmd_graph(config.out, config.pipeline);
  const RunSummary summary = cmd_cluster(config.out, config.pipeline);
  spdlog::info("{} images, {} of {} features kept, {} communities (sizes {})", summary.n_images,
               summary.n_features_kept, summary.n_features, summary.n_c, fmt::join(summary.cluster_sizes, ", "));
  return summary;
}

std::vector<std::pair<std::string, std::string>> read_label_file(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::input, fmt::format("labels file '{}' does not exist", path.string()));
  const auto rows = csv::read_file(path);
  if (rows.empty()) throw Error(ErrorKind::input, fmt::format("labels file '{}' is empty", path.string()));
  std::optional<std::size_t> id_col;
  std::optional<std::size_t> label_col;
  for (std::size_t i = 0; i < rows.front().size(); ++i) {
    if (rows.front()[i] == "id") id_col = i;
    if (rows.front()[i] == "label") label_col = i;
  }
  if (!id_col || !label_col)
    throw Error(ErrorKind::input, fmt::format("labels file '{}' needs a header with id and label columns", path.string()));
  std::vector<std::pair<std::string, std::string>> labels;
  std::set<std::string> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() <= std::max(*id_col, *label_col) || row[*label_col].empty()) continue;
    if (!seen.insert(row[*id_col]).second)
      throw Error(ErrorKind::input, fmt::format("labels file '{}': duplicate id '{}'", path.string(), row[*id_col]));
    labels.emplace_back(row[*id_col], row[*label_col]);
  }
  return labels;
}

SpectrumOutcome cmd_spectrum(const SpectrumRequest& request) {
  const RunLayout layout{request.run_dir};
  require(layout.affinity(), "graph");
  require(layout.manifest(), "decompose");
  const auto manifest = read_manifest(layout.manifest());
  const Eigen::MatrixXd w = read_wcm(layout.affinity());
  if (static_cast<std::size_t>(w.rows()) != manifest.size())
    throw Error(ErrorKind::corrupt_artifact, "affinity.wcm and manifest.csv disagree on the number of images");

  std::map<std::string, std::string> labels;
  SpectrumOutcome outcome;
  if (request.labels) {
    std::set<std::string> known;
    for (const auto& e : manifest) known.insert(e.id);
    for (auto& [id, label] : read_label_file(*request.labels)) {
      if (known.contains(id)) {
        labels[id] = label;
      } else {
        outcome.unknown_ids.push_back(id);
      }
    }
    if (!outcome.unknown_ids.empty())
      spdlog::warn("{} label row(s) name images that are not in the run; ignored", outcome.unknown_ids.size());
  } else {
    for (const auto& e : manifest)
      if (e.label) labels[e.id] = *e.label;
  }

  std::vector<Eigen::Index> keep;
  std::vector<std::string> ids;
  std::vector<std::string> classes;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const auto it = labels.find(manifest[i].id);
    if (it == labels.end()) {
      outcome.unlabeled.push_back(manifest[i].id);
      continue;
    }
    keep.push_back(static_cast<Eigen::Index>(i));
    ids.push_back(manifest[i].id);
    classes.push_back(it->second);
  }
  if (!outcome.unlabeled.empty())
    spdlog::warn("{} image(s) have no label and are excluded from the spectrum", outcome.unlabeled.size());

  const Eigen::MatrixXd sub = w(keep, keep);
  SpectrumOptions options;
  options.positive_label = request.positive_label;
  options.isolation_quantile = request.isolation_quantile;
  options.band = request.band;
  outcome.report = run_stage("spectrum", [&] { return infer_spectrum(sub, ids, classes, options); });
  if (!outcome.unlabeled.empty())
    outcome.report.warnings.push_back(fmt::format("{} unlabeled image(s) excluded", outcome.unlabeled.size()));
  if (!outcome.unknown_ids.empty())
    outcome.report.warnings.push_back(fmt::format("{} label(s) for unknown image ids ignored", outcome.unknown_ids.size()));

  json document = to_json(outcome.report);
  document["excluded"] = outcome.unlabeled;
  document["unknown_ids"] = outcome.unknown_ids;
  write_json(layout.spectrum(), document);
  write_spectrum_csv(layout.spectrum_csv(), outcome.report);
  return outcome;
}

ReportOutcome cmd_report(const fs::path& run_dir) {
  const RunLayout layout{run_dir};
  require(layout.affinity(), "graph");
  require(layout.communities(), "cluster");
  return run_stage("report", [&] {
    const AffinityMatrix affinity{read_wcm(layout.affinity()), 0.0};
    const CommunityResult communities = community_from_json(read_json_artifact(layout.communities()));
    if (static_cast<std::size_t>(affinity.values.rows()) != communities.image_ids.size())
      throw Error(ErrorKind::corrupt_artifact, "affinity.wcm and communities.json disagree on the number of images");
    std::optional<SpectrumReport> spectrum;
    if (fs::exists(layout.spectrum())) spectrum = spectrum_from_json(read_json_artifact(layout.spectrum()));
    return render_report(layout, affinity, communities, spectrum);
  });
}

}  // namespace wavecomm
