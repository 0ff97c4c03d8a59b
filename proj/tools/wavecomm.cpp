// wavecomm: community detection in image datasets.
//
// Exit codes: 0 success, 1 stage failure, 2 input or configuration error.

#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <spdlog/spdlog.h>

#include "wavecomm/commands.hpp"
#include "wavecomm/error.hpp"
#include "wavecomm/label_service.hpp"
#include "wavecomm/synthetic.hpp"

namespace fs = std::filesystem;
using namespace wavecomm;

namespace {

constexpr int kExitStageFailure = 1;
constexpr int kExitInputError = 2;

// String-valued flags, parsed after CLI11 so errors carry our messages.
struct PipelineFlags {
  std::string basis = "db3";
  int levels = 3;
  std::string metric = "correlation";
  double keep_top = 0.2;
  double tau_w = 0.0;
  std::size_t max_k = 0;
  double tau_c = 0.0;
  std::size_t n_c = 0;
  std::string count_mode = "eigengap";
  std::string normalization = "symmetric";
  std::string kernel = "gaussian";
  std::size_t knn = 0;
  std::uint64_t seed = 7;
  std::size_t restarts = 50;

  CLI::Option* basis_opt = nullptr;
  CLI::Option* levels_opt = nullptr;
  CLI::Option* metric_opt = nullptr;
  CLI::Option* keep_top_opt = nullptr;
  CLI::Option* tau_w_opt = nullptr;
  CLI::Option* max_k_opt = nullptr;
  CLI::Option* tau_c_opt = nullptr;
  CLI::Option* n_c_opt = nullptr;
  CLI::Option* count_mode_opt = nullptr;
  CLI::Option* normalization_opt = nullptr;
  CLI::Option* kernel_opt = nullptr;
  CLI::Option* knn_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* restarts_opt = nullptr;

  void add_decompose(CLI::App& app) {
    basis_opt = app.add_option("--basis", basis, "Wavelet basis: db1 (haar) to db5")->capture_default_str();
    levels_opt = app.add_option("--levels", levels, "Decomposition levels")->capture_default_str();
  }

  void add_graph(CLI::App& app) {
    keep_top_opt = app.add_option("--keep-top", keep_top, "Keep this fraction of features by Laplacian score")
                       ->capture_default_str();
    tau_w_opt = app.add_option("--tau-w", tau_w, "Keep features with importance >= this value instead");
    keep_top_opt->excludes(tau_w_opt);
    metric_opt = app.add_option("--metric", metric, "correlation, cosine or euclidean")->capture_default_str();
    kernel_opt = app.add_option("--kernel", kernel, "gaussian, or literal for the unnormalized printed kernel")
                     ->capture_default_str();
    knn_opt = app.add_option("--knn", knn, "Sparsify the affinity to a symmetric kNN graph");
  }

  void add_cluster(CLI::App& app) {
    max_k_opt = app.add_option("--max-k", max_k, "Largest cluster count considered (default min(50, n/4))");
    tau_c_opt = app.add_option("--tau-c", tau_c, "Near-zero eigenvalue tolerance (default 1e-6)");
    n_c_opt = app.add_option("--n-c", n_c, "Use this many clusters and skip the estimate");
    count_mode_opt = app.add_option("--count-mode", count_mode, "eigengap or near-zero")->capture_default_str();
    normalization_opt =
        app.add_option("--normalization", normalization, "symmetric or unnormalized Laplacian")->capture_default_str();
    seed_opt = app.add_option("--seed", seed, "k-means seed")->capture_default_str();
    restarts_opt = app.add_option("--restarts", restarts, "k-means restarts")->capture_default_str();
  }

  static bool given(const CLI::Option* opt) { return opt != nullptr && opt->count() > 0; }

  // Applies the flags given on the command line on top of `base`.
  PipelineConfig apply(PipelineConfig base) const {
    if (given(basis_opt)) base.basis = parse_basis(basis);
    if (given(levels_opt)) base.levels = levels;
    if (given(keep_top_opt)) base.threshold = Threshold::keep_top(keep_top);
    if (given(tau_w_opt)) base.threshold = Threshold::absolute(tau_w);
    if (given(metric_opt)) base.metric = parse_metric(metric);
    if (given(kernel_opt)) base.kernel = parse_kernel(kernel);
    if (given(knn_opt)) base.knn = knn;
    if (given(max_k_opt)) base.max_k = max_k;
    if (given(tau_c_opt)) base.tau_c = tau_c;
    if (given(n_c_opt)) base.n_c = n_c;
    if (given(count_mode_opt)) base.count_mode = parse_count_mode(count_mode);
    if (given(normalization_opt)) base.normalization = parse_normalization(normalization);
    if (given(seed_opt)) base.seed = seed;
    if (given(restarts_opt)) base.kmeans_restarts = restarts;
    return base;
  }
};

struct DatasetFlags {
  std::string dataset;
  std::string out;
  std::string size = "256x256";
  std::string color = "luma";

  void add(CLI::App& app) {
    app.add_option("dataset,--dataset", dataset, "Image directory or manifest CSV (id,path,label)")->required();
    app.add_option("--out", out, "Run directory")->required();
    app.add_option("--size", size, "Common image size WIDTHxHEIGHT")->capture_default_str();
    app.add_option("--color", color, "luma, or channels to stack R, G and B")->capture_default_str();
  }

  RunConfig run_config(const PipelineConfig& pipeline) const {
    RunConfig config;
    config.dataset = dataset;
    config.out = out;
    config.size = parse_image_size(size);
    config.color = parse_color_mode(color);
    config.pipeline = pipeline;
    return config;
  }
};

void print_summary(const RunSummary& s, const fs::path& run_dir) {
  fmt::print("images: {} ({} skipped)\n", s.n_images, s.n_failed);
  fmt::print("features kept: {} of {}\n", s.n_features_kept, s.n_features);
  fmt::print("communities: {}\n", s.n_c);
  fmt::print("cluster sizes: {}\n", fmt::join(s.cluster_sizes, " "));
  if (!s.gaps.empty()) fmt::print("eigengap knee ratio: {:.3g}\n", s.knee_ratio);
  fmt::print("run directory: {}\n", run_dir.string());
}

int report_error(const Error& e) {
  spdlog::error("{}", e.what());
  return is_input_error(e.kind()) ? kExitInputError : kExitStageFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Detect communities of similar images with wavelets and spectral clustering"};
  app.require_subcommand(1);
  app.fallthrough();
  bool verbose = false;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.add_flag("-q,--quiet", quiet, "Only log errors");

  // One flag set per subcommand: CLI11 options belong to a single app.
  PipelineFlags detect_flags, decompose_flags, graph_flags, cluster_flags;
  DatasetFlags data;
  std::string run_dir;

  auto* detect = app.add_subcommand("detect", "Run the whole pipeline on a dataset");
  data.add(*detect);
  detect_flags.add_decompose(*detect);
  detect_flags.add_graph(*detect);
  detect_flags.add_cluster(*detect);

  auto* decompose = app.add_subcommand("decompose", "Load images and compute wavelet coefficients");
  data.add(*decompose);
  decompose_flags.add_decompose(*decompose);

  auto* graph = app.add_subcommand("graph", "Select features and build the affinity graph");
  graph->add_option("--run", run_dir, "Run directory")->required();
  graph_flags.add_graph(*graph);

  auto* cluster = app.add_subcommand("cluster", "Estimate the cluster count and cluster");
  cluster->add_option("--run", run_dir, "Run directory")->required();
  cluster_flags.add_cluster(*cluster);

  SpectrumRequest spectrum_request;
  std::string labels_path;
  std::string positive;
  double band = 0.0;
  auto* spectrum = app.add_subcommand("spectrum", "Place labeled images on a two-class severity axis");
  spectrum->add_option("--run", run_dir, "Run directory")->required();
  auto* labels_opt = spectrum->add_option("--labels", labels_path, "CSV with id and label columns (default: run manifest)");
  auto* positive_opt = spectrum->add_option("--positive", positive, "Class placed on the positive side");
  spectrum->add_option("--isolation-quantile", spectrum_request.isolation_quantile, "In-class similarity quantile")
      ->capture_default_str();
  auto* band_opt = spectrum->add_option("--band", band, "Borderline band (default: 10th percentile of |position|)");

  auto* report = app.add_subcommand("report", "Write heatmaps, eigenvalue plot and report.html");
  report->add_option("--run", run_dir, "Run directory")->required();

  ServeOptions serve_options;
  std::string token;
  auto* serve = app.add_subcommand("serve", "Serve the labeling API for a run");
  serve->add_option("--run", run_dir, "Run directory")->required();
  serve->add_option("--port", serve_options.port, "Port (0 picks a free one)")->capture_default_str();
  serve->add_option("--host", serve_options.host, "Bind address")->capture_default_str();
  serve->add_option("--cors-origin", serve_options.cors_origin, "Allowed CORS origin")->capture_default_str();
  auto* token_opt = serve->add_option("--token", token, "Bearer token required on POST")->envname("WAVECOMM_TOKEN");
  serve->add_option("--page-size", serve_options.page_size, "Images per page")->capture_default_str();

  synthetic::TemplateOptions synth_options;
  std::string synth_out;
  std::string synth_size = "64x64";
  bool spectrum_toy = false;
  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset with planted communities");
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--templates", synth_options.templates, "Number of templates")->capture_default_str();
  synth->add_option("--variants", synth_options.variants, "Noisy variants per template")->capture_default_str();
  synth->add_option("--size", synth_size, "Image size WIDTHxHEIGHT")->capture_default_str();
  synth->add_option("--noise", synth_options.noise_sigma, "Noise standard deviation")->capture_default_str();
  synth->add_option("--seed", synth_options.seed, "Random seed")->capture_default_str();
  synth->add_flag("--spectrum-toy", spectrum_toy, "Two blended classes with one image duplicated across them");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInputError;
  }
  spdlog::set_level(verbose ? spdlog::level::debug : quiet ? spdlog::level::err : spdlog::level::info);

  try {
    if (*detect) {
      const RunConfig config = data.run_config(detect_flags.apply({}));
      print_summary(cmd_detect(config), config.out);
    } else if (*decompose) {
      cmd_decompose(data.run_config(decompose_flags.apply({})));
    } else if (*graph) {
      cmd_graph(run_dir, graph_flags.apply(load_run_config(run_dir).pipeline));
    } else if (*cluster) {
      print_summary(cmd_cluster(run_dir, cluster_flags.apply(load_run_config(run_dir).pipeline)), run_dir);
    } else if (*spectrum) {
      spectrum_request.run_dir = run_dir;
      if (labels_opt->count() > 0) spectrum_request.labels = labels_path;
      if (positive_opt->count() > 0) spectrum_request.positive_label = positive;
      if (band_opt->count() > 0) spectrum_request.band = band;
      const SpectrumOutcome outcome = cmd_spectrum(spectrum_request);
      const auto& r = outcome.report;
      fmt::print("{} images placed ({} negative, {} positive); {} excluded, {} unknown ids\n", r.placements.size(),
                 r.negative_label, r.positive_label, outcome.unlabeled.size(), outcome.unknown_ids.size());
      fmt::print("isolated: {}\n", fmt::join(r.isolated, " "));
      for (const auto& [label, ids] : r.borderline) fmt::print("borderline {}: {}\n", label, fmt::join(ids, " "));
    } else if (*report) {
      const ReportOutcome outcome = cmd_report(run_dir);
      fmt::print("{} ({} blocks)\n", outcome.html.string(), outcome.blocks);
    } else if (*serve) {
      serve_options.run_dir = run_dir;
      if (token_opt->count() > 0 && !token.empty()) serve_options.token = token;
      LabelServer server(serve_options);
      const int port = server.bind();
      spdlog::info("listening on http://{}:{}", serve_options.host, port);
      server.listen();
    } else if (*synth) {
      synth_options.size = parse_image_size(synth_size);
      if (spectrum_toy) {
        synthetic::SpectrumToyOptions toy;
        toy.size = synth_options.size;
        toy.noise_sigma = synth_options.noise_sigma;
        toy.seed = synth_options.seed;
        synthetic::write_dataset(synth_out, synthetic::make_spectrum_toy(toy).images);
      } else {
        synthetic::write_dataset(synth_out, synthetic::make_template_dataset(synth_options));
      }
      fmt::print("wrote {}\n", (fs::path(synth_out) / "manifest.csv").string());
    }
  } catch (const Error& e) {
    return report_error(e);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitStageFailure;
  }
  return EXIT_SUCCESS;
}
