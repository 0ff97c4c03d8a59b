#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <json.hpp>

#include "wavecomm/affinity_graph.hpp"
#include "wavecomm/commands.hpp"
#include "wavecomm/dataset_io.hpp"
#include "wavecomm/disease_spectrum.hpp"
#include "wavecomm/error.hpp"
#include "wavecomm/feature_select.hpp"
#include "wavecomm/pipeline.hpp"
#include "wavecomm/spectral_cluster.hpp"
#include "wavecomm/synthetic.hpp"
#include "wavecomm/wavelet.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace wavecomm;

namespace {

std::vector<std::string> default_ids(std::size_t n, const std::optional<std::vector<std::string>>& ids) {
  if (ids) {
    if (ids->size() != n) throw Error(ErrorKind::input, "ids must have one entry per row");
    return *ids;
  }
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(std::to_string(i));
  return out;
}

Threshold make_threshold(std::optional<double> keep_top, std::optional<double> tau) {
  if (keep_top && tau) throw Error(ErrorKind::config, "give either keep_top or tau, not both");
  if (tau) return Threshold::absolute(*tau);
  return Threshold::keep_top(keep_top.value_or(0.2));
}

py::dict to_dict(const ClusterCountEstimate& e) {
  py::dict d;
  d["n_c"] = e.n_c;
  d["mode"] = std::string(to_string(e.mode));
  d["eigengap_count"] = e.eigengap_count;
  d["near_zero_count"] = e.near_zero_count;
  d["tau_c"] = e.tau_c;
  d["max_k"] = e.max_k;
  d["gaps"] = e.gaps;
  d["undifferentiated"] = e.undifferentiated;
  d["ambiguous"] = e.ambiguous;
  return d;
}

py::dict to_dict(const CommunityResult& r) {
  py::dict d;
  d["n_c"] = r.n_c;
  d["image_ids"] = r.image_ids;
  d["assignments"] = r.assignments;
  d["permutation"] = r.permutation;
  d["block_boundaries"] = r.block_boundaries;
  d["eigenvalues"] = r.eigenvalues;
  d["gaps"] = r.gaps;
  d["estimate"] = r.estimate ? py::object(to_dict(*r.estimate)) : py::none();
  d["isolated_nodes"] = r.isolated_nodes;
  d["inertia"] = r.inertia;
  return d;
}

py::dict to_dict(const SpectrumReport& r) {
  py::list placements;
  for (const auto& p : r.placements) {
    py::dict item;
    item["image_id"] = p.image_id;
    item["label"] = p.label;
    item["in_class_sim"] = p.in_class_sim;
    item["out_class_sim"] = p.out_class_sim;
    item["position"] = p.position;
    item["isolated"] = p.isolated;
    item["borderline"] = p.borderline;
    item["extreme"] = p.extreme;
    placements.append(item);
  }
  py::dict d;
  d["positive_label"] = r.positive_label;
  d["negative_label"] = r.negative_label;
  d["placements"] = placements;
  d["band"] = r.band;
  d["extreme_threshold"] = r.extreme_threshold;
  d["isolated"] = r.isolated;
  d["borderline"] = r.borderline;
  d["warnings"] = r.warnings;
  return d;
}

py::object summary_dict(const RunSummary& s) { return py::module_::import("json").attr("loads")(to_json(s).dump()); }

PipelineConfig make_pipeline(const std::string& basis, int levels, std::optional<double> keep_top,
                             std::optional<double> tau, const std::string& metric, std::optional<std::size_t> max_k,
                             std::optional<std::size_t> n_c, std::uint64_t seed) {
  PipelineConfig c;
  c.basis = parse_basis(basis);
  c.levels = levels;
  c.threshold = make_threshold(keep_top, tau);
  c.metric = parse_metric(metric);
  c.max_k = max_k;
  c.n_c = n_c;
  c.seed = seed;
  c.validate();
  return c;
}

RunConfig make_run(const fs::path& dataset, const fs::path& out, const std::string& size, const PipelineConfig& p) {
  RunConfig r;
  r.dataset = dataset;
  r.out = out;
  r.size = parse_image_size(size);
  r.pipeline = p;
  r.validate();
  return r;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Wavelet-feature spectral community detection";
  m.attr("__version__") = WAVECOMM_VERSION;

  static py::handle error_type = py::exception<Error>(m, "Error", PyExc_RuntimeError).release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object instance = error_type(e.what());
      instance.attr("kind") = std::string(to_string(e.kind()));
      instance.attr("stage") = e.stage();
      instance.attr("hint") = e.hint();
      PyErr_SetObject(error_type.ptr(), instance.ptr());
    }
  });

  m.def(
      "filters",
      [](const std::string& basis) {
        const auto b = basis_filters(parse_basis(basis));
        py::dict d;
        d["lo_d"] = b.lo_d;
        d["hi_d"] = b.hi_d;
        d["lo_r"] = b.lo_r;
        d["hi_r"] = b.hi_r;
        return d;
      },
      py::arg("basis"));

  m.def(
      "wavedec2",
      [](const Eigen::MatrixXd& image, const std::string& basis, int levels) {
        const auto r = wavedec2(image, basis_filters(parse_basis(basis)), levels);
        py::dict d;
        d["omega"] = Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(r.omega.data(), static_cast<Eigen::Index>(r.omega.size())));
        d["labels"] = coefficient_labels(r.beta);
        d["shape"] = py::make_tuple(r.beta.rows, r.beta.cols);
        d["basis"] = basis;
        d["levels"] = levels;
        return d;
      },
      py::arg("image"), py::arg("basis") = "db3", py::arg("levels") = 3);

  m.def(
      "waverec2",
      [](const std::vector<double>& omega, std::pair<std::size_t, std::size_t> shape, const std::string& basis,
         int levels) {
        const auto name = parse_basis(basis);
        DecompResult d;
        d.beta = plan_decomposition(shape.first, shape.second, name, levels);
        d.levels = levels;
        d.omega = omega;
        return waverec2(d, basis_filters(name));
      },
      py::arg("omega"), py::arg("shape"), py::arg("basis") = "db3", py::arg("levels") = 3);

  m.def(
      "laplacian_score",
      [](const Eigen::MatrixXd& x, std::optional<std::size_t> k, std::optional<double> bandwidth) {
        CoefficientMatrix c;
        c.values = x;
        c.image_ids = default_ids(static_cast<std::size_t>(x.rows()), std::nullopt);
        c.feature_ids = default_ids(static_cast<std::size_t>(x.cols()), std::nullopt);
        const auto s = laplacian_score(c, {k, bandwidth});
        py::dict d;
        d["importance"] = s.importance;
        d["raw"] = s.raw;
        d["constant_columns"] = s.constant_columns;
        d["k_neighbors"] = s.k_neighbors;
        d["bandwidth"] = s.bandwidth;
        return d;
      },
      py::arg("x"), py::arg("k") = py::none(), py::arg("bandwidth") = py::none());

  m.def(
      "select_features",
      [](const std::vector<double>& importance, std::optional<double> keep_top, std::optional<double> tau) {
        FeatureScores s;
        s.importance = importance;
        s.raw.assign(importance.size(), 0.0);
        s.ids = default_ids(importance.size(), std::nullopt);
        return selected_columns(s, make_threshold(keep_top, tau));
      },
      py::arg("importance"), py::arg("keep_top") = py::none(), py::arg("tau") = py::none());

  m.def(
      "distances",
      [](const Eigen::MatrixXd& rows, const std::string& metric) {
        return pairwise_distances(rows, parse_metric(metric)).values;
      },
      py::arg("rows"), py::arg("metric") = "correlation");

  m.def(
      "affinity",
      [](const Eigen::MatrixXd& d, const std::string& kernel) {
        const auto a = affinity_from_distances({d, Metric::correlation}, parse_kernel(kernel));
        return py::make_tuple(a.values, a.sigma);
      },
      py::arg("distances"), py::arg("kernel") = "gaussian");

  m.def(
      "laplacian",
      [](const Eigen::MatrixXd& w, const std::string& normalization) {
        return graph_laplacian(w, parse_normalization(normalization)).values;
      },
      py::arg("w"), py::arg("normalization") = "symmetric");

  m.def(
      "eigendecompose",
      [](const Eigen::MatrixXd& l, std::optional<std::size_t> k) {
        const auto s = eigendecompose(l, k.value_or(static_cast<std::size_t>(l.rows())));
        return py::make_tuple(s.eigenvalues, s.eigenvectors);
      },
      py::arg("laplacian"), py::arg("k") = py::none());

  m.def(
      "estimate_num_clusters",
      [](const std::vector<double>& eigenvalues, std::size_t max_k, std::optional<double> tau_c,
         const std::string& mode) {
        return to_dict(estimate_num_clusters(eigenvalues, max_k, tau_c, parse_count_mode(mode)));
      },
      py::arg("eigenvalues"), py::arg("max_k"), py::arg("tau_c") = py::none(), py::arg("mode") = "eigengap");

  m.def("default_max_k", &default_max_k, py::arg("n"));

  m.def(
      "spectral_cluster",
      [](const Eigen::MatrixXd& w, std::size_t n_c, std::uint64_t seed) {
        return to_dict(spectral_cluster(AffinityMatrix{w, 0.0}, n_c, seed));
      },
      py::arg("w"), py::arg("n_c"), py::arg("seed") = 7);

  m.def(
      "infer_spectrum",
      [](const Eigen::MatrixXd& w, const std::vector<std::string>& ids, const std::vector<std::string>& labels,
         std::optional<std::string> positive_label) {
        SpectrumOptions options;
        options.positive_label = positive_label;
        return to_dict(infer_spectrum(w, ids, labels, options));
      },
      py::arg("w"), py::arg("ids"), py::arg("labels"), py::arg("positive_label") = py::none());

  m.def(
      "detect_communities",
      [](const std::vector<Eigen::MatrixXd>& images, std::optional<std::vector<std::string>> ids,
         const std::string& basis, int levels, std::optional<double> keep_top, std::optional<double> tau,
         const std::string& metric, std::optional<std::size_t> max_k, std::optional<std::size_t> n_c,
         std::uint64_t seed) {
        const auto config = make_pipeline(basis, levels, keep_top, tau, metric, max_k, n_c, seed);
        const auto names = default_ids(images.size(), ids);
        const auto r = [&] {
          py::gil_scoped_release release;
          return detect_communities(images, names, config);
        }();
        py::dict d = to_dict(r.communities);
        d["affinity"] = r.graph.affinity.values;
        d["sigma"] = r.graph.affinity.sigma;
        d["kept_features"] = r.selection.kept;
        d["importance"] = r.selection.scores.importance;
        d["knee_ratio"] = r.communities.estimate ? knee_ratio(*r.communities.estimate) : 0.0;
        return d;
      },
      py::arg("images"), py::arg("ids") = py::none(), py::arg("basis") = "db3", py::arg("levels") = 3,
      py::arg("keep_top") = py::none(), py::arg("tau") = py::none(), py::arg("metric") = "correlation",
      py::arg("max_k") = py::none(), py::arg("n_c") = py::none(), py::arg("seed") = 7);

  m.def(
      "load_dataset",
      [](const fs::path& path, const std::string& size) {
        const auto ds = load_dataset(path, parse_image_size(size));
        py::list records;
        for (const auto& r : ds.records) {
          py::dict item;
          item["id"] = r.id;
          item["pixels"] = r.pixels;
          item["label"] = r.label ? py::object(py::str(*r.label)) : py::none();
          records.append(item);
        }
        return records;
      },
      py::arg("path"), py::arg("size") = "256x256");

  m.def(
      "synth_dataset",
      [](const fs::path& out, std::size_t templates, std::size_t variants, const std::string& size,
         std::uint64_t seed) {
        synthetic::TemplateOptions o;
        o.templates = templates;
        o.variants = variants;
        o.size = parse_image_size(size);
        o.seed = seed;
        synthetic::write_dataset(out, synthetic::make_template_dataset(o));
        return out / "manifest.csv";
      },
      py::arg("out"), py::arg("templates") = 3, py::arg("variants") = 15, py::arg("size") = "64x64",
      py::arg("seed") = 7);

  m.def(
      "cmd_detect",
      [](const fs::path& dataset, const fs::path& out, const std::string& size, const std::string& basis, int levels,
         std::optional<double> keep_top, const std::string& metric, std::optional<std::size_t> max_k,
         std::uint64_t seed) {
        const auto run = make_run(dataset, out, size, make_pipeline(basis, levels, keep_top, std::nullopt, metric,
                                                                    max_k, std::nullopt, seed));
        return summary_dict(run_stage("detect", [&] { return cmd_detect(run); }));
      },
      py::arg("dataset"), py::arg("out"), py::arg("size") = "256x256", py::arg("basis") = "db3",
      py::arg("levels") = 3, py::arg("keep_top") = py::none(), py::arg("metric") = "correlation",
      py::arg("max_k") = py::none(), py::arg("seed") = 7);

  m.def(
      "cmd_decompose",
      [](const fs::path& dataset, const fs::path& out, const std::string& size, const std::string& basis,
         int levels) {
        const auto run = make_run(dataset, out, size,
                                  make_pipeline(basis, levels, std::nullopt, std::nullopt, "correlation",
                                                std::nullopt, std::nullopt, 7));
        run_stage("decompose", [&] { cmd_decompose(run); });
      },
      py::arg("dataset"), py::arg("out"), py::arg("size") = "256x256", py::arg("basis") = "db3",
      py::arg("levels") = 3);

  m.def(
      "cmd_graph",
      [](const fs::path& run_dir, std::optional<double> keep_top, std::optional<std::string> metric) {
        run_stage("graph", [&] {
          auto config = load_run_config(run_dir).pipeline;
          if (keep_top) config.threshold = Threshold::keep_top(*keep_top);
          if (metric) config.metric = parse_metric(*metric);
          config.validate();
          cmd_graph(run_dir, config);
        });
      },
      py::arg("run"), py::arg("keep_top") = py::none(), py::arg("metric") = py::none());

  m.def(
      "cmd_cluster",
      [](const fs::path& run_dir, std::optional<std::size_t> max_k, std::optional<std::size_t> n_c,
         std::optional<std::uint64_t> seed) {
        return summary_dict(run_stage("cluster", [&] {
          auto config = load_run_config(run_dir).pipeline;
          if (max_k) config.max_k = max_k;
          if (n_c) config.n_c = n_c;
          if (seed) config.seed = *seed;
          config.validate();
          return cmd_cluster(run_dir, config);
        }));
      },
      py::arg("run"), py::arg("max_k") = py::none(), py::arg("n_c") = py::none(), py::arg("seed") = py::none());

  m.def(
      "cmd_spectrum",
      [](const fs::path& run_dir, std::optional<fs::path> labels, std::optional<std::string> positive_label) {
        SpectrumRequest request;
        request.run_dir = run_dir;
        request.labels = labels;
        request.positive_label = positive_label;
        const auto outcome = run_stage("spectrum", [&] { return cmd_spectrum(request); });
        py::dict d = to_dict(outcome.report);
        d["unlabeled"] = outcome.unlabeled;
        d["unknown_ids"] = outcome.unknown_ids;
        return d;
      },
      py::arg("run"), py::arg("labels") = py::none(), py::arg("positive_label") = py::none());

  m.def(
      "cmd_report", [](const fs::path& run_dir) { return run_stage("report", [&] { return cmd_report(run_dir); }).html; },
      py::arg("run"));
}
