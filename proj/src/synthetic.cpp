#include "wavecomm/synthetic.hpp"

#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "wavecomm/error.hpp"

namespace fs = std::filesystem;

namespace wavecomm::synthetic {

double NormalStream::uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

double NormalStream::normal() {
  if (spare_) {
    const double v = *spare_;
    spare_.reset();
    return v;
  }
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  return r * std::cos(theta);
}

Eigen::MatrixXd make_template(ImageSize size, NormalStream& rng) {
  constexpr std::size_t kGrid = 8;
  Eigen::MatrixXd coarse(kGrid, kGrid);
  for (Eigen::Index r = 0; r < coarse.rows(); ++r)
    for (Eigen::Index c = 0; c < coarse.cols(); ++c) coarse(r, c) = 40.0 + 175.0 * rng.uniform();
  Eigen::MatrixXd image = resize_bilinear(coarse, size);

  const auto h = static_cast<double>(size.height);
  const auto w = static_cast<double>(size.width);
  for (int blob = 0; blob < 3; ++blob) {
    const double cy = h * rng.uniform();
    const double cx = w * rng.uniform();
    const double radius = std::max(2.0, std::min(h, w) * (0.05 + 0.1 * rng.uniform()));
    const double amplitude = (rng.uniform() < 0.5 ? -1.0 : 1.0) * (30.0 + 30.0 * rng.uniform());
    for (Eigen::Index r = 0; r < image.rows(); ++r) {
      for (Eigen::Index c = 0; c < image.cols(); ++c) {
        const double dy = static_cast<double>(r) - cy;
        const double dx = static_cast<double>(c) - cx;
        image(r, c) += amplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * radius * radius));
      }
    }
  }
  return image.cwiseMax(20.0).cwiseMin(235.0);
}

Eigen::MatrixXd add_noise(const Eigen::MatrixXd& image, double sigma, NormalStream& rng) {
  Eigen::MatrixXd out = image;
  for (Eigen::Index c = 0; c < out.cols(); ++c)
    for (Eigen::Index r = 0; r < out.rows(); ++r) out(r, c) += sigma * rng.normal();
  return out.cwiseMax(0.0).cwiseMin(255.0);
}

std::vector<LabeledImage> make_template_dataset(const TemplateOptions& options) {
  if (options.templates < 1 || options.variants < 1)
    throw Error(ErrorKind::config, "synthetic dataset needs at least one template and one variant");
  NormalStream rng(options.seed);
  std::vector<Eigen::MatrixXd> templates;
  for (std::size_t k = 0; k < options.templates; ++k) templates.push_back(make_template(options.size, rng));

  std::vector<LabeledImage> images;
  for (std::size_t k = 0; k < options.templates; ++k) {
    for (std::size_t v = 0; v < options.variants; ++v) {
      images.push_back({fmt::format("t{}_v{:02}", k, v), add_noise(templates[k], options.noise_sigma, rng),
                        fmt::format("template{}", k), static_cast<int>(k)});
    }
  }
  return images;
}

SpectrumToy make_spectrum_toy(const SpectrumToyOptions& options) {
  if (options.per_class < 2) throw Error(ErrorKind::config, "spectrum toy needs at least two images per class");
  NormalStream rng(options.seed);
  const Eigen::MatrixXd a = make_template(options.size, rng);
  const Eigen::MatrixXd b = make_template(options.size, rng);
  auto blend = [&](double t) -> Eigen::MatrixXd { return (1.0 - t) * a + t * b; };

  SpectrumToy toy;
  for (std::size_t i = 0; i < options.per_class; ++i) {
    const double t = 0.25 * rng.uniform();
    toy.images.push_back({fmt::format("mild_{:02}", i), add_noise(blend(t), options.noise_sigma, rng), "mild", 0});
  }
  for (std::size_t i = 0; i < options.per_class; ++i) {
    const double t = 1.0 - 0.25 * rng.uniform();
    toy.images.push_back({fmt::format("severe_{:02}", i), add_noise(blend(t), options.noise_sigma, rng), "severe", 1});
  }
  const Eigen::MatrixXd middle = add_noise(blend(0.5), options.noise_sigma, rng);
  toy.duplicate_a = toy.images.size();
  toy.images.push_back({"dup_mild", middle, "mild", 0});
  toy.duplicate_b = toy.images.size();
  toy.images.push_back({"dup_severe", middle, "severe", 1});
  return toy;
}

void write_dataset(const fs::path& dir, const std::vector<LabeledImage>& images) {
  fs::create_directories(dir);
  std::vector<ManifestEntry> entries;
  for (const auto& image : images) {
    const fs::path file = dir / (image.id + ".png");
    write_png(file, image.pixels);
    entries.push_back({image.id, file.filename(), image.label});
  }
  write_manifest(dir / "manifest.csv", entries);
}

}  // namespace wavecomm::synthetic
