#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wavecomm/dataset_io.hpp"

namespace wavecomm::synthetic {

// Uniform and standard-normal draws (Box-Muller) on a 64-bit Mersenne Twister,
// so the stream is identical across standard libraries.
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed) : rng_(seed) {}

  double uniform();  // [0, 1)
  double normal();

 private:
  std::mt19937_64 rng_;
  std::optional<double> spare_;
};

// Smooth random field (coarse grid upsampled bilinearly) plus a few Gaussian
// blobs, in roughly [20, 235].
Eigen::MatrixXd make_template(ImageSize size, NormalStream& rng);

// Adds i.i.d. Gaussian noise and clamps to [0, 255].
Eigen::MatrixXd add_noise(const Eigen::MatrixXd& image, double sigma, NormalStream& rng);

struct TemplateOptions {
  std::size_t templates = 3;
  std::size_t variants = 15;
  ImageSize size{64, 64};
  double noise_sigma = 12.75;  // 5% of 255
  std::uint64_t seed = 7;
};

struct LabeledImage {
  std::string id;
  Eigen::MatrixXd pixels;
  std::string label;
  int truth = 0;
};

// `variants` noisy copies of each of `templates` random templates. Ids are
// "t<k>_v<j>", labels "template<k>", truth k.
std::vector<LabeledImage> make_template_dataset(const TemplateOptions& options);

struct SpectrumToyOptions {
  std::size_t per_class = 12;
  ImageSize size{64, 64};
  double noise_sigma = 12.75;
  std::uint64_t seed = 11;
};

/// Two classes ("mild", "severe") drawn along a blend between two templates,
/// mild near the first and severe near the second, plus one image at the
/// exact midpoint that appears once in each class.
struct SpectrumToy {
  std::vector<LabeledImage> images;
  std::size_t duplicate_a = 0;  // index labeled "mild"
  std::size_t duplicate_b = 0;  // index labeled "severe"
};

SpectrumToy make_spectrum_toy(const SpectrumToyOptions& options);

// Writes <id>.png files and a manifest.csv (id,path,label) into `dir`.
void write_dataset(const std::filesystem::path& dir, const std::vector<LabeledImage>& images);

}  // namespace wavecomm::synthetic
