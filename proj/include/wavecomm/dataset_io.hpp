#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace wavecomm {

struct ImageSize {
  std::size_t width = 256;
  std::size_t height = 256;

  bool operator==(const ImageSize&) const = default;
};

// "WIDTHxHEIGHT", e.g. "256x256".
ImageSize parse_image_size(std::string_view text);
std::string to_string(const ImageSize& size);

enum class ColorMode {
  luma,      // 0.299 R + 0.587 G + 0.114 B
  channels,  // R, G and B planes stacked vertically (3H x W)
};

ColorMode parse_color_mode(std::string_view name);
std::string_view to_string(ColorMode mode) noexcept;

struct ImageRecord {
  std::string id;
  std::filesystem::path source_path;
  Eigen::MatrixXd pixels;  // rows = height, values in [0, 255]
  std::optional<std::string> label;
  std::string checksum;    // SHA-256 of the file bytes, hex
};

struct ManifestEntry {
  std::string id;
  std::filesystem::path path;
  std::optional<std::string> label;

  bool operator==(const ManifestEntry&) const = default;
};

// CSV with header id,path,label (any column order; label optional). Relative
// paths are resolved against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

struct LoadIssue {
  std::string path;
  std::string message;
};

struct Dataset {
  std::vector<ImageRecord> records;  // sorted by id
  std::vector<LoadIssue> failures;
  ImageSize target;
  ColorMode color = ColorMode::luma;
};

/// Loads a directory (recursively, PNG/JPEG/BMP) or a manifest CSV. A directory
/// holding a `manifest.csv` is read through that manifest.
///
/// Images are converted to grayscale and bilinearly resized to `target`.
/// Unreadable files are collected in `failures`; zero valid images is an
/// ingestion error.
Dataset load_dataset(const std::filesystem::path& root_or_manifest, ImageSize target,
                     ColorMode color = ColorMode::luma);

// Decodes one file into pixel planes (1 for gray, 3 for color, alpha dropped)
// scaled to [0, 255].
std::vector<Eigen::MatrixXd> decode_image(const std::filesystem::path& path);

Eigen::MatrixXd to_grayscale(const std::vector<Eigen::MatrixXd>& planes);

// Bilinear (half-pixel centres); returns the input unchanged when already at size.
Eigen::MatrixXd resize_bilinear(const Eigen::MatrixXd& pixels, ImageSize target);

// Writes an 8-bit grayscale PNG (values clamped to [0, 255] and rounded).
void write_png(const std::filesystem::path& path, const Eigen::MatrixXd& pixels);

std::string sha256_file(const std::filesystem::path& path);

bool is_supported_image(const std::filesystem::path& path);

}  // namespace wavecomm
