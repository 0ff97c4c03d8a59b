#include "wavecomm/dataset_io.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <fstream>
#include <set>

#include <fmt/format.h>
#include <openssl/evp.h>
#include <opencv2/core.hpp>
#include <opencv2/core/eigen.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <spdlog/spdlog.h>

#include "wavecomm/csv.hpp"
#include "wavecomm/error.hpp"
#include "wavecomm/parallel.hpp"

namespace fs = std::filesystem;

namespace wavecomm {
namespace {

std::string lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return out;
}

std::vector<ManifestEntry> scan_directory(const fs::path& root) {
  std::vector<ManifestEntry> entries;
  for (const auto& entry : fs::recursive_directory_iterator(root, fs::directory_options::skip_permission_denied)) {
    if (!entry.is_regular_file() || !is_supported_image(entry.path())) continue;
    entries.push_back({fs::relative(entry.path(), root).generic_string(), entry.path(), std::nullopt});
  }
  return entries;
}

ImageRecord load_one(const ManifestEntry& entry, ImageSize target, ColorMode color) {
  ImageRecord record;
  record.id = entry.id;
  record.source_path = entry.path;
  record.label = entry.label;
  const auto planes = decode_image(entry.path);
  if (color == ColorMode::luma) {
    record.pixels = resize_bilinear(to_grayscale(planes), target);
  } else {
    const auto h = static_cast<Eigen::Index>(target.height);
    const auto w = static_cast<Eigen::Index>(target.width);
    record.pixels.resize(3 * h, w);
    for (Eigen::Index c = 0; c < 3; ++c) {
      const auto& plane = planes[planes.size() == 1 ? 0 : static_cast<std::size_t>(c)];
      record.pixels.middleRows(c * h, h) = resize_bilinear(plane, target);
    }
  }
  if (!record.pixels.allFinite()) throw Error(ErrorKind::ingestion, "decoded image has non-finite pixels");
  record.checksum = sha256_file(entry.path);
  return record;
}

}  // namespace

ImageSize parse_image_size(std::string_view text) {
  const auto x = text.find_first_of("xX");
  auto parse = [&](std::string_view part) -> std::size_t {
    std::size_t value = 0;
    const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), value);
    if (ec != std::errc{} || ptr != part.data() + part.size() || value == 0)
      throw Error(ErrorKind::config, fmt::format("invalid image size '{}' (expected WIDTHxHEIGHT, e.g. 256x256)", text));
    return value;
  };
  if (x == std::string_view::npos) {
    const std::size_t side = parse(text);
    return {side, side};
  }
  return {parse(text.substr(0, x)), parse(text.substr(x + 1))};
}

std::string to_string(const ImageSize& size) { return fmt::format("{}x{}", size.width, size.height); }

ColorMode parse_color_mode(std::string_view name) {
  if (name == "luma" || name == "gray") return ColorMode::luma;
  if (name == "channels") return ColorMode::channels;
  throw Error(ErrorKind::config, fmt::format("unknown color mode '{}' (expected luma or channels)", name));
}

std::string_view to_string(ColorMode mode) noexcept { return mode == ColorMode::luma ? "luma" : "channels"; }

bool is_supported_image(const fs::path& path) {
  static const std::set<std::string> kExtensions = {".png", ".jpg", ".jpeg", ".bmp"};
  return kExtensions.contains(lower(path.extension().string()));
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  const auto rows = csv::read_file(path);
  if (rows.empty()) throw Error(ErrorKind::input, fmt::format("manifest '{}' is empty", path.string()));
  const auto& header = rows.front();
  auto column = [&](std::string_view name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (lower(header[i]) == name) return i;
    return std::nullopt;
  };
  const auto id_col = column("id");
  const auto path_col = column("path");
  const auto label_col = column("label");
  if (!id_col || !path_col)
    throw Error(ErrorKind::input, fmt::format("manifest '{}' needs a header with id and path columns", path.string()));

  const fs::path base = path.parent_path();
  std::vector<ManifestEntry> entries;
  std::set<std::string> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() <= std::max(*id_col, *path_col))
      throw Error(ErrorKind::input, fmt::format("manifest '{}': row {} has {} fields", path.string(), r + 1, row.size()));
    ManifestEntry entry;
    entry.id = row[*id_col];
    if (entry.id.empty()) throw Error(ErrorKind::input, fmt::format("manifest '{}': empty id on row {}", path.string(), r + 1));
    if (!seen.insert(entry.id).second)
      throw Error(ErrorKind::input, fmt::format("manifest '{}': duplicate id '{}'", path.string(), entry.id));
    fs::path p(row[*path_col]);
    entry.path = p.is_absolute() ? p : (base / p).lexically_normal();
    if (label_col && *label_col < row.size() && !row[*label_col].empty()) entry.label = row[*label_col];
    entries.push_back(std::move(entry));
  }
  return entries;
}

void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, fmt::format("cannot write '{}'", path.string()));
  out << "id,path,label\n";
  for (const auto& e : entries) out << csv::format_row({e.id, e.path.string(), e.label.value_or("")}) << '\n';
}

std::vector<Eigen::MatrixXd> decode_image(const fs::path& path) {
  const cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (raw.empty()) throw Error(ErrorKind::ingestion, fmt::format("cannot decode '{}'", path.string()));
  double scale = 1.0;
  switch (raw.depth()) {
    case CV_8U: scale = 1.0; break;
    case CV_16U: scale = 255.0 / 65535.0; break;
    case CV_32F:
    case CV_64F: scale = 255.0; break;
    default:
      throw Error(ErrorKind::ingestion, fmt::format("'{}' has an unsupported pixel depth", path.string()));
  }
  cv::Mat scaled;
  raw.convertTo(scaled, CV_64F, scale);
  std::vector<cv::Mat> channels;
  cv::split(scaled, channels);

  std::vector<Eigen::MatrixXd> planes;
  auto push = [&](const cv::Mat& m) {
    Eigen::MatrixXd plane;
    cv::cv2eigen(m, plane);
    planes.push_back(plane.cwiseMax(0.0).cwiseMin(255.0));
  };
  if (channels.size() <= 2) {
    push(channels[0]);
  } else {
    // OpenCV stores BGR(A); planes are returned as R, G, B.
    push(channels[2]);
    push(channels[1]);
    push(channels[0]);
  }
  return planes;
}

Eigen::MatrixXd to_grayscale(const std::vector<Eigen::MatrixXd>& planes) {
  if (planes.size() == 1) return planes.front();
  if (planes.size() != 3) throw Error(ErrorKind::ingestion, "expected 1 or 3 color planes");
  return 0.299 * planes[0] + 0.587 * planes[1] + 0.114 * planes[2];
}

Eigen::MatrixXd resize_bilinear(const Eigen::MatrixXd& pixels, ImageSize target) {
  if (static_cast<std::size_t>(pixels.rows()) == target.height && static_cast<std::size_t>(pixels.cols()) == target.width)
    return pixels;
  cv::Mat src;
  cv::eigen2cv(pixels, src);
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(static_cast<int>(target.width), static_cast<int>(target.height)), 0, 0, cv::INTER_LINEAR);
  Eigen::MatrixXd out;
  cv::cv2eigen(dst, out);
  return out.cwiseMax(0.0).cwiseMin(255.0);
}

void write_png(const fs::path& path, const Eigen::MatrixXd& pixels) {
  cv::Mat m;
  cv::eigen2cv(Eigen::MatrixXd(pixels.cwiseMax(0.0).cwiseMin(255.0)), m);
  cv::Mat bytes;
  m.convertTo(bytes, CV_8U);
  if (!cv::imwrite(path.string(), bytes)) throw Error(ErrorKind::io, fmt::format("cannot write '{}'", path.string()));
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, fmt::format("cannot open '{}'", path.string()));
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
    throw Error(ErrorKind::io, "SHA-256 initialisation failed");
  std::array<char, 1 << 16> buffer{};
  while (in) {
    in.read(buffer.data(), buffer.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buffer.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int length = 0;
  EVP_DigestFinal_ex(ctx.get(), digest.data(), &length);
  std::string hex;
  for (unsigned int i = 0; i < length; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

Dataset load_dataset(const fs::path& root_or_manifest, ImageSize target, ColorMode color) {
  if (target.width == 0 || target.height == 0) throw Error(ErrorKind::config, "target size must be positive");
  std::vector<ManifestEntry> entries;
  std::error_code ec;
  if (fs::is_directory(root_or_manifest, ec) && fs::is_regular_file(root_or_manifest / "manifest.csv", ec)) {
    entries = read_manifest(root_or_manifest / "manifest.csv");
  } else if (fs::is_directory(root_or_manifest, ec)) {
    entries = scan_directory(root_or_manifest);
  } else if (fs::is_regular_file(root_or_manifest, ec)) {
    entries = read_manifest(root_or_manifest);
  } else {
    throw Error(ErrorKind::ingestion, fmt::format("dataset path '{}' does not exist", root_or_manifest.string()));
  }
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.id < b.id; });

  std::vector<std::optional<ImageRecord>> loaded(entries.size());
  std::vector<std::string> errors(entries.size());
  parallel_for(entries.size(), [&](std::size_t i) {
    try {
      if (!fs::is_regular_file(entries[i].path)) throw Error(ErrorKind::ingestion, "file not found");
      loaded[i] = load_one(entries[i], target, color);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });

  Dataset dataset;
  dataset.target = target;
  dataset.color = color;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (loaded[i]) {
      dataset.records.push_back(std::move(*loaded[i]));
    } else {
      dataset.failures.push_back({entries[i].path.string(), errors[i]});
      spdlog::warn("skipping '{}': {}", entries[i].path.string(), errors[i]);
    }
  }
  if (dataset.records.empty()) {
    throw Error(ErrorKind::ingestion, fmt::format("no valid images found in '{}' ({} file(s) failed)",
                                                  root_or_manifest.string(), dataset.failures.size()));
  }
  return dataset;
}

}  // namespace wavecomm
