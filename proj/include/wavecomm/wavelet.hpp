#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace wavecomm {

enum class BasisName { db1, db2, db3, db4, db5 };

BasisName parse_basis(std::string_view name);
std::string_view to_string(BasisName name) noexcept;

/// Orthonormal Daubechies filter bank.
///
/// `lo_d` is the scaling filter, `hi_d[k] = (-1)^k lo_d[L-1-k]` its quadrature
/// mirror, and the reconstruction filters are the time-reversed decomposition
/// filters. Analysis is a stride-2 correlation with periodic wrap:
///   approx[i] = sum_k lo_d[k] * x[(2i + k) mod n]
struct WaveletBasis {
  BasisName name = BasisName::db1;
  std::vector<double> lo_d;
  std::vector<double> hi_d;
  std::vector<double> lo_r;
  std::vector<double> hi_r;

  int order() const noexcept { return static_cast<int>(lo_d.size() / 2); }
  std::size_t taps() const noexcept { return lo_d.size(); }
};

WaveletBasis basis_filters(BasisName name);

struct DwtStep {
  std::vector<double> approx;
  std::vector<double> detail;
};

// Odd-length signals are extended periodically by one sample.
DwtStep dwt_step_1d(std::span<const double> signal, const WaveletBasis& basis);

// Inverse of dwt_step_1d; the reconstructed signal is cropped to `length`.
std::vector<double> idwt_step_1d(std::span<const double> approx, std::span<const double> detail,
                                 const WaveletBasis& basis, std::size_t length);

enum class Subband { approximation, horizontal, vertical, diagonal };

char subband_code(Subband band) noexcept;

struct SubbandShape {
  int level = 0;
  Subband band = Subband::approximation;
  std::size_t rows = 0;
  std::size_t cols = 0;

  bool operator==(const SubbandShape&) const = default;
};

// Shape entering a level before and after edge-replication padding.
struct LevelShape {
  int level = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t padded_rows = 0;
  std::size_t padded_cols = 0;

  bool operator==(const LevelShape&) const = default;
};

/// Bookkeeping for a multi-level decomposition.
///
/// Subbands are listed in omega order: the level-N approximation first, then
/// the horizontal, vertical and diagonal details of levels N down to 1. Each
/// subband is flattened row-major. Horizontal detail is low-pass along columns
/// and high-pass along rows; vertical detail is the converse.
struct Bookkeeping {
  std::size_t rows = 0;
  std::size_t cols = 0;
  BasisName basis = BasisName::db1;
  int levels = 0;
  std::vector<LevelShape> level_shapes;  // index 0 is level 1
  std::vector<SubbandShape> subbands;

  std::size_t coefficient_count() const noexcept;
  bool operator==(const Bookkeeping&) const = default;
};

struct DecompResult {
  std::vector<double> omega;
  Bookkeeping beta;
  int levels = 0;
};

// Bookkeeping for an image of the given size; throws when `levels` is too deep.
Bookkeeping plan_decomposition(std::size_t rows, std::size_t cols, BasisName basis, int levels);

DecompResult wavedec2(const Eigen::MatrixXd& image, const WaveletBasis& basis, int levels);

// Returns the image at its original (pre-padding) size.
Eigen::MatrixXd waverec2(const DecompResult& decomp, const WaveletBasis& basis);

// Stable column labels for omega entries, e.g. "L3A_r0_c1" or "L1D_r5_c2".
std::vector<std::string> coefficient_labels(const Bookkeeping& beta);

}  // namespace wavecomm
