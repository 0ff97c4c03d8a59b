#include "wavecomm/wavelet.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>

#include <fmt/format.h>

#include "wavecomm/error.hpp"

namespace wavecomm {
namespace {

// Daubechies scaling filters (MATLAB/PyWavelets decomposition ordering).
constexpr std::array<double, 2> kDb1 = {0.7071067811865476, 0.7071067811865476};
constexpr std::array<double, 4> kDb2 = {-0.12940952255126037, 0.2241438680420134,
                                        0.8365163037378079, 0.48296291314453416};
constexpr std::array<double, 6> kDb3 = {0.03522629188570953,  -0.08544127388202666,
                                        -0.13501102001025458, 0.45987750211849154,
                                        0.8068915093110925,   0.33267055295008263};
constexpr std::array<double, 8> kDb4 = {-0.010597401785069032, 0.0328830116668852,
                                        0.030841381835560764,  -0.18703481171909309,
                                        -0.027983769416859854, 0.6308807679298589,
                                        0.7148465705529157,    0.2303778133088965};
constexpr std::array<double, 10> kDb5 = {0.0033357252854737712, -0.012580751999081999,
                                         -0.006241490212798274, 0.07757149384004572,
                                         -0.032244869584638375, -0.24229488706638203,
                                         0.13842814590132074,   0.7243085284377729,
                                         0.6038292697971896,    0.16010239797419293};

std::span<const double> scaling_filter(BasisName name) {
  switch (name) {
    case BasisName::db1: return kDb1;
    case BasisName::db2: return kDb2;
    case BasisName::db3: return kDb3;
    case BasisName::db4: return kDb4;
    case BasisName::db5: return kDb5;
  }
  throw Error(ErrorKind::config, "unsupported wavelet basis");
}

// x has even length n; writes n/2 approximation and detail coefficients.
void analyze(std::span<const double> x, const WaveletBasis& basis, double* approx, double* detail) {
  const std::size_t n = x.size();
  const std::size_t half = n / 2;
  const std::size_t taps = basis.taps();
  for (std::size_t i = 0; i < half; ++i) {
    double a = 0.0;
    double d = 0.0;
    for (std::size_t k = 0; k < taps; ++k) {
      const double v = x[(2 * i + k) % n];
      a += basis.lo_d[k] * v;
      d += basis.hi_d[k] * v;
    }
    approx[i] = a;
    detail[i] = d;
  }
}

// Adjoint of analyze: out has length 2*half and is overwritten.
void synthesize(const double* approx, const double* detail, std::size_t half,
                const WaveletBasis& basis, std::span<double> out) {
  const std::size_t n = 2 * half;
  const std::size_t taps = basis.taps();
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t i = 0; i < half; ++i) {
    for (std::size_t j = 0; j < taps; ++j) {
      out[(2 * i + taps - 1 - j) % n] += basis.lo_r[j] * approx[i] + basis.hi_r[j] * detail[i];
    }
  }
}

// Transforms every row of m (even cols) into [approx | detail] halves.
void analyze_rows(Eigen::MatrixXd& m, const WaveletBasis& basis) {
  const auto cols = static_cast<std::size_t>(m.cols());
  const std::size_t half = cols / 2;
  std::vector<double> line(cols), a(half), d(half);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < cols; ++c) line[c] = m(r, static_cast<Eigen::Index>(c));
    analyze(line, basis, a.data(), d.data());
    for (std::size_t c = 0; c < half; ++c) {
      m(r, static_cast<Eigen::Index>(c)) = a[c];
      m(r, static_cast<Eigen::Index>(half + c)) = d[c];
    }
  }
}

void analyze_cols(Eigen::MatrixXd& m, const WaveletBasis& basis) {
  const auto rows = static_cast<std::size_t>(m.rows());
  const std::size_t half = rows / 2;
  std::vector<double> line(rows), a(half), d(half);
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    const double* col = m.col(c).data();
    std::copy(col, col + rows, line.begin());
    analyze(line, basis, a.data(), d.data());
    double* dst = m.col(c).data();
    std::copy(a.begin(), a.end(), dst);
    std::copy(d.begin(), d.end(), dst + half);
  }
}

void synthesize_rows(Eigen::MatrixXd& m, const WaveletBasis& basis) {
  const auto cols = static_cast<std::size_t>(m.cols());
  const std::size_t half = cols / 2;
  std::vector<double> a(half), d(half), line(cols);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < half; ++c) {
      a[c] = m(r, static_cast<Eigen::Index>(c));
      d[c] = m(r, static_cast<Eigen::Index>(half + c));
    }
    synthesize(a.data(), d.data(), half, basis, line);
    for (std::size_t c = 0; c < cols; ++c) m(r, static_cast<Eigen::Index>(c)) = line[c];
  }
}

void synthesize_cols(Eigen::MatrixXd& m, const WaveletBasis& basis) {
  const auto rows = static_cast<std::size_t>(m.rows());
  const std::size_t half = rows / 2;
  std::vector<double> line(rows);
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    const double* col = m.col(c).data();
    synthesize(col, col + half, half, basis, line);
    std::copy(line.begin(), line.end(), m.col(c).data());
  }
}

Eigen::MatrixXd pad_to_even(const Eigen::MatrixXd& m) {
  const Eigen::Index rows = m.rows() + (m.rows() % 2);
  const Eigen::Index cols = m.cols() + (m.cols() % 2);
  if (rows == m.rows() && cols == m.cols()) return m;
  Eigen::MatrixXd padded(rows, cols);
  padded.topLeftCorner(m.rows(), m.cols()) = m;
  if (cols != m.cols()) padded.col(cols - 1).head(m.rows()) = m.col(m.cols() - 1);
  if (rows != m.rows()) padded.row(rows - 1) = padded.row(m.rows() - 1);
  return padded;
}

void append_row_major(const Eigen::MatrixXd& block, std::vector<double>& out) {
  for (Eigen::Index r = 0; r < block.rows(); ++r)
    for (Eigen::Index c = 0; c < block.cols(); ++c) out.push_back(block(r, c));
}

Eigen::MatrixXd read_row_major(std::span<const double> data, std::size_t rows, std::size_t cols) {
  Eigen::MatrixXd block(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      block(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = data[r * cols + c];
  return block;
}

}  // namespace

BasisName parse_basis(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  if (lower == "db1" || lower == "haar") return BasisName::db1;
  if (lower == "db2") return BasisName::db2;
  if (lower == "db3") return BasisName::db3;
  if (lower == "db4") return BasisName::db4;
  if (lower == "db5") return BasisName::db5;
  throw Error(ErrorKind::config,
              fmt::format("unsupported wavelet basis '{}' (expected db1..db5)", name));
}

std::string_view to_string(BasisName name) noexcept {
  switch (name) {
    case BasisName::db1: return "db1";
    case BasisName::db2: return "db2";
    case BasisName::db3: return "db3";
    case BasisName::db4: return "db4";
    case BasisName::db5: return "db5";
  }
  return "unknown";
}

WaveletBasis basis_filters(BasisName name) {
  const auto lo = scaling_filter(name);
  const std::size_t taps = lo.size();
  WaveletBasis basis;
  basis.name = name;
  basis.lo_d.assign(lo.begin(), lo.end());
  basis.hi_d.resize(taps);
  for (std::size_t k = 0; k < taps; ++k) {
    const double sign = (k % 2 == 0) ? 1.0 : -1.0;
    basis.hi_d[k] = sign * basis.lo_d[taps - 1 - k];
  }
  basis.lo_r.assign(basis.lo_d.rbegin(), basis.lo_d.rend());
  basis.hi_r.assign(basis.hi_d.rbegin(), basis.hi_d.rend());
  return basis;
}

DwtStep dwt_step_1d(std::span<const double> signal, const WaveletBasis& basis) {
  if (signal.empty()) throw Error(ErrorKind::input, "dwt_step_1d: empty signal");
  std::vector<double> x(signal.begin(), signal.end());
  if (x.size() % 2 != 0) x.push_back(x.front());
  DwtStep out;
  out.approx.resize(x.size() / 2);
  out.detail.resize(x.size() / 2);
  analyze(x, basis, out.approx.data(), out.detail.data());
  return out;
}

std::vector<double> idwt_step_1d(std::span<const double> approx, std::span<const double> detail,
                                 const WaveletBasis& basis, std::size_t length) {
  if (approx.size() != detail.size() || approx.empty())
    throw Error(ErrorKind::input, "idwt_step_1d: approximation and detail must be non-empty and equal length");
  if (length > 2 * approx.size() || length + 1 < 2 * approx.size())
    throw Error(ErrorKind::input,
                fmt::format("idwt_step_1d: length {} incompatible with {} coefficients", length, approx.size()));
  std::vector<double> out(2 * approx.size());
  synthesize(approx.data(), detail.data(), approx.size(), basis, out);
  out.resize(length);
  return out;
}

char subband_code(Subband band) noexcept {
  switch (band) {
    case Subband::approximation: return 'A';
    case Subband::horizontal: return 'H';
    case Subband::vertical: return 'V';
    case Subband::diagonal: return 'D';
  }
  return '?';
}

std::size_t Bookkeeping::coefficient_count() const noexcept {
  std::size_t total = 0;
  for (const auto& s : subbands) total += s.rows * s.cols;
  return total;
}

Bookkeeping plan_decomposition(std::size_t rows, std::size_t cols, BasisName basis, int levels) {
  if (levels < 1) throw Error(ErrorKind::config, fmt::format("decomposition levels must be >= 1 (got {})", levels));
  Bookkeeping beta;
  beta.rows = rows;
  beta.cols = cols;
  beta.basis = basis;
  beta.levels = levels;
  std::size_t r = rows;
  std::size_t c = cols;
  for (int level = 1; level <= levels; ++level) {
    if (r < 2 || c < 2) {
      throw Error(ErrorKind::decomposition_depth,
                  fmt::format("{} levels requested but a {}x{} image only supports {}", levels, rows,
                              cols, level - 1));
    }
    LevelShape shape{level, r, c, r + r % 2, c + c % 2};
    beta.level_shapes.push_back(shape);
    r = shape.padded_rows / 2;
    c = shape.padded_cols / 2;
  }
  beta.subbands.push_back({levels, Subband::approximation, r, c});
  for (int level = levels; level >= 1; --level) {
    const auto& shape = beta.level_shapes[static_cast<std::size_t>(level - 1)];
    const std::size_t hr = shape.padded_rows / 2;
    const std::size_t hc = shape.padded_cols / 2;
    for (Subband band : {Subband::horizontal, Subband::vertical, Subband::diagonal})
      beta.subbands.push_back({level, band, hr, hc});
  }
  return beta;
}

DecompResult wavedec2(const Eigen::MatrixXd& image, const WaveletBasis& basis, int levels) {
  if (image.size() == 0) throw Error(ErrorKind::input, "wavedec2: empty image");
  if (!image.allFinite()) throw Error(ErrorKind::input, "wavedec2: image contains non-finite pixels");

  DecompResult result;
  result.levels = levels;
  result.beta = plan_decomposition(static_cast<std::size_t>(image.rows()),
                                   static_cast<std::size_t>(image.cols()), basis.name, levels);

  // details[level-1] = {H, V, D}
  std::vector<std::array<Eigen::MatrixXd, 3>> details(static_cast<std::size_t>(levels));
  Eigen::MatrixXd current = image;
  for (int level = 1; level <= levels; ++level) {
    Eigen::MatrixXd work = pad_to_even(current);
    analyze_rows(work, basis);
    analyze_cols(work, basis);
    const Eigen::Index hr = work.rows() / 2;
    const Eigen::Index hc = work.cols() / 2;
    auto& d = details[static_cast<std::size_t>(level - 1)];
    d[0] = work.block(hr, 0, hr, hc);   // high along rows, low along columns
    d[1] = work.block(0, hc, hr, hc);   // low along rows, high along columns
    d[2] = work.block(hr, hc, hr, hc);
    current = work.topLeftCorner(hr, hc);
  }

  result.omega.reserve(result.beta.coefficient_count());
  append_row_major(current, result.omega);
  for (int level = levels; level >= 1; --level)
    for (const auto& band : details[static_cast<std::size_t>(level - 1)]) append_row_major(band, result.omega);
  return result;
}

Eigen::MatrixXd waverec2(const DecompResult& decomp, const WaveletBasis& basis) {
  const Bookkeeping& beta = decomp.beta;
  if (beta.basis != basis.name) {
    throw Error(ErrorKind::config, fmt::format("waverec2: decomposition used {} but {} was supplied",
                                               to_string(beta.basis), to_string(basis.name)));
  }
  const auto levels = static_cast<std::size_t>(beta.levels);
  if (beta.levels < 1 || beta.level_shapes.size() != levels || beta.subbands.size() != 1 + 3 * levels) {
    throw Error(ErrorKind::corrupt_decomposition, "waverec2: bookkeeping table is malformed");
  }
  if (beta.coefficient_count() != decomp.omega.size()) {
    throw Error(ErrorKind::corrupt_decomposition,
                fmt::format("waverec2: bookkeeping describes {} coefficients but omega has {}",
                            beta.coefficient_count(), decomp.omega.size()));
  }

  std::span<const double> omega(decomp.omega);
  std::size_t offset = 0;
  auto take = [&](const SubbandShape& s) {
    Eigen::MatrixXd block = read_row_major(omega.subspan(offset, s.rows * s.cols), s.rows, s.cols);
    offset += s.rows * s.cols;
    return block;
  };

  Eigen::MatrixXd current = take(beta.subbands[0]);
  std::size_t next_band = 1;
  for (int level = beta.levels; level >= 1; --level) {
    const LevelShape& shape = beta.level_shapes[static_cast<std::size_t>(level - 1)];
    const auto hr = static_cast<Eigen::Index>(shape.padded_rows / 2);
    const auto hc = static_cast<Eigen::Index>(shape.padded_cols / 2);
    if (current.rows() != hr || current.cols() != hc)
      throw Error(ErrorKind::corrupt_decomposition, "waverec2: subband shapes disagree with level shapes");
    Eigen::MatrixXd work(2 * hr, 2 * hc);
    work.topLeftCorner(hr, hc) = current;
    work.block(hr, 0, hr, hc) = take(beta.subbands[next_band++]);
    work.block(0, hc, hr, hc) = take(beta.subbands[next_band++]);
    work.block(hr, hc, hr, hc) = take(beta.subbands[next_band++]);
    synthesize_cols(work, basis);
    synthesize_rows(work, basis);
    current = work.topLeftCorner(static_cast<Eigen::Index>(shape.rows), static_cast<Eigen::Index>(shape.cols));
  }
  return current;
}

std::vector<std::string> coefficient_labels(const Bookkeeping& beta) {
  std::vector<std::string> labels;
  labels.reserve(beta.coefficient_count());
  for (const auto& s : beta.subbands)
    for (std::size_t r = 0; r < s.rows; ++r)
      for (std::size_t c = 0; c < s.cols; ++c)
        labels.push_back(fmt::format("L{}{}_r{}_c{}", s.level, subband_code(s.band), r, c));
  return labels;
}

}  // namespace wavecomm
