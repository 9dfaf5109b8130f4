#pragma once

// Reference implementations for tests. Everything here is plain loops over
// std::complex with no Eigen algorithms, so library-backed code under test is
// never checked against the same library.

#include "dmimo/common.hpp"

#include <complex>
#include <vector>

namespace oracle {

using dmimo::cplx;
using dmimo::CMatrix;

// A^H B by explicit triple loop.
inline CMatrix adjoint_times(const CMatrix& a, const CMatrix& b) {
  CMatrix out(a.cols(), b.cols());
  for (Eigen::Index i = 0; i < a.cols(); ++i)
    for (Eigen::Index k = 0; k < b.cols(); ++k) {
      cplx acc{};
      for (Eigen::Index m = 0; m < a.rows(); ++m) acc += std::conj(a(m, i)) * b(m, k);
      out(i, k) = acc;
    }
  return out;
}

// Vertical stack [H_0; H_1; ...].
inline CMatrix stack(const std::vector<CMatrix>& blocks) {
  Eigen::Index rows = 0;
  for (const auto& b : blocks) rows += b.rows();
  CMatrix out(rows, blocks.front().cols());
  Eigen::Index r = 0;
  for (const auto& b : blocks)
    for (Eigen::Index i = 0; i < b.rows(); ++i, ++r)
      for (Eigen::Index k = 0; k < b.cols(); ++k) out(r, k) = b(i, k);
  return out;
}

// Least squares min ||A x - b|| through modified Gram-Schmidt QR and back
// substitution. Avoids forming A^H A, so it follows a different numerical
// route than a normal-equation solve.
inline std::vector<cplx> least_squares(const CMatrix& a, const std::vector<cplx>& b) {
  const Eigen::Index m = a.rows(), n = a.cols();
  std::vector<std::vector<cplx>> q(n, std::vector<cplx>(m));
  std::vector<std::vector<cplx>> r(n, std::vector<cplx>(n, cplx{}));
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < m; ++i) q[j][i] = a(i, j);
  for (Eigen::Index j = 0; j < n; ++j) {
    double norm = 0.0;
    for (const auto& v : q[j]) norm += std::norm(v);
    norm = std::sqrt(norm);
    r[j][j] = norm;
    for (auto& v : q[j]) v /= norm;
    for (Eigen::Index k = j + 1; k < n; ++k) {
      cplx dot{};
      for (Eigen::Index i = 0; i < m; ++i) dot += std::conj(q[j][i]) * q[k][i];
      r[j][k] = dot;
      for (Eigen::Index i = 0; i < m; ++i) q[k][i] -= dot * q[j][i];
    }
  }
  std::vector<cplx> qtb(n, cplx{});
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < m; ++i) qtb[j] += std::conj(q[j][i]) * b[i];
  std::vector<cplx> x(n);
  for (Eigen::Index j = n - 1; j >= 0; --j) {
    cplx s = qtb[j];
    for (Eigen::Index k = j + 1; k < n; ++k) s -= r[j][k] * x[k];
    x[j] = s / r[j][j];
  }
  return x;
}

// Forward DFT X[k] = sum_n x[n] exp(-i 2 pi k n / N) / sqrt(N).
inline std::vector<cplx> dft(const std::vector<cplx>& x) {
  const std::size_t n = x.size();
  std::vector<cplx> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    cplx acc{};
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = -2.0 * dmimo::kPi * static_cast<double>((k * t) % n) / static_cast<double>(n);
      acc += x[t] * std::polar(1.0, ang);
    }
    out[k] = acc / std::sqrt(static_cast<double>(n));
  }
  return out;
}

inline CMatrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  dmimo::ComplexGaussian g(seed);
  CMatrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = g();
  return m;
}

// ||a - b||_F / max(||a||_F, ||b||_F).
inline double rel(const CMatrix& a, const CMatrix& b) {
  double num = 0.0, na = 0.0, nb = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index k = 0; k < a.cols(); ++k) {
      num += std::norm(a(i, k) - b(i, k));
      na += std::norm(a(i, k));
      nb += std::norm(b(i, k));
    }
  const double den = std::max(na, nb);
  return den == 0.0 ? 0.0 : std::sqrt(num / den);
}

}  // namespace oracle
