#pragma once

// Central node: zero-forcing detection from the accumulated (z, G) and the
// quality metrics computed from it.

#include "dmimo/common.hpp"
#include "dmimo/ofdm.hpp"

#include <algorithm>
#include <optional>

namespace dmimo {

inline constexpr double kEvmFloorDb = -100.0;

struct ZfOptions {
  double regularization = 0.0;
  // On factorization failure retry with epsilon * trace(G) / K loading.
  bool fallback = true;
  double epsilon = 1e-9;
};

struct ZfResult {
  std::vector<CMatrix> s_hat;  // per symbol, K x n_sc
  std::vector<bool> valid;     // per subcarrier; false when skipped
  std::size_t fallbacks = 0;
  std::size_t failures = 0;

  std::size_t valid_count() const {
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), true));
  }
};

// Cholesky factor of G + loading I, or nothing when it is not positive definite.
inline std::optional<Eigen::LLT<CMatrix>> factor_gram(const CMatrix& g, double loading) {
  CMatrix a = g;
  a.diagonal().array() += loading;
  Eigen::LLT<CMatrix> llt(a);
  if (llt.info() != Eigen::Success) return std::nullopt;
  const auto& l = llt.matrixLLT();
  for (Eigen::Index i = 0; i < l.rows(); ++i)
    if (!(std::isfinite(l(i, i).real()) && l(i, i).real() > 0.0)) return std::nullopt;
  return llt;
}

// s_hat = (G + rI)^-1 z on every subcarrier, shared across all z symbols.
inline ZfResult zf_detect(const std::vector<CMatrix>& z, const std::vector<CMatrix>& gram,
                          const ZfOptions& opt = {}) {
  const int n_sc = static_cast<int>(gram.size());
  if (n_sc == 0) throw ShapeError("no subcarriers to detect");
  const Eigen::Index K = gram.front().rows();
  for (const auto& zs : z)
    if (zs.rows() != K || zs.cols() != n_sc) throw ShapeError("z block is not K x n_sc");

  ZfResult r;
  r.s_hat.assign(z.size(), CMatrix::Zero(K, n_sc));
  r.valid.assign(n_sc, false);
  for (int sc = 0; sc < n_sc; ++sc) {
    const CMatrix& g = gram[sc];
    if (g.rows() != K || g.cols() != K) throw ShapeError("Gram block is not K x K");
    auto llt = factor_gram(g, opt.regularization);
    if (!llt && opt.fallback) {
      const double loading = opt.regularization + opt.epsilon * g.trace().real() / static_cast<double>(K);
      llt = factor_gram(g, loading);
      if (llt) ++r.fallbacks;
    }
    if (!llt) {
      ++r.failures;
      continue;
    }
    r.valid[sc] = true;
    for (std::size_t s = 0; s < z.size(); ++s) r.s_hat[s].col(sc) = llt->solve(z[s].col(sc));
  }
  return r;
}

// ----------------------------------------------------------------------------
// SIR before ZF
//
// The MRC output for user k is sum_i G[k,i] s_i, so
//   SIR_k = |G[k,k]|^2 P_k / sum_{i != k} |G[k,i]|^2 P_i.
// Subcarrier averages are taken over the linear ratio.
// ----------------------------------------------------------------------------

struct SirResult {
  Eigen::MatrixXd per_subcarrier_db;  // K x n_sc
  std::vector<double> avg_db;         // K
};

// Linear SIR per user (rows) and subcarrier (columns); +inf without interferers.
inline Eigen::MatrixXd sir_linear(const std::vector<CMatrix>& gram, const std::vector<double>& tx_powers) {
  const int n_sc = static_cast<int>(gram.size());
  if (n_sc == 0) throw ShapeError("no subcarriers");
  const Eigen::Index K = gram.front().rows();
  if (static_cast<Eigen::Index>(tx_powers.size()) != K) throw ShapeError("need one tx power per user");
  Eigen::MatrixXd ratio(K, n_sc);
  for (int sc = 0; sc < n_sc; ++sc) {
    const CMatrix& g = gram[sc];
    for (Eigen::Index k = 0; k < K; ++k) {
      const double signal = std::norm(g(k, k)) * tx_powers[k];
      double interference = 0.0;
      for (Eigen::Index i = 0; i < K; ++i)
        if (i != k) interference += std::norm(g(k, i)) * tx_powers[i];
      ratio(k, sc) = interference > 0.0 ? signal / interference : std::numeric_limits<double>::infinity();
    }
  }
  return ratio;
}

inline SirResult sir_from_linear(const Eigen::MatrixXd& ratio) {
  SirResult r;
  r.per_subcarrier_db = ratio.unaryExpr([](double v) { return power_to_db(v); });
  r.avg_db.resize(ratio.rows());
  for (Eigen::Index k = 0; k < ratio.rows(); ++k) r.avg_db[k] = power_to_db(ratio.row(k).mean());
  return r;
}

inline SirResult sir_before_zf(const std::vector<CMatrix>& gram, const std::vector<double>& tx_powers) {
  return sir_from_linear(sir_linear(gram, tx_powers));
}

// Entry-wise mean of |G| over subcarriers, in dB (20 log10).
inline Eigen::MatrixXd gram_heatmap(const std::vector<CMatrix>& gram) {
  if (gram.empty()) throw ShapeError("no subcarriers");
  const Eigen::Index K = gram.front().rows();
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(K, K);
  for (const auto& g : gram) mean += g.cwiseAbs();
  mean /= static_cast<double>(gram.size());
  Eigen::MatrixXd db(K, K);
  for (Eigen::Index i = 0; i < K; ++i)
    for (Eigen::Index k = 0; k < K; ++k) db(i, k) = magnitude_to_db(mean(i, k));
  return db;
}

// Per-user EVM in dB over every symbol and valid subcarrier; an empty `valid`
// mask means all subcarriers. Perfect recovery reports kEvmFloorDb.
inline std::vector<double> evm(const std::vector<CMatrix>& s_hat, const std::vector<CMatrix>& s_true,
                               const std::vector<bool>& valid = {}) {
  if (s_hat.size() != s_true.size() || s_hat.empty()) throw ShapeError("EVM needs matching non-empty grids");
  const Eigen::Index K = s_true.front().rows(), n_sc = s_true.front().cols();
  std::vector<double> out(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    double err = 0.0, ref = 0.0;
    for (std::size_t s = 0; s < s_hat.size(); ++s) {
      if (s_hat[s].rows() != K || s_hat[s].cols() != n_sc || s_true[s].cols() != n_sc)
        throw ShapeError("EVM grid shapes differ");
      for (Eigen::Index sc = 0; sc < n_sc; ++sc) {
        if (!valid.empty() && !valid[sc]) continue;
        err += std::norm(s_hat[s](k, sc) - s_true[s](k, sc));
        ref += std::norm(s_true[s](k, sc));
      }
    }
    out[k] = (err == 0.0 || ref == 0.0) ? kEvmFloorDb : std::max(kEvmFloorDb, power_to_db(err / ref));
  }
  return out;
}

struct EqualizedFrame {
  std::vector<CMatrix> s_hat;
  std::vector<Eigen::MatrixXi> decisions;  // per symbol, K x n_sc constellation indices
  std::vector<double> evm_db;
  std::vector<long> symbol_errors;         // per user
};

inline EqualizedFrame equalize(const ZfResult& zf, const std::vector<CMatrix>& s_true, Modulation mod) {
  EqualizedFrame f;
  f.s_hat = zf.s_hat;
  f.evm_db = evm(zf.s_hat, s_true, zf.valid);
  const Eigen::Index K = s_true.front().rows(), n_sc = s_true.front().cols();
  f.symbol_errors.assign(K, 0);
  for (std::size_t s = 0; s < zf.s_hat.size(); ++s) {
    Eigen::MatrixXi d(K, n_sc);
    for (Eigen::Index k = 0; k < K; ++k)
      for (Eigen::Index sc = 0; sc < n_sc; ++sc) {
        d(k, sc) = static_cast<int>(hard_decision(mod, zf.s_hat[s](k, sc)));
        if (zf.valid[sc] && d(k, sc) != static_cast<int>(hard_decision(mod, s_true[s](k, sc))))
          ++f.symbol_errors[k];
      }
    f.decisions.push_back(std::move(d));
  }
  return f;
}

}  // namespace dmimo
