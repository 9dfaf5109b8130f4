#pragma once

// Local panel processing: LS channel estimation, MRC and Gram matrices, and
// accumulation of the partial sums travelling along the chain.

#include "dmimo/common.hpp"
#include "dmimo/ofdm.hpp"

#include <optional>

namespace dmimo {

class ChainError : public Error {
 public:
  using Error::Error;
};

struct LocalChannelEstimate {
  std::vector<CMatrix> h;  // per subcarrier, M x K

  int subcarriers() const { return static_cast<int>(h.size()); }
  Eigen::Index ports() const { return h.empty() ? 0 : h.front().rows(); }
  Eigen::Index users() const { return h.empty() ? 0 : h.front().cols(); }
};

// LS on each user's comb, linear interpolation in frequency between comb
// points, nearest comb value beyond the outermost points.
inline LocalChannelEstimate estimate_channel_ls(const CMatrix& ulp_rx, const PilotPlan& pilots) {
  const int n_sc = static_cast<int>(ulp_rx.cols());
  const int K = pilots.comb_factor;
  const Eigen::Index M = ulp_rx.rows();
  if (pilots.subcarriers() != n_sc) throw ShapeError("pilot plan does not cover the received grid");
  if (K < 1 || K > n_sc) throw ShapeError("every user needs at least one pilot subcarrier");

  LocalChannelEstimate est;
  est.h.assign(n_sc, CMatrix::Zero(M, K));
  for (int k = 0; k < K; ++k) {
    std::vector<CVector> ls;
    for (int c = k; c < n_sc; c += K) {
      const cplx p = pilots.values[c];
      if (p == cplx{}) throw Error("zero pilot value on subcarrier " + std::to_string(c));
      ls.push_back(ulp_rx.col(c) / p);
    }
    const int first = k, last = k + (static_cast<int>(ls.size()) - 1) * K;
    for (int sc = 0; sc < n_sc; ++sc) {
      if (sc <= first) {
        est.h[sc].col(k) = ls.front();
      } else if (sc >= last) {
        est.h[sc].col(k) = ls.back();
      } else {
        const int i = (sc - k) / K;
        const int lo = k + i * K, hi = lo + K;
        const double t = (pilots.frequency(sc) - pilots.frequency(lo)) / (pilots.frequency(hi) - pilots.frequency(lo));
        est.h[sc].col(k) = (1.0 - t) * ls[i] + t * ls[i + 1];
      }
    }
  }
  return est;
}

// z[sc] = H[sc]^H y[sc]; y is M x n_sc, result K x n_sc.
inline CMatrix local_mrc(const LocalChannelEstimate& est, const CMatrix& y) {
  if (y.cols() != est.subcarriers() || y.rows() != est.ports())
    throw ShapeError("received grid does not match the channel estimate");
  CMatrix z(est.users(), y.cols());
  for (int sc = 0; sc < est.subcarriers(); ++sc) z.col(sc) = est.h[sc].adjoint() * y.col(sc);
  return z;
}

// Exactly Hermitian: the lower triangle mirrors the upper and the diagonal is real.
inline CMatrix hermitian_gram(const CMatrix& h) {
  CMatrix g = h.adjoint() * h;
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    g(i, i) = g(i, i).real();
    for (Eigen::Index k = i + 1; k < g.cols(); ++k) g(k, i) = std::conj(g(i, k));
  }
  return g;
}

inline std::vector<CMatrix> local_gram(const LocalChannelEstimate& est) {
  std::vector<CMatrix> g;
  g.reserve(est.h.size());
  for (const auto& h : est.h) g.push_back(hermitian_gram(h));
  return g;
}

inline bool is_hermitian(const CMatrix& g, double tol) {
  if (g.rows() != g.cols()) return false;
  return (g - g.adjoint()).cwiseAbs().maxCoeff() <= tol;
}

// ----------------------------------------------------------------------------
// Partial sums
// ----------------------------------------------------------------------------

struct LocalPartials {
  std::vector<CMatrix> z;     // per forwarded ULD symbol, K x n_sc
  std::vector<CMatrix> gram;  // per subcarrier, K x K
};

struct PartialSumMessage {
  std::uint64_t frame_id = 0;
  int hop_index = 0;
  int users = 0;
  int subcarriers = 0;
  std::vector<CMatrix> z;
  std::vector<CMatrix> gram;

  int z_symbols() const { return static_cast<int>(z.size()); }

  bool hermitian(double tol = 1e-12) const {
    for (const auto& g : gram)
      if (!is_hermitian(g, tol)) return false;
    return true;
  }

  bool operator==(const PartialSumMessage& o) const {
    if (frame_id != o.frame_id || hop_index != o.hop_index || users != o.users ||
        subcarriers != o.subcarriers || z.size() != o.z.size() || gram.size() != o.gram.size())
      return false;
    for (std::size_t i = 0; i < z.size(); ++i)
      if (z[i] != o.z[i]) return false;
    for (std::size_t i = 0; i < gram.size(); ++i)
      if (gram[i] != o.gram[i]) return false;
    return true;
  }
};

inline void check_partials_shape(const LocalPartials& p, int K, int n_sc) {
  for (const auto& z : p.z)
    if (z.rows() != K || z.cols() != n_sc) throw ShapeError("z block is not K x n_sc");
  if (static_cast<int>(p.gram.size()) != n_sc) throw ShapeError("Gram list is not n_sc long");
  for (const auto& g : p.gram)
    if (g.rows() != K || g.cols() != K) throw ShapeError("Gram block is not K x K");
}

// out = incoming + local, element-wise. The first panel of a chain passes
// `incoming == nullptr` and must be hop 0.
inline PartialSumMessage accumulate(const PartialSumMessage* incoming, const LocalPartials& local,
                                    int hop_index, std::uint64_t frame_id) {
  if (local.gram.empty()) throw ShapeError("local partials carry no subcarriers");
  const int K = static_cast<int>(local.gram.front().rows());
  const int n_sc = static_cast<int>(local.gram.size());
  check_partials_shape(local, K, n_sc);

  PartialSumMessage out;
  out.frame_id = frame_id;
  out.hop_index = hop_index;
  out.users = K;
  out.subcarriers = n_sc;
  if (!incoming) {
    if (hop_index != 0)
      throw ChainError("hop " + std::to_string(hop_index) + " received no upstream message");
    out.z = local.z;
    out.gram = local.gram;
    return out;
  }
  if (incoming->hop_index != hop_index - 1)
    throw ChainError("hop sequence violation: got hop " + std::to_string(incoming->hop_index) +
                     " at hop " + std::to_string(hop_index));
  if (incoming->frame_id != frame_id)
    throw ChainError("frame id mismatch: upstream " + std::to_string(incoming->frame_id) +
                     ", local " + std::to_string(frame_id));
  if (incoming->users != K || incoming->subcarriers != n_sc || incoming->z.size() != local.z.size())
    throw ShapeError("upstream message shape does not match local partials");
  out.z.reserve(local.z.size());
  for (std::size_t s = 0; s < local.z.size(); ++s) out.z.push_back(incoming->z[s] + local.z[s]);
  out.gram.reserve(n_sc);
  for (int sc = 0; sc < n_sc; ++sc) out.gram.push_back(incoming->gram[sc] + local.gram[sc]);
  return out;
}

// A received panel frame (grids M x n_sc) reduced to its partial sums. With
// `genie` set, the given channel replaces the LS estimate.
inline LocalPartials process_panel_frame(const OfdmFrame& rx, const PilotPlan& pilots,
                                         const std::optional<LocalChannelEstimate>& genie = std::nullopt) {
  const LocalChannelEstimate est =
      genie ? *genie : estimate_channel_ls(rx.first(SymbolRole::ULP).grid, pilots);
  LocalPartials p;
  for (const FrameSymbol* s : rx.all(SymbolRole::ULD)) p.z.push_back(local_mrc(est, s->grid));
  p.gram = local_gram(est);
  return p;
}

}  // namespace dmimo
