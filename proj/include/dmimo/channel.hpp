#pragma once

// Frequency-domain channel synthesis and application.

#include "dmimo/common.hpp"
#include "dmimo/scenario.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

namespace dmimo {

// Per-panel M x K frequency response on every active subcarrier.
class ChannelTensor {
 public:
  ChannelTensor() = default;
  ChannelTensor(int J, int M, int K, int n_sc)
      : J_(J), M_(M), K_(K), n_sc_(n_sc),
        data_(static_cast<std::size_t>(J) * n_sc, CMatrix::Zero(M, K)) {
    if (J < 0 || M < 0 || K < 0 || n_sc < 0) throw ShapeError("negative channel tensor extent");
  }

  int panels() const { return J_; }
  int ports() const { return M_; }
  int users() const { return K_; }
  int subcarriers() const { return n_sc_; }

  CMatrix& at(int j, int sc) { return data_[index(j, sc)]; }
  const CMatrix& at(int j, int sc) const { return data_[index(j, sc)]; }

  // Vertically stacked (J*M) x K channel of one subcarrier, panels in index order.
  CMatrix stacked(int sc) const {
    CMatrix h(static_cast<Eigen::Index>(J_) * M_, K_);
    for (int j = 0; j < J_; ++j) h.middleRows(static_cast<Eigen::Index>(j) * M_, M_) = at(j, sc);
    return h;
  }

  bool all_finite() const {
    for (const auto& m : data_)
      if (!m.allFinite()) return false;
    return true;
  }

  void scale(cplx c) {
    for (auto& m : data_) m *= c;
  }

  bool operator==(const ChannelTensor& o) const {
    if (J_ != o.J_ || M_ != o.M_ || K_ != o.K_ || n_sc_ != o.n_sc_) return false;
    for (std::size_t i = 0; i < data_.size(); ++i)
      if (data_[i] != o.data_[i]) return false;
    return true;
  }

 private:
  std::size_t index(int j, int sc) const {
    if (j < 0 || j >= J_ || sc < 0 || sc >= n_sc_) throw ShapeError("channel tensor index out of range");
    return static_cast<std::size_t>(j) * n_sc_ + sc;
  }

  int J_ = 0, M_ = 0, K_ = 0, n_sc_ = 0;
  std::vector<CMatrix> data_;
};

// Free-space line-of-sight coefficient g(d) exp(-i 2 pi f d / c). The
// amplitude uses the centre-frequency wavelength across the whole band.
inline cplx los_coefficient(double distance, double frequency_hz, double wavelength,
                            Pathloss pathloss) {
  const double gain = pathloss == Pathloss::FREE_SPACE ? wavelength / (4.0 * kPi * distance) : 1.0;
  const double phase = -2.0 * kPi * std::fmod(frequency_hz * distance / kSpeedOfLight, 1.0);
  return std::polar(gain, phase);
}

// Largest minus smallest port-user distance, in samples at the baseband rate.
inline double max_delay_spread_samples(const Scenario& s) {
  double dmin = std::numeric_limits<double>::infinity(), dmax = 0.0;
  for (const auto& panel : s.deployment.panels)
    for (const auto& p : panel.port_positions())
      for (const auto& q : s.users.positions) {
        const double d = (p - q).norm();
        dmin = std::min(dmin, d);
        dmax = std::max(dmax, d);
      }
  return (dmax - dmin) / kSpeedOfLight * s.numerology().baseband_sample_rate_hz;
}

inline ChannelTensor synthesize_channel(const Scenario& s) {
  const auto& num = s.numerology();
  const auto& cm = s.config.channel;
  const int J = s.J(), K = s.K(), n_sc = num.active_subcarriers;
  const int M = s.M();
  const double lambda = num.wavelength();
  ChannelTensor h(J, M, K, n_sc);

  const bool los = cm.model != ChannelModel::IID_RAYLEIGH;
  const bool nlos = cm.model != ChannelModel::GEOMETRIC_LOS;
  const double los_amp = cm.model == ChannelModel::LOS_PLUS_RAYLEIGH
                             ? std::sqrt(cm.rician_k / (cm.rician_k + 1.0)) : 1.0;
  const double nlos_amp = cm.model == ChannelModel::LOS_PLUS_RAYLEIGH
                              ? std::sqrt(1.0 / (cm.rician_k + 1.0)) : 1.0;

  for (int j = 0; j < J; ++j) {
    const auto& panel = s.deployment.panels[j];
    if (panel.ports() != M) throw ShapeError("all panels must have the same port count");
    const auto ports = panel.port_positions();
    for (int m = 0; m < M; ++m)
      for (int k = 0; k < K; ++k) {
        const double d = (ports[m] - s.users.positions[k]).norm();
        if (los && d == 0.0)
          throw Error("user " + std::to_string(k) + " coincides with port " + std::to_string(m) +
                      " of panel " + std::to_string(j));
        // The Rayleigh component, when scaled by path loss, uses the same g(d).
        const double g = (los && cm.pathloss == Pathloss::FREE_SPACE) ? lambda / (4.0 * kPi * d) : 1.0;
        ComplexGaussian rng(derive_seed(s.config.seed, "rayleigh", j, m, k));
        for (int sc = 0; sc < n_sc; ++sc) {
          cplx v{0.0, 0.0};
          if (los) v += los_amp * los_coefficient(d, num.subcarrier_frequency_hz(sc), lambda, cm.pathloss);
          if (nlos) v += nlos_amp * (los ? g : 1.0) * rng();
          h.at(j, sc)(m, k) = v;
        }
      }
  }
  return h;
}

// y[sc] = H_j[sc] s[sc] + n for one OFDM symbol. `tx` is K x n_sc; noise is
// drawn per port in subcarrier order from streams keyed by `noise_seed`.
inline CMatrix apply_channel(const ChannelTensor& h, int panel, const CMatrix& tx,
                             double noise_power, std::uint64_t noise_seed) {
  if (tx.rows() != h.users() || tx.cols() != h.subcarriers())
    throw ShapeError("tx grid shape does not match the channel (K x n_sc)");
  if (noise_power < 0) throw Error("noise power must be non-negative");
  const int M = h.ports(), n_sc = h.subcarriers();
  CMatrix y(M, n_sc);
  for (int sc = 0; sc < n_sc; ++sc) y.col(sc) = h.at(panel, sc) * tx.col(sc);
  if (noise_power > 0) {
    for (int m = 0; m < M; ++m) {
      ComplexGaussian rng(derive_seed(noise_seed, "port", m));
      for (int sc = 0; sc < n_sc; ++sc) y(m, sc) += rng(noise_power);
    }
  }
  return y;
}

inline std::vector<CMatrix> apply_channel(const ChannelTensor& h, const CMatrix& tx,
                                          double noise_power, std::uint64_t noise_seed) {
  std::vector<CMatrix> out;
  out.reserve(h.panels());
  for (int j = 0; j < h.panels(); ++j)
    out.push_back(apply_channel(h, j, tx, noise_power, derive_seed(noise_seed, "panel", j)));
  return out;
}

// ----------------------------------------------------------------------------
// Text tensor file:
//   line 1: "dmimo-channel 1 <J> <M> <K> <n_sc>"
//   then J*n_sc*M*K lines "<re> <im>", ordered panel, subcarrier, port, user.
// ----------------------------------------------------------------------------

inline void write_channel_file(const ChannelTensor& h, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << "dmimo-channel 1 " << h.panels() << ' ' << h.ports() << ' ' << h.users() << ' '
      << h.subcarriers() << '\n';
  char buf[64];
  for (int j = 0; j < h.panels(); ++j)
    for (int sc = 0; sc < h.subcarriers(); ++sc)
      for (int m = 0; m < h.ports(); ++m)
        for (int k = 0; k < h.users(); ++k) {
          const cplx v = h.at(j, sc)(m, k);
          std::snprintf(buf, sizeof buf, "%.17g %.17g\n", v.real(), v.imag());
          out << buf;
        }
}

inline ChannelTensor read_channel_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  std::string magic;
  int version = 0, J = 0, M = 0, K = 0, n_sc = 0;
  if (!(in >> magic >> version >> J >> M >> K >> n_sc) || magic != "dmimo-channel" || version != 1)
    throw ParseError("'" + path.string() + "' has no valid channel header");
  ChannelTensor h(J, M, K, n_sc);
  for (int j = 0; j < J; ++j)
    for (int sc = 0; sc < n_sc; ++sc)
      for (int m = 0; m < M; ++m)
        for (int k = 0; k < K; ++k) {
          double re = 0, im = 0;
          if (!(in >> re >> im)) throw ParseError("'" + path.string() + "' is truncated");
          h.at(j, sc)(m, k) = {re, im};
        }
  return h;
}

}  // namespace dmimo
