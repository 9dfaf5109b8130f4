#pragma once

// OFDM framing, constellation mapping and the unitary modulator/demodulator.

#include "dmimo/common.hpp"
#include "dmimo/scenario.hpp"

#include <unsupported/Eigen/FFT>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>

namespace dmimo {

// ----------------------------------------------------------------------------
// Constellations (Gray mapped, unit average energy)
// ----------------------------------------------------------------------------

// Point for symbol index `idx`, whose bits are read MSB first.
inline cplx constellation_point(Modulation mod, unsigned idx) {
  if (mod == Modulation::QPSK) {
    const int b0 = (idx >> 1) & 1, b1 = idx & 1;
    return cplx(1 - 2 * b0, 1 - 2 * b1) / std::sqrt(2.0);
  }
  const int b0 = (idx >> 3) & 1, b1 = (idx >> 2) & 1, b2 = (idx >> 1) & 1, b3 = idx & 1;
  const double i = (1 - 2 * b0) * (2 - (1 - 2 * b2));
  const double q = (1 - 2 * b1) * (2 - (1 - 2 * b3));
  return cplx(i, q) / std::sqrt(10.0);
}

inline std::vector<cplx> constellation(Modulation mod) {
  std::vector<cplx> pts(1u << bits_per_symbol(mod));
  for (unsigned i = 0; i < pts.size(); ++i) pts[i] = constellation_point(mod, i);
  return pts;
}

inline unsigned hard_decision(Modulation mod, cplx v) {
  const unsigned n = 1u << bits_per_symbol(mod);
  unsigned best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (unsigned i = 0; i < n; ++i) {
    const double d = std::norm(v - constellation_point(mod, i));
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

// ----------------------------------------------------------------------------
// Pilots
// ----------------------------------------------------------------------------

// Comb pilots on the single ULP symbol: subcarrier sc belongs to user
// sc % comb_factor and carries values[sc]. `frequency_index` holds each
// subcarrier's offset from DC in spacings, used as the interpolation axis;
// empty means equally spaced.
struct PilotPlan {
  int comb_factor = 1;
  std::vector<cplx> values;
  std::vector<int> frequency_index;

  int owner(int sc) const { return sc % comb_factor; }
  int subcarriers() const { return static_cast<int>(values.size()); }
  double frequency(int sc) const { return frequency_index.empty() ? sc : frequency_index[sc]; }

  void validate(int K) const {
    if (comb_factor != K)
      throw ValidationError("pilot.comb_factor", "must equal the user count so the combs cover every subcarrier");
    for (const auto& v : values)
      if (std::abs(std::abs(v) - 1.0) > 1e-12)
        throw ValidationError("pilot.values", "pilots must have unit magnitude");
    if (!frequency_index.empty() && frequency_index.size() != values.size())
      throw ValidationError("pilot.frequency_index", "must be empty or one entry per subcarrier");
  }
};

inline PilotPlan make_pilot_plan(int K, int n_sc, std::uint64_t seed) {
  PilotPlan p;
  p.comb_factor = K;
  p.values.resize(n_sc);
  std::mt19937_64 rng(derive_seed(seed, "pilot"));
  for (auto& v : p.values) v = constellation_point(Modulation::QPSK, static_cast<unsigned>(rng() & 3u));
  return p;
}

inline PilotPlan make_pilot_plan(int K, const OfdmNumerology& num, std::uint64_t seed) {
  PilotPlan p = make_pilot_plan(K, num.active_subcarriers, seed);
  p.frequency_index.resize(num.active_subcarriers);
  for (int i = 0; i < num.active_subcarriers; ++i) p.frequency_index[i] = num.subcarrier_offset(i);
  return p;
}

// ----------------------------------------------------------------------------
// Frames
// ----------------------------------------------------------------------------

struct FrameSymbol {
  SymbolRole role = SymbolRole::GUARD;
  CMatrix grid;      // streams x active_subcarriers
  CMatrix waveform;  // streams x (fft_size + cp_length); empty until modulated
};

struct OfdmFrame {
  std::vector<FrameSymbol> symbols;

  const FrameSymbol& first(SymbolRole role) const {
    for (const auto& s : symbols)
      if (s.role == role) return s;
    throw Error(std::string("frame has no ") + to_string(role) + " symbol");
  }

  std::vector<const FrameSymbol*> all(SymbolRole role) const {
    std::vector<const FrameSymbol*> out;
    for (const auto& s : symbols)
      if (s.role == role) out.push_back(&s);
    return out;
  }
};

inline std::size_t payload_bits_per_frame(int K, Modulation mod, const OfdmNumerology& num) {
  return static_cast<std::size_t>(num.count(SymbolRole::ULD)) * num.active_subcarriers *
         bits_per_symbol(mod) * K;
}

// Payload bits fill ULD symbols in frame order, then users, then subcarriers,
// each constellation symbol consuming its bits MSB first.
inline OfdmFrame build_tx_frame(int K, Modulation mod, const PilotPlan& pilots,
                                std::span<const std::uint8_t> payload_bits,
                                const OfdmNumerology& num) {
  const int n_sc = num.active_subcarriers;
  const int bps = bits_per_symbol(mod);
  if (payload_bits.size() != payload_bits_per_frame(K, mod, num))
    throw ShapeError("payload is " + std::to_string(payload_bits.size()) + " bits, frame needs " +
                     std::to_string(payload_bits_per_frame(K, mod, num)));
  if (pilots.subcarriers() != n_sc) throw ShapeError("pilot plan does not cover the active subcarriers");
  pilots.validate(K);

  OfdmFrame f;
  std::size_t bit = 0;
  for (SymbolRole role : num.frame_symbols) {
    FrameSymbol s;
    s.role = role;
    s.grid = CMatrix::Zero(K, n_sc);
    if (role == SymbolRole::ULP) {
      for (int sc = 0; sc < n_sc; ++sc) s.grid(pilots.owner(sc), sc) = pilots.values[sc];
    } else if (role == SymbolRole::ULD) {
      for (int k = 0; k < K; ++k)
        for (int sc = 0; sc < n_sc; ++sc) {
          unsigned idx = 0;
          for (int b = 0; b < bps; ++b) idx = (idx << 1) | (payload_bits[bit++] & 1u);
          s.grid(k, sc) = constellation_point(mod, idx);
        }
    }
    f.symbols.push_back(std::move(s));
  }
  return f;
}

// ----------------------------------------------------------------------------
// Modulator / demodulator
// ----------------------------------------------------------------------------

namespace detail {
inline Eigen::FFT<double>& fft_engine() {
  thread_local Eigen::FFT<double> engine = [] {
    Eigen::FFT<double> e;
    e.SetFlag(Eigen::FFT<double>::Unscaled);
    return e;
  }();
  return engine;
}
}  // namespace detail

// Unitary IFFT of the active grid (DC empty, symmetric guard bands) with the
// cyclic prefix prepended. Output length fft_size + cp_length.
inline CVector ofdm_modulate(const Eigen::Ref<const CVector>& grid, const OfdmNumerology& num) {
  if (grid.size() != num.active_subcarriers)
    throw ShapeError("grid length " + std::to_string(grid.size()) + " != active_subcarriers");
  const int N = num.fft_size, cp = num.cp_length;
  std::vector<cplx> bins(N, cplx{}), time;
  for (int i = 0; i < num.active_subcarriers; ++i) bins[num.fft_bin(i)] = grid[i];
  detail::fft_engine().inv(time, bins);
  const double scale = 1.0 / std::sqrt(static_cast<double>(N));
  CVector out(N + cp);
  for (int t = 0; t < cp; ++t) out[t] = time[N - cp + t] * scale;
  for (int t = 0; t < N; ++t) out[cp + t] = time[t] * scale;
  return out;
}

// Removes the CP and returns the active grid. `timing_offset` is the number of
// samples the FFT window is advanced into the CP (0 = ideal). An advance of o
// samples multiplies bin n by exp(-i 2 pi o n / N). Negative offsets delay the
// window and need at least that many trailing samples in `waveform`.
inline CVector ofdm_demodulate(const Eigen::Ref<const CVector>& waveform, int timing_offset,
                               const OfdmNumerology& num) {
  const int N = num.fft_size, cp = num.cp_length;
  if (waveform.size() < N + cp) throw ShapeError("waveform shorter than one OFDM symbol");
  if (timing_offset > cp)
    throw Error("timing offset " + std::to_string(timing_offset) + " exceeds the CP length " +
                std::to_string(cp));
  const Eigen::Index start = cp - timing_offset;
  if (start + N > waveform.size())
    throw Error("timing offset " + std::to_string(timing_offset) + " runs past the end of the waveform");
  std::vector<cplx> time(waveform.data() + start, waveform.data() + start + N), bins;
  detail::fft_engine().fwd(bins, time);
  const double scale = 1.0 / std::sqrt(static_cast<double>(N));
  CVector out(num.active_subcarriers);
  for (int i = 0; i < num.active_subcarriers; ++i) out[i] = bins[num.fft_bin(i)] * scale;
  return out;
}

// Fills every symbol's waveform from its grid.
inline void modulate_frame(OfdmFrame& f, const OfdmNumerology& num) {
  for (auto& s : f.symbols) {
    s.waveform.resize(s.grid.rows(), num.symbol_samples());
    for (Eigen::Index r = 0; r < s.grid.rows(); ++r)
      s.waveform.row(r) = ofdm_modulate(s.grid.row(r).transpose(), num).transpose();
  }
}

// Rebuilds every symbol's grid from its waveform.
inline void demodulate_frame(OfdmFrame& f, int timing_offset, const OfdmNumerology& num) {
  for (auto& s : f.symbols) {
    s.grid.resize(s.waveform.rows(), num.active_subcarriers);
    for (Eigen::Index r = 0; r < s.waveform.rows(); ++r)
      s.grid.row(r) = ofdm_demodulate(s.waveform.row(r).transpose(), timing_offset, num).transpose();
  }
}

// Debug dump. Per symbol a header "symbol <i> <ROLE> <streams> <n_sc>" then
// one "<stream> <sc> <re> <im>" line per grid entry.
inline void write_frame_dump(const OfdmFrame& f, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  char buf[96];
  for (std::size_t i = 0; i < f.symbols.size(); ++i) {
    const auto& s = f.symbols[i];
    out << "symbol " << i << ' ' << to_string(s.role) << ' ' << s.grid.rows() << ' ' << s.grid.cols() << '\n';
    for (Eigen::Index r = 0; r < s.grid.rows(); ++r)
      for (Eigen::Index c = 0; c < s.grid.cols(); ++c) {
        std::snprintf(buf, sizeof buf, "%ld %ld %.17g %.17g\n", static_cast<long>(r),
                      static_cast<long>(c), s.grid(r, c).real(), s.grid(r, c).imag());
        out << buf;
      }
  }
}

}  // namespace dmimo
