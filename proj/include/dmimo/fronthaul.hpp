#pragma once

// Daisy-chain fronthaul: partial-sum wire format, hop-by-hop transport and
// the analytical latency / bandwidth models.

#include "dmimo/common.hpp"
#include "dmimo/panel.hpp"
#include "dmimo/scenario.hpp"

#include <bit>
#include <condition_variable>
#include <deque>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>

namespace dmimo {

// ----------------------------------------------------------------------------
// Wire format (little endian)
//
//   offset size field
//        0    8 frame_id       u64
//        8    4 hop_index      u32
//       12    4 n_sc           u32
//       16    2 K              u16
//       18    1 n_z_symbols    u8
//       19    1 mode           u8   0 = lossless f64, 1 = fixed 16-bit
//       20    1 z_exponent     i8   fixed mode: value = q * 2^exponent
//       21    1 g_exponent     i8
//       22    2 reserved       u16  zero
//       24      z entries: symbol, subcarrier, user; I then Q
//               G upper triangle per subcarrier, row-major (i <= k); I then Q
//
// Lossless mode stores each component as an IEEE-754 double (128 bits per
// complex); fixed mode as int16 with one block exponent for all z entries and
// one for all G entries (32 bits per complex).
// ----------------------------------------------------------------------------

inline constexpr std::size_t kHeaderBytes = 24;

enum class WireMode : std::uint8_t { LOSSLESS = 0, FIXED16 = 1 };

inline WireMode wire_mode_for(int bits_per_complex) {
  if (bits_per_complex == 128) return WireMode::LOSSLESS;
  if (bits_per_complex == 32) return WireMode::FIXED16;
  throw ValidationError("fronthaul.bits_per_complex", "must be 32 or 128");
}

inline std::size_t gram_triangle_entries(int K) { return static_cast<std::size_t>(K) * (K + 1) / 2; }

inline std::size_t message_size_bytes(int K, int n_sc, int n_z_symbols, int bits_per_complex) {
  const std::size_t complexes = static_cast<std::size_t>(n_z_symbols) * n_sc * K +
                                static_cast<std::size_t>(n_sc) * gram_triangle_entries(K);
  return kHeaderBytes + complexes * static_cast<std::size_t>(bits_per_complex / 8);
}

struct FixedPointOptions {
  // When unset the encoder picks the smallest exponent that avoids clipping.
  std::optional<int> z_exponent;
  std::optional<int> g_exponent;
};

struct EncodedMessage {
  std::vector<std::uint8_t> bytes;
  std::size_t saturations = 0;
};

namespace wire {

inline void put_u(std::vector<std::uint8_t>& out, std::uint64_t v, int n) {
  for (int i = 0; i < n; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint64_t get_u(std::span<const std::uint8_t> in, std::size_t& pos, int n) {
  if (pos + n > in.size()) throw ParseError("partial-sum message truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(in[pos + i]) << (8 * i);
  pos += n;
  return v;
}

inline int block_exponent(double max_abs) {
  if (max_abs == 0.0 || !std::isfinite(max_abs)) return 0;
  int e = static_cast<int>(std::ceil(std::log2(max_abs / 32767.0)));
  while (std::ldexp(32767.0, e) < max_abs) ++e;
  while (e > -128 && std::ldexp(32767.0, e - 1) >= max_abs) --e;
  return std::clamp(e, -128, 127);
}

inline std::int16_t quantize(double v, int exponent, std::size_t& saturations) {
  const double q = std::nearbyint(std::ldexp(v, -exponent));
  if (q > 32767.0) {
    ++saturations;
    return 32767;
  }
  if (q < -32768.0) {
    ++saturations;
    return -32768;
  }
  return static_cast<std::int16_t>(q);
}

template <typename ZF, typename GF>
void for_each_entry(const PartialSumMessage& m, ZF&& zf, GF&& gf) {
  for (const auto& z : m.z)
    for (int sc = 0; sc < m.subcarriers; ++sc)
      for (int k = 0; k < m.users; ++k) zf(z(k, sc));
  for (const auto& g : m.gram)
    for (int i = 0; i < m.users; ++i)
      for (int k = i; k < m.users; ++k) gf(i == k ? cplx(g(i, i).real(), 0.0) : g(i, k));
}

}  // namespace wire

inline EncodedMessage serialize_message(const PartialSumMessage& m, int bits_per_complex,
                                        const FixedPointOptions& fx = {}) {
  const WireMode mode = wire_mode_for(bits_per_complex);
  if (m.z_symbols() > 255 || m.users > 65535) throw ShapeError("message too large for the wire header");
  if (static_cast<int>(m.gram.size()) != m.subcarriers) throw ShapeError("Gram list is not n_sc long");

  double z_max = 0.0, g_max = 0.0;
  bool finite = true;
  auto track = [&](double& mx) {
    return [&finite, &out_max = mx](cplx v) {
      finite = finite && std::isfinite(v.real()) && std::isfinite(v.imag());
      out_max = std::max({out_max, std::abs(v.real()), std::abs(v.imag())});
    };
  };
  wire::for_each_entry(m, track(z_max), track(g_max));
  if (!finite) throw Error("partial-sum message has non-finite entries");

  const int ze = fx.z_exponent.value_or(wire::block_exponent(z_max));
  const int ge = fx.g_exponent.value_or(wire::block_exponent(g_max));
  if (ze < -128 || ze > 127 || ge < -128 || ge > 127) throw ValidationError("fixed_point", "exponent out of int8 range");

  EncodedMessage enc;
  auto& out = enc.bytes;
  out.reserve(message_size_bytes(m.users, m.subcarriers, m.z_symbols(), bits_per_complex));
  wire::put_u(out, m.frame_id, 8);
  wire::put_u(out, static_cast<std::uint32_t>(m.hop_index), 4);
  wire::put_u(out, static_cast<std::uint32_t>(m.subcarriers), 4);
  wire::put_u(out, static_cast<std::uint16_t>(m.users), 2);
  wire::put_u(out, static_cast<std::uint8_t>(m.z_symbols()), 1);
  wire::put_u(out, static_cast<std::uint8_t>(mode), 1);
  wire::put_u(out, static_cast<std::uint8_t>(static_cast<std::int8_t>(mode == WireMode::FIXED16 ? ze : 0)), 1);
  wire::put_u(out, static_cast<std::uint8_t>(static_cast<std::int8_t>(mode == WireMode::FIXED16 ? ge : 0)), 1);
  wire::put_u(out, 0, 2);

  auto emitter = [&](int exponent) {
    return [&, exponent](cplx v) {
      if (mode == WireMode::LOSSLESS) {
        wire::put_u(out, std::bit_cast<std::uint64_t>(v.real()), 8);
        wire::put_u(out, std::bit_cast<std::uint64_t>(v.imag()), 8);
      } else {
        wire::put_u(out, static_cast<std::uint16_t>(wire::quantize(v.real(), exponent, enc.saturations)), 2);
        wire::put_u(out, static_cast<std::uint16_t>(wire::quantize(v.imag(), exponent, enc.saturations)), 2);
      }
    };
  };
  wire::for_each_entry(m, emitter(ze), emitter(ge));
  return enc;
}

inline PartialSumMessage deserialize_message(std::span<const std::uint8_t> in) {
  std::size_t pos = 0;
  PartialSumMessage m;
  m.frame_id = wire::get_u(in, pos, 8);
  m.hop_index = static_cast<int>(wire::get_u(in, pos, 4));
  m.subcarriers = static_cast<int>(wire::get_u(in, pos, 4));
  m.users = static_cast<int>(wire::get_u(in, pos, 2));
  const int n_z = static_cast<int>(wire::get_u(in, pos, 1));
  const auto mode_raw = wire::get_u(in, pos, 1);
  if (mode_raw > 1) throw ParseError("unknown wire mode " + std::to_string(mode_raw));
  const auto mode = static_cast<WireMode>(mode_raw);
  const int ze = static_cast<std::int8_t>(wire::get_u(in, pos, 1));
  const int ge = static_cast<std::int8_t>(wire::get_u(in, pos, 1));
  pos += 2;
  const int bits = mode == WireMode::LOSSLESS ? 128 : 32;
  if (in.size() != message_size_bytes(m.users, m.subcarriers, n_z, bits))
    throw ParseError("partial-sum message length " + std::to_string(in.size()) +
                     " does not match its header");

  auto read = [&](int exponent) -> cplx {
    if (mode == WireMode::LOSSLESS) {
      const double re = std::bit_cast<double>(wire::get_u(in, pos, 8));
      const double im = std::bit_cast<double>(wire::get_u(in, pos, 8));
      return {re, im};
    }
    const auto re = static_cast<std::int16_t>(wire::get_u(in, pos, 2));
    const auto im = static_cast<std::int16_t>(wire::get_u(in, pos, 2));
    return {std::ldexp(static_cast<double>(re), exponent), std::ldexp(static_cast<double>(im), exponent)};
  };

  m.z.assign(n_z, CMatrix(m.users, m.subcarriers));
  for (auto& z : m.z)
    for (int sc = 0; sc < m.subcarriers; ++sc)
      for (int k = 0; k < m.users; ++k) z(k, sc) = read(ze);
  m.gram.assign(m.subcarriers, CMatrix(m.users, m.users));
  for (auto& g : m.gram)
    for (int i = 0; i < m.users; ++i)
      for (int k = i; k < m.users; ++k) {
        const cplx v = read(ge);
        if (i == k) {
          g(i, i) = v.real();
        } else {
          g(i, k) = v;
          g(k, i) = std::conj(v);
        }
      }
  return m;
}

// ----------------------------------------------------------------------------
// Chain transport
// ----------------------------------------------------------------------------

struct HopLink {
  int from_panel = 0;
  int to_panel = 0;
  std::uint64_t bytes = 0;
  std::uint64_t messages = 0;

  bool operator==(const HopLink&) const = default;
};

// One node of the chain: its panel index and the local work for a frame.
struct PanelStage {
  int panel = 0;
  std::function<LocalPartials(std::size_t frame)> local_work;
};

struct ChainOptions {
  int bits_per_complex = 128;
  ExecutionMode execution = ExecutionMode::SEQUENTIAL;
  FixedPointOptions fixed_point;
};

struct ChainResult {
  std::vector<PartialSumMessage> delivered;  // per frame, as received by the central node
  std::vector<HopLink> byte_log;             // J - 1 links in chain order
  std::size_t saturations = 0;
};

namespace detail {

// Single-producer single-consumer byte queue for one hop.
class HopQueue {
 public:
  void push(std::vector<std::uint8_t> msg) {
    {
      std::lock_guard lock(mu_);
      q_.push_back(std::move(msg));
    }
    cv_.notify_one();
  }

  std::optional<std::vector<std::uint8_t>> pop() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return closed_ || !q_.empty(); });
    if (q_.empty()) return std::nullopt;
    auto m = std::move(q_.front());
    q_.pop_front();
    return m;
  }

  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::vector<std::uint8_t>> q_;
  bool closed_ = false;
};

}  // namespace detail

// Every stage accumulates onto the upstream message and forwards it. Messages
// cross each hop as serialized bytes; the last stage hands its message to the
// central node directly. Sequential and pipelined execution produce identical
// results because accumulation per frame is strictly hop-ordered.
inline ChainResult run_chain(const std::vector<PanelStage>& stages, std::size_t frames,
                             const ChainOptions& opt = {}) {
  const int J = static_cast<int>(stages.size());
  if (J < 1) throw ChainError("chain has no panels");
  ChainResult res;
  res.delivered.resize(frames);
  for (int h = 0; h + 1 < J; ++h) res.byte_log.push_back({stages[h].panel, stages[h + 1].panel, 0, 0});

  if (opt.execution == ExecutionMode::SEQUENTIAL || J == 1) {
    for (std::size_t f = 0; f < frames; ++f) {
      std::optional<PartialSumMessage> upstream;
      for (int h = 0; h < J; ++h) {
        const LocalPartials local = stages[h].local_work(f);
        PartialSumMessage out = accumulate(upstream ? &*upstream : nullptr, local, h, f);
        if (h + 1 == J) {
          res.delivered[f] = std::move(out);
          break;
        }
        EncodedMessage enc = serialize_message(out, opt.bits_per_complex, opt.fixed_point);
        res.byte_log[h].bytes += enc.bytes.size();
        res.byte_log[h].messages += 1;
        res.saturations += enc.saturations;
        upstream = deserialize_message(enc.bytes);
      }
    }
    return res;
  }

  std::vector<detail::HopQueue> queues(J - 1);
  std::vector<std::size_t> saturations(J, 0);
  std::vector<std::exception_ptr> errors(J);
  std::vector<std::thread> workers;
  auto shutdown = [&] {
    for (auto& q : queues) q.close();
  };
  for (int h = 0; h < J; ++h) {
    workers.emplace_back([&, h] {
      try {
        for (std::size_t f = 0; f < frames; ++f) {
          // Local work runs ahead of the upstream message.
          const LocalPartials local = stages[h].local_work(f);
          PartialSumMessage out;
          if (h == 0) {
            out = accumulate(nullptr, local, 0, f);
          } else {
            auto bytes = queues[h - 1].pop();
            if (!bytes) return;
            const PartialSumMessage in = deserialize_message(*bytes);
            out = accumulate(&in, local, h, f);
          }
          if (h + 1 == J) {
            res.delivered[f] = std::move(out);
          } else {
            EncodedMessage enc = serialize_message(out, opt.bits_per_complex, opt.fixed_point);
            res.byte_log[h].bytes += enc.bytes.size();
            res.byte_log[h].messages += 1;
            saturations[h] += enc.saturations;
            queues[h].push(std::move(enc.bytes));
          }
        }
      } catch (...) {
        errors[h] = std::current_exception();
        shutdown();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  for (auto s : saturations) res.saturations += s;
  return res;
}

// Convenience form: precomputed partials per panel index per frame, walked in
// `chain_order`.
inline ChainResult run_chain(const std::vector<std::vector<LocalPartials>>& partials,
                             const std::vector<int>& chain_order, const ChainOptions& opt = {}) {
  if (partials.empty()) throw ChainError("chain has no panels");
  const std::size_t frames = partials.front().size();
  std::vector<PanelStage> stages;
  for (int p : chain_order) {
    if (p < 0 || p >= static_cast<int>(partials.size())) throw ChainError("chain order names an unknown panel");
    if (partials[p].size() != frames) throw ShapeError("panels disagree on frame count");
    stages.push_back({p, [&partials, p](std::size_t f) { return partials[p][f]; }});
  }
  return run_chain(stages, frames, opt);
}

// ----------------------------------------------------------------------------
// Latency model: tau = tau_local + tau_transfer (J - 1), in FPGA clock cycles.
// ----------------------------------------------------------------------------

struct LatencyModel {
  double fpga_clock_hz = 153.6e6;
  long cc_timing_ofdm = 6357;
  long cc_local_ce_mrc = 21;
  long cc_ethernet_aggregate = 388;
  int J = 16;

  static LatencyModel from(const LatencyConstants& c, int J) {
    return {c.fpga_clock_hz, c.cc_timing_ofdm, c.cc_local_ce_mrc, c.cc_ethernet_aggregate, J};
  }

  double seconds(long cycles) const { return static_cast<double>(cycles) / fpga_clock_hz; }
};

struct LatencyPrediction {
  long cycles = 0;
  double seconds = 0.0;
  double microseconds() const { return seconds * 1e6; }
};

inline LatencyPrediction predict_latency(const LatencyModel& m) {
  if (m.J < 1) throw ValidationError("latency.J", "must be >= 1");
  if (!(m.fpga_clock_hz > 0)) throw ValidationError("latency.fpga_clock_hz", "must be positive");
  if (m.cc_timing_ofdm < 0 || m.cc_local_ce_mrc < 0 || m.cc_ethernet_aggregate < 0)
    throw ValidationError("latency", "cycle counts must be >= 0");
  LatencyPrediction p;
  p.cycles = m.cc_timing_ofdm + m.cc_local_ce_mrc + m.cc_ethernet_aggregate * (m.J - 1);
  p.seconds = m.seconds(p.cycles);
  return p;
}

// ----------------------------------------------------------------------------
// Bandwidth model
// ----------------------------------------------------------------------------

// Per-hop rate measured on the hardware testbed with four users.
inline constexpr double kTestbedReferenceRateBps = 1.73e9;

struct BandwidthModel {
  int K = 4;
  int active_subcarriers = 792;
  int bits_per_complex = 32;
  int n_z_symbols = 2;
  bool include_pilot_z = false;
  bool include_gram = true;
  // Count only the K(K+1)/2 Hermitian triangle instead of K^2 Gram entries.
  bool gram_triangle = false;
  double frame_duration_s = 7.0 * 1168.0 / 61.44e6;

  static BandwidthModel from(const ScenarioConfig& c, int K) {
    BandwidthModel m;
    m.K = K;
    m.active_subcarriers = c.numerology.active_subcarriers;
    m.bits_per_complex = c.fronthaul.bits_per_complex;
    m.n_z_symbols = c.numerology.count(SymbolRole::ULD);
    m.include_pilot_z = c.fronthaul.include_pilot_z;
    m.include_gram = c.fronthaul.include_gram;
    m.gram_triangle = c.fronthaul.gram_triangle;
    m.frame_duration_s = c.numerology.frame_duration_s();
    return m;
  }

  void validate() const {
    if (K < 1) throw ValidationError("bandwidth.K", "must be >= 1");
    if (active_subcarriers < 0) throw ValidationError("bandwidth.active_subcarriers", "must be >= 0");
    if (bits_per_complex < 1) throw ValidationError("bandwidth.bits_per_complex", "must be positive");
    if (n_z_symbols < 0) throw ValidationError("bandwidth.n_z_symbols", "must be >= 0");
    if (!(frame_duration_s > 0)) throw ValidationError("bandwidth.frame_duration_s", "must be positive");
  }
};

struct BandwidthPrediction {
  double bits_per_second = 0.0;
  double z_bits_per_second = 0.0;
  double gram_bits_per_second = 0.0;
  double bits_per_frame = 0.0;

  // Signed percentage relative to the testbed's measured per-hop rate.
  double deviation_percent(double reference = kTestbedReferenceRateBps) const {
    return 100.0 * (bits_per_second - reference) / reference;
  }
};

inline BandwidthPrediction predict_bandwidth(const BandwidthModel& m) {
  m.validate();
  const double n_z_eff = m.n_z_symbols + (m.include_pilot_z ? 1 : 0);
  const double gram_entries =
      !m.include_gram ? 0.0 : m.gram_triangle ? m.K * (m.K + 1) / 2.0 : static_cast<double>(m.K) * m.K;
  const double per_sc = static_cast<double>(m.bits_per_complex) * m.active_subcarriers;
  BandwidthPrediction p;
  p.z_bits_per_second = per_sc * n_z_eff * m.K / m.frame_duration_s;
  p.gram_bits_per_second = per_sc * gram_entries / m.frame_duration_s;
  p.bits_per_second = p.z_bits_per_second + p.gram_bits_per_second;
  p.bits_per_frame = p.bits_per_second * m.frame_duration_s;
  return p;
}

}  // namespace dmimo
