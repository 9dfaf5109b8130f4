#include "dmimo/fronthaul.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace dmimo;

namespace {

PartialSumMessage random_message(int K, int n_sc, int n_z, std::uint64_t seed, double scale = 1.0) {
  PartialSumMessage m;
  m.frame_id = 0x0102030405060708ull;
  m.hop_index = 3;
  m.users = K;
  m.subcarriers = n_sc;
  for (int s = 0; s < n_z; ++s) m.z.push_back(scale * oracle::random_matrix(K, n_sc, derive_seed(seed, "z", s)));
  for (int sc = 0; sc < n_sc; ++sc)
    m.gram.push_back(scale * hermitian_gram(oracle::random_matrix(4, K, derive_seed(seed, "g", sc))));
  return m;
}

LocalPartials random_partials(int K, int n_sc, int n_z, std::uint64_t seed) {
  const PartialSumMessage m = random_message(K, n_sc, n_z, seed);
  return {m.z, m.gram};
}

// Byte count by enumerating what goes on the wire.
std::size_t counted_size(int K, int n_sc, int n_z, int bytes_per_complex) {
  std::size_t complexes = 0;
  for (int s = 0; s < n_z; ++s)
    for (int sc = 0; sc < n_sc; ++sc)
      for (int k = 0; k < K; ++k) ++complexes;
  for (int sc = 0; sc < n_sc; ++sc)
    for (int i = 0; i < K; ++i)
      for (int k = i; k < K; ++k) ++complexes;
  return 24 + complexes * bytes_per_complex;
}

std::vector<std::vector<LocalPartials>> chain_partials(int J, int frames, int K, int n_sc) {
  std::vector<std::vector<LocalPartials>> p(J);
  for (int j = 0; j < J; ++j)
    for (int f = 0; f < frames; ++f) p[j].push_back(random_partials(K, n_sc, 2, derive_seed(50, "p", j, f)));
  return p;
}

}  // namespace

TEST(Wire, DefaultMessageSize) {
  EXPECT_EQ(message_size_bytes(4, 792, 2, 32), 57048u);
  EXPECT_EQ(message_size_bytes(4, 792, 2, 32), counted_size(4, 792, 2, 4));
  for (int K : {1, 2, 3, 8})
    for (int bits : {32, 128}) EXPECT_EQ(message_size_bytes(K, 37, 3, bits), counted_size(K, 37, 3, bits / 8));
  const auto enc = serialize_message(random_message(4, 792, 2, 1), 32);
  EXPECT_EQ(enc.bytes.size(), 57048u);
}

TEST(Wire, SingleUserGramIsReal) {
  PartialSumMessage m = random_message(1, 10, 1, 2);
  const auto enc = serialize_message(m, 128);
  EXPECT_EQ(enc.bytes.size(), 24u + (10u + 10u) * 16u);
  const PartialSumMessage back = deserialize_message(enc.bytes);
  for (const auto& g : back.gram) EXPECT_EQ(g(0, 0).imag(), 0.0);
}

TEST(Wire, LosslessRoundTripIsBitExact) {
  const PartialSumMessage m = random_message(4, 50, 2, 3, 1e7);
  const PartialSumMessage back = deserialize_message(serialize_message(m, 128).bytes);
  EXPECT_TRUE(back == m);
}

TEST(Wire, HeaderFieldsAtDocumentedOffsets) {
  const PartialSumMessage m = random_message(3, 5, 2, 4);
  const auto b = serialize_message(m, 32).bytes;
  EXPECT_EQ(b[0], 0x08);
  EXPECT_EQ(b[7], 0x01);
  EXPECT_EQ(b[8], 3);
  EXPECT_EQ(b[12], 5);
  EXPECT_EQ(b[16], 3);
  EXPECT_EQ(b[18], 2);
  EXPECT_EQ(b[19], 1);
  EXPECT_EQ(b[22], 0);
  EXPECT_EQ(b[23], 0);
}

TEST(Wire, FixedPointErrorIsHalfAStep) {
  const PartialSumMessage m = random_message(4, 64, 2, 5);
  const auto enc = serialize_message(m, 32);
  EXPECT_EQ(enc.saturations, 0u);
  const PartialSumMessage back = deserialize_message(enc.bytes);
  const int ze = static_cast<std::int8_t>(enc.bytes[20]);
  const int ge = static_cast<std::int8_t>(enc.bytes[21]);
  double zmax = 0.0, gmax = 0.0;
  for (const auto& z : m.z) zmax = std::max({zmax, z.real().cwiseAbs().maxCoeff(), z.imag().cwiseAbs().maxCoeff()});
  for (const auto& g : m.gram) gmax = std::max({gmax, g.real().cwiseAbs().maxCoeff(), g.imag().cwiseAbs().maxCoeff()});
  // The exponent is the smallest that fits the block maximum.
  EXPECT_GE(std::ldexp(32767.0, ze), zmax);
  EXPECT_LT(std::ldexp(32767.0, ze - 1), zmax);
  EXPECT_GE(std::ldexp(32767.0, ge), gmax);
  for (std::size_t s = 0; s < m.z.size(); ++s)
    for (Eigen::Index i = 0; i < m.z[s].size(); ++i) {
      EXPECT_LE(std::abs(back.z[s](i).real() - m.z[s](i).real()), std::ldexp(0.5, ze));
      EXPECT_LE(std::abs(back.z[s](i).imag() - m.z[s](i).imag()), std::ldexp(0.5, ze));
    }
  for (std::size_t sc = 0; sc < m.gram.size(); ++sc) {
    EXPECT_TRUE(is_hermitian(back.gram[sc], 0.0));
    EXPECT_LE((back.gram[sc] - m.gram[sc]).cwiseAbs().maxCoeff(), std::sqrt(2.0) * std::ldexp(0.5, ge));
  }
}

TEST(Wire, ForcedExponentSaturatesAndCounts) {
  PartialSumMessage m = random_message(1, 1, 1, 6);
  m.z[0](0, 0) = cplx(100.0, -100.0);
  m.gram[0](0, 0) = 1.0;
  FixedPointOptions fx;
  fx.z_exponent = -10;  // full scale ~32
  const auto enc = serialize_message(m, 32, fx);
  EXPECT_EQ(enc.saturations, 2u);
  const PartialSumMessage back = deserialize_message(enc.bytes);
  EXPECT_EQ(back.z[0](0, 0), cplx(std::ldexp(32767.0, -10), std::ldexp(-32768.0, -10)));
}

TEST(Wire, NonFiniteAndBadModesAreRejected) {
  PartialSumMessage m = random_message(2, 3, 1, 7);
  EXPECT_THROW(serialize_message(m, 64), ValidationError);
  m.z[0](0, 0) = cplx(std::nan(""), 0.0);
  EXPECT_THROW(serialize_message(m, 32), Error);
  auto bytes = serialize_message(random_message(2, 3, 1, 7), 32).bytes;
  bytes.pop_back();
  EXPECT_THROW(deserialize_message(bytes), ParseError);
  bytes.push_back(0);
  bytes[19] = 7;
  EXPECT_THROW(deserialize_message(bytes), ParseError);
}

TEST(Wire, SizeIndependentOfPortsAndHop) {
  std::set<std::size_t> sizes;
  for (int M : {1, 4, 16, 64}) {
    PartialSumMessage m;
    m.users = 4;
    m.subcarriers = 20;
    for (int s = 0; s < 2; ++s) m.z.push_back(oracle::random_matrix(4, 20, M + s));
    for (int sc = 0; sc < 20; ++sc) m.gram.push_back(hermitian_gram(oracle::random_matrix(M, 4, sc)));
    for (int hop : {0, 5, 14}) {
      m.hop_index = hop;
      sizes.insert(serialize_message(m, 32).bytes.size());
    }
  }
  EXPECT_EQ(sizes.size(), 1u);
}

TEST(Chain, SinglePanelHasNoHops) {
  const auto p = chain_partials(1, 2, 2, 6);
  const ChainResult r = run_chain(p, {0});
  EXPECT_TRUE(r.byte_log.empty());
  ASSERT_EQ(r.delivered.size(), 2u);
  EXPECT_EQ(r.delivered[1].z, p[0][1].z);
}

TEST(Chain, SixteenPanelsGiveFifteenEqualHops) {
  const auto p = chain_partials(16, 3, 4, 12);
  ChainOptions opt;
  opt.bits_per_complex = 32;
  const ChainResult r = run_chain(p, identity_order(16), opt);
  ASSERT_EQ(r.byte_log.size(), 15u);
  for (int h = 0; h < 15; ++h) {
    EXPECT_EQ(r.byte_log[h].from_panel, h);
    EXPECT_EQ(r.byte_log[h].to_panel, h + 1);
    EXPECT_EQ(r.byte_log[h].messages, 3u);
    EXPECT_EQ(r.byte_log[h].bytes, 3u * message_size_bytes(4, 12, 2, 32));
  }
}

TEST(Chain, LosslessDeliveryIsTheSumOfAllPanels) {
  const int J = 5;
  const auto p = chain_partials(J, 1, 3, 8);
  const ChainResult r = run_chain(p, identity_order(J));
  const auto& d = r.delivered[0];
  EXPECT_EQ(d.hop_index, J - 1);
  for (int sc = 0; sc < 8; ++sc) {
    CMatrix g = CMatrix::Zero(3, 3);
    for (int j = 0; j < J; ++j) g += p[j][0].gram[sc];
    EXPECT_LE(oracle::rel(d.gram[sc], g), 1e-14);
  }
}

TEST(Chain, PipelinedMatchesSequentialExactly) {
  const auto p = chain_partials(6, 4, 4, 16);
  for (int bits : {32, 128}) {
    ChainOptions seq;
    seq.bits_per_complex = bits;
    ChainOptions pipe = seq;
    pipe.execution = ExecutionMode::PIPELINED;
    const ChainResult a = run_chain(p, identity_order(6), seq);
    const ChainResult b = run_chain(p, identity_order(6), pipe);
    ASSERT_EQ(a.delivered.size(), b.delivered.size());
    for (std::size_t f = 0; f < a.delivered.size(); ++f) EXPECT_TRUE(a.delivered[f] == b.delivered[f]);
    EXPECT_EQ(a.byte_log, b.byte_log);
    EXPECT_EQ(a.saturations, b.saturations);
  }
}

TEST(Chain, OrderChangesRoundingOnly) {
  const auto p = chain_partials(7, 1, 4, 10);
  const ChainResult a = run_chain(p, identity_order(7));
  const ChainResult b = run_chain(p, {6, 2, 4, 0, 1, 5, 3});
  for (int sc = 0; sc < 10; ++sc) EXPECT_LE(oracle::rel(a.delivered[0].gram[sc], b.delivered[0].gram[sc]), 1e-12);
  for (int s = 0; s < 2; ++s) EXPECT_LE(oracle::rel(a.delivered[0].z[s], b.delivered[0].z[s]), 1e-12);
  EXPECT_EQ(b.byte_log[0].from_panel, 6);
  EXPECT_EQ(b.byte_log[5].to_panel, 3);
}

TEST(Chain, WorkerErrorsPropagate) {
  std::vector<PanelStage> stages;
  for (int j = 0; j < 3; ++j)
    stages.push_back({j, [j](std::size_t f) {
                        if (j == 1 && f == 2) throw ShapeError("boom");
                        return random_partials(2, 4, 1, j);
                      }});
  ChainOptions opt;
  opt.execution = ExecutionMode::PIPELINED;
  EXPECT_THROW(run_chain(stages, 5, opt), ShapeError);
  EXPECT_THROW(run_chain(stages, 5), ShapeError);
  EXPECT_THROW(run_chain(std::vector<PanelStage>{}, 1), ChainError);
}

TEST(Latency, Examples) {
  LatencyModel m;
  m.J = 16;
  const auto p16 = predict_latency(m);
  EXPECT_EQ(p16.cycles, 12198);
  EXPECT_NEAR(p16.microseconds(), 12198 / 153.6, 1e-9);
  EXPECT_NEAR(p16.microseconds(), 79.41, 0.005);
  m.J = 1;
  const auto p1 = predict_latency(m);
  EXPECT_EQ(p1.cycles, 6378);
  EXPECT_NEAR(p1.microseconds(), 41.52, 0.005);
  m = LatencyModel{};
  m.cc_timing_ofdm = m.cc_local_ce_mrc = m.cc_ethernet_aggregate = 0;
  EXPECT_EQ(predict_latency(m).cycles, 0);
  m.J = 0;
  EXPECT_THROW(predict_latency(m), ValidationError);
}

TEST(Latency, LinearInPanelCount) {
  LatencyModel m;
  m.J = 1;
  const long base = predict_latency(m).cycles;
  for (int J = 2; J <= 64; ++J) {
    m.J = J;
    EXPECT_EQ(predict_latency(m).cycles - base, 388L * (J - 1));
  }
}

TEST(Bandwidth, DefaultCompositionAndScaling) {
  const BandwidthModel m;
  const auto p = predict_bandwidth(m);
  const double T = 7.0 * 1168.0 / 61.44e6;
  EXPECT_NEAR(p.bits_per_second, 32.0 * 792 * (2 * 4 + 16) / T, 1e-6);
  EXPECT_NEAR(p.z_bits_per_second + p.gram_bits_per_second, p.bits_per_second, 1e-6);
  EXPECT_NEAR(p.bits_per_frame, 32.0 * 792 * 24, 1e-6);
  // Doubling bit width or subcarriers doubles the rate.
  BandwidthModel d = m;
  d.bits_per_complex = 64;
  EXPECT_NEAR(predict_bandwidth(d).bits_per_second, 2 * p.bits_per_second, 1e-3);
  d = m;
  d.active_subcarriers = 1584;
  EXPECT_NEAR(predict_bandwidth(d).bits_per_second, 2 * p.bits_per_second, 1e-3);
  d = m;
  d.active_subcarriers = 0;
  EXPECT_EQ(predict_bandwidth(d).bits_per_second, 0.0);
  d = m;
  d.K = 8;
  EXPECT_NEAR(predict_bandwidth(d).bits_per_second, 32.0 * 792 * (16 + 64) / T, 1e-3);
  d = m;
  d.include_pilot_z = true;
  d.gram_triangle = true;
  EXPECT_NEAR(predict_bandwidth(d).bits_per_second, 32.0 * 792 * (12 + 10) / T, 1e-3);
}

TEST(Bandwidth, DataOnlyUsefulSymbolTimeReproducesTheTestbedRate) {
  BandwidthModel m;
  m.include_gram = false;
  m.frame_duration_s = 7.0 / 60e3;
  const auto p = predict_bandwidth(m);
  EXPECT_NEAR(p.bits_per_second, 32.0 * 792 * 8 * 60e3 / 7.0, 1e-3);
  EXPECT_LT(std::abs(p.deviation_percent()), 1.0);
  m.frame_duration_s = 0.0;
  EXPECT_THROW(predict_bandwidth(m), ValidationError);
}
