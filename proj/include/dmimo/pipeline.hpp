#pragma once

// End-to-end uplink run of one scenario: UE frames, channel, per-panel
// processing, the fronthaul chain and central ZF detection.

#include "dmimo/central.hpp"
#include "dmimo/channel.hpp"
#include "dmimo/fronthaul.hpp"
#include "dmimo/ofdm.hpp"
#include "dmimo/panel.hpp"
#include "dmimo/scenario.hpp"

namespace dmimo {

struct RunResult {
  Scenario scenario;

  std::vector<PartialSumMessage> delivered;        // per frame
  std::vector<ZfResult> zf;                        // per frame
  std::vector<std::vector<CMatrix>> transmitted;   // per frame, per ULD symbol (K x n_sc)
  std::vector<HopLink> byte_log;
  std::size_t saturations = 0;

  SirResult sir;
  Eigen::MatrixXd gram_db;
  std::vector<double> evm_db;
  std::vector<long> symbol_errors;
  long symbols_per_user = 0;
  std::vector<std::vector<cplx>> constellation;  // per user, capped
  std::size_t zf_fallbacks = 0;
  std::size_t zf_failures = 0;

  LatencyPrediction latency;
  BandwidthPrediction bandwidth;
  // Bytes actually put on one hop per frame, expressed as a rate.
  double wire_rate_bps = 0.0;
};

inline std::vector<std::uint8_t> random_payload(std::size_t n_bits, std::uint64_t seed) {
  std::vector<std::uint8_t> bits(n_bits);
  std::mt19937_64 rng(seed);
  std::uint64_t word = 0;
  for (std::size_t i = 0; i < n_bits; ++i) {
    if (i % 64 == 0) word = rng();
    bits[i] = static_cast<std::uint8_t>((word >> (i % 64)) & 1u);
  }
  return bits;
}

namespace detail {

// Frequency-domain picture of what the UEs put on air for one frame.
struct TxFrameState {
  std::vector<CMatrix> on_air;     // per frame symbol, K x n_sc, power-scaled
  std::vector<CMatrix> uld_truth;  // per ULD symbol, unit-energy
};

inline TxFrameState build_tx_state(const Scenario& s, const PilotPlan& pilots, std::size_t frame) {
  const auto& num = s.numerology();
  const int K = s.K();
  const auto bits = random_payload(payload_bits_per_frame(K, s.config.modulation, num),
                                   derive_seed(s.config.seed, "payload", frame));
  OfdmFrame tx = build_tx_frame(K, s.config.modulation, pilots, bits, num);
  Eigen::VectorXd amp(K);
  for (int k = 0; k < K; ++k) amp[k] = std::sqrt(s.users.tx_power[k]);

  TxFrameState st;
  const bool wave = s.config.processing.waveform_path;
  if (wave) modulate_frame(tx, num);
  for (const auto& sym : tx.symbols) {
    if (sym.role == SymbolRole::ULD) st.uld_truth.push_back(sym.grid);
    CMatrix grid = sym.grid;
    if (wave) {
      // The channel acts per subcarrier on the CP-protected UE waveform.
      for (int k = 0; k < K; ++k) grid.row(k) = ofdm_demodulate(sym.waveform.row(k).transpose(), 0, num).transpose();
    }
    st.on_air.push_back(amp.asDiagonal() * grid);
  }
  return st;
}

inline OfdmFrame receive_panel_frame(const Scenario& s, const ChannelTensor& h, const TxFrameState& tx,
                                     int panel, std::size_t frame) {
  const auto& num = s.numerology();
  const auto& proc = s.config.processing;
  const int offset = proc.timing_offsets.empty() ? 0 : proc.timing_offsets[panel];
  OfdmFrame rx;
  for (std::size_t t = 0; t < num.frame_symbols.size(); ++t) {
    FrameSymbol sym;
    sym.role = num.frame_symbols[t];
    if (sym.role != SymbolRole::ULP && sym.role != SymbolRole::ULD) {
      sym.grid = CMatrix::Zero(h.ports(), num.active_subcarriers);
      rx.symbols.push_back(std::move(sym));
      continue;
    }
    sym.grid = apply_channel(h, panel, tx.on_air[t], s.config.noise_power,
                             derive_seed(s.config.seed, "noise", frame, t, panel));
    if (proc.waveform_path) {
      for (Eigen::Index m = 0; m < sym.grid.rows(); ++m) {
        const CVector wave = ofdm_modulate(sym.grid.row(m).transpose(), num);
        sym.grid.row(m) = ofdm_demodulate(wave, offset, num).transpose();
      }
    }
    rx.symbols.push_back(std::move(sym));
  }
  return rx;
}

}  // namespace detail

inline RunResult run_scenario(const Scenario& s) {
  const auto& cfg = s.config;
  const auto& num = s.numerology();
  const int J = s.J(), K = s.K(), n_sc = num.active_subcarriers;
  const auto frames = static_cast<std::size_t>(cfg.processing.frames);

  if (!cfg.processing.timing_offsets.empty() && cfg.channel.model != ChannelModel::IID_RAYLEIGH) {
    const int spread = static_cast<int>(std::ceil(max_delay_spread_samples(s)));
    for (int o : cfg.processing.timing_offsets)
      if (o > num.cp_length - spread)
        throw ValidationError("processing.timing_offsets",
                              "offset " + std::to_string(o) + " exceeds cp_length minus the delay spread (" +
                                  std::to_string(spread) + " samples)");
  }

  const PilotPlan pilots = make_pilot_plan(K, num, cfg.seed);
  const ChannelTensor h = synthesize_channel(s);

  std::vector<detail::TxFrameState> tx;
  for (std::size_t f = 0; f < frames; ++f) tx.push_back(detail::build_tx_state(s, pilots, f));

  // Genie estimate: the true channel as seen through the UE power scaling.
  std::vector<std::optional<LocalChannelEstimate>> genie(J);
  if (cfg.processing.genie_channel) {
    Eigen::VectorXd amp(K);
    for (int k = 0; k < K; ++k) amp[k] = std::sqrt(s.users.tx_power[k]);
    for (int j = 0; j < J; ++j) {
      LocalChannelEstimate e;
      for (int sc = 0; sc < n_sc; ++sc) e.h.push_back(h.at(j, sc) * amp.asDiagonal());
      genie[j] = std::move(e);
    }
  }

  std::vector<PanelStage> stages;
  for (int p : s.deployment.chain_order) {
    stages.push_back({p, [&, p](std::size_t f) {
                        const OfdmFrame rx = detail::receive_panel_frame(s, h, tx[f], p, f);
                        return process_panel_frame(rx, pilots, genie[p]);
                      }});
  }
  ChainOptions chain_opt;
  chain_opt.bits_per_complex = cfg.fronthaul.bits_per_complex;
  chain_opt.execution = cfg.fronthaul.execution;
  ChainResult chain = run_chain(stages, frames, chain_opt);

  RunResult r;
  r.scenario = s;
  r.byte_log = chain.byte_log;
  r.saturations = chain.saturations;
  r.delivered = std::move(chain.delivered);

  ZfOptions zopt;
  zopt.regularization = cfg.processing.regularization;
  zopt.fallback = cfg.processing.zf_fallback;

  std::vector<CMatrix> all_gram, all_hat, all_true;
  r.symbol_errors.assign(K, 0);
  r.constellation.assign(K, {});
  const auto cap = static_cast<std::size_t>(std::max(cfg.processing.constellation_cap, 0));
  for (std::size_t f = 0; f < frames; ++f) {
    const auto& msg = r.delivered[f];
    ZfResult zf = zf_detect(msg.z, msg.gram, zopt);
    const EqualizedFrame eq = equalize(zf, tx[f].uld_truth, cfg.modulation);
    for (int k = 0; k < K; ++k) r.symbol_errors[k] += eq.symbol_errors[k];
    r.zf_fallbacks += zf.fallbacks;
    r.zf_failures += zf.failures;
    for (std::size_t sym = 0; sym < zf.s_hat.size(); ++sym) {
      all_hat.push_back(zf.s_hat[sym]);
      all_true.push_back(tx[f].uld_truth[sym]);
      for (int k = 0; k < K; ++k)
        for (int sc = 0; sc < n_sc && r.constellation[k].size() < cap; ++sc)
          if (zf.valid[sc]) r.constellation[k].push_back(zf.s_hat[sym](k, sc));
    }
    all_gram.insert(all_gram.end(), msg.gram.begin(), msg.gram.end());
    r.zf.push_back(std::move(zf));
    r.transmitted.push_back(tx[f].uld_truth);
  }
  r.symbols_per_user = static_cast<long>(all_hat.size()) * n_sc;

  // EVM over every frame: valid masks line up because each frame contributes
  // the same number of symbols.
  {
    std::vector<double> err(K, 0.0), ref(K, 0.0);
    for (std::size_t i = 0; i < all_hat.size(); ++i) {
      const std::size_t f = i / static_cast<std::size_t>(num.count(SymbolRole::ULD));
      for (int k = 0; k < K; ++k)
        for (int sc = 0; sc < n_sc; ++sc) {
          if (!r.zf[f].valid[sc]) continue;
          err[k] += std::norm(all_hat[i](k, sc) - all_true[i](k, sc));
          ref[k] += std::norm(all_true[i](k, sc));
        }
    }
    r.evm_db.resize(K);
    for (int k = 0; k < K; ++k)
      r.evm_db[k] = (err[k] == 0.0 || ref[k] == 0.0) ? kEvmFloorDb
                                                     : std::max(kEvmFloorDb, power_to_db(err[k] / ref[k]));
  }

  // SIR: linear ratios averaged over frames, then over subcarriers.
  {
    Eigen::MatrixXd ratio = Eigen::MatrixXd::Zero(K, n_sc);
    for (const auto& msg : r.delivered) ratio += sir_linear(msg.gram, std::vector<double>(K, 1.0));
    r.sir = sir_from_linear(ratio / static_cast<double>(frames));
  }
  r.gram_db = gram_heatmap(all_gram);

  r.latency = predict_latency(LatencyModel::from(cfg.latency, J));
  r.bandwidth = predict_bandwidth(BandwidthModel::from(cfg, K));
  if (!r.byte_log.empty())
    r.wire_rate_bps = 8.0 * static_cast<double>(r.byte_log.front().bytes) / frames / num.frame_duration_s();
  return r;
}

inline RunResult run_scenario(const ScenarioConfig& cfg) { return run_scenario(resolve(cfg)); }

}  // namespace dmimo
