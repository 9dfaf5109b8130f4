// Acceptance suite. Prints one PASS/FAIL line per criterion; with arguments,
// runs only the listed criterion numbers. Exit status is nonzero when any
// selected criterion fails.

#include "dmimo/dmimo.hpp"

#include "oracles.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

using namespace dmimo;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Collects sub-check failures; the first failing note becomes the detail.
struct Checker {
  Outcome out;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      if (out.pass) out.detail = "FAILED " + what;
      out.pass = false;
    }
  }
  void note(const std::string& s) { notes.push_back(s); }
  Outcome done() {
    if (out.pass) {
      for (std::size_t i = 0; i < notes.size(); ++i) out.detail += (i ? "; " : "") + notes[i];
    } else {
      for (const auto& n : notes) out.detail += "; " + n;
    }
    return out;
  }
};

// --------------------------------------------------------------------------
// 1. Latency model
// --------------------------------------------------------------------------
Outcome latency_model() {
  Checker c;
  const LatencyConstants k;
  const auto p16 = predict_latency(LatencyModel::from(k, 16));
  c.check(p16.cycles == 12198, fmt("J=16 cycles %ld != 12198", p16.cycles));
  c.check(std::abs(p16.microseconds() - 79.41) <= 0.01, fmt("J=16 %.4f us vs 79.41", p16.microseconds()));
  c.note(fmt("J=16: %ld cycles, %.3f us", p16.cycles, p16.microseconds()));
  struct Block {
    const char* name;
    long cycles;
    double table_us;
  };
  for (const Block& b : {Block{"timing+OFDM", k.cc_timing_ofdm, 41.39}, Block{"CE+MRC", k.cc_local_ce_mrc, 0.14},
                         Block{"ethernet+aggregate", k.cc_ethernet_aggregate, 2.5}}) {
    const double us = static_cast<double>(b.cycles) / k.fpga_clock_hz * 1e6;
    const double diff = std::abs(us - b.table_us);
    c.check(diff <= 0.01, fmt("%s %ld cycles = %.4f us vs %.2f us (|diff| %.4f > 0.01)", b.name, b.cycles, us,
                              b.table_us, diff));
    c.note(fmt("%s %.4f us", b.name, us));
  }
  return c.done();
}

// --------------------------------------------------------------------------
// 2. Distributed vs centralized oracle equivalence
// --------------------------------------------------------------------------
Outcome oracle_equivalence() {
  Checker c;
  double worst_acc = 0.0, worst_zf = 0.0;
  const int instances = 100;
  for (int inst = 0; inst < instances; ++inst) {
    std::mt19937_64 rng(derive_seed(2024, "acceptance2", inst));
    auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    const int J = pick(1, 8), M = pick(1, 8), n_sc = pick(1, 64);
    const int K = pick(1, std::min(4, J * M));
    std::vector<std::vector<CMatrix>> h(J), y(J);
    std::vector<std::vector<LocalPartials>> partials(J);
    for (int j = 0; j < J; ++j) {
      LocalChannelEstimate est;
      CMatrix rx(M, n_sc);
      for (int sc = 0; sc < n_sc; ++sc) {
        est.h.push_back(oracle::random_matrix(M, K, derive_seed(inst, "h", j, sc)));
        rx.col(sc) = oracle::random_matrix(M, 1, derive_seed(inst, "y", j, sc));
      }
      partials[j].push_back({{local_mrc(est, rx)}, local_gram(est)});
      h[j] = est.h;
      y[j].push_back(rx);
    }
    const ChainResult chain = run_chain(partials, identity_order(J));
    const PartialSumMessage& msg = chain.delivered.front();
    const ZfResult zf = zf_detect(msg.z, msg.gram);
    for (int sc = 0; sc < n_sc; ++sc) {
      std::vector<CMatrix> hs, ys;
      for (int j = 0; j < J; ++j) {
        hs.push_back(h[j][sc]);
        ys.push_back(y[j][0].col(sc));
      }
      const CMatrix H = oracle::stack(hs), Y = oracle::stack(ys);
      worst_acc = std::max(worst_acc, oracle::rel(msg.gram[sc], oracle::adjoint_times(H, H)));
      worst_acc = std::max(worst_acc, oracle::rel(msg.z[0].col(sc), oracle::adjoint_times(H, Y)));
      const auto ls = oracle::least_squares(H, std::vector<cplx>(Y.data(), Y.data() + Y.size()));
      CMatrix ref(K, 1);
      for (int k = 0; k < K; ++k) ref(k, 0) = ls[k];
      worst_zf = std::max(worst_zf, oracle::rel(zf.s_hat[0].col(sc), ref));
    }
  }
  c.check(worst_acc <= 1e-10, fmt("(z, G) relative error %.3e > 1e-10", worst_acc));
  c.check(worst_zf <= 1e-8, fmt("ZF vs least squares relative error %.3e > 1e-8", worst_zf));
  c.note(fmt("%d instances, max rel (z,G) %.2e, max rel ZF %.2e", instances, worst_acc, worst_zf));
  return c.done();
}

// --------------------------------------------------------------------------
// 3. End-to-end noiseless identity
// --------------------------------------------------------------------------
Outcome noiseless_identity() {
  Checker c;
  ScenarioConfig cfg;
  cfg.modulation = Modulation::QPSK;
  const RunResult r = run_scenario(cfg);
  long errors = 0;
  for (long e : r.symbol_errors) errors += e;
  const double worst = *std::max_element(r.evm_db.begin(), r.evm_db.end());
  c.check(errors == 0, fmt("%ld hard-decision errors", errors));
  c.check(worst < -60.0, fmt("worst EVM %.2f dB >= -60 dB", worst));
  c.check(r.scenario.config.processing.waveform_path && !r.scenario.config.processing.genie_channel,
          "full waveform path with LS estimation is not in use");
  c.note(fmt("J=16 K=4 LoS, %ld QPSK symbols per user, errors %ld, worst EVM %.2f dB", r.symbols_per_user, errors,
             worst));
  return c.done();
}

// --------------------------------------------------------------------------
// 4. Constant per-hop fronthaul
// --------------------------------------------------------------------------
std::vector<std::uint64_t> hop_bytes(const ScenarioConfig& cfg) {
  std::vector<std::uint64_t> b;
  for (const auto& h : run_scenario(cfg).byte_log) b.push_back(h.bytes);
  return b;
}

Outcome constant_fronthaul() {
  Checker c;
  ScenarioConfig base;
  const auto b16 = hop_bytes(base);
  c.check(b16.size() == 15, fmt("%zu hops instead of 15", b16.size()));
  const bool equal = std::all_of(b16.begin(), b16.end(), [&](auto v) { return v == b16.front(); });
  c.check(equal, "hop byte counts differ across the chain");
  for (auto [rows, cols] : {std::pair{2, 2}, std::pair{4, 4}}) {
    ScenarioConfig m = base;
    m.deployment.panel.rows = rows;
    m.deployment.panel.cols = cols;
    const int M = rows * cols * 2;
    c.check(hop_bytes(m) == b16, fmt("M=%d changes hop bytes", M));
  }
  ScenarioConfig k8 = base;
  k8.users.layout = UserLayoutKind::GRID;
  k8.users.count = 8;
  const auto b8 = hop_bytes(k8);
  const bool equal8 = !b8.empty() && std::all_of(b8.begin(), b8.end(), [&](auto v) { return v == b8.front(); });
  c.check(equal8, "K=8 hop byte counts differ across the chain");
  // bytes = header + w (n_z n_sc K + n_sc K(K+1)/2) = header + a K + b K^2
  const auto& n = base.numerology;
  const double w = base.fronthaul.bits_per_complex / 8.0, n_sc = n.active_subcarriers, n_z = n.count(SymbolRole::ULD);
  const double a = w * n_sc * (n_z + 0.5), bq = w * n_sc * 0.5;
  auto law = [&](int K) { return static_cast<std::uint64_t>(kHeaderBytes + a * K + bq * K * K); };
  c.check(b16.front() == law(4), fmt("K=4 bytes %llu != %llu", (unsigned long long)b16.front(),
                                     (unsigned long long)law(4)));
  c.check(!b8.empty() && b8.front() == law(8),
          fmt("K=8 bytes %llu != %llu", (unsigned long long)(b8.empty() ? 0 : b8.front()), (unsigned long long)law(8)));
  // Analytical rate follows the same law over K.
  const double r4 = predict_bandwidth(BandwidthModel::from(base, 4)).bits_per_second;
  const double r8 = predict_bandwidth(BandwidthModel::from(k8, 8)).bits_per_second;
  const double expect = (n_z * 8 + 64.0) / (n_z * 4 + 16.0);
  c.check(std::abs(r8 / r4 - expect) < 1e-12, fmt("rate ratio %.6f != %.6f", r8 / r4, expect));
  c.note(fmt("15 hops x %llu bytes (M=8,16,32 identical); K=8 -> %llu bytes = 24 + %.0f K + %.0f K^2",
             (unsigned long long)b16.front(), (unsigned long long)(b8.empty() ? 0 : b8.front()), a, bq));
  return c.done();
}

// --------------------------------------------------------------------------
// 5. Array-gain scaling
// --------------------------------------------------------------------------
Outcome array_gain() {
  Checker c;
  ScenarioConfig base;
  base.channel.model = ChannelModel::IID_RAYLEIGH;
  base.numerology.active_subcarriers = 64;
  base.processing.genie_channel = true;
  base.processing.waveform_path = false;
  const int R = 200;
  const SweepResult r = run_sweep(make_sweep(base, SweepAxis::PANEL_COUNT, {4, 8, 16}, R, 5));
  std::vector<double> mean;
  for (const auto& p : r.points) {
    c.check(p.completed == R, fmt("%s completed %d of %d", p.label.c_str(), p.completed, R));
    mean.push_back(p.sir_mean_all_users());
  }
  std::string gains;
  for (std::size_t i = 0; i + 1 < mean.size(); ++i) {
    const double g = mean[i + 1] - mean[i];
    c.check(std::abs(g - 3.0) <= 0.5, fmt("gain %s -> %s is %.3f dB", r.points[i].label.c_str(),
                                          r.points[i + 1].label.c_str(), g));
    gains += fmt("%s%.3f", i ? ", " : "", g);
  }
  c.note(fmt("mean SIR %.2f / %.2f / %.2f dB at J=4/8/16 over %d realizations; gains %s dB", mean[0], mean[1],
             mean[2], R, gains.c_str()));
  return c.done();
}

// --------------------------------------------------------------------------
// 6. Deployment ordering
// --------------------------------------------------------------------------
Outcome deployment_ordering() {
  Checker c;
  ScenarioConfig col;
  col.deployment.mode = DeploymentMode::COLOCATED;
  ScenarioConfig dist = col;
  dist.deployment.mode = DeploymentMode::DISTRIBUTED;
  // 4 m x 4 m room: side-midpoint panels sit 2 m from the user square.
  dist.deployment.area = {0.0, 0.0, 4.0, 4.0};
  const RunResult rc = run_scenario(col);
  const RunResult rd = run_scenario(dist);
  auto square_distance = [](const Scenario& s, bool nearest) {
    Vec3 u = Vec3::Zero(), w = Vec3::Zero();
    for (const auto& p : s.users.positions) u += p / static_cast<double>(s.K());
    double best = 1e300;
    for (const auto& p : s.deployment.panels) {
      w += p.position / static_cast<double>(s.J());
      best = std::min(best, (p.position - u).norm());
    }
    return nearest ? best : (w - u).norm();
  };
  std::string sirs;
  for (int k = 0; k < 4; ++k) {
    c.check(rd.sir.avg_db[k] > rc.sir.avg_db[k],
            fmt("user %d: distributed %.2f dB <= co-located %.2f dB", k, rd.sir.avg_db[k], rc.sir.avg_db[k]));
    sirs += fmt("%s%.2f/%.2f", k ? " " : "", rc.sir.avg_db[k], rd.sir.avg_db[k]);
  }
  const auto& g = rc.gram_db;
  const double weak = std::max(g(0, 1), g(2, 3));
  c.check(g(0, 2) > weak && g(1, 3) > weak,
          fmt("Gram pairs (0,2)=%.1f (1,3)=%.1f not above (0,1)=%.1f (2,3)=%.1f dB", g(0, 2), g(1, 3), g(0, 1),
              g(2, 3)));
  c.note("SIR co-located/distributed per user " + sirs + " dB");
  c.note(fmt("co-located |G| (0,2)=%.1f (1,3)=%.1f (0,1)=%.1f (2,3)=%.1f dB", g(0, 2), g(1, 3), g(0, 1), g(2, 3)));
  c.note(fmt("user square %.2f m from the wall centre, %.2f m from the nearest distributed panel",
             square_distance(resolve(col), false), square_distance(resolve(dist), true)));
  return c.done();
}

// --------------------------------------------------------------------------
// 7. Bandwidth reporting
// --------------------------------------------------------------------------
Outcome bandwidth_reporting() {
  Checker c;
  const RunResult r = run_scenario(ScenarioConfig{});
  std::ostringstream summary;
  print_summary(r, summary);
  const auto j = report_json(r);
  const auto& b = j.at("bandwidth");
  for (const char* key : {"bps", "z_bps", "gram_bps", "reference_bps", "deviation_percent"})
    c.check(b.contains(key) && b.at(key).is_number(), std::string("report lacks bandwidth.") + key);
  c.check(summary.str().find("vs 1.73 Gb/s reference") != std::string::npos, "summary lacks the deviation line");
  const auto& p = r.bandwidth;
  c.check(std::abs(p.z_bits_per_second + p.gram_bits_per_second - p.bits_per_second) < 1e-3,
          "breakdown does not sum to the total");
  c.check(constant_fronthaul().pass, "criterion 4 scaling laws fail");
  c.note(fmt("predicted %.3f Gb/s per hop (z %.3f + gram %.3f), %+.1f%% vs 1.73 Gb/s", p.bits_per_second / 1e9,
             p.z_bits_per_second / 1e9, p.gram_bits_per_second / 1e9, p.deviation_percent()));
  BandwidthModel zonly = BandwidthModel::from(ScenarioConfig{}, 4);
  zonly.include_gram = false;
  zonly.frame_duration_s = 7.0 / 60e3;
  const auto pz = predict_bandwidth(zonly);
  c.note(fmt("z only over CP-free symbol time: %.4f Gb/s (%+.2f%%)", pz.bits_per_second / 1e9, pz.deviation_percent()));
  return c.done();
}

// --------------------------------------------------------------------------
// 8. Property suites
// --------------------------------------------------------------------------
Outcome property_suites() {
  Checker c;
  const OfdmNumerology num;
  double worst_rt = 0.0, worst_parseval = 0.0, worst_phase = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    ComplexGaussian g(seed);
    CVector grid(num.active_subcarriers);
    for (auto& v : grid) v = g();
    const CVector w = ofdm_modulate(grid, num);
    worst_rt = std::max(worst_rt, (ofdm_demodulate(w, 0, num) - grid).norm() / grid.norm());
    worst_parseval = std::max(worst_parseval, std::abs(w.tail(num.fft_size).squaredNorm() - grid.squaredNorm()) /
                                                  grid.squaredNorm());
    const int o = static_cast<int>(seed * 7 % (num.cp_length + 1));
    const CVector y = ofdm_demodulate(w, o, num);
    for (int i = 0; i < num.active_subcarriers; ++i) {
      const cplx expect = grid[i] * std::polar(1.0, -2.0 * kPi * o * num.subcarrier_offset(i) / num.fft_size);
      worst_phase = std::max(worst_phase, std::abs(y[i] - expect) / std::max(1.0, std::abs(grid[i])));
    }
  }
  c.check(worst_rt <= 1e-10, fmt("OFDM round trip %.2e", worst_rt));
  c.check(worst_parseval <= 1e-10, fmt("Parseval %.2e", worst_parseval));
  c.check(worst_phase <= 1e-10, fmt("CP-offset linear phase %.2e", worst_phase));

  // Codec round trip and Hermitian structure at every hop.
  bool lossless = true, hermitian = true;
  std::optional<PartialSumMessage> up;
  for (int hop = 0; hop < 16; ++hop) {
    LocalPartials p;
    for (int s = 0; s < 2; ++s) p.z.push_back(oracle::random_matrix(4, 96, derive_seed(8, "z", hop, s)));
    for (int sc = 0; sc < 96; ++sc) p.gram.push_back(hermitian_gram(oracle::random_matrix(16, 4, derive_seed(8, "g", hop, sc))));
    PartialSumMessage m = accumulate(up ? &*up : nullptr, p, hop, 0);
    hermitian = hermitian && m.hermitian(0.0);
    const PartialSumMessage back = deserialize_message(serialize_message(m, 128).bytes);
    lossless = lossless && back == m;
    const PartialSumMessage fixed = deserialize_message(serialize_message(m, 32).bytes);
    hermitian = hermitian && fixed.hermitian(0.0);
    up = back;
  }
  c.check(lossless, "lossless codec round trip is not bit-exact");
  c.check(hermitian, "a hop message lost Hermitian symmetry");

  // Chain permutation invariance.
  std::vector<std::vector<LocalPartials>> parts(16);
  for (int j = 0; j < 16; ++j) {
    LocalPartials p;
    p.z.push_back(oracle::random_matrix(4, 48, derive_seed(9, "z", j)));
    for (int sc = 0; sc < 48; ++sc) p.gram.push_back(hermitian_gram(oracle::random_matrix(16, 4, derive_seed(9, "g", j, sc))));
    parts[j].push_back(std::move(p));
  }
  std::vector<int> order = identity_order(16);
  const ChainResult ref = run_chain(parts, order);
  double worst_perm = 0.0;
  std::mt19937_64 rng(4);
  for (int t = 0; t < 10; ++t) {
    std::shuffle(order.begin(), order.end(), rng);
    const ChainResult r = run_chain(parts, order);
    worst_perm = std::max(worst_perm, oracle::rel(r.delivered[0].z[0], ref.delivered[0].z[0]));
    for (int sc = 0; sc < 48; ++sc)
      worst_perm = std::max(worst_perm, oracle::rel(r.delivered[0].gram[sc], ref.delivered[0].gram[sc]));
  }
  c.check(worst_perm <= 1e-10, fmt("chain permutation %.2e", worst_perm));

  // Determinism: byte-identical artifacts across reruns.
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "dmimo_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "s.json") << R"({"deployment": {"panels": 4}, "noise_power": 1e-6, "processing": {"frames": 2}})";
  std::ostringstream sink;
  const int rc_a = cmd_run(dir / "s.json", dir / "a", {}, std::nullopt, sink, sink);
  const int rc_b = cmd_run(dir / "s.json", dir / "b", {}, std::nullopt, sink, sink);
  bool identical = rc_a == 0 && rc_b == 0;
  for (const char* f : {"report.json", "sir.csv", "gram.csv", "constellation.csv", "hops.csv"}) {
    auto slurp = [](const fs::path& p) {
      std::ifstream in(p, std::ios::binary);
      return std::string(std::istreambuf_iterator<char>(in), {});
    };
    identical = identical && slurp(dir / "a" / f) == slurp(dir / "b" / f);
  }
  c.check(identical, "reruns are not byte-identical");
  c.note(fmt("round trip %.1e, Parseval %.1e, offset phase %.1e, permutation %.1e, codec and Hermitian ok, reruns identical",
             worst_rt, worst_parseval, worst_phase, worst_perm));
  return c.done();
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "latency model exactness", latency_model},
      {2, "distributed-centralized equivalence", oracle_equivalence},
      {3, "end-to-end noiseless identity", noiseless_identity},
      {4, "constant per-hop fronthaul", constant_fronthaul},
      {5, "array-gain scaling", array_gain},
      {6, "deployment ordering", deployment_ordering},
      {7, "bandwidth model reporting", bandwidth_reporting},
      {8, "property suites", property_suites},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  int failed = 0;
  for (const auto& cr : all) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), cr.id) == selected.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = cr.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << cr.id << ". " << cr.name << " (" << fmt("%.1f", secs)
              << " s): " << o.detail << std::endl;
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
