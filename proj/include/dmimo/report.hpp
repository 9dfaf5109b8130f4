#pragma once

// Run and sweep artifacts: report.json, metric CSVs and the console summary.

#include "dmimo/pipeline.hpp"
#include "dmimo/sweep.hpp"

#include <iomanip>
#include <ostream>

namespace dmimo {

inline constexpr const char* kVersion = "0.1.0";

// Non-finite numbers are written as the strings "+inf", "-inf" and "nan".
inline nlohmann::json json_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "+inf" : "-inf";
  return v;
}

inline nlohmann::json json_numbers(const std::vector<double>& v) {
  nlohmann::json a = nlohmann::json::array();
  for (double x : v) a.push_back(json_number(x));
  return a;
}

inline nlohmann::json json_matrix(const Eigen::MatrixXd& m) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(json_number(m(i, k)));
    a.push_back(std::move(row));
  }
  return a;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Hash of the canonical configuration, which includes the seed.
inline std::string scenario_digest(const ScenarioConfig& c) { return hex64(fnv1a64(to_json(c).dump())); }

inline nlohmann::json latency_json(const LatencyPrediction& l) {
  return {{"cycles", l.cycles}, {"us", l.microseconds()}};
}

inline nlohmann::json bandwidth_json(const BandwidthPrediction& b) {
  return {{"bps", b.bits_per_second},
          {"z_bps", b.z_bits_per_second},
          {"gram_bps", b.gram_bits_per_second},
          {"bits_per_frame", b.bits_per_frame},
          {"reference_bps", kTestbedReferenceRateBps},
          {"deviation_percent", b.deviation_percent()}};
}

inline nlohmann::json report_json(const RunResult& r) {
  using nlohmann::json;
  const auto& s = r.scenario;
  json j;
  j["version"] = kVersion;
  j["digest"] = scenario_digest(s.config);
  j["seed"] = s.config.seed;
  j["scenario"] = {{"panels", s.J()},
                   {"users", s.K()},
                   {"ports_per_panel", s.M()},
                   {"deployment", to_string(s.deployment.mode)},
                   {"subcarriers", s.numerology().active_subcarriers},
                   {"frames", s.config.processing.frames},
                   {"chain_order", s.deployment.chain_order}};
  j["sir"] = {{"avg_db", json_numbers(r.sir.avg_db)}, {"per_subcarrier_db", json_matrix(r.sir.per_subcarrier_db)}};
  j["evm_db"] = json_numbers(r.evm_db);
  j["symbol_errors"] = r.symbol_errors;
  j["symbols_per_user"] = r.symbols_per_user;
  j["gram_avg_mag_db"] = json_matrix(r.gram_db);
  j["latency"] = latency_json(r.latency);
  json bw = bandwidth_json(r.bandwidth);
  bw["wire_bps"] = r.wire_rate_bps;
  j["bandwidth"] = std::move(bw);
  json hops = json::array();
  for (std::size_t h = 0; h < r.byte_log.size(); ++h) {
    const auto& l = r.byte_log[h];
    hops.push_back({{"hop", h}, {"from", l.from_panel}, {"to", l.to_panel}, {"bytes", l.bytes}, {"messages", l.messages}});
  }
  j["hops"] = std::move(hops);
  j["fronthaul_saturations"] = r.saturations;
  j["zf"] = {{"fallbacks", r.zf_fallbacks}, {"failures", r.zf_failures}};
  json cons = json::array();
  for (const auto& user : r.constellation) {
    json pts = json::array();
    for (const auto& p : user) pts.push_back({p.real(), p.imag()});
    cons.push_back(std::move(pts));
  }
  j["constellation"] = std::move(cons);
  return j;
}

// ----------------------------------------------------------------------------
// CSVs
// ----------------------------------------------------------------------------

inline std::string sir_csv(const RunResult& r) {
  std::string s = "user,subcarrier,sir_db\n";
  const auto& m = r.sir.per_subcarrier_db;
  for (Eigen::Index k = 0; k < m.rows(); ++k)
    for (Eigen::Index sc = 0; sc < m.cols(); ++sc)
      s += std::to_string(k) + "," + std::to_string(sc) + "," + format_number(m(k, sc), 6) + "\n";
  return s;
}

inline std::string gram_csv(const RunResult& r) {
  std::string s = "row,col,avg_mag_db\n";
  for (Eigen::Index i = 0; i < r.gram_db.rows(); ++i)
    for (Eigen::Index k = 0; k < r.gram_db.cols(); ++k)
      s += std::to_string(i) + "," + std::to_string(k) + "," + format_number(r.gram_db(i, k), 6) + "\n";
  return s;
}

inline std::string constellation_csv(const RunResult& r) {
  std::string s = "user,index,re,im\n";
  for (std::size_t k = 0; k < r.constellation.size(); ++k)
    for (std::size_t i = 0; i < r.constellation[k].size(); ++i)
      s += std::to_string(k) + "," + std::to_string(i) + "," + format_number(r.constellation[k][i].real(), 9) + "," +
           format_number(r.constellation[k][i].imag(), 9) + "\n";
  return s;
}

inline std::string hops_csv(const RunResult& r) {
  std::string s = "hop,from_panel,to_panel,bytes,messages\n";
  for (std::size_t h = 0; h < r.byte_log.size(); ++h) {
    const auto& l = r.byte_log[h];
    s += std::to_string(h) + "," + std::to_string(l.from_panel) + "," + std::to_string(l.to_panel) + "," +
         std::to_string(l.bytes) + "," + std::to_string(l.messages) + "\n";
  }
  return s;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error("write to '" + path.string() + "' failed");
}

inline void write_run_artifacts(const RunResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "report.json", report_json(r).dump(2) + "\n");
  write_text(dir / "sir.csv", sir_csv(r));
  write_text(dir / "gram.csv", gram_csv(r));
  write_text(dir / "constellation.csv", constellation_csv(r));
  write_text(dir / "hops.csv", hops_csv(r));
}

inline void print_summary(const RunResult& r, std::ostream& os) {
  const auto& s = r.scenario;
  auto list = [&os](const std::vector<double>& v) {
    for (double x : v) os << ' ' << format_number(x, 2);
  };
  os << "scenario " << scenario_digest(s.config) << ": J=" << s.J() << " K=" << s.K() << " M=" << s.M() << ' '
     << to_string(s.deployment.mode) << ", " << s.numerology().active_subcarriers << " subcarriers, "
     << s.config.processing.frames << " frame(s)\n";
  os << "SIR before ZF (dB):";
  list(r.sir.avg_db);
  os << "\nEVM (dB):";
  list(r.evm_db);
  os << "\nsymbol errors:";
  for (long e : r.symbol_errors) os << ' ' << e;
  os << " of " << r.symbols_per_user << " per user\n";
  os << "latency: " << format_number(r.latency.microseconds(), 2) << " us (J=" << s.J() << "), "
     << r.latency.cycles << " cycles\n";
  const auto& b = r.bandwidth;
  os << "fronthaul: " << format_number(b.bits_per_second / 1e9, 3) << " Gb/s per hop predicted (z "
     << format_number(b.z_bits_per_second / 1e9, 3) << ", gram " << format_number(b.gram_bits_per_second / 1e9, 3)
     << "), " << format_number(b.deviation_percent(), 1) << "% vs " << format_number(kTestbedReferenceRateBps / 1e9, 2)
     << " Gb/s reference\n";
  if (!r.byte_log.empty())
    os << "wire: " << r.byte_log.front().bytes << " bytes per hop, " << format_number(r.wire_rate_bps / 1e9, 3)
       << " Gb/s\n";
  if (r.zf_fallbacks || r.zf_failures)
    os << "zf: " << r.zf_fallbacks << " regularized, " << r.zf_failures << " skipped subcarriers\n";
}

// ----------------------------------------------------------------------------
// Sweep artifacts
// ----------------------------------------------------------------------------

inline nlohmann::json sweep_json(const SweepResult& r) {
  using nlohmann::json;
  json j;
  j["version"] = kVersion;
  j["axis"] = r.axis;
  j["realizations"] = r.realizations;
  j["master_seed"] = r.master_seed;
  json pts = json::array();
  for (const auto& p : r.points) {
    json e = {{"label", p.label},
              {"value", p.value},
              {"panels", p.panels},
              {"users", p.users},
              {"completed", p.completed},
              {"sir_mean_db", json_numbers(p.sir_mean_db)},
              {"sir_std_db", json_numbers(p.sir_std_db)},
              {"evm_mean_db", json_numbers(p.evm_mean_db)},
              {"evm_std_db", json_numbers(p.evm_std_db)},
              {"hop_bytes", p.hop_bytes},
              {"errors", p.errors}};
    if (p.completed > 0) {
      e["latency"] = latency_json(p.latency);
      e["bandwidth"] = bandwidth_json(p.bandwidth);
    }
    pts.push_back(std::move(e));
  }
  j["points"] = std::move(pts);
  return j;
}

// ----------------------------------------------------------------------------
// Commands. Both return a process exit status and never throw.
// ----------------------------------------------------------------------------

inline void print_error(std::ostream& err, const std::exception& e) {
  if (dynamic_cast<const ValidationError*>(&e))
    err << "error [validation] " << e.what() << '\n';
  else if (dynamic_cast<const ParseError*>(&e))
    err << "error [parse] " << e.what() << '\n';
  else if (dynamic_cast<const Error*>(&e))
    err << "error [runtime] " << e.what() << '\n';
  else
    err << "error [internal] " << e.what() << '\n';
}

inline int cmd_run(const std::filesystem::path& config_path, const std::filesystem::path& out_dir,
                   const std::vector<std::string>& overrides, std::optional<std::uint64_t> seed,
                   std::ostream& out, std::ostream& err) {
  try {
    std::vector<std::string> all = overrides;
    if (seed) all.push_back("seed=" + std::to_string(*seed));
    const ScenarioConfig cfg = load_scenario(config_path, all);
    const RunResult r = run_scenario(cfg);
    write_run_artifacts(r, out_dir);
    print_summary(r, out);
    out << "artifacts: " << out_dir.string() << '\n';
    return 0;
  } catch (const std::exception& e) {
    print_error(err, e);
    return 1;
  }
}

// Exit 0 when every point completed, 2 when some points recorded errors.
inline int cmd_sweep(const std::filesystem::path& spec_path, const std::filesystem::path& out_dir, std::ostream& out,
                     std::ostream& err) {
  try {
    const SweepSpec spec = load_sweep_spec(spec_path);
    const SweepResult r = run_sweep(spec);
    std::filesystem::create_directories(out_dir);
    const std::string table = compare_table(r).to_csv();
    write_text(out_dir / "sweep_table.csv", table);
    write_text(out_dir / "sweep.json", sweep_json(r).dump(2) + "\n");
    out << table;
    out << "artifacts: " << out_dir.string() << '\n';
    bool failed = false;
    for (const auto& p : r.points)
      for (const auto& e : p.errors) {
        err << "point " << p.label << ": " << e << '\n';
        failed = true;
      }
    return failed ? 2 : 0;
  } catch (const std::exception& e) {
    print_error(err, e);
    return 1;
  }
}

}  // namespace dmimo
