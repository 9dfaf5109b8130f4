#pragma once

// Scenario sweeps: one axis, many points, independent realizations per point.

#include "dmimo/pipeline.hpp"

#include <atomic>
#include <cstdio>
#include <mutex>
#include <thread>

namespace dmimo {

enum class SweepAxis { PANEL_COUNT, DEPLOYMENT_MODE, USER_COUNT, NOISE };

NLOHMANN_JSON_SERIALIZE_ENUM(SweepAxis, {{SweepAxis::PANEL_COUNT, "PANEL_COUNT"},
                                         {SweepAxis::DEPLOYMENT_MODE, "DEPLOYMENT_MODE"},
                                         {SweepAxis::USER_COUNT, "USER_COUNT"},
                                         {SweepAxis::NOISE, "NOISE"}})

// One sweep point: the axis value plus optional extra overrides applied to
// the base scenario before the axis value.
struct SweepPoint {
  nlohmann::json value;
  std::string label;
  std::vector<std::string> overrides;
};

struct SweepSpec {
  nlohmann::json base = nlohmann::json::object();  // scenario document
  SweepAxis axis = SweepAxis::PANEL_COUNT;
  std::vector<SweepPoint> points;
  int realizations = 1;
  std::uint64_t master_seed = 1;
  // 0: one worker per hardware thread.
  unsigned threads = 0;

  void validate() const {
    if (points.empty()) throw ValidationError("values", "a sweep needs at least one value");
    if (realizations < 1) throw ValidationError("realizations", "must be >= 1");
  }
};

inline std::uint64_t sweep_seed(std::uint64_t master, std::size_t point, std::size_t realization) {
  return derive_seed(master, "sweep", point, realization);
}

inline std::string axis_label(SweepAxis axis, const nlohmann::json& v) {
  const std::string text = v.is_string() ? v.get<std::string>() : v.dump();
  switch (axis) {
    case SweepAxis::PANEL_COUNT: return "J=" + text;
    case SweepAxis::USER_COUNT: return "K=" + text;
    case SweepAxis::NOISE: return "noise=" + text;
    case SweepAxis::DEPLOYMENT_MODE: return text;
  }
  return text;
}

inline SweepSpec make_sweep(const ScenarioConfig& base, SweepAxis axis, const std::vector<nlohmann::json>& values,
                            int realizations, std::uint64_t master_seed) {
  SweepSpec s;
  s.base = to_json(base);
  s.axis = axis;
  for (const auto& v : values) s.points.push_back({v, axis_label(axis, v), {}});
  s.realizations = realizations;
  s.master_seed = master_seed;
  return s;
}

// The scenario for one point, before seeding.
inline ScenarioConfig point_config(const SweepSpec& spec, std::size_t p) {
  const SweepPoint& pt = spec.points.at(p);
  nlohmann::json doc = spec.base;
  for (const auto& o : pt.overrides) apply_override(doc, o);
  ScenarioConfig c = parse_scenario(doc);
  const auto& v = pt.value;
  const std::string field = "values[" + std::to_string(p) + "]";
  switch (spec.axis) {
    case SweepAxis::PANEL_COUNT: {
      if (!v.is_number_integer()) throw ValidationError(field, "panel count must be an integer");
      const int J = v.get<int>();
      c.deployment.num_panels = J;
      if (c.deployment.mode == DeploymentMode::EXPLICIT) {
        if (J > static_cast<int>(c.deployment.positions.size()))
          throw ValidationError(field, "more panels than explicit positions");
        c.deployment.positions.resize(J);
        if (!c.deployment.orientations.empty()) c.deployment.orientations.resize(J);
      }
      // Smaller points are prefixes of the larger layout, so a custom chain
      // order no longer applies.
      c.deployment.chain_order.clear();
      if (!c.processing.timing_offsets.empty()) c.processing.timing_offsets.resize(J, 0);
      break;
    }
    case SweepAxis::DEPLOYMENT_MODE: {
      if (!v.is_string()) throw ValidationError(field, "deployment mode must be a string");
      const auto mode = v.get<DeploymentMode>();
      if (nlohmann::json(mode) != v) throw ValidationError(field, "unknown deployment mode '" + v.get<std::string>() + "'");
      c.deployment.mode = mode;
      break;
    }
    case SweepAxis::USER_COUNT: {
      if (!v.is_number_integer()) throw ValidationError(field, "user count must be an integer");
      const int K = v.get<int>();
      c.users.count = K;
      if (c.users.layout == UserLayoutKind::SQUARE && K != 4) c.users.layout = UserLayoutKind::GRID;
      if (c.users.layout == UserLayoutKind::EXPLICIT) {
        if (K > static_cast<int>(c.users.positions.size()))
          throw ValidationError(field, "more users than explicit positions");
        c.users.positions.resize(K);
      }
      if (!c.users.tx_power.empty()) c.users.tx_power.resize(K, 1.0);
      break;
    }
    case SweepAxis::NOISE: {
      if (!v.is_number()) throw ValidationError(field, "noise power must be a number");
      c.noise_power = v.get<double>();
      break;
    }
  }
  return c;
}

struct PointResult {
  std::string label;
  nlohmann::json value;
  int users = 0;
  int panels = 0;
  std::vector<double> sir_mean_db, sir_std_db;  // per user
  std::vector<double> evm_mean_db, evm_std_db;  // per user
  std::vector<std::vector<double>> sir_samples_db;  // per successful realization, per user
  LatencyPrediction latency;
  BandwidthPrediction bandwidth;
  std::vector<std::size_t> hop_bytes;  // one frame, per hop
  int completed = 0;
  std::vector<std::string> errors;

  double sir_mean_all_users() const {
    if (sir_mean_db.empty()) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (double v : sir_mean_db) s += v;
    return s / static_cast<double>(sir_mean_db.size());
  }
};

struct SweepResult {
  SweepAxis axis = SweepAxis::PANEL_COUNT;
  int realizations = 0;
  std::uint64_t master_seed = 0;
  std::vector<PointResult> points;
};

namespace detail {

struct RealizationSlot {
  bool ok = false;
  std::string error;
  std::vector<double> sir_db, evm_db;
  LatencyPrediction latency;
  BandwidthPrediction bandwidth;
  std::vector<std::size_t> hop_bytes;
  int users = 0, panels = 0;
};

inline void mean_std(const std::vector<std::vector<double>>& samples, std::size_t k, double& mean, double& sd) {
  const double n = static_cast<double>(samples.size());
  mean = 0.0;
  for (const auto& s : samples) mean += s[k];
  mean /= n;
  sd = 0.0;
  if (samples.size() < 2 || !std::isfinite(mean)) return;
  for (const auto& s : samples) sd += (s[k] - mean) * (s[k] - mean);
  sd = std::sqrt(sd / (n - 1.0));
}

}  // namespace detail

inline SweepResult run_sweep(const SweepSpec& spec) {
  spec.validate();
  const std::size_t P = spec.points.size(), R = static_cast<std::size_t>(spec.realizations);

  std::vector<std::optional<ScenarioConfig>> configs(P);
  std::vector<std::string> config_errors(P);
  for (std::size_t p = 0; p < P; ++p) {
    try {
      configs[p] = point_config(spec, p);
    } catch (const std::exception& e) {
      config_errors[p] = e.what();
    }
  }

  std::vector<detail::RealizationSlot> slots(P * R);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < slots.size(); i = next++) {
      const std::size_t p = i / R, r = i % R;
      auto& slot = slots[i];
      if (!configs[p]) continue;
      try {
        ScenarioConfig c = *configs[p];
        c.seed = sweep_seed(spec.master_seed, p, r);
        const RunResult run = run_scenario(c);
        slot.sir_db = run.sir.avg_db;
        slot.evm_db = run.evm_db;
        slot.latency = run.latency;
        slot.bandwidth = run.bandwidth;
        for (const auto& h : run.byte_log) slot.hop_bytes.push_back(h.bytes / static_cast<std::size_t>(c.processing.frames));
        slot.users = run.scenario.K();
        slot.panels = run.scenario.J();
        slot.ok = true;
      } catch (const std::exception& e) {
        slot.error = e.what();
      }
    }
  };
  unsigned n_threads = spec.threads ? spec.threads : std::max(1u, std::thread::hardware_concurrency());
  n_threads = static_cast<unsigned>(std::min<std::size_t>(n_threads, slots.size()));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  SweepResult out;
  out.axis = spec.axis;
  out.realizations = spec.realizations;
  out.master_seed = spec.master_seed;
  for (std::size_t p = 0; p < P; ++p) {
    PointResult pr;
    pr.label = spec.points[p].label;
    pr.value = spec.points[p].value;
    if (!configs[p]) pr.errors.push_back(config_errors[p]);
    std::vector<std::vector<double>> evm_samples;
    for (std::size_t r = 0; r < R && configs[p]; ++r) {
      const auto& slot = slots[p * R + r];
      if (!slot.ok) {
        pr.errors.push_back("realization " + std::to_string(r) + ": " + slot.error);
        continue;
      }
      if (pr.completed == 0) {
        pr.users = slot.users;
        pr.panels = slot.panels;
        pr.latency = slot.latency;
        pr.bandwidth = slot.bandwidth;
        pr.hop_bytes = slot.hop_bytes;
      }
      ++pr.completed;
      pr.sir_samples_db.push_back(slot.sir_db);
      evm_samples.push_back(slot.evm_db);
    }
    if (pr.completed > 0) {
      pr.sir_mean_db.resize(pr.users);
      pr.sir_std_db.resize(pr.users);
      pr.evm_mean_db.resize(pr.users);
      pr.evm_std_db.resize(pr.users);
      for (int k = 0; k < pr.users; ++k) {
        detail::mean_std(pr.sir_samples_db, k, pr.sir_mean_db[k], pr.sir_std_db[k]);
        detail::mean_std(evm_samples, k, pr.evm_mean_db[k], pr.evm_std_db[k]);
      }
    }
    out.points.push_back(std::move(pr));
  }
  return out;
}

// ----------------------------------------------------------------------------
// Comparison table
// ----------------------------------------------------------------------------

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string to_csv() const {
    std::string s;
    auto line = [&s](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) s += ',';
        const bool quote = cells[i].find_first_of(",\"\n") != std::string::npos;
        if (!quote) {
          s += cells[i];
          continue;
        }
        s += '"';
        for (char c : cells[i]) {
          if (c == '"') s += '"';
          s += c;
        }
        s += '"';
      }
      s += '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return s;
  }
};

inline std::string format_number(double v, int decimals = 4) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  // Avoid "-0.0000".
  if (std::string_view(buf).find_first_not_of("-0.") == std::string_view::npos && buf[0] == '-')
    return std::string(buf + 1);
  return buf;
}

// One row per point; per-user SIR mean and std, EVM mean, then latency and
// bandwidth. Points with fewer users leave the missing columns empty.
inline Table compare_table(const SweepResult& r) {
  int K = 0;
  for (const auto& p : r.points) K = std::max(K, p.users);
  Table t;
  t.header = {"point", "panels", "users", "realizations"};
  for (int k = 0; k < K; ++k) t.header.push_back("sir_user" + std::to_string(k) + "_db");
  for (int k = 0; k < K; ++k) t.header.push_back("sir_user" + std::to_string(k) + "_std_db");
  for (int k = 0; k < K; ++k) t.header.push_back("evm_user" + std::to_string(k) + "_db");
  for (const char* h : {"sir_mean_db", "latency_cycles", "latency_us", "bandwidth_bps", "bandwidth_deviation_pct",
                        "hop_bytes", "errors"})
    t.header.push_back(h);

  for (const auto& p : r.points) {
    std::vector<std::string> row = {p.label, std::to_string(p.panels), std::to_string(p.users),
                                    std::to_string(p.completed)};
    const bool ok = p.completed > 0;
    auto per_user = [&](const std::vector<double>& v) {
      for (int k = 0; k < K; ++k) row.push_back(ok && k < p.users ? format_number(v[k]) : "");
    };
    per_user(p.sir_mean_db);
    per_user(p.sir_std_db);
    per_user(p.evm_mean_db);
    if (ok) {
      row.push_back(format_number(p.sir_mean_all_users()));
      row.push_back(std::to_string(p.latency.cycles));
      row.push_back(format_number(p.latency.microseconds(), 2));
      row.push_back(format_number(p.bandwidth.bits_per_second, 0));
      row.push_back(format_number(p.bandwidth.deviation_percent(), 2));
      row.push_back(p.hop_bytes.empty() ? "0" : std::to_string(p.hop_bytes.front()));
    } else {
      for (int i = 0; i < 6; ++i) row.push_back("");
    }
    row.push_back(std::to_string(p.errors.size()));
    t.rows.push_back(std::move(row));
  }
  return t;
}

// ----------------------------------------------------------------------------
// Sweep documents
//
// {
//   "base": { scenario } | "base_file": "path relative to the spec",
//   "axis": "PANEL_COUNT",
//   "values": [4, 8, {"value": 16, "label": "...", "overrides": {"a.b": v}}],
//   "realizations": 1,
//   "master_seed": 1,
//   "overrides": {"a.b": v}          // applied to the base, every point
// }
// ----------------------------------------------------------------------------

namespace detail {
inline std::vector<std::string> override_list(const nlohmann::json& o, const std::string& path) {
  std::vector<std::string> out;
  if (o.is_object()) {
    for (auto it = o.begin(); it != o.end(); ++it) out.push_back(it.key() + "=" + it.value().dump());
  } else if (o.is_array()) {
    for (const auto& e : o) {
      if (!e.is_string()) throw ValidationError(path, "override list entries must be \"key=value\" strings");
      out.push_back(e.get<std::string>());
    }
  } else {
    throw ValidationError(path, "expected an object or a list of \"key=value\" strings");
  }
  return out;
}
}  // namespace detail

inline SweepSpec parse_sweep_spec(const nlohmann::json& doc, const std::filesystem::path& base_dir = {}) {
  config_io::Reader r(doc, "");
  r.check_keys({"base", "base_file", "axis", "values", "realizations", "master_seed", "overrides", "threads"});
  SweepSpec s;
  if (r.has("base") && r.has("base_file")) throw ValidationError("base", "give either base or base_file");
  if (r.has("base")) s.base = r.at("base");
  if (r.has("base_file")) {
    const auto p = std::filesystem::path(r.at("base_file").get<std::string>());
    s.base = read_json_file(p.is_absolute() ? p : base_dir / p);
  }
  if (!s.base.is_object()) throw ValidationError("base", "expected a scenario object");
  if (r.has("overrides"))
    for (const auto& o : detail::override_list(r.at("overrides"), "overrides")) apply_override(s.base, o);
  if (!r.has("axis")) throw ValidationError("axis", "required");
  r.read("axis", s.axis);
  r.read("realizations", s.realizations);
  std::uint64_t fallback_seed = 1;
  config_io::Reader(s.base, "base").read("seed", fallback_seed);
  s.master_seed = fallback_seed;
  r.read("master_seed", s.master_seed);
  r.read("threads", s.threads);
  if (!r.has("values") || !r.at("values").is_array()) throw ValidationError("values", "expected a list");
  const auto& vals = r.at("values");
  for (std::size_t i = 0; i < vals.size(); ++i) {
    SweepPoint pt;
    const auto& v = vals[i];
    const std::string path = "values[" + std::to_string(i) + "]";
    if (v.is_object()) {
      config_io::Reader pr(v, path);
      pr.check_keys({"value", "label", "overrides"});
      if (!pr.has("value")) throw ValidationError(path + ".value", "required");
      pt.value = pr.at("value");
      if (pr.has("overrides")) pt.overrides = detail::override_list(pr.at("overrides"), path + ".overrides");
      pt.label = axis_label(s.axis, pt.value);
      pr.read("label", pt.label);
    } else {
      pt.value = v;
      pt.label = axis_label(s.axis, v);
    }
    s.points.push_back(std::move(pt));
  }
  s.validate();
  return s;
}

inline SweepSpec load_sweep_spec(const std::filesystem::path& path) {
  return parse_sweep_spec(read_json_file(path), path.parent_path());
}

}  // namespace dmimo
