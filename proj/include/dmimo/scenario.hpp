#pragma once

// Scenario description: numerology, panel/user geometry, channel and
// processing settings, plus the JSON file format used by the CLI.

#include "dmimo/common.hpp"

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

namespace dmimo {

enum class SymbolRole { ULP, ULD, GUARD, DLP, DLD };
enum class DeploymentMode { COLOCATED, DISTRIBUTED, EXPLICIT };
enum class UserLayoutKind { SQUARE, GRID, EXPLICIT };
enum class Modulation { QPSK, QAM16 };
enum class ChannelModel { GEOMETRIC_LOS, IID_RAYLEIGH, LOS_PLUS_RAYLEIGH };
enum class Pathloss { FREE_SPACE, NONE };
enum class ExecutionMode { SEQUENTIAL, PIPELINED };

NLOHMANN_JSON_SERIALIZE_ENUM(SymbolRole, {{SymbolRole::ULP, "ULP"},
                                          {SymbolRole::ULD, "ULD"},
                                          {SymbolRole::GUARD, "GUARD"},
                                          {SymbolRole::DLP, "DLP"},
                                          {SymbolRole::DLD, "DLD"}})

inline const char* to_string(SymbolRole r) {
  switch (r) {
    case SymbolRole::ULP: return "ULP";
    case SymbolRole::ULD: return "ULD";
    case SymbolRole::GUARD: return "GUARD";
    case SymbolRole::DLP: return "DLP";
    case SymbolRole::DLD: return "DLD";
  }
  return "?";
}

inline const char* to_string(DeploymentMode m) {
  switch (m) {
    case DeploymentMode::COLOCATED: return "COLOCATED";
    case DeploymentMode::DISTRIBUTED: return "DISTRIBUTED";
    case DeploymentMode::EXPLICIT: return "EXPLICIT";
  }
  return "?";
}

inline int bits_per_symbol(Modulation m) { return m == Modulation::QPSK ? 2 : 4; }

// ----------------------------------------------------------------------------
// OFDM numerology
// ----------------------------------------------------------------------------

inline std::vector<SymbolRole> default_frame_symbols() {
  using R = SymbolRole;
  return {R::ULP, R::ULD, R::ULD, R::GUARD, R::DLP, R::DLD, R::GUARD};
}

struct OfdmNumerology {
  double center_frequency_hz = 3.84e9;
  double channel_bandwidth_hz = 50e6;
  double baseband_sample_rate_hz = 61.44e6;
  int fft_size = 1024;
  int cp_length = 144;
  double subcarrier_spacing_hz = 60e3;
  // 66 resource blocks x 12 subcarriers.
  int active_subcarriers = 792;
  std::vector<SymbolRole> frame_symbols = default_frame_symbols();

  double wavelength() const { return kSpeedOfLight / center_frequency_hz; }
  int symbol_samples() const { return fft_size + cp_length; }

  // Frame duration including cyclic prefixes.
  double frame_duration_s() const {
    return static_cast<double>(frame_symbols.size()) * symbol_samples() /
           baseband_sample_rate_hz;
  }

  // Active subcarriers sit symmetrically around DC with DC left empty; index 0
  // is the lowest frequency. With an odd count the extra bin goes positive.
  int negative_subcarriers() const { return active_subcarriers / 2; }

  int subcarrier_offset(int index) const {
    const int neg = negative_subcarriers();
    return index < neg ? index - neg : index - neg + 1;
  }

  int fft_bin(int index) const {
    const int off = subcarrier_offset(index);
    return off < 0 ? off + fft_size : off;
  }

  double subcarrier_frequency_hz(int index) const {
    return center_frequency_hz + subcarrier_offset(index) * subcarrier_spacing_hz;
  }

  int count(SymbolRole role) const {
    return static_cast<int>(std::count(frame_symbols.begin(), frame_symbols.end(), role));
  }

  std::vector<int> symbol_indices(SymbolRole role) const {
    std::vector<int> out;
    for (int i = 0; i < static_cast<int>(frame_symbols.size()); ++i)
      if (frame_symbols[i] == role) out.push_back(i);
    return out;
  }

  void validate(const std::string& path = "numerology") const {
    auto fail = [&](const char* field, const std::string& what) {
      throw ValidationError(path + "." + field, what);
    };
    if (!(center_frequency_hz > 0)) fail("center_frequency_hz", "must be positive");
    if (!(channel_bandwidth_hz > 0)) fail("channel_bandwidth_hz", "must be positive");
    if (!(baseband_sample_rate_hz > 0)) fail("baseband_sample_rate_hz", "must be positive");
    if (!(subcarrier_spacing_hz > 0)) fail("subcarrier_spacing_hz", "must be positive");
    if (fft_size <= 0) fail("fft_size", "must be positive");
    if (cp_length < 0) fail("cp_length", "must be non-negative");
    if (active_subcarriers <= 0) fail("active_subcarriers", "must be positive");
    // Exact: every numerology of interest has integral products.
    if (subcarrier_spacing_hz * fft_size != baseband_sample_rate_hz) {
      std::ostringstream os;
      os.precision(17);
      os << "subcarrier_spacing_hz x fft_size (" << subcarrier_spacing_hz * fft_size
         << ") != baseband_sample_rate_hz (" << baseband_sample_rate_hz << ")";
      fail("subcarrier_spacing_hz", os.str());
    }
    // DC is never used, so at most fft_size - 1 bins carry data.
    if (active_subcarriers > fft_size - 1)
      fail("active_subcarriers", "exceeds fft_size - 1 (DC bin is reserved)");
    if (active_subcarriers * subcarrier_spacing_hz > channel_bandwidth_hz)
      fail("active_subcarriers", "occupied bandwidth exceeds channel_bandwidth_hz");
    if (count(SymbolRole::ULP) != 1)
      fail("frame_symbols", "must contain exactly one ULP symbol");
    if (count(SymbolRole::ULD) < 1)
      fail("frame_symbols", "must contain at least one ULD symbol");
  }
};

// ----------------------------------------------------------------------------
// Geometry
// ----------------------------------------------------------------------------

struct Area {
  double x_min = 0.0, y_min = 0.0, x_max = 5.0, y_max = 5.0;
  double width() const { return x_max - x_min; }
  double depth() const { return y_max - y_min; }
  double perimeter() const { return 2.0 * (width() + depth()); }
  Eigen::Vector2d centroid() const { return {(x_min + x_max) / 2, (y_min + y_max) / 2}; }
};

namespace detail {
// In-plane horizontal axis of a surface with normal `n`. World up is +z.
inline Vec3 lateral_axis(const Vec3& n) {
  Vec3 up(0, 0, 1);
  if (std::abs(n.normalized().dot(up)) > 1.0 - 1e-9) up = Vec3(1, 0, 0);
  return n.cross(up).normalized();
}
}  // namespace detail

// A 16-port panel: rows x cols dual-polarised elements on a plane whose normal
// is `orientation`. Ports 2e and 2e+1 are the two polarisations of element e,
// with elements numbered row-major.
struct PanelGeometry {
  Vec3 position = Vec3::Zero();
  Vec3 orientation = Vec3(0, 1, 0);
  int rows = 4;
  int cols = 2;
  double element_spacing = 0.0;
  double margin = 0.0;

  int ports() const { return rows * cols * 2; }
  double width() const { return cols * element_spacing + margin; }
  double height() const { return rows * element_spacing + margin; }
  Vec3 horizontal_axis() const { return detail::lateral_axis(orientation); }
  Vec3 vertical_axis() const { return horizontal_axis().cross(orientation).normalized(); }

  std::vector<Vec3> port_positions() const {
    std::vector<Vec3> out;
    out.reserve(ports());
    const Vec3 h = horizontal_axis();
    const Vec3 v = vertical_axis();
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) {
        const Vec3 p = position + (c - (cols - 1) / 2.0) * element_spacing * h +
                       (r - (rows - 1) / 2.0) * element_spacing * v;
        out.push_back(p);
        out.push_back(p);
      }
    return out;
  }

  void validate(const std::string& path) const {
    if (rows < 1) throw ValidationError(path + ".rows", "must be >= 1");
    if (cols < 1) throw ValidationError(path + ".cols", "must be >= 1");
    if (!(element_spacing > 0)) throw ValidationError(path + ".element_spacing", "must be positive");
    if (!(margin >= 0)) throw ValidationError(path + ".margin", "must be non-negative");
    if (!position.allFinite()) throw ValidationError(path + ".position", "must be finite");
    if (std::abs(orientation.norm() - 1.0) > 1e-12)
      throw ValidationError(path + ".orientation", "must have unit norm");
  }
};

// Default panel: 4x2 elements at half-wavelength spacing, margin of one
// element spacing, facing +y from the origin.
inline PanelGeometry default_panel(const OfdmNumerology& num = {}) {
  PanelGeometry p;
  p.element_spacing = num.wavelength() / 2.0;
  p.margin = p.element_spacing;
  return p;
}

struct Deployment {
  DeploymentMode mode = DeploymentMode::COLOCATED;
  std::vector<PanelGeometry> panels;
  std::vector<int> chain_order;

  int num_panels() const { return static_cast<int>(panels.size()); }
  int total_ports() const {
    int n = 0;
    for (const auto& p : panels) n += p.ports();
    return n;
  }

  void validate(const std::string& path = "deployment") const {
    if (panels.empty()) throw ValidationError(path + ".panels", "J must be >= 1");
    for (std::size_t j = 0; j < panels.size(); ++j)
      panels[j].validate(path + ".panel[" + std::to_string(j) + "]");
    std::vector<int> sorted = chain_order;
    std::sort(sorted.begin(), sorted.end());
    bool ok = sorted.size() == panels.size();
    for (std::size_t i = 0; ok && i < sorted.size(); ++i) ok = sorted[i] == static_cast<int>(i);
    if (!ok) throw ValidationError(path + ".chain_order", "must be a permutation of 0..J-1");
  }
};

inline std::vector<int> identity_order(int n) {
  std::vector<int> v(n);
  for (int i = 0; i < n; ++i) v[i] = i;
  return v;
}

// Panels tiled edge to edge along the template's horizontal axis, row-major
// with `panels_per_row` per row (0 = one row). Later rows stack upwards by one
// panel height. Panel 0 sits at the template position, so a J-panel wall is a
// prefix of any larger wall built from the same template.
inline Deployment build_colocated_deployment(int J, const PanelGeometry& tmpl,
                                             int panels_per_row = 0) {
  if (J < 1) throw ValidationError("deployment.panels", "J must be >= 1");
  const int per_row = panels_per_row > 0 ? panels_per_row : J;
  const Vec3 h = tmpl.horizontal_axis();
  const Vec3 v = tmpl.vertical_axis();
  Deployment d;
  d.mode = DeploymentMode::COLOCATED;
  for (int j = 0; j < J; ++j) {
    PanelGeometry p = tmpl;
    p.position = tmpl.position + (j % per_row) * tmpl.width() * h +
                 (j / per_row) * tmpl.height() * v;
    d.panels.push_back(p);
  }
  d.chain_order = identity_order(J);
  d.validate();
  return d;
}

// Point at arc length `s` along the rectangle boundary, counter-clockwise from
// (x_min, y_min).
inline Eigen::Vector2d perimeter_point(const Area& a, double s) {
  const double w = a.width(), dpt = a.depth();
  s = std::fmod(s, a.perimeter());
  if (s < w) return {a.x_min + s, a.y_min};
  s -= w;
  if (s < dpt) return {a.x_max, a.y_min + s};
  s -= dpt;
  if (s < w) return {a.x_max - s, a.y_max};
  s -= w;
  return {a.x_min, a.y_max - s};
}

// Panels at arc lengths (j + 1/2) P / J around the area boundary, each facing
// the centroid. The chain follows perimeter order.
inline Deployment build_distributed_deployment(int J, const Area& area,
                                               const PanelGeometry& tmpl) {
  if (J < 1) throw ValidationError("deployment.panels", "J must be >= 1");
  if (!(area.width() > 0) || !(area.depth() > 0))
    throw ValidationError("deployment.area", "must have positive extent");
  const double z = tmpl.position.z();
  const Eigen::Vector2d c = area.centroid();
  Deployment d;
  d.mode = DeploymentMode::DISTRIBUTED;
  for (int j = 0; j < J; ++j) {
    const Eigen::Vector2d xy = perimeter_point(area, (j + 0.5) * area.perimeter() / J);
    PanelGeometry p = tmpl;
    p.position = Vec3(xy.x(), xy.y(), z);
    p.orientation = Vec3(c.x() - xy.x(), c.y() - xy.y(), 0.0).normalized();
    d.panels.push_back(p);
  }
  d.chain_order = identity_order(J);
  d.validate();
  return d;
}

// ----------------------------------------------------------------------------
// Users
// ----------------------------------------------------------------------------

struct UserLayout {
  std::vector<Vec3> positions;
  std::vector<double> tx_power;

  int num_users() const { return static_cast<int>(positions.size()); }

  void validate(const std::string& path = "users") const {
    if (positions.empty()) throw ValidationError(path + ".positions", "K must be >= 1");
    if (tx_power.size() != positions.size())
      throw ValidationError(path + ".tx_power", "must have one entry per user");
    for (double p : tx_power)
      if (!(p > 0) || !std::isfinite(p))
        throw ValidationError(path + ".tx_power", "must be positive and finite");
    for (std::size_t a = 0; a < positions.size(); ++a) {
      if (!positions[a].allFinite())
        throw ValidationError(path + ".positions", "must be finite");
      for (std::size_t b = a + 1; b < positions.size(); ++b)
        if ((positions[a] - positions[b]).norm() == 0.0)
          throw ValidationError(path + ".positions",
                                "users " + std::to_string(a) + " and " + std::to_string(b) +
                                    " coincide");
    }
  }
};

// Row-major grid around `center`: rows advance along `depth_axis` (away from
// the array), columns along the lateral axis. Users 0..cols-1 form the front row.
inline UserLayout build_grid_user_layout(const Vec3& center, double spacing, int K,
                                         const Vec3& depth_axis = Vec3(0, 1, 0)) {
  if (K < 1) throw ValidationError("users.count", "K must be >= 1");
  if (!(spacing > 0)) throw ValidationError("users.side", "must be positive");
  const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(K))));
  const int rows = (K + cols - 1) / cols;
  const Vec3 depth = depth_axis.normalized();
  const Vec3 lat = detail::lateral_axis(depth);
  UserLayout u;
  for (int k = 0; k < K; ++k) {
    const int r = k / cols, c = k % cols;
    u.positions.push_back(center + (c - (cols - 1) / 2.0) * spacing * lat +
                          (r - (rows - 1) / 2.0) * spacing * depth);
  }
  u.tx_power.assign(K, 1.0);
  u.validate();
  return u;
}

// Four users on the corners of a square. (0,2) and (1,3) are the front/back
// pairs along `depth_axis`; (0,1) and (2,3) are side-by-side pairs.
inline UserLayout build_square_user_layout(const Vec3& center, double side, int K = 4,
                                           const Vec3& depth_axis = Vec3(0, 1, 0)) {
  if (K != 4)
    throw ValidationError("users.layout", "SQUARE layout supports exactly K=4 (use GRID or EXPLICIT)");
  return build_grid_user_layout(center, side, 4, depth_axis);
}

// ----------------------------------------------------------------------------
// Scenario configuration
// ----------------------------------------------------------------------------

struct ChannelModelConfig {
  ChannelModel model = ChannelModel::GEOMETRIC_LOS;
  double rician_k = 0.0;
  Pathloss pathloss = Pathloss::FREE_SPACE;
};

struct DeploymentConfig {
  DeploymentMode mode = DeploymentMode::COLOCATED;
  int num_panels = 16;
  int panels_per_row = 0;
  Area area;
  PanelGeometry panel;
  // EXPLICIT mode: one entry per panel; orientations default to the template's.
  std::vector<Vec3> positions;
  std::vector<Vec3> orientations;
  // Empty means the construction's natural order.
  std::vector<int> chain_order;
};

struct UserConfig {
  UserLayoutKind layout = UserLayoutKind::SQUARE;
  int count = 4;
  // Absent: 1.7 m in front of the wall centre (COLOCATED) or the area
  // centroid (DISTRIBUTED / EXPLICIT).
  std::optional<Vec3> center;
  double side = 0.3;
  Vec3 depth_axis = Vec3(0, 1, 0);
  std::vector<Vec3> positions;
  std::vector<double> tx_power;
};

struct ProcessingConfig {
  // Use the true channel instead of the LS estimate in MRC and the Gram.
  bool genie_channel = false;
  // Run the time-domain OFDM modulate/demodulate path. When false, grids go
  // straight from the transmitter to the channel and receiver.
  bool waveform_path = true;
  // Per panel, samples by which the FFT window is advanced into the CP.
  std::vector<int> timing_offsets;
  double regularization = 0.0;
  bool zf_fallback = true;
  int frames = 1;
  int constellation_cap = 256;
};

struct FronthaulConfig {
  // 32: 16-bit I + 16-bit Q fixed point. 128: lossless IEEE double.
  int bits_per_complex = 32;
  bool include_pilot_z = false;
  bool include_gram = true;
  bool gram_triangle = false;
  ExecutionMode execution = ExecutionMode::SEQUENTIAL;
};

struct LatencyConstants {
  double fpga_clock_hz = 153.6e6;
  long cc_timing_ofdm = 6357;
  long cc_local_ce_mrc = 21;
  long cc_ethernet_aggregate = 388;
};

struct ScenarioConfig {
  OfdmNumerology numerology;
  DeploymentConfig deployment;
  UserConfig users;
  ChannelModelConfig channel;
  double noise_power = 0.0;
  std::uint64_t seed = 1;
  Modulation modulation = Modulation::QPSK;
  ProcessingConfig processing;
  FronthaulConfig fronthaul;
  LatencyConstants latency;

  ScenarioConfig() { deployment.panel = default_panel(numerology); }
};

// A scenario with its geometry constructed.
struct Scenario {
  ScenarioConfig config;
  Deployment deployment;
  UserLayout users;

  int J() const { return deployment.num_panels(); }
  int K() const { return users.num_users(); }
  int M() const { return deployment.panels.front().ports(); }
  const OfdmNumerology& numerology() const { return config.numerology; }
};

inline Deployment build_deployment(const DeploymentConfig& dc) {
  Deployment d;
  switch (dc.mode) {
    case DeploymentMode::COLOCATED:
      d = build_colocated_deployment(dc.num_panels, dc.panel, dc.panels_per_row);
      break;
    case DeploymentMode::DISTRIBUTED:
      d = build_distributed_deployment(dc.num_panels, dc.area, dc.panel);
      break;
    case DeploymentMode::EXPLICIT: {
      if (dc.positions.empty())
        throw ValidationError("deployment.positions", "EXPLICIT mode needs panel positions");
      if (!dc.orientations.empty() && dc.orientations.size() != dc.positions.size())
        throw ValidationError("deployment.orientations", "must match positions in length");
      d.mode = DeploymentMode::EXPLICIT;
      for (std::size_t j = 0; j < dc.positions.size(); ++j) {
        PanelGeometry p = dc.panel;
        p.position = dc.positions[j];
        if (!dc.orientations.empty()) p.orientation = dc.orientations[j];
        d.panels.push_back(p);
      }
      d.chain_order = identity_order(d.num_panels());
      break;
    }
  }
  if (!dc.chain_order.empty()) d.chain_order = dc.chain_order;
  d.validate();
  return d;
}

inline Vec3 default_user_center(const DeploymentConfig& dc, const Deployment& d) {
  if (dc.mode == DeploymentMode::COLOCATED) {
    Vec3 c = Vec3::Zero();
    for (const auto& p : d.panels) c += p.position;
    return c / d.num_panels() + 1.7 * dc.panel.orientation;
  }
  const auto c = dc.area.centroid();
  return {c.x(), c.y(), dc.panel.position.z()};
}

inline UserLayout build_users(const UserConfig& uc, const DeploymentConfig& dc,
                              const Deployment& d) {
  UserLayout u;
  const Vec3 center = uc.center.value_or(default_user_center(dc, d));
  switch (uc.layout) {
    case UserLayoutKind::SQUARE:
      u = build_square_user_layout(center, uc.side, uc.count, uc.depth_axis);
      break;
    case UserLayoutKind::GRID:
      u = build_grid_user_layout(center, uc.side, uc.count, uc.depth_axis);
      break;
    case UserLayoutKind::EXPLICIT:
      u.positions = uc.positions;
      u.tx_power.assign(u.positions.size(), 1.0);
      break;
  }
  if (!uc.tx_power.empty()) u.tx_power = uc.tx_power;
  u.validate();
  return u;
}

// Validates every invariant and builds the geometry.
inline Scenario resolve(const ScenarioConfig& cfg) {
  cfg.numerology.validate();
  cfg.deployment.panel.validate("deployment.panel");
  if (cfg.deployment.num_panels < 1 && cfg.deployment.mode != DeploymentMode::EXPLICIT)
    throw ValidationError("deployment.panels", "J must be >= 1");
  if (!(cfg.noise_power >= 0) || !std::isfinite(cfg.noise_power))
    throw ValidationError("noise_power", "must be non-negative");
  if (!(cfg.channel.rician_k >= 0)) throw ValidationError("channel.rician_k", "must be >= 0");
  if (cfg.processing.frames < 1) throw ValidationError("processing.frames", "must be >= 1");
  if (cfg.processing.regularization < 0)
    throw ValidationError("processing.regularization", "must be >= 0");
  if (cfg.fronthaul.bits_per_complex != 32 && cfg.fronthaul.bits_per_complex != 128)
    throw ValidationError("fronthaul.bits_per_complex", "must be 32 (fixed point) or 128 (lossless)");
  if (!(cfg.latency.fpga_clock_hz > 0))
    throw ValidationError("latency.fpga_clock_hz", "must be positive");
  if (cfg.latency.cc_timing_ofdm < 0 || cfg.latency.cc_local_ce_mrc < 0 ||
      cfg.latency.cc_ethernet_aggregate < 0)
    throw ValidationError("latency", "cycle counts must be >= 0");

  Scenario s;
  s.config = cfg;
  s.deployment = build_deployment(cfg.deployment);
  s.users = build_users(cfg.users, cfg.deployment, s.deployment);
  const auto& off = cfg.processing.timing_offsets;
  if (!off.empty() && static_cast<int>(off.size()) != s.J())
    throw ValidationError("processing.timing_offsets", "must be empty or have one entry per panel");
  for (int o : off)
    if (o < 0 || o > cfg.numerology.cp_length)
      throw ValidationError("processing.timing_offsets", "offset outside [0, cp_length]");
  return s;
}

// ----------------------------------------------------------------------------
// JSON schema
// ----------------------------------------------------------------------------

NLOHMANN_JSON_SERIALIZE_ENUM(DeploymentMode, {{DeploymentMode::COLOCATED, "COLOCATED"},
                                              {DeploymentMode::DISTRIBUTED, "DISTRIBUTED"},
                                              {DeploymentMode::EXPLICIT, "EXPLICIT"}})
NLOHMANN_JSON_SERIALIZE_ENUM(UserLayoutKind, {{UserLayoutKind::SQUARE, "SQUARE"},
                                              {UserLayoutKind::GRID, "GRID"},
                                              {UserLayoutKind::EXPLICIT, "EXPLICIT"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Modulation, {{Modulation::QPSK, "QPSK"}, {Modulation::QAM16, "QAM16"}})
NLOHMANN_JSON_SERIALIZE_ENUM(ChannelModel, {{ChannelModel::GEOMETRIC_LOS, "GEOMETRIC_LOS"},
                                            {ChannelModel::IID_RAYLEIGH, "IID_RAYLEIGH"},
                                            {ChannelModel::LOS_PLUS_RAYLEIGH, "LOS_PLUS_RAYLEIGH"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Pathloss, {{Pathloss::FREE_SPACE, "FREE_SPACE"}, {Pathloss::NONE, "NONE"}})
NLOHMANN_JSON_SERIALIZE_ENUM(ExecutionMode, {{ExecutionMode::SEQUENTIAL, "SEQUENTIAL"},
                                             {ExecutionMode::PIPELINED, "PIPELINED"}})

namespace config_io {

using nlohmann::json;

class Reader {
 public:
  Reader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ValidationError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return obj_.contains(key) && !obj_.at(key).is_null(); }
  const json& at(const std::string& key) const { return obj_.at(key); }

  template <typename T>
  void read(const std::string& key, T& out) const {
    if (!has(key)) return;
    const json& v = obj_.at(key);
    try {
      if constexpr (std::is_enum_v<T>) {
        if (!v.is_string()) throw ValidationError(child(key), "expected a string");
        const T parsed = v.get<T>();
        // nlohmann maps unknown strings to the first enumerator.
        if (json(parsed) != v)
          throw ValidationError(child(key), "unknown value '" + v.get<std::string>() + "'");
        out = parsed;
      } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!v.is_number_integer()) throw ValidationError(child(key), "expected an integer");
        if constexpr (std::is_unsigned_v<T>) {
          if (v.is_number_unsigned() || v.get<long long>() >= 0) out = v.get<T>();
          else throw ValidationError(child(key), "must be non-negative");
        } else {
          out = v.get<T>();
        }
      } else {
        out = v.get<T>();
      }
    } catch (const json::exception& e) {
      throw ValidationError(child(key), e.what());
    }
  }

  void read_vec3(const std::string& key, Vec3& out) const {
    if (!has(key)) return;
    out = parse_vec3(obj_.at(key), child(key));
  }

  void read_vec3_list(const std::string& key, std::vector<Vec3>& out) const {
    if (!has(key)) return;
    const json& v = obj_.at(key);
    if (!v.is_array()) throw ValidationError(child(key), "expected a list of 3-vectors");
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i)
      out.push_back(parse_vec3(v[i], child(key) + "[" + std::to_string(i) + "]"));
  }

  void check_keys(std::initializer_list<const char*> allowed) const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      bool ok = false;
      for (const char* a : allowed) ok = ok || it.key() == a;
      if (!ok) throw ValidationError(child(it.key()), "unknown key");
    }
  }

  static Vec3 parse_vec3(const json& v, const std::string& path) {
    if (!v.is_array() || v.size() != 3) throw ValidationError(path, "expected [x, y, z]");
    Vec3 out;
    for (int i = 0; i < 3; ++i) {
      if (!v[i].is_number()) throw ValidationError(path, "expected numbers");
      out[i] = v[i].get<double>();
    }
    return out;
  }

 private:
  const json& obj_;
  std::string path_;
};

inline json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

inline json vec3_list_json(const std::vector<Vec3>& vs) {
  json a = json::array();
  for (const auto& v : vs) a.push_back(vec3_json(v));
  return a;
}

}  // namespace config_io

inline nlohmann::json to_json(const ScenarioConfig& c) {
  using nlohmann::json;
  using config_io::vec3_json;
  using config_io::vec3_list_json;
  const auto& n = c.numerology;
  const auto& d = c.deployment;
  const auto& u = c.users;
  json j;
  j["seed"] = c.seed;
  j["modulation"] = c.modulation;
  j["noise_power"] = c.noise_power;
  j["numerology"] = {{"center_frequency_hz", n.center_frequency_hz},
                     {"channel_bandwidth_hz", n.channel_bandwidth_hz},
                     {"baseband_sample_rate_hz", n.baseband_sample_rate_hz},
                     {"fft_size", n.fft_size},
                     {"cp_length", n.cp_length},
                     {"subcarrier_spacing_hz", n.subcarrier_spacing_hz},
                     {"active_subcarriers", n.active_subcarriers},
                     {"frame_symbols", n.frame_symbols}};
  j["deployment"] = {{"mode", d.mode},
                     {"panels", d.num_panels},
                     {"panels_per_row", d.panels_per_row},
                     {"area", {{"x_min", d.area.x_min}, {"y_min", d.area.y_min},
                               {"x_max", d.area.x_max}, {"y_max", d.area.y_max}}},
                     {"panel", {{"position", vec3_json(d.panel.position)},
                                {"orientation", vec3_json(d.panel.orientation)},
                                {"rows", d.panel.rows},
                                {"cols", d.panel.cols},
                                {"element_spacing", d.panel.element_spacing},
                                {"margin", d.panel.margin}}},
                     {"positions", vec3_list_json(d.positions)},
                     {"orientations", vec3_list_json(d.orientations)},
                     {"chain_order", d.chain_order}};
  j["users"] = {{"layout", u.layout},
                {"count", u.layout == UserLayoutKind::EXPLICIT ? static_cast<int>(u.positions.size()) : u.count},
                {"center", u.center ? vec3_json(*u.center) : json(nullptr)},
                {"side", u.side},
                {"depth_axis", vec3_json(u.depth_axis)},
                {"positions", vec3_list_json(u.positions)},
                {"tx_power", u.tx_power}};
  j["channel"] = {{"model", c.channel.model},
                  {"rician_k", c.channel.rician_k},
                  {"pathloss", c.channel.pathloss}};
  const auto& p = c.processing;
  j["processing"] = {{"genie_channel", p.genie_channel},
                     {"waveform_path", p.waveform_path},
                     {"timing_offsets", p.timing_offsets},
                     {"regularization", p.regularization},
                     {"zf_fallback", p.zf_fallback},
                     {"frames", p.frames},
                     {"constellation_cap", p.constellation_cap}};
  const auto& f = c.fronthaul;
  j["fronthaul"] = {{"bits_per_complex", f.bits_per_complex},
                    {"include_pilot_z", f.include_pilot_z},
                    {"include_gram", f.include_gram},
                    {"gram_triangle", f.gram_triangle},
                    {"execution", f.execution}};
  j["latency"] = {{"fpga_clock_hz", c.latency.fpga_clock_hz},
                  {"cc_timing_ofdm", c.latency.cc_timing_ofdm},
                  {"cc_local_ce_mrc", c.latency.cc_local_ce_mrc},
                  {"cc_ethernet_aggregate", c.latency.cc_ethernet_aggregate}};
  return j;
}

// Parses a scenario object. Missing keys keep their defaults; unknown keys are
// rejected. Does not validate cross-field invariants (see `resolve`).
inline ScenarioConfig parse_scenario(const nlohmann::json& root) {
  using config_io::Reader;
  ScenarioConfig c;
  Reader r(root, "");
  r.check_keys({"seed", "modulation", "noise_power", "numerology", "deployment", "users",
                "channel", "processing", "fronthaul", "latency"});
  r.read("seed", c.seed);
  r.read("modulation", c.modulation);
  r.read("noise_power", c.noise_power);

  if (r.has("numerology")) {
    Reader n(r.at("numerology"), "numerology");
    n.check_keys({"center_frequency_hz", "channel_bandwidth_hz", "baseband_sample_rate_hz",
                  "fft_size", "cp_length", "subcarrier_spacing_hz", "active_subcarriers",
                  "frame_symbols"});
    auto& o = c.numerology;
    n.read("center_frequency_hz", o.center_frequency_hz);
    n.read("channel_bandwidth_hz", o.channel_bandwidth_hz);
    n.read("baseband_sample_rate_hz", o.baseband_sample_rate_hz);
    n.read("fft_size", o.fft_size);
    n.read("cp_length", o.cp_length);
    n.read("subcarrier_spacing_hz", o.subcarrier_spacing_hz);
    n.read("active_subcarriers", o.active_subcarriers);
    if (n.has("frame_symbols")) {
      const auto& fs = n.at("frame_symbols");
      if (!fs.is_array()) throw ValidationError("numerology.frame_symbols", "expected a list");
      o.frame_symbols.clear();
      for (const auto& s : fs) {
        if (!s.is_string()) throw ValidationError("numerology.frame_symbols", "expected role names");
        const auto role = s.get<SymbolRole>();
        if (nlohmann::json(role) != s)
          throw ValidationError("numerology.frame_symbols", "unknown role '" + s.get<std::string>() + "'");
        o.frame_symbols.push_back(role);
      }
    }
  }
  // Spacing and margin follow the (possibly overridden) wavelength unless set.
  c.deployment.panel = default_panel(c.numerology);

  if (r.has("deployment")) {
    Reader d(r.at("deployment"), "deployment");
    d.check_keys({"mode", "panels", "panels_per_row", "area", "panel", "positions",
                  "orientations", "chain_order"});
    auto& o = c.deployment;
    d.read("mode", o.mode);
    d.read("panels", o.num_panels);
    d.read("panels_per_row", o.panels_per_row);
    if (d.has("area")) {
      Reader a(d.at("area"), "deployment.area");
      a.check_keys({"x_min", "y_min", "x_max", "y_max"});
      a.read("x_min", o.area.x_min);
      a.read("y_min", o.area.y_min);
      a.read("x_max", o.area.x_max);
      a.read("y_max", o.area.y_max);
    }
    if (d.has("panel")) {
      Reader p(d.at("panel"), "deployment.panel");
      p.check_keys({"position", "orientation", "rows", "cols", "element_spacing", "margin"});
      p.read_vec3("position", o.panel.position);
      p.read_vec3("orientation", o.panel.orientation);
      p.read("rows", o.panel.rows);
      p.read("cols", o.panel.cols);
      const bool spacing_set = p.has("element_spacing");
      p.read("element_spacing", o.panel.element_spacing);
      if (p.has("margin")) p.read("margin", o.panel.margin);
      else if (spacing_set) o.panel.margin = o.panel.element_spacing;
    }
    d.read_vec3_list("positions", o.positions);
    d.read_vec3_list("orientations", o.orientations);
    d.read("chain_order", o.chain_order);
    if (o.mode == DeploymentMode::EXPLICIT && d.has("positions") && !d.has("panels"))
      o.num_panels = static_cast<int>(o.positions.size());
  }

  if (r.has("users")) {
    Reader u(r.at("users"), "users");
    u.check_keys({"layout", "count", "center", "side", "depth_axis", "positions", "tx_power"});
    auto& o = c.users;
    u.read("layout", o.layout);
    u.read("count", o.count);
    if (u.has("center")) {
      Vec3 v;
      u.read_vec3("center", v);
      o.center = v;
    }
    u.read("side", o.side);
    u.read_vec3("depth_axis", o.depth_axis);
    u.read_vec3_list("positions", o.positions);
    if (o.layout == UserLayoutKind::EXPLICIT) o.count = static_cast<int>(o.positions.size());
    if (u.has("tx_power")) {
      const auto& tp = u.at("tx_power");
      if (tp.is_number()) o.tx_power.assign(std::max(o.count, 1), tp.get<double>());
      else u.read("tx_power", o.tx_power);
    }
  }

  if (r.has("channel")) {
    Reader ch(r.at("channel"), "channel");
    ch.check_keys({"model", "rician_k", "pathloss"});
    ch.read("model", c.channel.model);
    ch.read("rician_k", c.channel.rician_k);
    ch.read("pathloss", c.channel.pathloss);
  }

  if (r.has("processing")) {
    Reader p(r.at("processing"), "processing");
    p.check_keys({"genie_channel", "waveform_path", "timing_offsets", "regularization",
                  "zf_fallback", "frames", "constellation_cap"});
    auto& o = c.processing;
    p.read("genie_channel", o.genie_channel);
    p.read("waveform_path", o.waveform_path);
    p.read("timing_offsets", o.timing_offsets);
    p.read("regularization", o.regularization);
    p.read("zf_fallback", o.zf_fallback);
    p.read("frames", o.frames);
    p.read("constellation_cap", o.constellation_cap);
  }

  if (r.has("fronthaul")) {
    Reader f(r.at("fronthaul"), "fronthaul");
    f.check_keys({"bits_per_complex", "include_pilot_z", "include_gram", "gram_triangle", "execution"});
    auto& o = c.fronthaul;
    f.read("bits_per_complex", o.bits_per_complex);
    f.read("include_pilot_z", o.include_pilot_z);
    f.read("include_gram", o.include_gram);
    f.read("gram_triangle", o.gram_triangle);
    f.read("execution", o.execution);
  }

  if (r.has("latency")) {
    Reader l(r.at("latency"), "latency");
    l.check_keys({"fpga_clock_hz", "cc_timing_ofdm", "cc_local_ce_mrc", "cc_ethernet_aggregate"});
    l.read("fpga_clock_hz", c.latency.fpga_clock_hz);
    l.read("cc_timing_ofdm", c.latency.cc_timing_ofdm);
    l.read("cc_local_ce_mrc", c.latency.cc_local_ce_mrc);
    l.read("cc_ethernet_aggregate", c.latency.cc_ethernet_aggregate);
  }
  return c;
}

// ----------------------------------------------------------------------------
// Overrides: "a.b.c=value". The value is parsed as JSON when it parses,
// otherwise taken as a string, so mode=DISTRIBUTED needs no quoting.
// ----------------------------------------------------------------------------

inline void apply_override(nlohmann::json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ParseError("override '" + assignment + "' is not of the form key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  nlohmann::json* node = &root;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ParseError("override key '" + key + "' has an empty component");
    nlohmann::json* next = nullptr;
    if (node->is_array()) {
      const auto idx = std::stoul(part);
      if (idx >= node->size()) throw ParseError("override index out of range in '" + key + "'");
      next = &(*node)[idx];
    } else {
      if (node->is_null()) *node = nlohmann::json::object();
      if (!node->is_object()) throw ParseError("override key '" + key + "' traverses a non-object");
      next = &(*node)[part];
    }
    if (dot == std::string::npos) {
      *next = value;
      return;
    }
    node = next;
    start = dot + 1;
  }
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  nlohmann::json j = nlohmann::json::parse(ss.str(), nullptr, false, /*ignore_comments=*/true);
  if (j.is_discarded()) throw ParseError("'" + path.string() + "' is not valid JSON");
  return j;
}

inline ScenarioConfig load_scenario(const nlohmann::json& root,
                                    const std::vector<std::string>& overrides = {}) {
  nlohmann::json j = root;
  for (const auto& o : overrides) apply_override(j, o);
  ScenarioConfig c = parse_scenario(j);
  resolve(c);
  return c;
}

inline ScenarioConfig load_scenario(const std::filesystem::path& path,
                                    const std::vector<std::string>& overrides = {}) {
  return load_scenario(read_json_file(path), overrides);
}

}  // namespace dmimo
