#pragma once

// Scenario files (TOML). Every key is optional; unknown keys are rejected so a
// typo cannot silently fall back to a default. validate() checks every module
// precondition the run will hit before any compute starts.

#include <toml.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "attobeat/analysis.hpp"
#include "attobeat/error.hpp"
#include "attobeat/io.hpp"
#include "attobeat/molecule.hpp"
#include "attobeat/optics.hpp"
#include "attobeat/probe.hpp"
#include "attobeat/quantum.hpp"
#include "attobeat/stab.hpp"
#include "attobeat/units.hpp"

namespace attobeat {

/// start, start+step, ... up to and including stop (to 1e-9 steps).
struct UniformGrid {
  double start = 0.0;
  double stop = 0.0;
  double step = 1.0;

  std::vector<double> values() const {
    if (!(step > 0.0)) throw InvalidInput(fmt::format("grid step must be positive, got {}", step));
    const double n_real = (stop - start) / step;
    if (n_real < 0.0) throw InvalidInput(fmt::format("grid stop {} is below start {}", stop, start));
    const auto n = static_cast<std::size_t>(std::floor(n_real + 1e-9)) + 1;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = start + step * static_cast<double>(i);
    return out;
  }
};

struct MoleculeConfig {
  double omega_e = 2321.7;
  double omega_e_x_e = 66.2;
  int v_lo = 5;
  int v_hi = 11;
  std::vector<double> populations;    // empty: uniform
  std::vector<double> probe_weights;  // empty: all ones
};

struct PulseConfig {
  double center_ev = 30.0;
  double fwhm_ev = 1.0;
  double ionization_energy_cm1 = 124417.5;
  double half_width_sigmas = 6.5;
  double points_per_fringe = 16.0;
};

struct ScanConfig {
  UniformGrid tau_xx{11.0, 102.0, 3.0};
  std::vector<double> tau_xx_list;  // overrides tau_xx when non-empty
  UniformGrid tau_ni{-50.0, 800.0, 4.0};
  std::vector<double> dump_tau_xx{29.0, 45.0};

  std::vector<double> two_pulse_delays() const { return tau_xx_list.empty() ? tau_xx.values() : tau_xx_list; }
};

struct ProbeConfig {
  KernelLayout layout;
  double beta2_base = 1.0;
  double beta2_modulation = 0.3;
  double beta4_base = 0.1;
  double beta4_modulation = 0.05;
};

struct VmiConfig {
  bool enabled = true;
  int r_max = 110;
  int l_max = 6;
  double exposure = 2000.0;      // laser shots per delay frame
  double counts_per_shot = 20.0;  // detected ions per shot; 1 makes exposure a raw count
  int chord_points = 8;

  double expected_counts() const { return exposure * counts_per_shot; }
};

struct AnalysisConfig {
  std::vector<LevelPair> pairs{{8, 9}, {7, 8}, {8, 10}, {7, 9}};
  std::vector<double> literature{1130.1, 1262.5, 2127.8, 2392.6};
  Window window = Window::kHann;
  int zero_pad = 4;
  int band_bins = 2;
  int repeats = 8;
  double scan_noise = 0.05;
  std::optional<std::pair<double, double>> pixel_range;
  double tol_col2 = 40.0;
  double tol_col3 = 15.0;
};

struct StabilizeConfig {
  LoopConfig loop;
  std::optional<double> snr_db;  // pixel noise on the fringe frames
  bool tune = true;
  GainGrid grid;
};

struct Scenario {
  std::string name = "default";
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  MoleculeConfig molecule;
  PulseConfig pulse;
  ScanConfig scan;
  ProbeConfig probe;
  VmiConfig vmi;
  AnalysisConfig analysis;
  StabilizeConfig stabilize;
};

// ---------------------------------------------------------------------------
// Derived objects

inline VibrationalLevels make_levels(const MoleculeConfig& m) {
  MorseConstants c{m.omega_e, m.omega_e_x_e, 0};
  c.v_max = MorseConstants::highest_bound_level(m.omega_e, m.omega_e_x_e);
  auto lv = levels_from_morse(c, m.v_lo, m.v_hi);
  if (!m.populations.empty()) lv = lv.with_populations(m.populations);
  if (!m.probe_weights.empty()) lv = lv.with_probe_weights(m.probe_weights);
  return lv;
}

inline PulsePair make_pulse(const PulseConfig& p) { return PulsePair::from_fwhm_ev(p.center_ev, p.fwhm_ev); }

inline EnergyGridSpec make_grid_spec(const PulseConfig& p) {
  EnergyGridSpec g;
  g.ionization_energy = p.ionization_energy_cm1;
  g.half_width_sigmas = p.half_width_sigmas;
  g.points_per_fringe = p.points_per_fringe;
  return g;
}

/// Pixel band holding the level kernels, used for FTPS integration.
inline std::pair<double, double> analysis_pixel_range(const Scenario& sc, std::size_t channels) {
  if (sc.analysis.pixel_range) return *sc.analysis.pixel_range;
  const auto& k = sc.probe.layout;
  const double lo = k.first_center - 2.0 * k.width;
  const double hi = k.first_center + k.spacing * static_cast<double>(channels - 1) + 2.0 * k.width;
  return {std::max(1.0, lo), std::min(static_cast<double>(sc.vmi.r_max), hi)};
}

inline LoopConfig make_loop(const StabilizeConfig& s) {
  LoopConfig l = s.loop;
  if (s.snr_db) l.frame.noise = noise_for_snr_db(l.frame, *s.snr_db);
  return l;
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

class TomlReader {
 public:
  explicit TomlReader(std::string source) : source_(std::move(source)) {}

  void check_keys(const toml::table& t, const std::string& where, std::initializer_list<const char*> allowed) const {
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (auto&& [k, v] : t) {
      (void)v;
      if (!ok.count(std::string(k.str())))
        throw ConfigError(fmt::format("{}: unknown key '{}{}'", source_, where.empty() ? "" : where + ".", k.str()));
    }
  }

  const toml::table* table(const toml::table& t, const char* key) const {
    const auto* node = t.get(key);
    if (!node) return nullptr;
    if (!node->is_table()) throw ConfigError(fmt::format("{}: '{}' must be a table", source_, key));
    return node->as_table();
  }

  void get(const toml::table& t, const char* key, double& out) const {
    if (const auto* n = t.get(key)) {
      if (auto v = n->value<double>(); v && (n->is_floating_point() || n->is_integer()))
        out = *v;
      else
        throw ConfigError(fmt::format("{}: '{}' must be a number", source_, key));
    }
  }

  void get(const toml::table& t, const char* key, int& out) const {
    if (const auto* n = t.get(key)) {
      if (!n->is_integer()) throw ConfigError(fmt::format("{}: '{}' must be an integer", source_, key));
      const auto v = *n->value<std::int64_t>();
      if (v < INT32_MIN || v > INT32_MAX) throw ConfigError(fmt::format("{}: '{}' out of range", source_, key));
      out = static_cast<int>(v);
    }
  }

  void get(const toml::table& t, const char* key, std::uint64_t& out) const {
    if (const auto* n = t.get(key)) {
      if (!n->is_integer() || *n->value<std::int64_t>() < 0)
        throw ConfigError(fmt::format("{}: '{}' must be a non-negative integer", source_, key));
      out = static_cast<std::uint64_t>(*n->value<std::int64_t>());
    }
  }

  void get(const toml::table& t, const char* key, bool& out) const {
    if (const auto* n = t.get(key)) {
      if (!n->is_boolean()) throw ConfigError(fmt::format("{}: '{}' must be true or false", source_, key));
      out = *n->value<bool>();
    }
  }

  void get(const toml::table& t, const char* key, std::string& out) const {
    if (const auto* n = t.get(key)) {
      if (!n->is_string()) throw ConfigError(fmt::format("{}: '{}' must be a string", source_, key));
      out = *n->value<std::string>();
    }
  }

  void get(const toml::table& t, const char* key, std::vector<double>& out) const {
    if (const auto* n = t.get(key)) {
      const auto* arr = n->as_array();
      if (!arr) throw ConfigError(fmt::format("{}: '{}' must be an array of numbers", source_, key));
      out.clear();
      for (auto&& e : *arr) {
        if (!(e.is_integer() || e.is_floating_point()))
          throw ConfigError(fmt::format("{}: '{}' must be an array of numbers", source_, key));
        out.push_back(*e.value<double>());
      }
    }
  }

  void get(const toml::table& t, const char* key, UniformGrid& out) const {
    if (const auto* n = t.get(key)) {
      const auto* arr = n->as_array();
      std::vector<double> v;
      if (arr) get(t, key, v);
      if (!arr || v.size() != 3)
        throw ConfigError(fmt::format("{}: '{}' must be [start, stop, step]", source_, key));
      out = {v[0], v[1], v[2]};
    }
  }

  void get(const toml::table& t, const char* key, std::vector<LevelPair>& out) const {
    if (const auto* n = t.get(key)) {
      const auto* arr = n->as_array();
      if (!arr) throw ConfigError(fmt::format("{}: '{}' must be an array of [v, v'] pairs", source_, key));
      out.clear();
      for (auto&& e : *arr) {
        const auto* p = e.as_array();
        if (!p || p->size() != 2 || !(*p)[0].is_integer() || !(*p)[1].is_integer())
          throw ConfigError(fmt::format("{}: '{}' must be an array of [v, v'] pairs", source_, key));
        out.emplace_back(static_cast<int>(*(*p)[0].value<std::int64_t>()), static_cast<int>(*(*p)[1].value<std::int64_t>()));
      }
    }
  }

  void get_range(const toml::table& t, const char* key, std::optional<std::pair<double, double>>& out) const {
    if (t.get(key)) {
      std::vector<double> v;
      get(t, key, v);
      if (v.size() != 2) throw ConfigError(fmt::format("{}: '{}' must be [lo, hi]", source_, key));
      out = std::make_pair(v[0], v[1]);
    }
  }

 private:
  std::string source_;
};

}  // namespace detail

inline Scenario parse_scenario(std::string_view text, const std::string& source = "scenario") {
  toml::table root;
  try {
    root = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    throw ConfigError(fmt::format("{}:{}:{}: {}", source, e.source().begin.line, e.source().begin.column, e.description()));
  }
  detail::TomlReader r(source);
  Scenario sc;
  r.check_keys(root, "", {"name", "seed", "output_dir", "molecule", "pulse", "scan", "probe", "vmi", "analysis", "stabilize"});
  r.get(root, "name", sc.name);
  r.get(root, "seed", sc.seed);
  r.get(root, "output_dir", sc.output_dir);

  if (const auto* t = r.table(root, "molecule")) {
    r.check_keys(*t, "molecule", {"omega_e", "omega_e_x_e", "v_lo", "v_hi", "populations", "probe_weights"});
    auto& m = sc.molecule;
    r.get(*t, "omega_e", m.omega_e);
    r.get(*t, "omega_e_x_e", m.omega_e_x_e);
    r.get(*t, "v_lo", m.v_lo);
    r.get(*t, "v_hi", m.v_hi);
    r.get(*t, "populations", m.populations);
    r.get(*t, "probe_weights", m.probe_weights);
  }
  if (const auto* t = r.table(root, "pulse")) {
    r.check_keys(*t, "pulse", {"center_ev", "fwhm_ev", "ionization_energy_cm1", "half_width_sigmas", "points_per_fringe"});
    auto& p = sc.pulse;
    r.get(*t, "center_ev", p.center_ev);
    r.get(*t, "fwhm_ev", p.fwhm_ev);
    r.get(*t, "ionization_energy_cm1", p.ionization_energy_cm1);
    r.get(*t, "half_width_sigmas", p.half_width_sigmas);
    r.get(*t, "points_per_fringe", p.points_per_fringe);
  }
  if (const auto* t = r.table(root, "scan")) {
    r.check_keys(*t, "scan", {"tau_xx", "tau_xx_list", "tau_ni", "dump_tau_xx"});
    r.get(*t, "tau_xx", sc.scan.tau_xx);
    r.get(*t, "tau_xx_list", sc.scan.tau_xx_list);
    r.get(*t, "tau_ni", sc.scan.tau_ni);
    r.get(*t, "dump_tau_xx", sc.scan.dump_tau_xx);
  }
  if (const auto* t = r.table(root, "probe")) {
    r.check_keys(*t, "probe", {"first_center", "spacing", "width", "static_center", "static_width", "static_amplitude",
                               "beta2_base", "beta2_modulation", "beta4_base", "beta4_modulation"});
    auto& p = sc.probe;
    r.get(*t, "first_center", p.layout.first_center);
    r.get(*t, "spacing", p.layout.spacing);
    r.get(*t, "width", p.layout.width);
    r.get(*t, "static_center", p.layout.static_band.center);
    r.get(*t, "static_width", p.layout.static_band.width);
    r.get(*t, "static_amplitude", p.layout.static_band.amplitude);
    r.get(*t, "beta2_base", p.beta2_base);
    r.get(*t, "beta2_modulation", p.beta2_modulation);
    r.get(*t, "beta4_base", p.beta4_base);
    r.get(*t, "beta4_modulation", p.beta4_modulation);
  }
  if (const auto* t = r.table(root, "vmi")) {
    r.check_keys(*t, "vmi", {"enabled", "r_max", "l_max", "exposure", "counts_per_shot", "chord_points"});
    r.get(*t, "enabled", sc.vmi.enabled);
    r.get(*t, "r_max", sc.vmi.r_max);
    r.get(*t, "l_max", sc.vmi.l_max);
    r.get(*t, "exposure", sc.vmi.exposure);
    r.get(*t, "counts_per_shot", sc.vmi.counts_per_shot);
    r.get(*t, "chord_points", sc.vmi.chord_points);
  }
  if (const auto* t = r.table(root, "analysis")) {
    r.check_keys(*t, "analysis", {"pairs", "literature", "window", "zero_pad", "band_bins", "repeats", "scan_noise",
                                  "pixel_range", "tol_col2", "tol_col3"});
    auto& a = sc.analysis;
    r.get(*t, "pairs", a.pairs);
    r.get(*t, "literature", a.literature);
    std::string window = a.window == Window::kHann ? "hann" : "rectangular";
    r.get(*t, "window", window);
    if (window == "hann")
      a.window = Window::kHann;
    else if (window == "rectangular")
      a.window = Window::kRectangular;
    else
      throw ConfigError(fmt::format("{}: analysis.window must be \"hann\" or \"rectangular\"", source));
    r.get(*t, "zero_pad", a.zero_pad);
    r.get(*t, "band_bins", a.band_bins);
    r.get(*t, "repeats", a.repeats);
    r.get(*t, "scan_noise", a.scan_noise);
    r.get_range(*t, "pixel_range", a.pixel_range);
    r.get(*t, "tol_col2", a.tol_col2);
    r.get(*t, "tol_col3", a.tol_col3);
  }
  if (const auto* t = r.table(root, "stabilize")) {
    r.check_keys(*t, "stabilize",
                 {"wavelength_nm", "rate_hz", "steps", "settle_steps", "phase_noise_mrad", "snr_db", "frame_width",
                  "frame_height", "carrier_cycles", "contrast", "drift_linear_as_per_s", "drift_sine_amplitude_as",
                  "drift_sine_frequency_hz", "drift_random_walk_as_per_sqrt_s", "kp", "ki", "kd", "integral_limit_as_s",
                  "tune", "grid_kp", "grid_ki", "grid_kd", "tune_steps"});
    auto& s = sc.stabilize;
    auto& l = s.loop;
    double wl_nm = l.wavelength_m * 1e9, noise_mrad = l.phase_noise_rad * 1e3;
    double cycles = l.frame.carrier * l.frame.width;
    r.get(*t, "wavelength_nm", wl_nm);
    r.get(*t, "rate_hz", l.rate_hz);
    r.get(*t, "steps", l.steps);
    r.get(*t, "settle_steps", l.settle_steps);
    r.get(*t, "phase_noise_mrad", noise_mrad);
    if (t->get("snr_db")) {
      double snr = 0.0;
      r.get(*t, "snr_db", snr);
      s.snr_db = snr;
    }
    r.get(*t, "frame_width", l.frame.width);
    r.get(*t, "frame_height", l.frame.height);
    r.get(*t, "carrier_cycles", cycles);
    r.get(*t, "contrast", l.frame.contrast);
    r.get(*t, "drift_linear_as_per_s", l.drift.linear_as_per_s);
    r.get(*t, "drift_sine_amplitude_as", l.drift.sine_amplitude_as);
    r.get(*t, "drift_sine_frequency_hz", l.drift.sine_frequency_hz);
    r.get(*t, "drift_random_walk_as_per_sqrt_s", l.drift.random_walk_as_per_sqrt_s);
    r.get(*t, "kp", l.gains.kp);
    r.get(*t, "ki", l.gains.ki);
    r.get(*t, "kd", l.gains.kd);
    r.get(*t, "integral_limit_as_s", l.integral_limit_as_s);
    r.get(*t, "tune", s.tune);
    r.get(*t, "grid_kp", s.grid.kp);
    r.get(*t, "grid_ki", s.grid.ki);
    r.get(*t, "grid_kd", s.grid.kd);
    r.get(*t, "tune_steps", s.grid.steps);
    l.wavelength_m = wl_nm * 1e-9;
    l.phase_noise_rad = noise_mrad * 1e-3;
    l.frame.carrier = l.frame.width > 0 ? cycles / l.frame.width : 0.0;
  }
  return sc;
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  return parse_scenario(text, path.string());
}

/// Resolved scenario as JSON; its FNV-1a hash identifies a configuration.
inline Json scenario_json(const Scenario& sc) {
  Json j;
  j["name"] = sc.name;
  j["seed"] = sc.seed;
  const auto& m = sc.molecule;
  j["molecule"] = {{"omega_e", m.omega_e}, {"omega_e_x_e", m.omega_e_x_e}, {"v_lo", m.v_lo}, {"v_hi", m.v_hi},
                   {"populations", m.populations}, {"probe_weights", m.probe_weights}};
  const auto& p = sc.pulse;
  j["pulse"] = {{"center_ev", p.center_ev}, {"fwhm_ev", p.fwhm_ev}, {"ionization_energy_cm1", p.ionization_energy_cm1},
                {"half_width_sigmas", p.half_width_sigmas}, {"points_per_fringe", p.points_per_fringe}};
  j["scan"] = {{"tau_xx", sc.scan.two_pulse_delays()},
               {"tau_ni", {sc.scan.tau_ni.start, sc.scan.tau_ni.stop, sc.scan.tau_ni.step}},
               {"dump_tau_xx", sc.scan.dump_tau_xx}};
  const auto& k = sc.probe.layout;
  j["probe"] = {{"first_center", k.first_center}, {"spacing", k.spacing}, {"width", k.width},
                {"static_center", k.static_band.center}, {"static_width", k.static_band.width},
                {"static_amplitude", k.static_band.amplitude}, {"beta2_base", sc.probe.beta2_base},
                {"beta2_modulation", sc.probe.beta2_modulation}, {"beta4_base", sc.probe.beta4_base},
                {"beta4_modulation", sc.probe.beta4_modulation}};
  j["vmi"] = {{"enabled", sc.vmi.enabled}, {"r_max", sc.vmi.r_max}, {"l_max", sc.vmi.l_max},
              {"exposure", sc.vmi.exposure}, {"counts_per_shot", sc.vmi.counts_per_shot},
              {"chord_points", sc.vmi.chord_points}};
  const auto& a = sc.analysis;
  Json pairs = Json::array();
  for (const auto& [v, vp] : a.pairs) pairs.push_back({v, vp});
  j["analysis"] = {{"pairs", pairs},
                   {"literature", a.literature},
                   {"window", a.window == Window::kHann ? "hann" : "rectangular"},
                   {"zero_pad", a.zero_pad},
                   {"band_bins", a.band_bins},
                   {"repeats", a.repeats},
                   {"scan_noise", a.scan_noise},
                   {"pixel_range", a.pixel_range ? Json{a.pixel_range->first, a.pixel_range->second} : Json(nullptr)},
                   {"tol_col2", a.tol_col2},
                   {"tol_col3", a.tol_col3}};
  const auto& l = sc.stabilize.loop;
  j["stabilize"] = {{"wavelength_nm", l.wavelength_m * 1e9},
                    {"rate_hz", l.rate_hz},
                    {"steps", l.steps},
                    {"settle_steps", l.settle_steps},
                    {"phase_noise_mrad", l.phase_noise_rad * 1e3},
                    {"snr_db", sc.stabilize.snr_db ? Json(*sc.stabilize.snr_db) : Json(nullptr)},
                    {"frame", {l.frame.width, l.frame.height, l.frame.carrier * l.frame.width, l.frame.contrast}},
                    {"drift", {l.drift.linear_as_per_s, l.drift.sine_amplitude_as, l.drift.sine_frequency_hz,
                               l.drift.random_walk_as_per_sqrt_s}},
                    {"gains", {l.gains.kp, l.gains.ki, l.gains.kd}},
                    {"integral_limit_as_s", l.integral_limit_as_s},
                    {"tune", sc.stabilize.tune},
                    {"grid", {sc.stabilize.grid.kp, sc.stabilize.grid.ki, sc.stabilize.grid.kd}},
                    {"tune_steps", sc.stabilize.grid.steps}};
  return j;
}

inline std::string scenario_hash(const Scenario& sc) { return hex64(fnv1a64(scenario_json(sc).dump())); }

/// Checks every precondition of the quantum → probe → vmi → analysis chain.
/// Errors are reported as ConfigError naming the offending section.
inline void validate_pipeline(const Scenario& sc) {
  auto fail = [](const std::string& what) { throw ConfigError(what); };
  try {
    const auto lv = make_levels(sc.molecule);
    const auto pulse = make_pulse(sc.pulse);
    pulse.validate();
    const auto grid = make_grid_spec(sc.pulse);
    if (!(grid.half_width_sigmas > 0.0) || !(grid.points_per_fringe >= 2.0))
      fail("pulse: half_width_sigmas must be > 0 and points_per_fringe >= 2");
    const double tail = std::exp(-0.5 * grid.half_width_sigmas * grid.half_width_sigmas);
    if (tail >= kTailTolerance)
      fail(fmt::format("pulse: half_width_sigmas = {} leaves tail amplitude {:.3g} (need < {:g})", grid.half_width_sigmas,
                       tail, kTailTolerance));

    const auto taus = sc.scan.two_pulse_delays();
    if (taus.empty()) fail("scan: no two-pulse delays");
    for (double t : taus)
      if (!(t >= 0.0)) fail(fmt::format("scan: negative two-pulse delay {}", t));
    const auto tau_ni = sc.scan.tau_ni.values();
    if (tau_ni.size() < 32) fail(fmt::format("scan: tau_ni has {} samples, FTPS needs >= 32", tau_ni.size()));
    double min_gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < lv.size(); ++i) min_gap = std::min(min_gap, lv[i].energy - lv[i - 1].energy);
    if (lv.size() > 1 && tau_ni.back() - tau_ni.front() < period_fs(min_gap))
      fail("scan: tau_ni does not cover one beat period");

    const auto& k = sc.probe.layout;
    if (!(k.width > 0.0) || !(k.spacing > 0.0)) fail("probe: kernel width and spacing must be positive");
    if (!(k.static_band.width > 0.0) || k.static_band.amplitude < 0.0) fail("probe: invalid static band");
    if (sc.probe.beta2_base < -1.0 || sc.probe.beta2_base > 2.0) fail("probe: beta2_base must be in [-1, 2]");

    if (sc.vmi.r_max < 4) fail("vmi: r_max must be >= 4");
    if (sc.vmi.l_max < 0 || sc.vmi.l_max > 8 || sc.vmi.l_max % 2) fail("vmi: l_max must be one of 0, 2, 4, 6, 8");
    if (sc.vmi.l_max < 4) fail("vmi: l_max must be >= 4 to carry beta4");
    if (!(sc.vmi.exposure > 0.0)) fail("vmi: exposure must be positive");
    if (!(sc.vmi.counts_per_shot > 0.0)) fail("vmi: counts_per_shot must be positive");
    if (k.first_center + k.spacing * static_cast<double>(lv.size() - 1) > sc.vmi.r_max)
      fail("probe: level kernels extend beyond vmi.r_max");

    const auto& a = sc.analysis;
    if (!a.literature.empty() && a.literature.size() != a.pairs.size())
      fail("analysis: literature must have one value per pair");
    if (a.zero_pad < 1) fail("analysis: zero_pad must be >= 1");
    if (a.band_bins < 0) fail("analysis: band_bins must be >= 0");
    if (a.repeats < 1) fail("analysis: repeats must be >= 1");
    if (a.scan_noise < 0.0) fail("analysis: scan_noise must be >= 0");
    if (a.pixel_range && !(a.pixel_range->second > a.pixel_range->first)) fail("analysis: empty pixel_range");
    if (!a.pairs.empty()) {
      if (taus.size() < 8) fail("analysis: oscillation fits need at least 8 two-pulse delays");
      detail::require_uniform(taus, "two-pulse delay");
      const double dt = tau_ni[1] - tau_ni[0];
      const double nyquist = 1.0 / (2.0 * kSpeedOfLightCmPerFs * dt);
      int n_fft = static_cast<int>(tau_ni.size()) * a.zero_pad;
      n_fft += n_fft % 2;
      const double step = 1.0 / (n_fft * dt * kSpeedOfLightCmPerFs);
      std::vector<double> expected;
      for (const auto& [v, vp] : a.pairs) {
        if (!lv.contains(v) || !lv.contains(vp))
          fail(fmt::format("analysis: pair ({}, {}) is outside the level window", v, vp));
        if (v == vp) fail("analysis: pair of identical levels");
        const double e = beat_energy(lv, v, vp);
        if (e + a.band_bins * step >= nyquist)
          fail(fmt::format("analysis: beat ({}, {}) at {:.1f} cm-1 is above Nyquist {:.1f}", v, vp, e, nyquist));
        for (double other : expected)
          if (std::abs(other - e) < (2 * a.band_bins + 1) * step)
            fail(fmt::format("analysis: beat band of ({}, {}) overlaps another pair", v, vp));
        expected.push_back(e);
      }
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

inline void validate_stabilize(const Scenario& sc) {
  try {
    const auto l = make_loop(sc.stabilize);
    if (!(l.frame.carrier > 0.0 && l.frame.carrier < 0.5)) throw ConfigError("stabilize: carrier outside (0, 0.5) cycles/pixel");
    if (l.frame.carrier * l.frame.width < 8.0) throw ConfigError("stabilize: need >= 8 carrier cycles across the frame");
    if (!(l.rate_hz > 0.0) || l.steps < 1 || l.settle_steps < 0) throw ConfigError("stabilize: invalid loop timing");
    if (!(l.wavelength_m > 0.0)) throw ConfigError("stabilize: wavelength must be positive");
    if (l.phase_noise_rad < 0.0 || l.drift.random_walk_as_per_sqrt_s < 0.0) throw ConfigError("stabilize: negative noise");
    if (!(l.integral_limit_as_s > 0.0)) throw ConfigError("stabilize: integral limit must be positive");
    PidController(l.gains, 1.0 / l.rate_hz, l.integral_limit_as_s);
    if (sc.stabilize.tune && (sc.stabilize.grid.kp.empty() || sc.stabilize.grid.ki.empty() || sc.stabilize.grid.kd.empty()))
      throw ConfigError("stabilize: empty gain grid");
    if (sc.stabilize.tune && sc.stabilize.grid.steps < 2) throw ConfigError("stabilize: tune_steps must be >= 2");
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("stabilize: ") + e.what());
  }
}

}  // namespace attobeat
