// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   attobeat_acceptance [--out DIR] [--threads N]

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "attobeat/attobeat.hpp"
#include "vmi_oracles.hpp"

using namespace attobeat;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::vector<double> values(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

// 1. Coherence vanishes at odd half periods and is full at whole periods.
Outcome coherence_zero_law() {
  const auto t0 = Clock::now();
  Scenario sc;
  sc.pulse.fwhm_ev = 3.0;
  const auto lv = make_levels(sc.molecule);
  const auto pulse = make_pulse(sc.pulse);
  const auto grid = make_grid_spec(sc.pulse);
  double worst_zero = 0.0, worst_max = 1.0;
  for (std::size_t p = 0; p < sc.analysis.pairs.size(); ++p) {
    const auto [v, vp] = sc.analysis.pairs[p];
    const double de = sc.analysis.literature[p];
    for (int n = 0; n <= 3; ++n) {
      const double zero = (2.0 * n + 1.0) / (2.0 * kSpeedOfLightCmPerFs * de);
      worst_zero = std::max(worst_zero, coherence(density_at(lv, pulse, zero, grid), v, vp));
      if (n == 0) continue;
      const double full = n / (kSpeedOfLightCmPerFs * de);
      worst_max = std::min(worst_max, coherence(density_at(lv, pulse, full, grid), v, vp));
    }
  }
  const double t = seconds_since(t0);
  return {worst_zero < 1e-3 && worst_max > 0.99 && t < 5.0,
          fmt::format("max g at zeros {:.2e} (< 1e-3), min g at maxima {:.5f} (> 0.99), {:.2f} s (< 5 s)", worst_zero,
                      worst_max, t)};
}

// 2. Beat contrast between the 29 fs and 45 fs two-pulse delays.
Outcome beat_contrast() {
  const auto t0 = Clock::now();
  const Scenario sc;
  const auto lv = make_levels(sc.molecule);
  const auto pulse = make_pulse(sc.pulse);
  const auto grid = make_grid_spec(sc.pulse);
  const auto tau_ni = sc.scan.tau_ni.values();
  const auto kernel = make_kernel(lv, pixel_grid(sc.vmi.r_max), sc.probe.layout);
  const auto nx = kernel.v_grid.size();
  const auto b2 = AnisotropyProfile::constant(nx, sc.probe.beta2_base, sc.probe.beta2_modulation);
  const auto b4 = AnisotropyProfile::constant(nx, sc.probe.beta4_base, sc.probe.beta4_modulation);
  const auto range = analysis_pixel_range(sc, lv.size());
  BeatBandOptions bopt;
  bopt.half_width_bins = sc.analysis.band_bins;
  bopt.pixel_range = range;
  const std::vector<LevelPair> pairs{{8, 9}, {8, 10}};
  const std::vector<double> expected{beat_energy(lv, 8, 9), beat_energy(lv, 8, 10)};

  std::vector<std::vector<double>> band;
  for (double tau_xx : {29.0, 45.0}) {
    auto scan = simulate_scan(density_at(lv, pulse, tau_xx, grid), kernel, tau_ni, b2, b4, tau_xx);
    scan.beta0 /= detail::static_norm(scan.beta0, scan.v_grid, kernel.static_band);
    const auto f = compute_ftps(scan, {sc.analysis.window, sc.analysis.zero_pad});
    std::vector<double> row;
    for (const auto& peak : extract_beats(f[0].integrated(range), f[0], pairs, expected, bopt)) row.push_back(peak.integral);
    band.push_back(row);
  }
  const double ratio = band[0][0] / band[1][0];
  const double agree = std::abs(band[0][1] - band[1][1]) / std::max(band[0][1], band[1][1]);
  const double t = seconds_since(t0);
  return {ratio >= 50.0 && agree <= 0.2 && t < 60.0,
          fmt::format("(8,9) 29/45 fs ratio {:.1f} (>= 50), (8,10) difference {:.1f}% (<= 20%), {:.1f} s (< 60 s)",
                      ratio, 100.0 * agree, t)};
}

std::string table_lines(const Table1Report& rep) {
  std::string s;
  for (const auto& r : rep.rows)
    s += fmt::format("\n       ({},{}) lit {:7.1f}  col2 {:7.1f} ± {:4.1f} [{}]  col3 {:7.1f} ± {:4.1f} [{}]", r.pair.first,
                     r.pair.second, r.literature, r.col2.value, r.col2.sigma, r.pass_col2 ? "ok" : "off",
                     r.col3.value, r.col3.sigma, r.pass_col3 ? "ok" : "off");
  return s;
}

// 3. Table 1 from the full pipeline: detector tier and the --skip-vmi tier.
Outcome table_closure(const fs::path& out, unsigned threads) {
  const Scenario sc;
  auto t0 = Clock::now();
  const auto fast = run_full_pipeline(sc, {out / "skip_vmi", threads, true, false});
  const double t_fast = seconds_since(t0);
  t0 = Clock::now();
  const auto full = run_full_pipeline(sc, {out / "run_a", threads, false, false});
  const double t_full = seconds_since(t0);
  const bool pass = fast.report.all_pass() && t_fast < 120.0 && full.report.all_pass() && t_full < 1800.0;
  return {pass, fmt::format("skip-vmi tier {} in {:.1f} s (< 120 s); detector tier {} in {:.1f} s (< 1800 s), "
                            "tolerances ±{:g}/±{:g} cm^-1{}",
                            fast.report.all_pass() ? "closes" : "misses", t_fast,
                            full.report.all_pass() ? "closes" : "misses", t_full, full.report.tol_col2,
                            full.report.tol_col3, table_lines(full.report))};
}

// 4. Populations and the beat-free β0 mean do not depend on the two-pulse delay.
Outcome population_invariance() {
  const Scenario sc;
  const auto lv = make_levels(sc.molecule);
  const auto pulse = make_pulse(sc.pulse);
  const auto grid = make_grid_spec(sc.pulse);
  const auto tau_ni = sc.scan.tau_ni.values();
  const auto kernel = make_kernel(lv, pixel_grid(sc.vmi.r_max), sc.probe.layout);
  std::vector<double> beats;
  for (std::size_t i = 0; i < lv.size(); ++i)
    for (std::size_t j = i + 1; j < lv.size(); ++j) beats.push_back(lv[j].energy - lv[i].energy);

  Eigen::VectorXd pop_ref;
  double mean_ref = 0.0, pop_dev = 0.0, mean_dev = 0.0;
  for (double tau_xx : sc.scan.two_pulse_delays()) {
    const auto rho = density_at(lv, pulse, tau_xx, grid);
    const Eigen::VectorXd pop = rho.populations();
    const Eigen::VectorXd total = simulate_beta0(rho, kernel, tau_ni).colwise().sum();
    const double m = beat_free_mean(tau_ni, values(total), beats);
    if (pop_ref.size() == 0) {
      pop_ref = pop;
      mean_ref = m;
    }
    pop_dev = std::max(pop_dev, ((pop - pop_ref).array().abs() / pop_ref.array()).maxCoeff());
    mean_dev = std::max(mean_dev, std::abs(m / mean_ref - 1.0));
  }
  return {pop_dev < 1e-6 && mean_dev < 1e-6,
          fmt::format("max relative change: populations {:.2e}, beat-free β0 mean {:.2e} (< 1e-6)", pop_dev, mean_dev)};
}

// 5. Abel operator: identity, noiseless round trip, Monte Carlo oracle, inversion time.
Outcome abel_suite() {
  using namespace oracle;
  const auto op = AbelOperator::build(110, 6);
  const double identity = op.identity_error();

  const auto a = shells(110, 6, {{35, 5, 1}, {70, 9, 0.6}}, {1.0, 0.8, 0.3, 0.1});
  const auto clean = render_image_scaled(standard_frame(110, 6), op.project(a), 1.0, {.noise = false});
  const ImageInverter inv(op, clean.width(), clean.height(), clean.center_x, clean.center_y);
  const auto back = inv.invert(clean);
  Eigen::VectorXd got(91 * 4), want(91 * 4);
  for (int l = 0; l <= 6; l += 2)
    for (int r = 10; r <= 100; ++r) {
      got(l / 2 * 91 + r - 10) = back.a.at(r, l);
      want(l / 2 * 91 + r - 10) = a.at(r, l);
    }
  const double round_trip = rel_rms(got, want);

  const double mc = monte_carlo_projection_error(10'000'000, 2024);

  const auto noisy = render_image(op.project(a), 40000.0, {.noise = true, .seed = 1});
  std::vector<double> ms;
  for (int k = 0; k < 7; ++k) {
    const auto t0 = Clock::now();
    inv.invert(noisy);
    ms.push_back(1e3 * seconds_since(t0));
  }
  std::nth_element(ms.begin(), ms.begin() + 3, ms.end());

  return {identity < 1e-8 && round_trip < 0.01 && mc < 0.02 && ms[3] < 50.0,
          fmt::format("identity {:.1e} (< 1e-8), round trip {:.3f}% (< 1%), Monte Carlo {:.2f}% (< 2%), "
                      "{}x{} inversion {:.1f} ms (< 50 ms)",
                      identity, 100.0 * round_trip, 100.0 * mc, noisy.width(), noisy.height(), ms[3])};
}

// 6. Three-level beat envelope collapses and revives at the difference frequency.
Outcome revival() {
  Scenario sc;
  sc.molecule.v_lo = 7;
  sc.molecule.v_hi = 9;
  const auto lv = make_levels(sc.molecule);
  const auto rho = density_at(lv, make_pulse(sc.pulse), 0.0, make_grid_spec(sc.pulse));
  const auto kernel = make_kernel(lv, pixel_grid(sc.vmi.r_max));
  const auto tau = UniformGrid{-50.0, 2400.0, 4.0}.values();
  const Eigen::VectorXd total = simulate_beta0(rho, kernel, tau).colwise().sum();
  const auto env = beat_envelope(tau, values(total), 1000.0, 1400.0);
  return {env.minima.size() >= 3 && std::abs(env.period - 251.9) <= 2.5,
          fmt::format("{} envelope minima, period {:.2f} fs (251.9 ± 2.5)", env.minima.size(), env.period)};
}

// 7. Fringe phase noise and the tuned stabilization loop.
Outcome stabilization(const fs::path& out, const fs::path& scenario_dir, unsigned threads) {
  FrameSpec s;
  s.noise = noise_for_snr_db(s, 20.0);
  double ss = 0.0;
  const int seeds = 100;
  for (int k = 0; k < seeds; ++k) {
    const double phi = 0.5;
    ss += std::pow(std::remainder(takeda_phase(make_frame(s, phi, static_cast<std::uint64_t>(k))) - phi, 2.0 * kPi), 2);
  }
  const double sigma = std::sqrt(ss / seeds);

  const auto sc = load_scenario(scenario_dir / "stabilize.toml");
  validate_stabilize(sc);
  const auto res = run_stabilize(sc, {out / "stabilize", threads, false, false});
  return {sigma < 5e-3 && res.loop.rms_as < 10.0,
          fmt::format("Takeda σ {:.2f} mrad at 20 dB (< 5 mrad), tuned loop {:.2f} as rms (< 10 as) "
                      "with kp={:g} ki={:g} kd={:g}",
                      1e3 * sigma, res.loop.rms_as, res.gains.kp, res.gains.ki, res.gains.kd)};
}

// 8. A second full-pipeline run reproduces every output file byte for byte.
Outcome determinism(const fs::path& out, unsigned threads) {
  const Scenario sc;
  run_full_pipeline(sc, {out / "run_b", threads, false, false});
  int compared = 0, differing = 0;
  std::string first_diff;
  for (const auto& e : fs::recursive_directory_iterator(out / "run_a")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), out / "run_a");
    const auto other = out / "run_b" / rel;
    ++compared;
    if (!fs::exists(other) || read_file(e.path()) != read_file(other)) {
      if (differing++ == 0) first_diff = rel.string();
    }
  }
  return {compared > 0 && differing == 0,
          differing == 0 ? fmt::format("{} files identical across two runs", compared)
                         : fmt::format("{} of {} files differ, first {}", differing, compared, first_diff)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"attobeat acceptance run"};
  fs::path out = fs::temp_directory_path() / fmt::format("attobeat_acceptance_{}", ::getpid());
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  fs::path scenario_dir = ATTOBEAT_SCENARIO_DIR;
  app.add_option("--out", out, "scratch directory for pipeline outputs");
  app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--scenarios", scenario_dir, "directory holding stabilize.toml");
  CLI11_PARSE(app, argc, argv);
  fs::remove_all(out);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"coherence zero law", coherence_zero_law},
      {"beat contrast 29 vs 45 fs", beat_contrast},
      {"Table 1 closure", [&] { return table_closure(out, threads); }},
      {"population invariance", population_invariance},
      {"Abel suite", abel_suite},
      {"dephasing and revival", revival},
      {"stabilization", [&] { return stabilization(out, scenario_dir, threads); }},
      {"determinism", [&] { return determinism(out, threads); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, fmt::format("error: {}", e.what())};
    }
    failed += o.pass ? 0 : 1;
    std::cout << fmt::format("[{}] {}. {}: {} ({:.1f} s)", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail,
                             seconds_since(t0))
              << std::endl;
  }
  std::cout << fmt::format("{} of {} criteria pass", criteria.size() - static_cast<std::size_t>(failed), criteria.size())
            << std::endl;
  return failed == 0 ? 0 : 1;
}
