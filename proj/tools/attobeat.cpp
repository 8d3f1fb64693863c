// attobeat: scenario-driven command-line front end.
//
//   attobeat coherence-scan --config scenarios/default.toml --out out/coh
//   attobeat full-pipeline  --config scenarios/default.toml --out out/run [--skip-vmi]
//   attobeat invert frame*.pgm --r-max 110 --l-max 6 --out out/inv [--keep-going]
//   attobeat stabilize-sim  --config scenarios/stabilize.toml --out out/stab
//
// Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "attobeat/attobeat.hpp"

namespace {

using namespace attobeat;

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
};

void add_common(CLI::App* cmd, Common& c, bool with_config = true) {
  if (with_config) cmd->add_option("--config", c.config, "Scenario file (TOML); built-in defaults when omitted");
  cmd->add_option("--out", c.out, "Output directory (overrides output_dir)");
  cmd->add_option("--seed", c.seed, "Master seed (overrides the scenario seed)");
  cmd->add_option("--threads", c.threads, "Worker threads; 0 = hardware concurrency")->capture_default_str();
}

Scenario resolve(const Common& c) {
  Scenario sc = c.config.empty() ? Scenario{} : load_scenario(c.config);
  if (c.seed) sc.seed = *c.seed;
  if (!c.out.empty()) sc.output_dir = c.out;
  return sc;
}

RunOptions run_options(const Scenario& sc, const Common& c) {
  RunOptions o;
  o.out_dir = sc.output_dir;
  o.threads = c.threads;
  return o;
}

int cmd_coherence(const Common& c) {
  const auto sc = resolve(c);
  validate_pipeline(sc);
  const auto res = run_coherence_scan(sc, run_options(sc, c));
  fmt::print("coherence-scan: {} delays, {} pairs -> {}\n", res.scan.rows.size(), res.scan.pairs.size(), sc.output_dir);
  for (std::size_t p = 0; p < res.scan.pairs.size(); ++p) {
    std::string z;
    for (double t : res.zeros[p]) z += fmt::format(" {:.3f}", t);
    fmt::print("  ({},{}) zeros [fs]:{}\n", res.scan.pairs[p].first, res.scan.pairs[p].second, z.empty() ? " none" : z);
  }
  return 0;
}

int cmd_pipeline(const Common& c, bool skip_vmi) {
  const auto sc = resolve(c);
  validate_pipeline(sc);
  auto opt = run_options(sc, c);
  opt.skip_vmi = skip_vmi;
  const auto res = run_full_pipeline(sc, opt);
  fmt::print("full-pipeline: {} -> {}\n", sc.vmi.enabled && !skip_vmi ? "with VMI" : "exact beta scans",
             sc.output_dir);
  fmt::print("  {:<5} {:>8} {:>16} {:>16} {:>10}\n", "pair", "", "col2 [cm-1]", "col3 [cm-1]", "lit");
  for (const auto& r : res.report.rows)
    fmt::print("  {:<5} ({:>2},{:>2}) {:>9.1f} ± {:<4.1f} {:>9.1f} ± {:<4.1f} {:>10.1f}  {}\n", r.label, r.pair.first,
               r.pair.second, r.col2.value, r.col2.sigma, r.col3.value, r.col3.sigma, r.literature,
               r.pass_col2 && r.pass_col3 ? "pass" : "FAIL");
  return 0;
}

int cmd_invert(const Common& c, const std::vector<std::string>& files, int r_max, int l_max, const std::string& side,
               bool keep_going) {
  RunOptions o;
  o.out_dir = c.out.empty() ? "out" : c.out;
  o.threads = c.threads;
  o.keep_going = keep_going;
  const ImageSide s = side == "left" ? ImageSide::kLeft : side == "right" ? ImageSide::kRight : ImageSide::kBoth;
  std::vector<fs::path> paths(files.begin(), files.end());
  const auto sum = run_invert(paths, r_max, l_max, s, o);
  fmt::print("invert: {} processed, {} failed -> {}\n", sum.processed, sum.failed, o.out_dir.string());
  for (const auto& [f, e] : sum.errors) fmt::print(stderr, "  {}: {}\n", f, e);
  return sum.failed > 0 ? 2 : 0;
}

int cmd_stabilize(const Common& c) {
  const auto sc = resolve(c);
  validate_stabilize(sc);
  const auto res = run_stabilize(sc, run_options(sc, c));
  fmt::print("stabilize-sim: rms {:.3f} as, p95 {:.3f} as (kp={}, ki={} 1/s, kd={} s) -> {}\n", res.loop.rms_as,
             res.loop.p95_as, res.gains.kp, res.gains.ki, res.gains.kd, sc.output_dir);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"attobeat: two-pulse entanglement control, quantum-beat analysis and delay stabilization"};
  app.require_subcommand(1);

  Common coh, full, inv, stab;
  auto* c_coh = app.add_subcommand("coherence-scan", "Coherence, purity and entropy versus two-pulse delay");
  add_common(c_coh, coh);

  bool skip_vmi = false;
  auto* c_full = app.add_subcommand("full-pipeline", "quantum -> probe -> vmi -> analysis, with Table-1 report");
  add_common(c_full, full);
  c_full->add_flag("--skip-vmi", skip_vmi, "Analyse exact beta scans without image synthesis and inversion");

  std::vector<std::string> files;
  int r_max = 110, l_max = 6;
  std::string side = "both";
  bool keep_going = false;
  auto* c_inv = app.add_subcommand("invert", "Abel-invert PGM frames to Legendre coefficient CSVs");
  add_common(c_inv, inv, false);
  c_inv->add_option("files", files, "PGM frames (P5); a .pgm.json sidecar supplies center and scale")->required();
  c_inv->add_option("--r-max", r_max, "Radius of the basis in pixels")->capture_default_str();
  c_inv->add_option("--l-max", l_max, "Highest even Legendre order")->capture_default_str();
  c_inv->add_option("--side", side, "Image half to fit")->check(CLI::IsMember({"both", "left", "right"}))->capture_default_str();
  c_inv->add_flag("--keep-going", keep_going, "Continue past unreadable frames");

  auto* c_stab = app.add_subcommand("stabilize-sim", "Closed-loop delay stabilization simulation");
  add_common(c_stab, stab);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*c_coh) return cmd_coherence(coh);
    if (*c_full) return cmd_pipeline(full, skip_vmi);
    if (*c_inv) return cmd_invert(inv, files, r_max, l_max, side, keep_going);
    if (*c_stab) return cmd_stabilize(stab);
  } catch (const ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return 2;
  } catch (const InvalidInput& e) {
    fmt::print(stderr, "invalid input: {}\n", e.what());
    return 2;
  } catch (const NumericalFailure& e) {
    fmt::print(stderr, "numerical failure: {}\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 3;
  }
  return 0;
}
