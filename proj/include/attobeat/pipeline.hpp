#pragma once

// End-to-end runs behind the command-line tool. Each run writes its artifacts
// under one output directory and finishes with manifest.json listing every
// file with its FNV-1a hash, the scenario hash and the seed.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "attobeat/analysis.hpp"
#include "attobeat/error.hpp"
#include "attobeat/io.hpp"
#include "attobeat/molecule.hpp"
#include "attobeat/optics.hpp"
#include "attobeat/parallel.hpp"
#include "attobeat/probe.hpp"
#include "attobeat/quantum.hpp"
#include "attobeat/rng.hpp"
#include "attobeat/scenario.hpp"
#include "attobeat/stab.hpp"
#include "attobeat/vmi.hpp"

namespace attobeat {

struct RunOptions {
  fs::path out_dir = "out";
  unsigned threads = 1;
  bool skip_vmi = false;
  bool keep_going = false;
};

/// Serialized writer for one run's artifacts.
class ArtifactWriter {
 public:
  explicit ArtifactWriter(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

  void write(const std::string& rel, std::string_view content) {
    write_file(root_ / rel, content);
    files_.emplace_back(rel, hex64(fnv1a64(content)));
  }

  void write_json(const std::string& rel, const Json& j) { write(rel, j.dump(2) + "\n"); }

  /// Records a file written by someone else (e.g. a PGM and its sidecar).
  void record(const std::string& rel) { files_.emplace_back(rel, hex64(fnv1a64(read_file(root_ / rel)))); }

  const fs::path& root() const { return root_; }

  std::string listing() const {
    std::string s;
    for (const auto& f : files_) s += (s.empty() ? "" : ", ") + f.first;
    return s.empty() ? "(none)" : s;
  }

  void write_manifest(const std::string& command, const Scenario& sc, const Json& extra = Json::object()) {
    Json m;
    m["command"] = command;
    m["scenario"] = sc.name;
    m["scenario_hash"] = scenario_hash(sc);
    m["seed"] = sc.seed;
    m["config"] = scenario_json(sc);
    for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
    Json files = Json::array();
    for (const auto& [rel, h] : files_) files.push_back({{"path", rel}, {"fnv1a64", h}});
    m["artifacts"] = files;
    write_file(root_ / "manifest.json", m.dump(2) + "\n");
  }

 private:
  fs::path root_;
  std::vector<std::pair<std::string, std::string>> files_;
};

namespace detail {

// Runs `fn` as the named stage; failures are rethrown with the stage name and
// the artifacts written so far, keeping the error category.
template <class Fn>
auto stage(const char* name, const ArtifactWriter& w, Fn&& fn) -> decltype(fn()) {
  auto wrap = [&](const std::exception& e) {
    return fmt::format("stage '{}' failed: {} [artifacts so far in {}: {}]", name, e.what(), w.root().string(),
                       w.listing());
  };
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(wrap(e));
  } catch (const InvalidInput& e) {
    throw InvalidInput(wrap(e));
  } catch (const NumericalFailure& e) {
    throw NumericalFailure(wrap(e));
  }
}

inline std::string tau_tag(double tau) { return fmt::format("{:g}", tau); }

inline std::string pair_tag(const LevelPair& p) { return fmt::format("{}_{}", p.first, p.second); }

}  // namespace detail

// ---------------------------------------------------------------------------
// coherence-scan

struct CoherenceResult {
  CoherenceScan scan;
  std::vector<std::vector<double>> zeros;  // per pair
};

inline CoherenceResult run_coherence_scan(const Scenario& sc, const RunOptions& opt) {
  const auto lv = make_levels(sc.molecule);
  const auto pulse = make_pulse(sc.pulse);
  const auto grid = make_grid_spec(sc.pulse);
  const auto taus = sc.scan.two_pulse_delays();
  ArtifactWriter w(opt.out_dir);
  CoherenceResult res;
  res.scan = detail::stage("quantum", w, [&] {
    return coherence_scan(lv, pulse, taus, sc.analysis.pairs, grid, opt.threads);
  });
  for (std::size_t p = 0; p < res.scan.pairs.size(); ++p)
    res.zeros.push_back(detail::stage("zeros", w, [&] { return coherence_zeros(lv, pulse, res.scan, p, grid); }));

  std::vector<std::string> header{"tau_xx_fs"};
  for (const auto& pr : res.scan.pairs) header.push_back("g_" + detail::pair_tag(pr));
  for (const auto& pr : res.scan.pairs) header.push_back("signed_g_" + detail::pair_tag(pr));
  for (const auto& l : lv.levels()) header.push_back(fmt::format("pop_{}", l.v));
  header.insert(header.end(), {"purity", "entropy_nats"});
  CsvTable t(header);
  for (const auto& row : res.scan.rows) {
    std::vector<double> cells{row.tau_xx};
    cells.insert(cells.end(), row.g.begin(), row.g.end());
    cells.insert(cells.end(), row.signed_g.begin(), row.signed_g.end());
    cells.insert(cells.end(), row.populations.begin(), row.populations.end());
    cells.push_back(row.purity);
    cells.push_back(row.entropy);
    t.row(cells);
  }
  w.write("coherence.csv", t.str());
  w.write("levels.csv", levels_csv(lv));

  Json j;
  j["pulse_sigma_cm1"] = pulse.sigma;
  j["pairs"] = Json::array();
  for (std::size_t p = 0; p < res.scan.pairs.size(); ++p) {
    const auto& pr = res.scan.pairs[p];
    const double de = beat_energy(lv, pr.first, pr.second);
    j["pairs"].push_back({{"v", pr.first},
                          {"vp", pr.second},
                          {"delta_e_cm1", de},
                          {"period_fs", period_fs(de)},
                          {"zeros_fs", res.zeros[p]}});
  }
  w.write_json("coherence.json", j);
  w.write_manifest("coherence-scan", sc);
  return res;
}

// ---------------------------------------------------------------------------
// full-pipeline

namespace detail {

constexpr std::array<const char*, 3> kOrderNames{"beta0", "beta2", "beta4"};

// Everything a (τ_xx, repeat) unit hands back to the reducer.
struct UnitResult {
  std::array<std::vector<double>, 3> band;  // per order, per pair
  Eigen::VectorXd beta0_spectrum;           // pixel-integrated β0 FTPS
  // Filled for dumped delays on repeat 0 only.
  std::optional<BetaScan> observed;
  std::optional<std::array<FTPS, 3>> ftps;
  std::optional<VMIImage> frame;
};

inline double static_norm(const Eigen::MatrixXd& beta0, std::span<const double> v_grid, const StaticBand& band) {
  if (band.amplitude == 0.0) return 1.0;
  double s = 0.0;
  for (std::size_t i = 0; i < v_grid.size(); ++i)
    if (std::abs(v_grid[i] - band.center) <= band.width) s += beta0.row(static_cast<Eigen::Index>(i)).mean();
  return s > 0.0 ? s : 1.0;
}

// Frame-by-frame synthesis and inversion of one scan. The same counts-per-unit
// scale is used for every delay so β0 keeps its delay dependence.
inline BetaScan observe_through_vmi(const BetaScan& exact, const AbelOperator& op, const PixelBasis& basis,
                                    const ImageInverter& inv, const Eigen::VectorXd& pixel_sums, double exposure,
                                    std::uint64_t seed, std::uint64_t ixx, std::uint64_t rep,
                                    std::optional<VMIImage>* keep_frame) {
  const int R = op.r_max();
  const auto nt = static_cast<Eigen::Index>(exact.tau_ni.size());
  std::vector<LegendreDist2D> bs;
  bs.reserve(static_cast<std::size_t>(nt));
  double total = 0.0;
  for (Eigen::Index j = 0; j < nt; ++j) {
    LegendreDist3D a(R, op.l_max());
    for (int r = 1; r <= R; ++r) {
      const double b0 = exact.beta0(r - 1, j);
      a.at(r, 0) = b0;
      a.at(r, 2) = exact.beta2(r - 1, j) * b0;
      a.at(r, 4) = exact.beta4(r - 1, j) * b0;
    }
    bs.push_back(op.project(a));
    total += pixel_sums.dot(bs.back().flatten());
  }
  if (!(total > 0.0)) throw NumericalFailure("vmi: projected frames carry no intensity");
  const double cpu = exposure / (total / static_cast<double>(nt));

  BetaScan out = exact;
  for (Eigen::Index j = 0; j < nt; ++j) {
    RenderOptions ro{true, derive_seed(seed, Stream::kVmiFrame, {ixx, rep, static_cast<std::uint64_t>(j)})};
    auto img = render_image_scaled(basis, bs[static_cast<std::size_t>(j)], cpu, ro);
    const auto res = inv.invert(img, false);
    for (int r = 1; r <= R; ++r) {
      const auto i = static_cast<std::size_t>(r - 1);
      out.beta0(r - 1, j) = res.a.at(r, 0);
      out.beta2(r - 1, j) = res.beta2[i];
      out.beta4(r - 1, j) = res.beta4[i];
    }
    if (keep_frame && j == nt / 2) *keep_frame = std::move(img);
  }
  return out;
}

inline Eigen::VectorXd basis_pixel_sums(const PixelBasis& basis) {
  const int R = basis.r_max();
  const int L = basis.l_max() / 2 + 1;
  Eigen::VectorXd s = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(R) * L);
  for (const auto& p : basis.pixels())
    for (int a = 0; a < L; ++a) {
      const double pl = p.legendre[static_cast<std::size_t>(a)];
      for (const auto& [node, w] : p.weights(a, R)) s(static_cast<Eigen::Index>(a) * R + node - 1) += w * pl;
    }
  return s;
}

}  // namespace detail

struct PipelineResult {
  Table1Report report;
  std::vector<double> tau_xx;
  // tracks[order][pair][repeat][τ_xx]
  std::array<std::vector<std::vector<std::vector<double>>>, 3> tracks;
  std::array<std::vector<std::vector<SinusoidFit>>, 3> fits;  // [order][pair][repeat]
};

inline PipelineResult run_full_pipeline(const Scenario& sc, const RunOptions& opt) {
  ArtifactWriter w(opt.out_dir);
  const auto lv = make_levels(sc.molecule);
  const auto pulse = make_pulse(sc.pulse);
  const auto grid = make_grid_spec(sc.pulse);
  const auto taus = sc.scan.two_pulse_delays();
  const auto tau_ni = sc.scan.tau_ni.values();
  const auto& pairs = sc.analysis.pairs;
  const bool use_vmi = sc.vmi.enabled && !opt.skip_vmi;
  const int repeats = sc.analysis.repeats;
  const auto n_xx = taus.size();
  const auto n_pairs = pairs.size();

  w.write("levels.csv", levels_csv(lv));

  // quantum
  std::vector<IonDensityMatrix> rho(n_xx);
  detail::stage("quantum", w, [&] {
    parallel_for(n_xx, opt.threads, [&](std::size_t i) { rho[i] = density_at(lv, pulse, taus[i], grid); });
  });
  {
    std::vector<std::string> header{"tau_xx_fs"};
    for (const auto& pr : pairs) header.push_back("g_" + detail::pair_tag(pr));
    for (const auto& l : lv.levels()) header.push_back(fmt::format("pop_{}", l.v));
    header.insert(header.end(), {"purity", "entropy_nats"});
    CsvTable t(header);
    for (std::size_t i = 0; i < n_xx; ++i) {
      std::vector<double> row{taus[i]};
      for (const auto& [v, vp] : pairs) row.push_back(coherence(rho[i], v, vp));
      const Eigen::VectorXd pop = rho[i].populations();
      row.insert(row.end(), pop.data(), pop.data() + pop.size());
      row.push_back(purity(rho[i]));
      row.push_back(entropy(rho[i]));
      t.row(row);
    }
    w.write("coherence.csv", t.str());
  }

  // probe setup
  const auto kernel = detail::stage("probe", w, [&] { return make_kernel(lv, pixel_grid(sc.vmi.r_max), sc.probe.layout); });
  const std::size_t nx = kernel.v_grid.size();
  const auto b2 = AnisotropyProfile::constant(nx, sc.probe.beta2_base, sc.probe.beta2_modulation);
  const auto b4 = AnisotropyProfile::constant(nx, sc.probe.beta4_base, sc.probe.beta4_modulation);

  // vmi setup
  std::optional<AbelOperator> op;
  std::optional<PixelBasis> basis;
  std::optional<ImageInverter> inverter;
  Eigen::VectorXd pixel_sums;
  if (use_vmi) {
    detail::stage("vmi", w, [&] {
      op = AbelOperator::build(sc.vmi.r_max, sc.vmi.l_max, sc.vmi.chord_points);
      basis = standard_frame(sc.vmi.r_max, sc.vmi.l_max);
      inverter.emplace(*op, basis->width(), basis->height(), basis->center_x(), basis->center_y());
      pixel_sums = detail::basis_pixel_sums(*basis);
    });
  }

  std::vector<double> expected;
  for (const auto& [v, vp] : pairs) expected.push_back(beat_energy(lv, v, vp));
  const auto range = analysis_pixel_range(sc, lv.size());
  const FtpsOptions fopt{sc.analysis.window, sc.analysis.zero_pad};
  BeatBandOptions bopt;
  bopt.half_width_bins = sc.analysis.band_bins;
  bopt.pixel_range = range;
  auto is_dumped = [&](double tau) {
    return std::any_of(sc.scan.dump_tau_xx.begin(), sc.scan.dump_tau_xx.end(),
                       [&](double d) { return std::abs(d - tau) < 1e-9; });
  };

  // One simulated scan: exact β maps, detector or scan noise, FTPS, band integrals.
  // `seed_index` keys the noise streams; off-grid dump delays use indices past the grid.
  auto run_unit = [&](const IonDensityMatrix& r, double tau_xx, std::uint64_t seed_index, std::uint64_t rep, bool dump,
                      detail::UnitResult& out) {
    const BetaScan exact = simulate_scan(r, kernel, tau_ni, b2, b4, tau_xx);
    BetaScan seen;
    if (use_vmi) {
      seen = detail::observe_through_vmi(exact, *op, *basis, *inverter, pixel_sums, sc.vmi.expected_counts(), sc.seed,
                                         seed_index, rep, dump ? &out.frame : nullptr);
    } else {
      seen = exact;
      if (sc.analysis.scan_noise > 0.0) {
        auto rng = make_rng(sc.seed, Stream::kScanNoise, {seed_index, rep});
        std::normal_distribution<double> g(0.0, sc.analysis.scan_noise);
        for (auto* m : {&seen.beta0, &seen.beta2, &seen.beta4})
          for (Eigen::Index k = 0; k < m->size(); ++k) m->data()[k] *= 1.0 + g(rng);
      }
    }
    seen.beta0 /= detail::static_norm(seen.beta0, seen.v_grid, kernel.static_band);
    auto f = compute_ftps(seen, fopt);
    for (std::size_t o = 0; o < 3; ++o) {
      const auto peaks = extract_beats(f[o].integrated(range), f[o], pairs, expected, bopt);
      for (const auto& p : peaks) out.band[o].push_back(p.integral);
    }
    out.beta0_spectrum = f[0].integrated(range);
    if (dump) {
      out.observed = std::move(seen);
      out.ftps = std::move(f);
    }
  };

  // Per (τ_xx, repeat) units, reduced in index order afterwards.
  std::vector<detail::UnitResult> units(n_xx * static_cast<std::size_t>(repeats));
  detail::stage(use_vmi ? "vmi+analysis" : "probe+analysis", w, [&] {
    parallel_for(units.size(), opt.threads, [&](std::size_t u) {
      const std::size_t ixx = u / static_cast<std::size_t>(repeats);
      const auto rep = static_cast<std::uint64_t>(u % static_cast<std::size_t>(repeats));
      run_unit(rho[ixx], taus[ixx], ixx, rep, rep == 0 && is_dumped(taus[ixx]), units[u]);
    });
  });

  // Dump delays that are not on the τ_xx grid get a single extra scan for the
  // figure outputs; they do not enter Table 1.
  std::vector<double> extra_taus;
  auto listed = [](const std::vector<double>& list, double d) {
    return std::any_of(list.begin(), list.end(), [&](double t) { return std::abs(t - d) < 1e-9; });
  };
  for (double d : sc.scan.dump_tau_xx)
    if (!listed(taus, d) && !listed(extra_taus, d)) extra_taus.push_back(d);
  std::vector<detail::UnitResult> extra_units(extra_taus.size());
  detail::stage("dump", w, [&] {
    parallel_for(extra_taus.size(), opt.threads, [&](std::size_t k) {
      const auto r = density_at(lv, pulse, extra_taus[k], grid);
      run_unit(r, extra_taus[k], n_xx + k, 0, true, extra_units[k]);
    });
  });

  PipelineResult res;
  res.tau_xx = taus;
  const FTPS axis = compute_ftps(Eigen::MatrixXd::Zero(1, static_cast<Eigen::Index>(tau_ni.size())), tau_ni,
                                 std::vector<double>{1.0}, fopt);

  // analysis: oscillation fits per order, pair and repeat
  detail::stage("analysis", w, [&] {
    for (std::size_t o = 0; o < 3; ++o) {
      res.tracks[o].assign(n_pairs, std::vector<std::vector<double>>(static_cast<std::size_t>(repeats), std::vector<double>(n_xx)));
      res.fits[o].assign(n_pairs, std::vector<SinusoidFit>(static_cast<std::size_t>(repeats)));
      for (std::size_t p = 0; p < n_pairs; ++p)
        for (std::size_t r = 0; r < static_cast<std::size_t>(repeats); ++r)
          for (std::size_t i = 0; i < n_xx; ++i)
            res.tracks[o][p][r][i] = units[i * static_cast<std::size_t>(repeats) + r].band[o][p];
    }
    if (n_pairs > 0) {
      parallel_for(3 * n_pairs * static_cast<std::size_t>(repeats), opt.threads, [&](std::size_t k) {
        const std::size_t o = k / (n_pairs * static_cast<std::size_t>(repeats));
        const std::size_t p = (k / static_cast<std::size_t>(repeats)) % n_pairs;
        const std::size_t r = k % static_cast<std::size_t>(repeats);
        res.fits[o][p][r] = fit_beat_oscillation(taus, res.tracks[o][p][r]);
      });
    }
  });

  // Table 1
  std::vector<PairResult> rows;
  Json fits_json = Json::array();
  for (std::size_t p = 0; p < n_pairs; ++p) {
    PairResult pr;
    pr.pair = pairs[p];
    pr.literature = sc.analysis.literature.empty() ? expected[p] : sc.analysis.literature[p];
    std::vector<Estimate> per_order;
    Json pj;
    pj["v"] = pairs[p].first;
    pj["vp"] = pairs[p].second;
    for (std::size_t o = 0; o < 3; ++o) {
      std::vector<Estimate> reps;
      Json oj = Json::array();
      for (const auto& f : res.fits[o][p]) {
        reps.push_back({f.delta_e, f.delta_e_sigma, f.converged && f.identifiable});
        oj.push_back({{"converged", f.converged},
                      {"identifiable", f.identifiable},
                      {"period_fs", f.period},
                      {"period_sigma_fs", f.period_sigma},
                      {"phase_rad", f.phase},
                      {"offset", f.offset},
                      {"amplitude", f.amplitude},
                      {"delta_e_cm1", f.delta_e},
                      {"delta_e_sigma_cm1", f.delta_e_sigma},
                      {"diagnostic", f.diagnostic}});
      }
      per_order.push_back(summarize_repeats(reps));
      pj[detail::kOrderNames[o]] = {{"repeats", oj}, {"summary", estimate_json(per_order.back())}};
    }
    try {
      const auto c = combine_orders(per_order);
      pr.col3 = {c.value, c.sigma, true};
    } catch (const NumericalFailure&) {
      pr.col3 = {};
    }
    pj["combined"] = estimate_json(pr.col3);

    std::vector<Estimate> cents;
    for (int r = 0; r < repeats; ++r) {
      Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(axis.freq.size()));
      for (std::size_t i = 0; i < n_xx; ++i) sum += units[i * static_cast<std::size_t>(repeats) + static_cast<std::size_t>(r)].beta0_spectrum;
      const std::array<LevelPair, 1> one{pairs[p]};
      const std::array<double, 1> e{expected[p]};
      const auto peak = extract_beats(sum, axis, one, e, bopt).front();
      cents.push_back({peak.centroid, 0.0, peak.has_signal});
    }
    pr.col2 = summarize_repeats(cents);
    pj["col2_centroid"] = estimate_json(pr.col2);
    rows.push_back(pr);
    fits_json.push_back(pj);
  }
  res.report = table1_report(rows, sc.analysis.tol_col2, sc.analysis.tol_col3);

  // artifacts
  detail::stage("report", w, [&] {
    std::vector<const detail::UnitResult*> dumped;
    for (const auto& u : units)
      if (u.observed) dumped.push_back(&u);
    for (const auto& u : extra_units) dumped.push_back(&u);
    std::sort(dumped.begin(), dumped.end(),
              [](const auto* x, const auto* y) { return x->observed->tau_xx < y->observed->tau_xx; });
    for (const auto* up : dumped) {
      const auto& u = *up;
      const auto& s = *u.observed;
      const std::string tag = detail::tau_tag(s.tau_xx);
      const std::array<const Eigen::MatrixXd*, 3> maps{&s.beta0, &s.beta2, &s.beta4};
      for (std::size_t o = 0; o < 3; ++o) {
        const auto& f = (*u.ftps)[o];
        w.write(fmt::format("fig2/{}_tau{}.csv", detail::kOrderNames[o], tag),
                matrix_csv(*maps[o], "v_px\\tau_ni_fs", s.v_grid, s.tau_ni));
        w.write(fmt::format("fig2/ftps_{}_tau{}.csv", detail::kOrderNames[o], tag),
                matrix_csv(f.power, "v_px\\freq_cm1", f.v_grid, f.freq));
        CsvTable t({"freq_cm1", "power"});
        const Eigen::VectorXd integ = f.integrated(range);
        for (std::size_t k = 0; k < f.freq.size(); ++k) t.row(std::vector<double>{f.freq[k], integ(static_cast<Eigen::Index>(k))});
        w.write(fmt::format("fig2/ftps_{}_integrated_tau{}.csv", detail::kOrderNames[o], tag), t.str());
      }
      if (u.frame) {
        const std::string rel = fmt::format("fig1/frame_tau{}.pgm", tag);
        write_frame(w.root() / rel, *u.frame);
        w.record(rel);
        w.record(rel + ".json");
      }
    }

    std::vector<std::string> header{"tau_xx_fs"};
    for (const auto& pr : pairs)
      for (const char* o : detail::kOrderNames) {
        header.push_back(fmt::format("{}_{}_mean", o, detail::pair_tag(pr)));
        header.push_back(fmt::format("{}_{}_sem", o, detail::pair_tag(pr)));
      }
    CsvTable t(header);
    for (std::size_t i = 0; i < n_xx; ++i) {
      std::vector<double> row{taus[i]};
      for (std::size_t p = 0; p < n_pairs; ++p)
        for (std::size_t o = 0; o < 3; ++o) {
          std::vector<Estimate> vals;
          for (int r = 0; r < repeats; ++r) vals.push_back({res.tracks[o][p][static_cast<std::size_t>(r)][i], 0.0, true});
          const auto s = summarize_repeats(vals);
          row.push_back(s.value);
          row.push_back(s.sigma);
        }
      t.row(row);
    }
    w.write("fig3/tracks.csv", t.str());
    w.write_json("fig3/fits.json", fits_json);
    w.write_json("table1.json", table1_json(res.report));
    w.write("table1.csv", table1_csv(res.report));
  });

  Json extra;
  extra["vmi"] = use_vmi;
  if (op) extra["abel_condition_number"] = op->condition_number();
  extra["analysis_pixel_range"] = {range.first, range.second};
  w.write_manifest("full-pipeline", sc, extra);
  return res;
}

// ---------------------------------------------------------------------------
// invert

struct InvertSummary {
  int processed = 0;
  int failed = 0;
  std::vector<std::pair<std::string, std::string>> errors;  // file, message
};

inline InvertSummary run_invert(const std::vector<fs::path>& files, int r_max, int l_max, ImageSide side,
                                const RunOptions& opt) {
  if (files.empty()) throw ConfigError("invert: no input files");
  ArtifactWriter w(opt.out_dir);
  const auto op = detail::stage("vmi", w, [&] { return AbelOperator::build(r_max, l_max); });
  std::map<std::array<double, 4>, std::shared_ptr<const ImageInverter>> cache;
  std::mutex cache_mutex;
  std::vector<std::optional<std::string>> csv(files.size());
  std::vector<std::string> err(files.size());
  parallel_for(files.size(), opt.threads, [&](std::size_t i) {
    try {
      const auto img = read_frame(files[i]);
      const std::array<double, 4> key{double(img.width()), double(img.height()), img.center_x, img.center_y};
      std::shared_ptr<const ImageInverter> inv;
      {
        std::lock_guard lock(cache_mutex);
        auto it = cache.find(key);
        if (it == cache.end())
          it = cache.emplace(key, std::make_shared<ImageInverter>(op, img.width(), img.height(), img.center_x,
                                                                  img.center_y, side)).first;
        inv = it->second;
      }
      csv[i] = coefficients_csv(inv->invert(img, true));
    } catch (const Error& e) {
      err[i] = e.what();
    } catch (const std::exception& e) {
      err[i] = e.what();
    }
  });

  InvertSummary s;
  Json j = Json::array();
  for (std::size_t i = 0; i < files.size(); ++i) {
    const std::string stem = files[i].stem().string();
    if (csv[i]) {
      w.write(fmt::format("{}_coeffs.csv", stem), *csv[i]);
      ++s.processed;
      j.push_back({{"file", files[i].string()}, {"ok", true}, {"output", stem + "_coeffs.csv"}});
    } else {
      ++s.failed;
      s.errors.emplace_back(files[i].string(), err[i]);
      j.push_back({{"file", files[i].string()}, {"ok", false}, {"error", err[i]}});
      if (!opt.keep_going) break;
    }
  }
  Json summary;
  summary["r_max"] = r_max;
  summary["l_max"] = l_max;
  summary["side"] = side == ImageSide::kBoth ? "both" : side == ImageSide::kLeft ? "left" : "right";
  summary["condition_number"] = op.condition_number();
  summary["processed"] = s.processed;
  summary["failed"] = s.failed;
  summary["files"] = j;
  w.write_json("invert_summary.json", summary);
  return s;
}

// ---------------------------------------------------------------------------
// stabilize-sim

struct StabilizeResult {
  LoopResult loop;
  PidGains gains;
  std::optional<TunedGains> tuned;
};

inline StabilizeResult run_stabilize(const Scenario& sc, const RunOptions& opt) {
  ArtifactWriter w(opt.out_dir);
  LoopConfig cfg = make_loop(sc.stabilize);
  StabilizeResult res;
  if (sc.stabilize.tune) {
    res.tuned = detail::stage("tune", w, [&] { return tune_gains(cfg, sc.stabilize.grid, sc.seed, opt.threads); });
    cfg.gains = res.tuned->gains;
  }
  res.gains = cfg.gains;
  res.loop = detail::stage("loop", w, [&] { return run_loop(cfg, sc.seed); });

  CsvTable t({"step", "true_delay_as", "measured_phase_rad", "residual_as"});
  for (const auto& s : res.loop.samples)
    t.row(std::vector<double>{double(s.step), s.true_delay_as, s.measured_phase_rad, s.residual_as});
  w.write("residuals.csv", t.str());
  Json j;
  j["rms_as"] = res.loop.rms_as;
  j["p95_as"] = res.loop.p95_as;
  j["max_abs_as"] = res.loop.max_abs_as;
  j["steps"] = cfg.steps;
  j["settle_steps"] = cfg.settle_steps;
  j["rate_hz"] = cfg.rate_hz;
  j["gains"] = {{"kp", cfg.gains.kp}, {"ki_per_s", cfg.gains.ki}, {"kd_s", cfg.gains.kd}};
  j["tuned"] = res.tuned.has_value();
  if (res.tuned) {
    j["tuning"] = {{"evaluated", res.tuned->evaluated}, {"diverged", res.tuned->diverged}, {"rms_as", res.tuned->rms_as}};
  }
  j["ambiguity_limit_as"] = ambiguity_limit_as(cfg.wavelength_m);
  w.write_json("summary.json", j);
  w.write_manifest("stabilize-sim", sc);
  return res;
}

}  // namespace attobeat
