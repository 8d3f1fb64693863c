#pragma once

// Data reduction: Fourier power spectra over the pump-probe delay, beat-band
// integration, sinusoid fits of beat intensity versus the two-pulse delay, and
// the weighted combination of estimates into a Table-1 style report.

#include <Eigen/Dense>
#include <unsupported/Eigen/NonLinearOptimization>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "attobeat/error.hpp"
#include "attobeat/fft.hpp"
#include "attobeat/molecule.hpp"
#include "attobeat/probe.hpp"
#include "attobeat/quantum.hpp"
#include "attobeat/units.hpp"

namespace attobeat {

enum class Window { kHann, kRectangular };

struct FtpsOptions {
  Window window = Window::kHann;
  int zero_pad = 4;
};

/// One-sided power spectrum per pixel on a cm^-1 axis from 0 to Nyquist.
///
/// Normalization: with x̃ = w·(x − mean x) and N_fft = zero_pad·N,
/// Σ_k power_k = N_fft · Σ_i x̃_i².
struct FTPS {
  std::vector<double> v_grid;
  std::vector<double> freq;  // cm^-1
  Eigen::MatrixXd power;     // pixels × frequencies
  double dt = 0.0;           // fs
  int samples = 0;
  int n_fft = 0;

  double nyquist() const { return 1.0 / (2.0 * kSpeedOfLightCmPerFs * dt); }
  /// Unpadded resolution 1/(c N Δτ).
  double bin_width() const { return 1.0 / (kSpeedOfLightCmPerFs * samples * dt); }
  double step() const { return freq[1] - freq[0]; }

  /// Power summed over pixels with lo <= v <= hi (all pixels when no range is given).
  Eigen::VectorXd integrated(std::optional<std::pair<double, double>> range = std::nullopt) const {
    Eigen::VectorXd s = Eigen::VectorXd::Zero(power.cols());
    for (std::size_t i = 0; i < v_grid.size(); ++i)
      if (!range || (v_grid[i] >= range->first && v_grid[i] <= range->second))
        s += power.row(static_cast<Eigen::Index>(i)).transpose();
    return s;
  }
};

namespace detail {

inline std::vector<double> window_weights(Window w, std::size_t n) {
  std::vector<double> out(n, 1.0);
  if (w == Window::kHann && n > 1)
    for (std::size_t i = 0; i < n; ++i) out[i] = 0.5 * (1.0 - std::cos(2.0 * kPi * i / (n - 1.0)));
  return out;
}

}  // namespace detail

/// FTPS of signal(pixel, delay) over a uniform delay grid.
inline FTPS compute_ftps(const Eigen::MatrixXd& signal, std::span<const double> tau, std::span<const double> v_grid,
                         const FtpsOptions& opt = {}) {
  detail::require_uniform(tau, "pump-probe delay");
  if (tau.size() < 32) throw InvalidInput(fmt::format("FTPS needs at least 32 delay samples, got {}", tau.size()));
  if (signal.cols() != static_cast<Eigen::Index>(tau.size()) || signal.rows() != static_cast<Eigen::Index>(v_grid.size()))
    throw InvalidInput("FTPS: signal shape does not match the grids");
  if (opt.zero_pad < 1) throw InvalidInput("FTPS: zero_pad must be >= 1");

  FTPS f;
  f.v_grid.assign(v_grid.begin(), v_grid.end());
  f.samples = static_cast<int>(tau.size());
  f.dt = tau[1] - tau[0];
  f.n_fft = f.samples * opt.zero_pad;
  if (f.n_fft % 2 != 0) f.n_fft += 1;
  const int half = f.n_fft / 2;
  f.freq.resize(static_cast<std::size_t>(half + 1));
  for (int k = 0; k <= half; ++k)
    f.freq[static_cast<std::size_t>(k)] = k / (f.n_fft * f.dt) / kSpeedOfLightCmPerFs;
  f.power.resize(signal.rows(), half + 1);

  const auto w = detail::window_weights(opt.window, tau.size());
  std::vector<double> buf(tau.size());
  for (Eigen::Index p = 0; p < signal.rows(); ++p) {
    const double mean = signal.row(p).mean();
    for (std::size_t i = 0; i < tau.size(); ++i) buf[i] = w[i] * (signal(p, static_cast<Eigen::Index>(i)) - mean);
    const auto spec = fft_real(buf, static_cast<std::size_t>(f.n_fft));
    for (int k = 0; k <= half; ++k) {
      const double pk = std::norm(spec[static_cast<std::size_t>(k)]);
      f.power(p, k) = (k == 0 || k == half) ? pk : 2.0 * pk;
    }
  }
  return f;
}

/// FTPS of β0, β2 and β4.
inline std::array<FTPS, 3> compute_ftps(const BetaScan& scan, const FtpsOptions& opt = {}) {
  return {compute_ftps(scan.beta0, scan.tau_ni, scan.v_grid, opt), compute_ftps(scan.beta2, scan.tau_ni, scan.v_grid, opt),
          compute_ftps(scan.beta4, scan.tau_ni, scan.v_grid, opt)};
}

struct BeatBandOptions {
  int half_width_bins = 2;  // band = expected ± this many (padded) bins
  double search_cm1 = 0.0;  // peak search radius for the centroid; 0 means one unpadded bin
  std::optional<std::pair<double, double>> pixel_range;
};

struct BeatPeak {
  LevelPair pair{0, 0};
  double expected = 0.0;  // cm^-1
  double peak = 0.0;      // frequency of the local maximum
  double centroid = 0.0;  // power-weighted mean around the maximum
  double integral = 0.0;  // power summed over the band around `expected`
  bool has_signal = false;
};

/// Band integrals and centroids on an already pixel-integrated spectrum.
inline std::vector<BeatPeak> extract_beats(const Eigen::VectorXd& spectrum, const FTPS& axis,
                                           std::span<const LevelPair> pairs, std::span<const double> expected,
                                           const BeatBandOptions& opt = {}) {
  if (pairs.size() != expected.size()) throw InvalidInput("extract_beats: pairs and frequencies differ in length");
  if (spectrum.size() != static_cast<Eigen::Index>(axis.freq.size()))
    throw InvalidInput("extract_beats: spectrum does not match the frequency axis");
  const double step = axis.step();
  const int h = opt.half_width_bins;
  const double band = (2 * h + 1) * step;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (!(expected[i] > 0.0) || expected[i] + h * step >= axis.nyquist())
      throw InvalidInput(fmt::format("beat at {:.1f} cm-1 is outside (0, Nyquist {:.1f})", expected[i], axis.nyquist()));
    for (std::size_t j = 0; j < i; ++j)
      if (std::abs(expected[i] - expected[j]) < band)
        throw InvalidInput(fmt::format("beat bands at {:.1f} and {:.1f} cm-1 overlap", expected[j], expected[i]));
  }
  const double search = opt.search_cm1 > 0.0 ? opt.search_cm1 : axis.bin_width();
  const auto last = static_cast<long>(axis.freq.size()) - 1;
  auto clamp_bin = [&](long k) { return std::clamp<long>(k, 0, last); };

  std::vector<BeatPeak> out;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    BeatPeak b;
    b.pair = pairs[i];
    b.expected = expected[i];
    const long k0 = std::lround(expected[i] / step);
    for (long k = clamp_bin(k0 - h); k <= clamp_bin(k0 + h); ++k) b.integral += spectrum(k);

    const long s_lo = clamp_bin(std::lround((expected[i] - search) / step));
    const long s_hi = clamp_bin(std::lround((expected[i] + search) / step));
    long kp = s_lo;
    for (long k = s_lo; k <= s_hi; ++k)
      if (spectrum(k) > spectrum(kp)) kp = k;
    double num = 0.0, den = 0.0;
    for (long k = clamp_bin(kp - h); k <= clamp_bin(kp + h); ++k) {
      num += axis.freq[static_cast<std::size_t>(k)] * spectrum(k);
      den += spectrum(k);
    }
    b.peak = axis.freq[static_cast<std::size_t>(kp)];
    b.has_signal = den > 0.0;
    b.centroid = b.has_signal ? num / den : expected[i];
    out.push_back(b);
  }
  return out;
}

inline std::vector<BeatPeak> extract_beats(const FTPS& f, const VibrationalLevels& lv, std::span<const LevelPair> pairs,
                                           const BeatBandOptions& opt = {}) {
  std::vector<double> expected;
  for (const auto& [v, vp] : pairs) expected.push_back(beat_energy(lv, v, vp));
  return extract_beats(f.integrated(opt.pixel_range), f, pairs, expected, opt);
}

/// I(τ) = A + B cos(2π τ / T + φ).
struct SinusoidFit {
  double offset = 0.0;     // A
  double amplitude = 0.0;  // B >= 0
  double period = 0.0;     // T, fs
  double phase = 0.0;      // φ in (−π, π]
  Eigen::Matrix4d covariance = Eigen::Matrix4d::Zero();  // (A, B, ω, φ), ω = 2π/T
  double delta_e = 0.0;        // 1/(c T), cm^-1
  double delta_e_sigma = 0.0;  // from the covariance
  double period_sigma = 0.0;
  double chi2 = 0.0;
  int restarts = 0;
  bool converged = false;
  bool identifiable = false;
  std::string diagnostic;
};

struct SinusoidFitOptions {
  int max_restarts = 6;
  int seed_padding = 16;
};

namespace detail {

struct SinusoidFunctor {
  using Scalar = double;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;

  std::span<const double> t, y;
  std::vector<double> inv_sigma;

  int inputs() const { return 4; }
  int values() const { return static_cast<int>(t.size()); }

  int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& f) const {
    for (std::size_t i = 0; i < t.size(); ++i)
      f(static_cast<Eigen::Index>(i)) = (x(0) + x(1) * std::cos(x(2) * t[i] + x(3)) - y[i]) * inv_sigma[i];
    return 0;
  }

  int df(const Eigen::VectorXd& x, Eigen::MatrixXd& j) const {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      const double arg = x(2) * t[i] + x(3);
      const double c = std::cos(arg), s = std::sin(arg);
      j(r, 0) = inv_sigma[i];
      j(r, 1) = c * inv_sigma[i];
      j(r, 2) = -x(1) * s * t[i] * inv_sigma[i];
      j(r, 3) = -x(1) * s * inv_sigma[i];
    }
    return 0;
  }
};

// Linear least squares for (A, B, φ) at fixed ω; returns the weighted RSS.
inline double linear_sinusoid(const SinusoidFunctor& fn, double omega, Eigen::Vector4d& x) {
  const auto n = static_cast<Eigen::Index>(fn.t.size());
  Eigen::MatrixXd a(n, 3);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = fn.inv_sigma[static_cast<std::size_t>(i)];
    const double t = fn.t[static_cast<std::size_t>(i)];
    a(i, 0) = w;
    a(i, 1) = w * std::cos(omega * t);
    a(i, 2) = w * std::sin(omega * t);
    b(i) = w * fn.y[static_cast<std::size_t>(i)];
  }
  const Eigen::Vector3d c = a.colPivHouseholderQr().solve(b);
  // c1 cos ωt + c2 sin ωt = B cos(ωt + φ) with B cos φ = c1, −B sin φ = c2.
  x << c(0), std::hypot(c(1), c(2)), omega, std::atan2(-c(2), c(1));
  return (a * c - b).squaredNorm();
}

inline double wrap_phase(double phi) {
  phi = std::remainder(phi, 2.0 * kPi);
  return phi <= -kPi ? phi + 2.0 * kPi : phi;
}

}  // namespace detail

/// Weighted least-squares sinusoid fit. `sigma` may be empty (unit weights).
/// The period is seeded from the FFT peak of the track, scanned locally and
/// refined by Levenberg–Marquardt from several starting frequencies.
inline SinusoidFit fit_beat_oscillation(std::span<const double> tau, std::span<const double> intensity,
                                        std::span<const double> sigma = {}, const SinusoidFitOptions& opt = {}) {
  if (tau.size() != intensity.size()) throw InvalidInput("fit: delay and intensity lengths differ");
  if (!sigma.empty() && sigma.size() != tau.size()) throw InvalidInput("fit: sigma length differs");
  if (tau.size() < 8) throw InvalidInput(fmt::format("fit needs at least 8 points, got {}", tau.size()));
  detail::require_uniform(tau, "two-pulse delay");
  for (double y : intensity)
    if (!std::isfinite(y)) throw InvalidInput("fit: non-finite intensity");

  detail::SinusoidFunctor fn;
  fn.t = tau;
  fn.y = intensity;
  fn.inv_sigma.assign(tau.size(), 1.0);
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    if (!(sigma[i] > 0.0)) throw InvalidInput("fit: sigma must be positive");
    fn.inv_sigma[i] = 1.0 / sigma[i];
  }

  const std::size_t n = tau.size();
  const double dt = tau[1] - tau[0];
  const double span = tau.back() - tau.front();
  SinusoidFit out;

  // FFT seed.
  double mean = 0.0;
  for (double y : intensity) mean += y;
  mean /= static_cast<double>(n);
  std::vector<double> centered(n);
  double spread = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    centered[i] = intensity[i] - mean;
    spread = std::max(spread, std::abs(centered[i]));
  }
  const double scale = std::max(std::abs(mean), spread);
  if (!(spread > 1e-12 * std::max(scale, std::numeric_limits<double>::min()))) {
    out.offset = mean;
    out.converged = true;
    out.identifiable = false;
    out.diagnostic = "constant track: oscillation amplitude is zero and the period is unidentifiable";
    return out;
  }
  const std::size_t n_fft = n * static_cast<std::size_t>(std::max(1, opt.seed_padding));
  const auto spec = fft_real(centered, n_fft);
  std::size_t k_best = 1;
  for (std::size_t k = 1; k <= n_fft / 2; ++k)
    if (std::norm(spec[k]) > std::norm(spec[k_best])) k_best = k;
  const double d_omega = 2.0 * kPi / (static_cast<double>(n_fft) * dt);
  const double omega_seed = k_best * d_omega;
  const double native = 2.0 * kPi / (static_cast<double>(n) * dt);

  Eigen::Vector4d best = Eigen::Vector4d::Zero();
  double best_rss = std::numeric_limits<double>::infinity();
  bool any_converged = false;
  for (int attempt = 0; attempt <= opt.max_restarts; ++attempt) {
    // 0, +, −, ++, −− ... in quarter-bin steps around the seed.
    const double offset = attempt == 0 ? 0.0 : ((attempt + 1) / 2) * 0.25 * native * (attempt % 2 ? 1.0 : -1.0);
    const double omega0 = omega_seed + offset;
    if (!(omega0 > 0.0)) continue;
    Eigen::Vector4d x0;
    detail::linear_sinusoid(fn, omega0, x0);
    Eigen::VectorXd x = x0;
    Eigen::LevenbergMarquardt<detail::SinusoidFunctor> lm(fn);
    lm.parameters.maxfev = 2000;
    const auto status = lm.minimize(x);
    const bool ok = status == Eigen::LevenbergMarquardtSpace::RelativeReductionTooSmall ||
                    status == Eigen::LevenbergMarquardtSpace::RelativeErrorTooSmall ||
                    status == Eigen::LevenbergMarquardtSpace::RelativeErrorAndReductionTooSmall ||
                    status == Eigen::LevenbergMarquardtSpace::CosinusTooSmall;
    Eigen::VectorXd f(static_cast<Eigen::Index>(n));
    fn(x, f);
    const double rss = f.squaredNorm();
    out.restarts = attempt;
    if (ok && std::isfinite(rss) && x(2) > 0.0 && rss < best_rss) {
      best_rss = rss;
      best = x;
      any_converged = true;
    }
  }
  if (!any_converged) {
    out.converged = false;
    out.diagnostic = fmt::format("sinusoid fit did not converge after {} restarts", opt.max_restarts + 1);
    return out;
  }

  if (best(1) < 0.0) {
    best(1) = -best(1);
    best(3) += kPi;
  }
  best(3) = detail::wrap_phase(best(3));

  Eigen::MatrixXd jac(static_cast<Eigen::Index>(n), 4);
  fn.df(best, jac);
  const Eigen::Matrix4d jtj = jac.transpose() * jac;
  Eigen::Matrix4d cov = jtj.completeOrthogonalDecomposition().pseudoInverse();
  const double dof = static_cast<double>(n) - 4.0;
  if (sigma.empty()) cov *= dof > 0.0 ? best_rss / dof : 0.0;

  out.offset = best(0);
  out.amplitude = best(1);
  out.period = 2.0 * kPi / best(2);
  out.phase = best(3);
  out.covariance = cov;
  out.chi2 = best_rss;
  out.converged = true;
  const double omega_sigma = std::sqrt(std::max(0.0, cov(2, 2)));
  out.period_sigma = out.period * omega_sigma / best(2);
  out.delta_e = best(2) / (2.0 * kPi * kSpeedOfLightCmPerFs);
  out.delta_e_sigma = omega_sigma / (2.0 * kPi * kSpeedOfLightCmPerFs);
  const double b_sigma = std::sqrt(std::max(0.0, cov(1, 1)));
  out.identifiable = out.amplitude > 1e-9 * std::max(std::abs(out.offset), spread) && out.amplitude > 3.0 * b_sigma;
  if (!out.identifiable)
    out.diagnostic = "oscillation amplitude not significant; period unidentifiable";
  else if (out.period > span)
    out.diagnostic = fmt::format("fitted period {:.2f} fs exceeds the delay span {:.2f} fs", out.period, span);
  else if (out.offset < 0.0)
    out.diagnostic = "fitted offset is negative";
  return out;
}

/// A value with a 1σ uncertainty; ok = false marks a failed estimate.
struct Estimate {
  double value = 0.0;
  double sigma = 0.0;
  bool ok = false;
};

/// Mean and standard error over repeats. A single repeat keeps its own sigma.
inline Estimate summarize_repeats(std::span<const Estimate> repeats) {
  std::vector<const Estimate*> good;
  for (const auto& e : repeats)
    if (e.ok) good.push_back(&e);
  if (good.empty()) return {};
  if (good.size() == 1) return *good.front();
  double mean = 0.0;
  for (const auto* e : good) mean += e->value;
  mean /= static_cast<double>(good.size());
  double ss = 0.0;
  for (const auto* e : good) ss += (e->value - mean) * (e->value - mean);
  const double sd = std::sqrt(ss / static_cast<double>(good.size() - 1));
  return {mean, sd / std::sqrt(static_cast<double>(good.size())), true};
}

struct Combined {
  double value = 0.0;
  double sigma = 0.0;
  int used = 0;
};

/// Inverse-variance weighted mean of the successful estimates. Estimates with
/// zero sigma dominate: if any are present, their plain mean is returned.
inline Combined combine_orders(std::span<const Estimate> estimates) {
  std::vector<Estimate> good;
  for (const auto& e : estimates)
    if (e.ok && std::isfinite(e.value) && std::isfinite(e.sigma) && e.sigma >= 0.0) good.push_back(e);
  if (good.empty()) throw NumericalFailure("combine_orders: all fits failed");
  Combined c;
  const bool exact = std::any_of(good.begin(), good.end(), [](const Estimate& e) { return e.sigma == 0.0; });
  if (exact) {
    for (const auto& e : good)
      if (e.sigma == 0.0) {
        c.value += e.value;
        ++c.used;
      }
    c.value /= c.used;
    return c;
  }
  double wsum = 0.0;
  for (const auto& e : good) {
    const double w = 1.0 / (e.sigma * e.sigma);
    c.value += w * e.value;
    wsum += w;
  }
  c.value /= wsum;
  c.sigma = 1.0 / std::sqrt(wsum);
  c.used = static_cast<int>(good.size());
  return c;
}

struct Table1Row {
  std::string label;
  LevelPair pair{0, 0};
  double literature = 0.0;
  Estimate col2;  // FTPS centroid
  Estimate col3;  // oscillation fit, orders combined
  bool pass_col2 = false;
  bool pass_col3 = false;
};

struct Table1Report {
  double tol_col2 = 40.0;
  double tol_col3 = 15.0;
  std::vector<Table1Row> rows;

  bool all_pass() const {
    return std::all_of(rows.begin(), rows.end(), [](const Table1Row& r) { return r.pass_col2 && r.pass_col3; });
  }
};

struct PairResult {
  LevelPair pair{0, 0};
  double literature = 0.0;
  Estimate col2;
  Estimate col3;
};

inline Table1Report table1_report(std::span<const PairResult> results, double tol_col2 = 40.0, double tol_col3 = 15.0) {
  Table1Report rep;
  rep.tol_col2 = tol_col2;
  rep.tol_col3 = tol_col3;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    Table1Row row;
    row.label = i < 26 ? std::string(1, static_cast<char>('A' + i)) : fmt::format("P{}", i + 1);
    row.pair = r.pair;
    row.literature = r.literature;
    row.col2 = r.col2;
    row.col3 = r.col3;
    row.pass_col2 = r.col2.ok && std::abs(r.col2.value - r.literature) <= tol_col2;
    row.pass_col3 = r.col3.ok && std::abs(r.col3.value - r.literature) <= tol_col3;
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

/// Constant term of a least-squares fit y = m + Σ_k (a_k cos ω_k τ + b_k sin ω_k τ)
/// over the given beat frequencies: the delay average with incomplete beat
/// periods removed.
inline double beat_free_mean(std::span<const double> tau, std::span<const double> y,
                             std::span<const double> beat_cm1) {
  if (tau.size() != y.size() || tau.empty()) throw InvalidInput("beat_free_mean: bad input lengths");
  const auto n = static_cast<Eigen::Index>(tau.size());
  const auto k = static_cast<Eigen::Index>(beat_cm1.size());
  Eigen::MatrixXd a(n, 1 + 2 * k);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = tau[static_cast<std::size_t>(i)];
    a(i, 0) = 1.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      const double ph = beat_phase(beat_cm1[static_cast<std::size_t>(j)], t);
      a(i, 1 + 2 * j) = std::cos(ph);
      a(i, 2 + 2 * j) = std::sin(ph);
    }
    b(i) = y[static_cast<std::size_t>(i)];
  }
  return a.colPivHouseholderQr().solve(b)(0);
}

struct BeatEnvelope {
  std::vector<double> envelope;
  std::vector<double> minima;  // fs
  double period = 0.0;         // mean minima spacing, fs
};

/// Amplitude envelope of the band [f_lo, f_hi] (cm^-1) of a uniformly sampled
/// signal, from the analytic signal, and the spacing of its interior minima.
inline BeatEnvelope beat_envelope(std::span<const double> tau, std::span<const double> signal, double f_lo,
                                  double f_hi, double edge_trim = 0.08) {
  detail::require_uniform(tau, "pump-probe delay");
  if (signal.size() != tau.size()) throw InvalidInput("beat_envelope: length mismatch");
  if (!(f_hi > f_lo) || f_lo < 0.0) throw InvalidInput("beat_envelope: invalid band");
  const std::size_t n = tau.size();
  const double dt = tau[1] - tau[0];
  const std::size_t n_fft = 2 * n;
  double mean = 0.0;
  for (double s : signal) mean += s;
  mean /= static_cast<double>(n);
  std::vector<double> centered(n);
  for (std::size_t i = 0; i < n; ++i) centered[i] = signal[i] - mean;
  auto spec = fft_real(centered, n_fft);
  for (std::size_t k = 0; k < n_fft; ++k) {
    const double f = static_cast<double>(k) / (static_cast<double>(n_fft) * dt) / kSpeedOfLightCmPerFs;
    const bool positive = k > 0 && k < n_fft / 2;
    spec[k] = positive && f >= f_lo && f <= f_hi ? 2.0 * spec[k] : std::complex<double>{0.0, 0.0};
  }
  const auto analytic = fft_inverse(spec);
  BeatEnvelope out;
  out.envelope.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.envelope[i] = std::abs(analytic[i]);

  const auto lo = static_cast<std::size_t>(edge_trim * static_cast<double>(n)) + 1;
  const std::size_t hi = n - lo;
  const auto& e = out.envelope;
  for (std::size_t i = lo; i < hi; ++i) {
    if (!(e[i] < e[i - 1] && e[i] <= e[i + 1])) continue;
    const double denom = e[i - 1] - 2.0 * e[i] + e[i + 1];
    const double shift = denom > 0.0 ? 0.5 * (e[i - 1] - e[i + 1]) / denom : 0.0;
    out.minima.push_back(tau[i] + shift * dt);
  }
  if (out.minima.size() < 2)
    throw InvalidInput(fmt::format("beat_envelope: found {} envelope minima, need at least 2", out.minima.size()));
  out.period = (out.minima.back() - out.minima.front()) / static_cast<double>(out.minima.size() - 1);
  return out;
}

}  // namespace attobeat
