#pragma once

// Interferometer delay stabilization: tilt-fringe camera frames, Takeda
// sideband phase extraction and a PID loop driving an integrating delay stage.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "attobeat/error.hpp"
#include "attobeat/fft.hpp"
#include "attobeat/parallel.hpp"
#include "attobeat/rng.hpp"
#include "attobeat/units.hpp"

namespace attobeat {

struct FringeFrame {
  Eigen::MatrixXd intensity;  // rows = y, cols = x
  double carrier = 0.0;       // cycles / pixel along x
  double phase = 0.0;         // rad
  double noise = 0.0;         // Gaussian σ per pixel
};

struct FrameSpec {
  int width = 512;
  int height = 64;
  double carrier = 32.0 / 512.0;
  double contrast = 1.0;  // V
  double mean_intensity = 1.0;
  double noise = 0.0;
};

/// Pixel noise σ giving the requested fringe SNR (power ratio of the fringe
/// term, rms I0·V/√2, to the noise).
inline double noise_for_snr_db(const FrameSpec& s, double snr_db) {
  return s.mean_intensity * s.contrast / std::sqrt(2.0) / std::pow(10.0, snr_db / 20.0);
}

/// I(x, y) = I0 [1 + V cos(2π k_c x + φ)] + noise, clipped at zero.
inline FringeFrame make_frame(const FrameSpec& s, double phi, std::uint64_t noise_seed = 0) {
  if (!(s.carrier > 0.0 && s.carrier < 0.5))
    throw InvalidInput(fmt::format("fringe carrier must be in (0, 0.5) cycles/pixel, got {}", s.carrier));
  if (s.width < 2 || s.height < 1) throw InvalidInput("fringe frame too small");
  if (s.noise < 0.0 || s.contrast < 0.0 || s.mean_intensity < 0.0) throw InvalidInput("fringe frame: negative parameter");
  FringeFrame f;
  f.carrier = s.carrier;
  f.phase = phi;
  f.noise = s.noise;
  f.intensity.resize(s.height, s.width);
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int x = 0; x < s.width; ++x) {
    const double clean = s.mean_intensity * (1.0 + s.contrast * std::cos(2.0 * kPi * s.carrier * x + phi));
    for (int y = 0; y < s.height; ++y) f.intensity(y, x) = clean;
  }
  if (s.noise > 0.0)
    for (int y = 0; y < s.height; ++y)
      for (int x = 0; x < s.width; ++x) f.intensity(y, x) += s.noise * gauss(rng);
  f.intensity = f.intensity.cwiseMax(0.0);
  return f;
}

/// Takeda phase: per row, FFT, keep the positive sideband around k_c, inverse
/// transform, remove the carrier; the complex result is averaged over the frame.
/// Returns the wrapped phase in (−π, π].
inline double takeda_phase(const FringeFrame& f) {
  const auto w = static_cast<int>(f.intensity.cols());
  const auto h = static_cast<int>(f.intensity.rows());
  if (!(f.carrier > 0.0 && f.carrier < 0.5)) throw InvalidInput("takeda: carrier outside (0, 0.5)");
  if (f.carrier * w < 8.0)
    throw InvalidInput(fmt::format("takeda: only {:.1f} carrier cycles across the frame; sideband overlaps DC (need 8)",
                                   f.carrier * w));
  const auto k_c = f.carrier * w;
  const auto k_lo = static_cast<std::size_t>(std::max(1.0, std::ceil(0.5 * k_c)));
  const auto k_hi = static_cast<std::size_t>(std::min(w / 2.0 - 1.0, std::floor(1.5 * k_c)));
  std::complex<double> acc{0.0, 0.0};
  double dc = 0.0;
  ComplexVector row(static_cast<std::size_t>(w));
  ComplexVector side(static_cast<std::size_t>(w));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) row[static_cast<std::size_t>(x)] = {f.intensity(y, x), 0.0};
    const auto spec = fft_forward(row);
    dc += spec[0].real();
    std::fill(side.begin(), side.end(), std::complex<double>{0.0, 0.0});
    for (std::size_t k = k_lo; k <= k_hi; ++k) side[k] = spec[k];
    const auto z = fft_inverse(side);
    for (int x = 0; x < w; ++x)
      acc += z[static_cast<std::size_t>(x)] * std::polar(1.0, -2.0 * kPi * f.carrier * x);
  }
  const double n = static_cast<double>(w) * h;
  if (!(std::abs(acc) / n > 1e-6 * std::abs(dc) / n) || !std::isfinite(std::abs(acc)))
    throw InvalidInput("takeda: sideband is indistinguishable from zero (contrast too low)");
  return std::arg(acc);
}

/// Delay (as) corresponding to an optical phase at `wavelength_m`, and back.
inline double phase_to_delay_as(double phi, double wavelength_m) {
  return phi * wavelength_m / (2.0 * kPi * kSpeedOfLightMPerS) * 1e18;
}
inline double delay_to_phase(double delay_as, double wavelength_m) {
  return 2.0 * kPi * kSpeedOfLightMPerS * delay_as * 1e-18 / wavelength_m;
}

struct PidGains {
  double kp = 0.0;  // dimensionless
  double ki = 0.0;  // 1/s
  double kd = 0.0;  // s
};

/// Discrete PID on a delay error in as; output is a stage move in as per step.
class PidController {
 public:
  PidController(PidGains gains, double dt_s, double integral_limit_as_s)
      : gains_(gains), dt_(dt_s), limit_(integral_limit_as_s) {
    if (!std::isfinite(gains.kp) || !std::isfinite(gains.ki) || !std::isfinite(gains.kd))
      throw InvalidInput("PID gains must be finite");
    if (!(dt_s > 0.0)) throw InvalidInput("PID step must be positive");
    if (!(integral_limit_as_s > 0.0)) throw InvalidInput("PID integral limit must be positive");
  }

  double update(double error_as) {
    integral_ = std::clamp(integral_ + error_as * dt_, -limit_, limit_);
    const double derivative = first_ ? 0.0 : (error_as - prev_) / dt_;
    first_ = false;
    prev_ = error_as;
    return -(gains_.kp * error_as + gains_.ki * integral_ + gains_.kd * derivative);
  }

  double integral() const { return integral_; }
  const PidGains& gains() const { return gains_; }

  void reset() {
    integral_ = prev_ = 0.0;
    first_ = true;
  }

 private:
  PidGains gains_;
  double dt_;
  double limit_;
  double integral_ = 0.0;
  double prev_ = 0.0;
  bool first_ = true;
};

/// Delay disturbance: linear + sinusoidal + random walk.
struct DriftModel {
  double linear_as_per_s = 100.0;
  double sine_amplitude_as = 0.0;
  double sine_frequency_hz = 0.0;
  double random_walk_as_per_sqrt_s = 0.0;
};

struct LoopConfig {
  double wavelength_m = 473e-9;
  double rate_hz = 50.0;
  int steps = 10000;
  int settle_steps = 500;      // excluded from the summary statistics
  double phase_noise_rad = 5e-3;  // per-frame Gaussian phase jitter
  double integral_limit_as_s = 1e4;
  FrameSpec frame{128, 8, 16.0 / 128.0, 1.0, 1.0, 0.0};
  DriftModel drift;
  PidGains gains{0.6, 5.0, 0.0};
  bool closed = true;
};

struct LoopSample {
  int step = 0;
  double true_delay_as = 0.0;  // disturbance without correction
  double measured_phase_rad = 0.0;
  double residual_as = 0.0;  // disturbance + stage position
};

struct LoopResult {
  std::vector<LoopSample> samples;
  double rms_as = 0.0;  // over steps >= settle_steps
  double p95_as = 0.0;  // 95th percentile of |residual|
  double max_abs_as = 0.0;
};

/// Thrown when the residual leaves the unambiguous ±λ/(2c) range.
class LoopDivergence : public NumericalFailure {
 public:
  using NumericalFailure::NumericalFailure;
};

inline double ambiguity_limit_as(double wavelength_m) { return wavelength_m / (2.0 * kSpeedOfLightMPerS) * 1e18; }

/// Closed-loop simulation. Each step renders a frame at the current delay error,
/// extracts its phase, tracks it continuously, and feeds the PID. A command
/// issued at step n moves the stage between steps n+1 and n+2.
inline LoopResult run_loop(const LoopConfig& cfg, std::uint64_t seed) {
  if (!(cfg.rate_hz > 0.0)) throw InvalidInput("loop rate must be positive");
  if (cfg.steps < 1) throw InvalidInput("loop needs at least one step");
  if (!(cfg.wavelength_m > 0.0)) throw InvalidInput("wavelength must be positive");
  if (cfg.phase_noise_rad < 0.0 || cfg.drift.random_walk_as_per_sqrt_s < 0.0) throw InvalidInput("noise levels must be >= 0");
  const double dt = 1.0 / cfg.rate_hz;
  PidController pid(cfg.gains, dt, cfg.integral_limit_as_s);
  auto drift_rng = make_rng(seed, Stream::kDrift);
  auto phase_rng = make_rng(seed, Stream::kPhaseNoise);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double limit = ambiguity_limit_as(cfg.wavelength_m);

  LoopResult out;
  out.samples.reserve(static_cast<std::size_t>(cfg.steps));
  double walk = 0.0, stage = 0.0, pending = 0.0;
  double tracked = 0.0;
  bool have_phase = false;
  for (int n = 0; n < cfg.steps; ++n) {
    const double t = n * dt;
    if (n > 0 && cfg.drift.random_walk_as_per_sqrt_s > 0.0)
      walk += cfg.drift.random_walk_as_per_sqrt_s * std::sqrt(dt) * gauss(drift_rng);
    const double disturbance = cfg.drift.linear_as_per_s * t +
                               cfg.drift.sine_amplitude_as * std::sin(2.0 * kPi * cfg.drift.sine_frequency_hz * t) + walk;
    const double residual = disturbance + stage;
    const double jitter = cfg.phase_noise_rad > 0.0 ? cfg.phase_noise_rad * gauss(phase_rng) : 0.0;
    const auto frame = make_frame(cfg.frame, delay_to_phase(residual, cfg.wavelength_m) + jitter,
                                  derive_seed(seed, Stream::kFringeNoise, {static_cast<std::uint64_t>(n)}));
    const double wrapped = takeda_phase(frame);
    tracked = have_phase ? tracked + std::remainder(wrapped - tracked, 2.0 * kPi) : wrapped;
    have_phase = true;
    out.samples.push_back({n, disturbance, tracked, residual});

    if (cfg.closed && std::abs(residual) > limit)
      throw LoopDivergence(fmt::format(
          "loop diverged at step {}: residual {:.1f} as exceeds ±{:.1f} as (kp={}, ki={} 1/s, kd={} s, rate {} Hz)", n,
          residual, limit, cfg.gains.kp, cfg.gains.ki, cfg.gains.kd, cfg.rate_hz));

    stage += pending;
    pending = cfg.closed ? pid.update(phase_to_delay_as(tracked, cfg.wavelength_m)) : 0.0;
  }

  std::vector<double> tail;
  for (const auto& s : out.samples)
    if (s.step >= cfg.settle_steps) tail.push_back(s.residual_as);
  if (tail.empty())
    for (const auto& s : out.samples) tail.push_back(s.residual_as);
  double ss = 0.0;
  for (double r : tail) {
    ss += r * r;
    out.max_abs_as = std::max(out.max_abs_as, std::abs(r));
  }
  out.rms_as = std::sqrt(ss / static_cast<double>(tail.size()));
  std::vector<double> mags(tail.size());
  std::transform(tail.begin(), tail.end(), mags.begin(), [](double r) { return std::abs(r); });
  const auto k = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(mags.size()))) - 1;
  std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(k), mags.end());
  out.p95_as = mags[k];
  return out;
}

struct GainGrid {
  std::vector<double> kp{0.2, 0.4, 0.6, 0.8};
  std::vector<double> ki{0.0, 2.0, 5.0, 10.0};
  std::vector<double> kd{0.0, 0.002};
  int steps = 2000;
};

struct TunedGains {
  PidGains gains;
  double rms_as = std::numeric_limits<double>::infinity();
  int evaluated = 0;
  int diverged = 0;
};

/// Exhaustive search over the grid; lowest steady-state rms wins. Diverging
/// settings are skipped.
inline TunedGains tune_gains(const LoopConfig& base, const GainGrid& grid, std::uint64_t seed, unsigned threads = 1) {
  std::vector<PidGains> candidates;
  for (double kp : grid.kp)
    for (double ki : grid.ki)
      for (double kd : grid.kd) candidates.push_back({kp, ki, kd});
  if (candidates.empty()) throw InvalidInput("tune_gains: empty gain grid");
  std::vector<double> rms(candidates.size(), std::numeric_limits<double>::infinity());
  parallel_for(candidates.size(), threads, [&](std::size_t i) {
    LoopConfig cfg = base;
    cfg.gains = candidates[i];
    cfg.steps = grid.steps;
    cfg.settle_steps = std::min(base.settle_steps, grid.steps / 2);
    cfg.closed = true;
    try {
      rms[i] = run_loop(cfg, seed).rms_as;
    } catch (const LoopDivergence&) {
    }
  });
  TunedGains best;
  best.evaluated = static_cast<int>(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (!std::isfinite(rms[i])) {
      ++best.diverged;
      continue;
    }
    if (rms[i] < best.rms_as) {
      best.rms_as = rms[i];
      best.gains = candidates[i];
    }
  }
  if (!std::isfinite(best.rms_as)) throw LoopDivergence("tune_gains: every gain setting diverged");
  return best;
}

}  // namespace attobeat
