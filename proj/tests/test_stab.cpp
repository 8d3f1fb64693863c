#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "attobeat/stab.hpp"

using namespace attobeat;

namespace {

double wrapped_diff(double a, double b) { return std::remainder(a - b, 2.0 * kPi); }

LoopConfig quiet_loop() {
  LoopConfig c;
  c.steps = 1000;
  c.settle_steps = 100;
  c.phase_noise_rad = 0.0;
  c.drift = {};
  c.drift.linear_as_per_s = 0.0;
  return c;
}

}  // namespace

TEST(Fringes, NoiselessFrameIsExactCosine) {
  FrameSpec s;
  s.contrast = 0.8;
  s.mean_intensity = 2.0;
  const auto f = make_frame(s, 0.7);
  for (int x = 0; x < s.width; x += 17)
    for (int y = 0; y < s.height; y += 9)
      EXPECT_NEAR(f.intensity(y, x), 2.0 * (1.0 + 0.8 * std::cos(2.0 * kPi * s.carrier * x + 0.7)), 1e-12);
  EXPECT_GE(f.intensity.minCoeff(), 0.0);
}

TEST(Fringes, PhaseIsPeriodic) {
  const FrameSpec s;
  const auto a = make_frame(s, 1.3), b = make_frame(s, 1.3 + 2.0 * kPi);
  EXPECT_LT((a.intensity - b.intensity).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Fringes, DelayPhaseConversionAt473nm) {
  EXPECT_NEAR(delay_to_phase(10.0, 473e-9), 0.0398, 1e-4);
  EXPECT_NEAR(phase_to_delay_as(delay_to_phase(7.3, 473e-9), 473e-9), 7.3, 1e-12);
  EXPECT_NEAR(ambiguity_limit_as(473e-9), phase_to_delay_as(kPi, 473e-9), 1e-9);
}

TEST(Fringes, RejectsInvalidCarrier) {
  FrameSpec s;
  s.carrier = 0.0;
  EXPECT_THROW(make_frame(s, 0.0), InvalidInput);
  s.carrier = 0.5;
  EXPECT_THROW(make_frame(s, 0.0), InvalidInput);
}

TEST(Takeda, NoiselessClosure) {
  const FrameSpec s;
  EXPECT_NEAR(takeda_phase(make_frame(s, 1.0)), 1.0, 1e-6);
  EXPECT_NEAR(takeda_phase(make_frame(s, 0.0)), 0.0, 1e-12);
  for (double phi = -3.1; phi < 3.1; phi += 0.37) EXPECT_NEAR(wrapped_diff(takeda_phase(make_frame(s, phi)), phi), 0.0, 1e-6) << phi;
}

TEST(Takeda, Equivariance) {
  const FrameSpec s;
  for (double phi : {-2.0, 0.3, 2.9})
    for (double delta : {0.01, 1.0, 4.0}) {
      const double a = takeda_phase(make_frame(s, phi));
      const double b = takeda_phase(make_frame(s, phi + delta));
      EXPECT_NEAR(wrapped_diff(b - a, delta), 0.0, 1e-6);
    }
}

TEST(Takeda, NoiseAt20dB) {
  FrameSpec s;  // 512 × 64
  s.noise = noise_for_snr_db(s, 20.0);
  double ss = 0.0;
  const int seeds = 100;
  for (int k = 0; k < seeds; ++k) {
    const double phi = 0.5;
    ss += std::pow(wrapped_diff(takeda_phase(make_frame(s, phi, static_cast<std::uint64_t>(k))), phi), 2);
  }
  EXPECT_LT(std::sqrt(ss / seeds), 5e-3);
}

TEST(Takeda, RejectsOverlappingSideband) {
  FrameSpec s;
  s.carrier = 4.0 / 512.0;
  EXPECT_THROW(takeda_phase(make_frame(s, 0.0)), InvalidInput);
  FrameSpec flat;
  flat.contrast = 0.0;
  EXPECT_THROW(takeda_phase(make_frame(flat, 0.0)), InvalidInput);
}

TEST(Pid, Terms) {
  PidController pid({2.0, 10.0, 0.5}, 0.02, 1e3);
  EXPECT_NEAR(pid.update(1.0), -(2.0 + 10.0 * 0.02), 1e-12);
  EXPECT_NEAR(pid.update(3.0), -(2.0 * 3.0 + 10.0 * 0.08 + 0.5 * 2.0 / 0.02), 1e-12);
  pid.reset();
  EXPECT_EQ(pid.integral(), 0.0);
}

TEST(Pid, AntiWindup) {
  PidController pid({0.0, 1.0, 0.0}, 1.0, 5.0);
  for (int i = 0; i < 100; ++i) pid.update(1.0);
  EXPECT_EQ(pid.integral(), 5.0);
  EXPECT_THROW(PidController({std::nan(""), 0.0, 0.0}, 1.0, 1.0), InvalidInput);
  EXPECT_THROW(PidController({1.0, 0.0, 0.0}, 0.0, 1.0), InvalidInput);
}

TEST(Loop, QuietLoopHoldsZero) {
  const auto res = run_loop(quiet_loop(), 1);
  for (const auto& s : res.samples) EXPECT_NEAR(s.residual_as, 0.0, 1e-9);
  EXPECT_LT(res.rms_as, 1e-9);
}

TEST(Loop, OpenLoopTracksDrift) {
  auto cfg = quiet_loop();
  cfg.closed = false;
  cfg.drift.linear_as_per_s = 100.0;
  cfg.drift.sine_amplitude_as = 20.0;
  cfg.drift.sine_frequency_hz = 1.0;
  cfg.drift.random_walk_as_per_sqrt_s = 3.0;
  cfg.steps = 200;
  const auto res = run_loop(cfg, 4);
  for (const auto& s : res.samples) EXPECT_EQ(s.residual_as, s.true_delay_as);
  EXPECT_NEAR(res.samples[100].true_delay_as - res.samples[0].true_delay_as, 100.0 * 2.0, 3.0 * 10.0 + 2 * 20.0);
}

TEST(Loop, TunedLoopBelowTenAttoseconds) {
  LoopConfig cfg;  // 100 as/s ramp, 5 mrad phase noise, 50 Hz, 10⁴ steps
  const auto tuned = tune_gains(cfg, GainGrid{}, 1, 4);
  cfg.gains = tuned.gains;
  const auto res = run_loop(cfg, 1);
  EXPECT_EQ(res.samples.size(), 10000u);
  EXPECT_LT(res.rms_as, 10.0);
  EXPECT_LE(res.p95_as, res.max_abs_as);
}

TEST(Loop, ResidualFallsWithPhaseNoise) {
  LoopConfig cfg;
  cfg.steps = 3000;
  double prev = INFINITY;
  for (double noise : {2e-2, 5e-3, 1e-3}) {
    cfg.phase_noise_rad = noise;
    const double rms = run_loop(cfg, 8).rms_as;
    EXPECT_LE(rms, prev) << noise;
    prev = rms;
  }
}

TEST(Loop, DivergenceReportsGains) {
  LoopConfig cfg;
  cfg.gains = {3.0, 0.0, 0.0};
  cfg.steps = 500;
  try {
    run_loop(cfg, 2);
    FAIL() << "expected divergence";
  } catch (const LoopDivergence& e) {
    EXPECT_NE(std::string(e.what()).find("kp=3"), std::string::npos);
  }
}

TEST(Loop, SameSeedSameTrace) {
  LoopConfig cfg;
  cfg.steps = 300;
  cfg.drift.random_walk_as_per_sqrt_s = 5.0;
  const auto a = run_loop(cfg, 12), b = run_loop(cfg, 12);
  for (std::size_t i = 0; i < a.samples.size(); ++i) EXPECT_EQ(a.samples[i].residual_as, b.samples[i].residual_as);
}
