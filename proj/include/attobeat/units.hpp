#pragma once

#include <numbers>

namespace attobeat {

// Energies are wavenumbers (cm^-1) and delays are femtoseconds throughout.
inline constexpr double kPi = std::numbers::pi;
inline constexpr double kSpeedOfLightCmPerFs = 2.99792458e-5;
inline constexpr double kSpeedOfLightMPerS = 2.99792458e8;
inline constexpr double kWavenumberPerEv = 8065.543937;

/// Phase accumulated by a beat of energy spacing `delta_e` over delay `tau`: 2π c ΔE τ.
constexpr double beat_phase(double delta_e_cm1, double tau_fs) {
  return 2.0 * kPi * kSpeedOfLightCmPerFs * delta_e_cm1 * tau_fs;
}

/// Oscillation period (fs) of a beat at `wavenumber` cm^-1.
constexpr double period_fs(double wavenumber_cm1) {
  return 1.0 / (kSpeedOfLightCmPerFs * wavenumber_cm1);
}

/// Inverse of period_fs.
constexpr double wavenumber_cm1(double period) {
  return 1.0 / (kSpeedOfLightCmPerFs * period);
}

constexpr double ev_to_wavenumber(double ev) { return ev * kWavenumberPerEv; }

}  // namespace attobeat
