#pragma once

// Spectral amplitude of a phase-locked XUV pulse pair.

#include <cmath>
#include <complex>
#include <span>
#include <vector>

#include <fmt/format.h>

#include "attobeat/error.hpp"
#include "attobeat/units.hpp"

namespace attobeat {

/// Two identical pulses with Gaussian spectral amplitude F0, delayed by tau_xx.
struct PulsePair {
  double center = ev_to_wavenumber(30.0);  // cm^-1
  double sigma = 4843.8;                   // amplitude standard deviation, cm^-1
  double tau_xx = 0.0;                     // fs
  double amplitude_scale = 1.0;

  /// sigma such that |F0|² has the requested FWHM: FWHM = 2·sqrt(ln 2)·sigma.
  static double sigma_from_fwhm(double fwhm_cm1) { return fwhm_cm1 / (2.0 * std::sqrt(std::log(2.0))); }

  static PulsePair from_fwhm_ev(double center_ev, double fwhm_ev, double tau_xx = 0.0) {
    PulsePair p;
    p.center = ev_to_wavenumber(center_ev);
    p.sigma = sigma_from_fwhm(ev_to_wavenumber(fwhm_ev));
    p.tau_xx = tau_xx;
    return p;
  }

  PulsePair with_delay(double tau) const {
    PulsePair p = *this;
    p.tau_xx = tau;
    return p;
  }

  void validate() const {
    if (!(sigma > 0.0) || !std::isfinite(sigma))
      throw InvalidInput(fmt::format("pulse sigma must be positive, got {}", sigma));
    if (!(tau_xx >= 0.0) || !std::isfinite(tau_xx))
      throw InvalidInput(fmt::format("two-pulse delay must be >= 0, got {}", tau_xx));
    if (!std::isfinite(center) || !std::isfinite(amplitude_scale))
      throw InvalidInput("pulse center and amplitude scale must be finite");
  }
};

/// Real, non-negative single-pulse amplitude F0(ω).
inline double single_pulse_amplitude(const PulsePair& p, double omega) {
  const double x = (omega - p.center) / p.sigma;
  return p.amplitude_scale * std::exp(-0.5 * x * x);
}

/// Two-cosine factor cos(π c ω τ) shared by the pair amplitude and the joint state.
inline double pair_interference(double omega, double tau_xx) {
  return std::cos(kPi * kSpeedOfLightCmPerFs * omega * tau_xx);
}

/// 2·F0(ω)·cos(π c ω τ).
inline std::complex<double> pair_amplitude(const PulsePair& p, double omega) {
  return {2.0 * single_pulse_amplitude(p, omega) * pair_interference(omega, p.tau_xx), 0.0};
}

/// Spacing of intensity maxima, 1/(c τ), in cm^-1.
inline double fringe_spacing(double tau_xx) {
  if (!(tau_xx > 0.0)) throw InvalidInput(fmt::format("fringe_spacing needs tau > 0, got {}", tau_xx));
  return 1.0 / (kSpeedOfLightCmPerFs * tau_xx);
}

/// |pair_amplitude|² sampled on a strictly increasing grid.
inline std::vector<double> spectrum_intensity(const PulsePair& p, std::span<const double> grid) {
  if (grid.empty()) throw InvalidInput("spectrum_intensity: empty grid");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw InvalidInput("spectrum_intensity: grid not strictly increasing");
  std::vector<double> out(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) out[i] = std::norm(pair_amplitude(p, grid[i]));
  return out;
}

}  // namespace attobeat
