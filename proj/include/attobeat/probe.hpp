#pragma once

// Delayed-probe model: converts the ionic density matrix into β0/β2/β4 maps
// over fragment velocity (detector pixels) and pump-probe delay.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "attobeat/error.hpp"
#include "attobeat/molecule.hpp"
#include "attobeat/quantum.hpp"
#include "attobeat/units.hpp"

namespace attobeat {

/// Time-independent low-momentum channel used for normalization.
struct StaticBand {
  double center = 20.0;  // px
  double width = 6.0;    // px
  double amplitude = 0.5;
};

/// Per-level Gaussian velocity kernels K_v(x) and the static band.
struct ProbeKernel {
  std::vector<double> v_grid;   // pixel radii
  std::vector<double> centers;  // μ_v, same order as the levels
  std::vector<double> widths;   // s_v
  std::vector<double> weights;  // d_v
  StaticBand static_band;

  std::size_t channels() const { return centers.size(); }

  double level(std::size_t k, double x) const {
    const double u = (x - centers[k]) / widths[k];
    return std::exp(-0.5 * u * u);
  }

  /// Geometric-mean kernel of channels j and k.
  double cross(std::size_t j, std::size_t k, double x) const { return std::sqrt(level(j, x) * level(k, x)); }

  double static_signal(double x) const {
    if (static_band.amplitude == 0.0) return 0.0;
    const double u = (x - static_band.center) / static_band.width;
    return static_band.amplitude * std::exp(-0.5 * u * u);
  }

  void validate() const {
    if (v_grid.size() < 2) throw InvalidInput("probe kernel: velocity grid needs at least two pixels");
    if (widths.size() != centers.size() || weights.size() != centers.size())
      throw InvalidInput("probe kernel: centers/widths/weights size mismatch");
    for (std::size_t k = 0; k < centers.size(); ++k) {
      if (!(widths[k] > 0.0)) throw InvalidInput("probe kernel: widths must be positive");
      if (!(weights[k] >= 0.0) || !std::isfinite(weights[k]))
        throw InvalidInput("probe kernel: weights must be finite and non-negative");
      if (k > 0 && !(centers[k] > centers[k - 1]))
        throw InvalidInput("probe kernel: centers must increase with v");
    }
    if (!(static_band.width > 0.0) || static_band.amplitude < 0.0)
      throw InvalidInput("probe kernel: invalid static band");
  }
};

struct KernelLayout {
  double first_center = 60.0;  // μ of the lowest level, px
  double spacing = 6.0;        // px between consecutive levels
  double width = 8.0;          // s_v, px
  StaticBand static_band;
};

/// Evenly spaced pixel radii 1..r_max.
inline std::vector<double> pixel_grid(int r_max) {
  std::vector<double> g(static_cast<std::size_t>(r_max));
  for (int r = 1; r <= r_max; ++r) g[static_cast<std::size_t>(r - 1)] = r;
  return g;
}

inline ProbeKernel make_kernel(const VibrationalLevels& lv, std::vector<double> v_grid,
                               const KernelLayout& layout = {}) {
  ProbeKernel k;
  k.v_grid = std::move(v_grid);
  k.static_band = layout.static_band;
  for (std::size_t i = 0; i < lv.size(); ++i) {
    k.centers.push_back(layout.first_center + layout.spacing * static_cast<double>(i));
    k.widths.push_back(layout.width);
    k.weights.push_back(lv[i].probe_weight);
  }
  k.validate();
  return k;
}

namespace detail {

inline void require_uniform(std::span<const double> grid, const char* what) {
  if (grid.size() < 2) throw InvalidInput(fmt::format("{} grid needs at least two points", what));
  const double step = grid[1] - grid[0];
  if (!(step > 0.0)) throw InvalidInput(fmt::format("{} grid must be increasing", what));
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (std::abs((grid[i] - grid[i - 1]) - step) > 1e-9 * std::max(1.0, std::abs(step)))
      throw InvalidInput(fmt::format("{} grid is not uniform", what));
}

struct BeatTerm {
  std::size_t j, k;
  double delta_e;  // E_k − E_j > 0
  double magnitude;
  double phase;
};

inline std::vector<BeatTerm> beat_terms(const IonDensityMatrix& rho) {
  std::vector<BeatTerm> terms;
  const auto& lv = rho.levels();
  for (std::size_t j = 0; j < lv.size(); ++j)
    for (std::size_t k = j + 1; k < lv.size(); ++k) {
      const auto c = rho.matrix()(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k));
      terms.push_back({j, k, lv[k].energy - lv[j].energy, std::abs(c), std::arg(c)});
    }
  return terms;
}

// Incoherent (beat-free) part of β0 at every pixel.
inline Eigen::VectorXd incoherent_beta0(const IonDensityMatrix& rho, const ProbeKernel& k) {
  const auto nx = static_cast<Eigen::Index>(k.v_grid.size());
  Eigen::VectorXd out(nx);
  for (Eigen::Index ix = 0; ix < nx; ++ix) {
    const double x = k.v_grid[static_cast<std::size_t>(ix)];
    double s = k.static_signal(x);
    for (std::size_t j = 0; j < k.channels(); ++j)
      s += rho.matrix()(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j)).real() * k.weights[j] *
           k.weights[j] * k.level(j, x);
    out(ix) = s;
  }
  return out;
}

// Interference part of β0 over (pixel × delay).
inline Eigen::MatrixXd interference_beta0(const IonDensityMatrix& rho, const ProbeKernel& k,
                                          std::span<const double> tau_ni) {
  const auto nx = static_cast<Eigen::Index>(k.v_grid.size());
  const auto nt = static_cast<Eigen::Index>(tau_ni.size());
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(nx, nt);
  for (const auto& term : beat_terms(rho)) {
    if (term.magnitude == 0.0) continue;
    Eigen::VectorXd spatial(nx);
    for (Eigen::Index ix = 0; ix < nx; ++ix)
      spatial(ix) = 2.0 * k.weights[term.j] * k.weights[term.k] * term.magnitude *
                    k.cross(term.j, term.k, k.v_grid[static_cast<std::size_t>(ix)]);
    Eigen::RowVectorXd temporal(nt);
    for (Eigen::Index it = 0; it < nt; ++it)
      temporal(it) = std::cos(beat_phase(term.delta_e, tau_ni[static_cast<std::size_t>(it)]) + term.phase);
    out.noalias() += spatial * temporal;
  }
  return out;
}

}  // namespace detail

/// β0(x, τ) = static(x) + Σ ρ_vv d_v² K_v(x) + 2 Σ_{v<v'} d_v d_v' |ρ_vv'| K_vv'(x) cos(2π c ΔE τ + arg ρ_vv').
inline Eigen::MatrixXd simulate_beta0(const IonDensityMatrix& rho, const ProbeKernel& k,
                                      std::span<const double> tau_ni) {
  k.validate();
  if (k.channels() != static_cast<std::size_t>(rho.dim()))
    throw InvalidInput(fmt::format("probe kernel has {} channels but the density matrix has {} levels",
                                   k.channels(), rho.dim()));
  detail::require_uniform(tau_ni, "pump-probe delay");
  detail::require_uniform(k.v_grid, "velocity");
  const auto& lv = rho.levels();
  if (lv.size() > 1) {
    double min_gap = lv[1].energy - lv[0].energy;
    for (std::size_t i = 2; i < lv.size(); ++i) min_gap = std::min(min_gap, lv[i].energy - lv[i - 1].energy);
    const double span = tau_ni.back() - tau_ni.front();
    if (span < period_fs(min_gap))
      throw InvalidInput(fmt::format("delay grid spans {:.1f} fs, less than one beat period ({:.1f} fs)", span,
                                     period_fs(min_gap)));
  }
  Eigen::MatrixXd beta0 = detail::interference_beta0(rho, k, tau_ni);
  beta0.colwise() += detail::incoherent_beta0(rho, k);
  // u†ρ(τ)u >= 0 analytically; clear round-off below zero.
  return beta0.cwiseMax(0.0);
}

/// Base anisotropy profile plus the depth with which the beat structure modulates it.
struct AnisotropyProfile {
  std::vector<double> base;
  std::vector<double> modulation;

  static AnisotropyProfile constant(std::size_t n, double base, double modulation = 0.0) {
    return {std::vector<double>(n, base), std::vector<double>(n, modulation)};
  }
};

struct BetaScan {
  double tau_xx = 0.0;
  std::vector<double> tau_ni;
  std::vector<double> v_grid;
  Eigen::MatrixXd beta0;  // pixels × delays
  Eigen::MatrixXd beta2;
  Eigen::MatrixXd beta4;
};

/// Full β0/β2/β4 scan. β2 and β4 follow base(x) + modulation(x)·m(x, τ) where m is
/// the interference part of β0 relative to its incoherent part; β2 is kept in [−1, 2].
inline BetaScan simulate_scan(const IonDensityMatrix& rho, const ProbeKernel& k, std::span<const double> tau_ni,
                              const AnisotropyProfile& beta2, const AnisotropyProfile& beta4,
                              double tau_xx = 0.0) {
  const std::size_t nx = k.v_grid.size();
  for (const auto* p : {&beta2, &beta4})
    if (p->base.size() != nx || p->modulation.size() != nx)
      throw InvalidInput("anisotropy profile is not defined on the velocity grid");

  BetaScan scan;
  scan.tau_xx = tau_xx;
  scan.tau_ni.assign(tau_ni.begin(), tau_ni.end());
  scan.v_grid = k.v_grid;
  scan.beta0 = simulate_beta0(rho, k, tau_ni);
  const Eigen::VectorXd inc = detail::incoherent_beta0(rho, k);
  const double floor = 1e-12 * std::max(inc.maxCoeff(), 1e-300);
  const auto nt = static_cast<Eigen::Index>(tau_ni.size());
  scan.beta2.resize(static_cast<Eigen::Index>(nx), nt);
  scan.beta4.resize(static_cast<Eigen::Index>(nx), nt);
  for (Eigen::Index ix = 0; ix < static_cast<Eigen::Index>(nx); ++ix) {
    const auto i = static_cast<std::size_t>(ix);
    for (Eigen::Index it = 0; it < nt; ++it) {
      const double m = inc(ix) > floor ? (scan.beta0(ix, it) - inc(ix)) / inc(ix) : 0.0;
      scan.beta2(ix, it) = std::clamp(beta2.base[i] + beta2.modulation[i] * m, -1.0, 2.0);
      scan.beta4(ix, it) = beta4.base[i] + beta4.modulation[i] * m;
    }
  }
  return scan;
}

/// P(θ) = β0·(1 + β2 P2(cos θ) + β4 P4(cos θ)) at one (pixel, delay) cell.
struct AngularDistribution {
  double beta0 = 0.0;
  double beta2 = 0.0;
  double beta4 = 0.0;
  bool clipped = false;  // true when the raw expansion goes negative somewhere
  std::string diagnostic;

  double raw(double theta) const {
    const double u = std::cos(theta);
    return beta0 * (1.0 + beta2 * std::legendre(2, u) + beta4 * std::legendre(4, u));
  }
  double operator()(double theta) const { return std::max(0.0, raw(theta)); }
};

inline AngularDistribution momentum_distribution(const BetaScan& scan, double x, double tau) {
  auto locate = [](const std::vector<double>& grid, double value, const char* what) {
    for (std::size_t i = 0; i < grid.size(); ++i)
      if (std::abs(grid[i] - value) <= 1e-9 * std::max(1.0, std::abs(value))) return static_cast<Eigen::Index>(i);
    throw InvalidInput(fmt::format("{} {} is not on the scan grid", what, value));
  };
  const Eigen::Index ix = locate(scan.v_grid, x, "velocity");
  const Eigen::Index it = locate(scan.tau_ni, tau, "delay");
  AngularDistribution d{scan.beta0(ix, it), scan.beta2(ix, it), scan.beta4(ix, it)};
  double lowest = 0.0;
  constexpr int kSamples = 721;
  for (int i = 0; i < kSamples; ++i) lowest = std::min(lowest, d.raw(kPi * i / (kSamples - 1)));
  if (lowest < -1e-12 * std::abs(d.beta0)) {
    d.clipped = true;
    d.diagnostic = fmt::format("P(theta) negative (min {:.3g}) at x={} tau={}; clipped to 0", lowest, x, tau);
  }
  return d;
}

}  // namespace attobeat
