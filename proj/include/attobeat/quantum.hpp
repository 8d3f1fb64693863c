#pragma once

// Joint ion + photoelectron state created by the pulse pair, its reduction to
// the ionic density matrix, and the coherence / entanglement measures built on it.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "attobeat/error.hpp"
#include "attobeat/molecule.hpp"
#include "attobeat/optics.hpp"
#include "attobeat/parallel.hpp"
#include "attobeat/units.hpp"

namespace attobeat {

/// Photoelectron energy grid. By default the grid is derived from the pulse and
/// the levels; eps_min/eps_max/step force an explicit grid.
struct EnergyGridSpec {
  double ionization_energy = 124417.5;  // reference offset added to every E_v, cm^-1
  double half_width_sigmas = 6.5;
  double points_per_fringe = 16.0;
  std::optional<double> eps_min;
  std::optional<double> eps_max;
  std::optional<double> step;
};

/// ψ_{vε} sampled on a uniform photoelectron-energy grid.
struct JointState {
  VibrationalLevels levels;
  double ip_ref = 0.0;
  double eps_min = 0.0;
  double eps_step = 0.0;
  double tau_xx = 0.0;
  Eigen::MatrixXcd amps;  // levels × grid points

  Eigen::Index grid_size() const { return amps.cols(); }
  double eps(Eigen::Index i) const { return eps_min + eps_step * static_cast<double>(i); }
};

namespace detail {

// Envelope of ψ relative to its peak, for the tail criterion.
inline double envelope_ratio(double omega, const PulsePair& p) {
  const double x = (omega - p.center) / p.sigma;
  return std::exp(-0.5 * x * x);
}

}  // namespace detail

inline constexpr double kTailTolerance = 1e-8;

/// ψ_{vε} = √p_v · F0(ε + E_v) · cos(π c (ε + E_v) τ), with E_v including ip_ref.
inline JointState build_joint_state(const VibrationalLevels& lv, const PulsePair& p,
                                    const EnergyGridSpec& spec = {}) {
  p.validate();
  if (lv.size() == 0) throw InvalidInput("build_joint_state: no levels");
  const double ip = spec.ionization_energy;
  const double e_lo = ip + lv[0].energy;
  const double e_hi = ip + lv[lv.size() - 1].energy;

  double eps_min = p.center - e_hi - spec.half_width_sigmas * p.sigma;
  double eps_max = p.center - e_lo + spec.half_width_sigmas * p.sigma;
  if (spec.eps_min) eps_min = *spec.eps_min;
  if (spec.eps_max) eps_max = *spec.eps_max;
  if (!(eps_max > eps_min)) throw InvalidInput("build_joint_state: empty energy grid");

  double step = p.sigma / 8.0;
  if (p.tau_xx > 0.0)
    step = std::min(step, 1.0 / (spec.points_per_fringe * kSpeedOfLightCmPerFs * p.tau_xx));
  if (spec.step) step = *spec.step;
  if (!(step > 0.0)) throw InvalidInput("build_joint_state: grid step must be positive");
  const auto n = static_cast<Eigen::Index>(std::ceil((eps_max - eps_min) / step)) + 1;
  if (n < 3) throw InvalidInput("build_joint_state: grid needs at least 3 points");
  if (n > 20'000'000) throw InvalidInput(fmt::format("build_joint_state: grid of {} points is too large", n));
  step = (eps_max - eps_min) / static_cast<double>(n - 1);

  for (const auto& level : lv.levels()) {
    if (level.population == 0.0) continue;
    const double e = ip + level.energy;
    const double lo = detail::envelope_ratio(eps_min + e, p);
    const double hi = detail::envelope_ratio(eps_max + e, p);
    if (lo >= kTailTolerance || hi >= kTailTolerance)
      throw InvalidInput(fmt::format(
          "energy grid too narrow for v={}: tail amplitude {:.3g} / {:.3g} of peak (need < {:g})",
          level.v, lo, hi, kTailTolerance));
  }

  JointState js;
  js.levels = lv;
  js.ip_ref = ip;
  js.eps_min = eps_min;
  js.eps_step = step;
  js.tau_xx = p.tau_xx;
  js.amps.resize(static_cast<Eigen::Index>(lv.size()), n);
  for (std::size_t k = 0; k < lv.size(); ++k) {
    const double amp = std::sqrt(lv[k].population);
    const double e = ip + lv[k].energy;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double omega = js.eps(i) + e;
      js.amps(static_cast<Eigen::Index>(k), i) =
          amp * single_pulse_amplitude(p, omega) * pair_interference(omega, p.tau_xx);
    }
  }
  return js;
}

/// Reduced ionic density matrix ρ_{vv'}. Trace one, Hermitian, positive semidefinite.
class IonDensityMatrix {
 public:
  static constexpr double kHermitianTol = 1e-12;
  static constexpr double kEigenFloor = -1e-10;

  IonDensityMatrix() = default;

  /// Wraps a raw matrix: symmetrizes, trace-normalizes and validates.
  static IonDensityMatrix from_matrix(const Eigen::MatrixXcd& rho, VibrationalLevels levels) {
    if (rho.rows() != rho.cols() || rho.rows() != static_cast<Eigen::Index>(levels.size()))
      throw InvalidInput("density matrix shape does not match the level set");
    if ((rho - rho.adjoint()).cwiseAbs().maxCoeff() > kHermitianTol * std::max(1.0, rho.cwiseAbs().maxCoeff()))
      throw InvalidInput("density matrix is not Hermitian");
    const double tr = rho.trace().real();
    if (!(std::abs(tr) > 0.0) || !std::isfinite(tr)) throw NumericalFailure("density matrix has zero trace");
    IonDensityMatrix out;
    out.rho_ = 0.5 * (rho + rho.adjoint()) / tr;
    out.levels_ = std::move(levels);
    out.check_positive();
    return out;
  }

  const Eigen::MatrixXcd& matrix() const { return rho_; }
  const VibrationalLevels& levels() const { return levels_; }
  Eigen::Index dim() const { return rho_.rows(); }

  std::complex<double> operator()(int v, int vp) const {
    return rho_(static_cast<Eigen::Index>(levels_.index_of(v)), static_cast<Eigen::Index>(levels_.index_of(vp)));
  }

  Eigen::VectorXd eigenvalues() const {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rho_, Eigen::EigenvaluesOnly);
    return es.eigenvalues();
  }

  Eigen::VectorXd populations() const { return rho_.diagonal().real(); }

  void check_positive() const {
    const double lo = eigenvalues().minCoeff();
    if (lo < kEigenFloor)
      throw InvalidInput(fmt::format("density matrix not positive semidefinite (min eigenvalue {:.3g})", lo));
  }

 private:
  Eigen::MatrixXcd rho_;
  VibrationalLevels levels_;
};

/// ρ_{vv'} = ∫dε ψ_{vε} ψ*_{v'ε} by the trapezoid rule, trace-normalized.
inline IonDensityMatrix reduce(const JointState& js) {
  const Eigen::Index n = js.grid_size();
  if (n < 2 || js.amps.rows() != static_cast<Eigen::Index>(js.levels.size()))
    throw InvalidInput("reduce: malformed joint state");
  Eigen::VectorXd w = Eigen::VectorXd::Constant(n, js.eps_step);
  w(0) *= 0.5;
  w(n - 1) *= 0.5;
  const Eigen::MatrixXcd weighted = js.amps * w.asDiagonal();
  const Eigen::MatrixXcd rho = weighted * js.amps.adjoint();
  const double tr = rho.trace().real();
  if (!(tr > 0.0)) throw NumericalFailure("reduce: zero trace (no amplitude on the grid)");
  return IonDensityMatrix::from_matrix(rho, js.levels);
}

/// g = |ρ_{vv'}| / sqrt(ρ_vv ρ_v'v').
inline double coherence(const IonDensityMatrix& rho, int v, int vp) {
  const double a = rho(v, v).real();
  const double b = rho(vp, vp).real();
  if (!(a > 0.0) || !(b > 0.0))
    throw InvalidInput(fmt::format("coherence({}, {}): zero diagonal element", v, vp));
  return std::min(1.0, std::abs(rho(v, vp)) / std::sqrt(a * b));
}

/// Re ρ_{vv'} / sqrt(ρ_vv ρ_v'v'). Changes sign where the real-amplitude envelope crosses zero.
inline double signed_coherence(const IonDensityMatrix& rho, int v, int vp) {
  const double a = rho(v, v).real();
  const double b = rho(vp, vp).real();
  if (!(a > 0.0) || !(b > 0.0))
    throw InvalidInput(fmt::format("coherence({}, {}): zero diagonal element", v, vp));
  return rho(v, vp).real() / std::sqrt(a * b);
}

inline double purity(const IonDensityMatrix& rho) {
  rho.check_positive();
  return (rho.matrix() * rho.matrix()).trace().real();
}

/// Von Neumann entropy in nats, 0·ln 0 := 0.
inline double entropy(const IonDensityMatrix& rho) {
  rho.check_positive();
  double s = 0.0;
  for (double lam : rho.eigenvalues())
    if (lam > 0.0) s -= lam * std::log(lam);
  return s;
}

using LevelPair = std::pair<int, int>;

struct CoherenceRow {
  double tau_xx = 0.0;
  std::vector<double> g;         // one per requested pair
  std::vector<double> signed_g;  // same, with sign
  std::vector<double> populations;
  double purity = 0.0;
  double entropy = 0.0;
};

struct CoherenceScan {
  std::vector<LevelPair> pairs;
  std::vector<CoherenceRow> rows;
};

inline IonDensityMatrix density_at(const VibrationalLevels& lv, const PulsePair& tmpl, double tau,
                                   const EnergyGridSpec& grid = {}) {
  return reduce(build_joint_state(lv, tmpl.with_delay(tau), grid));
}

/// One row per delay, computed in parallel; row order follows `taus`.
inline CoherenceScan coherence_scan(const VibrationalLevels& lv, const PulsePair& tmpl,
                                    std::span<const double> taus, std::span<const LevelPair> pairs,
                                    const EnergyGridSpec& grid = {}, unsigned threads = 1) {
  if (taus.empty()) throw InvalidInput("coherence_scan: empty delay list");
  for (double t : taus)
    if (!(t >= 0.0)) throw InvalidInput(fmt::format("coherence_scan: negative delay {}", t));
  for (const auto& [v, vp] : pairs) {
    lv.index_of(v);
    lv.index_of(vp);
  }
  CoherenceScan out;
  out.pairs.assign(pairs.begin(), pairs.end());
  out.rows.resize(taus.size());
  parallel_for(taus.size(), threads, [&](std::size_t i) {
    const auto rho = density_at(lv, tmpl, taus[i], grid);
    CoherenceRow row;
    row.tau_xx = taus[i];
    for (const auto& [v, vp] : pairs) {
      row.g.push_back(coherence(rho, v, vp));
      row.signed_g.push_back(signed_coherence(rho, v, vp));
    }
    const Eigen::VectorXd pop = rho.populations();
    row.populations.assign(pop.data(), pop.data() + pop.size());
    row.purity = purity(rho);
    row.entropy = entropy(rho);
    out.rows[i] = std::move(row);
  });
  return out;
}

/// Delays at which the coherence of `pair` vanishes, located by sign changes of
/// the signed coherence on the scan grid and refined by bisection.
inline std::vector<double> coherence_zeros(const VibrationalLevels& lv, const PulsePair& tmpl,
                                           const CoherenceScan& scan, std::size_t pair_index,
                                           const EnergyGridSpec& grid = {}, double tol_fs = 1e-7) {
  if (pair_index >= scan.pairs.size()) throw InvalidInput("coherence_zeros: pair index out of range");
  const auto [v, vp] = scan.pairs[pair_index];
  auto f = [&](double tau) { return signed_coherence(density_at(lv, tmpl, tau, grid), v, vp); };
  std::vector<double> zeros;
  for (std::size_t i = 0; i + 1 < scan.rows.size(); ++i) {
    double a = scan.rows[i].tau_xx, b = scan.rows[i + 1].tau_xx;
    double fa = scan.rows[i].signed_g[pair_index], fb = scan.rows[i + 1].signed_g[pair_index];
    if (fa == 0.0) {
      zeros.push_back(a);
      continue;
    }
    if (fa * fb > 0.0) continue;
    if (fb == 0.0) continue;  // picked up as the next row's left end
    for (int it = 0; it < 200 && b - a > tol_fs; ++it) {
      const double m = 0.5 * (a + b);
      const double fm = f(m);
      if (fm == 0.0) {
        a = b = m;
        break;
      }
      if ((fm > 0.0) == (fa > 0.0)) {
        a = m;
        fa = fm;
      } else {
        b = m;
      }
    }
    zeros.push_back(0.5 * (a + b));
  }
  if (!scan.rows.empty() && scan.rows.back().signed_g[pair_index] == 0.0) zeros.push_back(scan.rows.back().tau_xx);
  return zeros;
}

}  // namespace attobeat
