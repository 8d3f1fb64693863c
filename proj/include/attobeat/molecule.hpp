#pragma once

// Vibrational level structure of the cation: anharmonic term values,
// populations and probe coupling weights.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "attobeat/error.hpp"

namespace attobeat {

struct VibrationalLevel {
  int v = 0;
  double energy = 0.0;        // cm^-1 above a common reference
  double population = 0.0;    // p_v
  double probe_weight = 1.0;  // d_v
};

/// Ordered set of vibrational levels. Immutable after construction.
///
/// Invariants: energies strictly increasing in v, nearest-neighbour gaps
/// non-increasing (anharmonic or harmonic), populations normalized to one,
/// probe weights finite and non-negative.
class VibrationalLevels {
 public:
  VibrationalLevels() = default;

  explicit VibrationalLevels(std::vector<VibrationalLevel> levels) : levels_(std::move(levels)) {
    if (levels_.empty()) throw InvalidInput("VibrationalLevels: no levels");
    std::sort(levels_.begin(), levels_.end(),
              [](const auto& a, const auto& b) { return a.v < b.v; });
    double total = 0.0;
    for (std::size_t i = 0; i < levels_.size(); ++i) {
      const auto& l = levels_[i];
      if (!std::isfinite(l.energy) || !std::isfinite(l.population) ||
          !std::isfinite(l.probe_weight))
        throw InvalidInput(fmt::format("level v={} has a non-finite field", l.v));
      if (l.population < 0.0 || l.probe_weight < 0.0)
        throw InvalidInput(fmt::format("level v={} has a negative weight", l.v));
      if (i > 0) {
        if (l.v == levels_[i - 1].v) throw InvalidInput(fmt::format("duplicate level v={}", l.v));
        if (l.energy <= levels_[i - 1].energy)
          throw InvalidInput(fmt::format("level energies not increasing at v={}", l.v));
      }
      if (i > 1) {
        const double gap = l.energy - levels_[i - 1].energy;
        const double prev = levels_[i - 1].energy - levels_[i - 2].energy;
        // Gaps are only comparable between consecutive quantum numbers.
        const bool consecutive = l.v == levels_[i - 1].v + 1 && levels_[i - 1].v == levels_[i - 2].v + 1;
        if (consecutive && gap > prev * (1.0 + 1e-12))
          throw InvalidInput(fmt::format("level gaps increase at v={}", l.v));
      }
      total += l.population;
    }
    if (!(total > 0.0)) throw InvalidInput("VibrationalLevels: populations sum to zero");
    for (auto& l : levels_) l.population /= total;
  }

  std::size_t size() const { return levels_.size(); }
  std::span<const VibrationalLevel> levels() const { return levels_; }
  const VibrationalLevel& operator[](std::size_t i) const { return levels_[i]; }

  bool contains(int v) const {
    return std::any_of(levels_.begin(), levels_.end(), [v](const auto& l) { return l.v == v; });
  }

  std::size_t index_of(int v) const {
    for (std::size_t i = 0; i < levels_.size(); ++i)
      if (levels_[i].v == v) return i;
    throw InvalidInput(fmt::format("unknown vibrational level v={}", v));
  }

  double energy(int v) const { return levels_[index_of(v)].energy; }

  VibrationalLevels with_populations(std::span<const double> p) const {
    if (p.size() != levels_.size())
      throw InvalidInput(fmt::format("expected {} populations, got {}", levels_.size(), p.size()));
    auto copy = levels_;
    for (std::size_t i = 0; i < copy.size(); ++i) copy[i].population = p[i];
    return VibrationalLevels(std::move(copy));
  }

  VibrationalLevels with_probe_weights(std::span<const double> d) const {
    if (d.size() != levels_.size())
      throw InvalidInput(fmt::format("expected {} probe weights, got {}", levels_.size(), d.size()));
    auto copy = levels_;
    for (std::size_t i = 0; i < copy.size(); ++i) copy[i].probe_weight = d[i];
    return VibrationalLevels(std::move(copy));
  }

 private:
  std::vector<VibrationalLevel> levels_;
};

/// Two-parameter anharmonic expansion G(v) = ωe(v+½) − ωexe(v+½)².
struct MorseConstants {
  double omega_e = 0.0;
  double omega_e_x_e = 0.0;
  int v_max = 0;

  double term(int v) const {
    const double h = v + 0.5;
    return omega_e * h - omega_e_x_e * h * h;
  }

  /// G(v+1) − G(v) = ωe − 2ωexe(v+1).
  double gap(int v) const { return omega_e - 2.0 * omega_e_x_e * (v + 1); }

  /// Highest v for which G is still increasing (capped for the harmonic case).
  static int highest_bound_level(double omega_e, double omega_e_x_e, int cap = 1000) {
    int v = 0;
    while (v < cap && omega_e - 2.0 * omega_e_x_e * (v + 1) > 0.0) ++v;
    return v;
  }

  void validate() const {
    if (!(omega_e > 0.0) || !std::isfinite(omega_e))
      throw InvalidInput(fmt::format("omega_e must be positive, got {}", omega_e));
    if (!(omega_e_x_e >= 0.0) || !std::isfinite(omega_e_x_e))
      throw InvalidInput(fmt::format("omega_e_x_e must be non-negative, got {}", omega_e_x_e));
    if (v_max < 1) throw InvalidInput("v_max must be at least 1");
  }
};

/// Levels v_lo..v_hi with E_v = G(v), uniform populations and unit probe weights.
inline VibrationalLevels levels_from_morse(const MorseConstants& c, int v_lo, int v_hi) {
  c.validate();
  if (v_lo < 0 || v_lo >= v_hi || v_hi > c.v_max)
    throw InvalidInput(
        fmt::format("level range [{}, {}] outside 0 <= v_lo < v_hi <= {}", v_lo, v_hi, c.v_max));
  std::vector<VibrationalLevel> levels;
  for (int v = v_lo; v <= v_hi; ++v) {
    if (v > v_lo && !(c.gap(v - 1) > 0.0))
      throw InvalidInput(fmt::format("G(v) is not increasing at v={} (gap {:.4f})", v, c.gap(v - 1)));
    levels.push_back({v, c.term(v), 1.0, 1.0});
  }
  return VibrationalLevels(std::move(levels));
}

/// |E_v − E_v'| in cm^-1.
inline double beat_energy(const VibrationalLevels& lv, int v, int vp) {
  return std::abs(lv.energy(v) - lv.energy(vp));
}

struct LevelGap {
  int v = 0;
  int vp = 0;
  double delta_e = 0.0;  // cm^-1
  double sigma = 0.0;    // optional 1σ uncertainty; 0 means unweighted
};

struct BirgeSponerFit {
  MorseConstants constants;
  double residual_rms = 0.0;  // cm^-1
  std::vector<double> residuals;
  Eigen::Matrix2d covariance = Eigen::Matrix2d::Zero();
};

/// Least-squares (ωe, ωexe) from level gaps of arbitrary order.
///
/// G(v') − G(v) = (v'−v)·[ωe − ωexe(v+v'+1)], linear in both constants.
/// Gaps with a positive sigma are weighted by 1/σ².
inline BirgeSponerFit birge_sponer_fit(std::span<const LevelGap> gaps) {
  if (gaps.size() < 2) throw InvalidInput("birge_sponer_fit needs at least two gaps");
  const Eigen::Index n = static_cast<Eigen::Index>(gaps.size());
  Eigen::MatrixXd design(n, 2);
  Eigen::VectorXd rhs(n), weight(n);
  bool all_weighted = true;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& g = gaps[i];
    if (g.v == g.vp) throw InvalidInput("birge_sponer_fit: gap between identical levels");
    const int lo = std::min(g.v, g.vp);
    const int hi = std::max(g.v, g.vp);
    const double dv = hi - lo;
    design(i, 0) = dv;
    design(i, 1) = -dv * (lo + hi + 1);
    rhs(i) = std::abs(g.delta_e);
    weight(i) = g.sigma > 0.0 ? 1.0 / g.sigma : 1.0;
    all_weighted = all_weighted && g.sigma > 0.0;
  }
  const double first_mid = 0.5 * (gaps[0].v + gaps[0].vp);
  const bool same_midpoint = std::all_of(gaps.begin(), gaps.end(), [&](const LevelGap& g) {
    return 0.5 * (g.v + g.vp) == first_mid;
  });
  if (same_midpoint)
    throw InvalidInput("birge_sponer_fit: all gaps share the same v-midpoint (rank deficient)");

  const Eigen::MatrixXd wa = weight.asDiagonal() * design;
  const Eigen::VectorXd wb = weight.asDiagonal() * rhs;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(wa);
  if (qr.rank() < 2) throw InvalidInput("birge_sponer_fit: rank-deficient gap set");
  const Eigen::Vector2d x = qr.solve(wb);

  BirgeSponerFit out;
  out.constants.omega_e = x(0);
  out.constants.omega_e_x_e = x(1);
  out.constants.v_max = MorseConstants::highest_bound_level(x(0), std::max(x(1), 0.0));
  const Eigen::VectorXd r = rhs - design * x;
  out.residuals.assign(r.data(), r.data() + r.size());
  out.residual_rms = std::sqrt(r.squaredNorm() / static_cast<double>(n));
  const Eigen::Matrix2d normal_inv = (wa.transpose() * wa).inverse();
  // Known σ: covariance is (AᵀWA)⁻¹. Otherwise scale by the residual variance.
  const double dof = static_cast<double>(n) - 2.0;
  const double scale =
      all_weighted ? 1.0 : (dof > 0 ? (weight.asDiagonal() * r).squaredNorm() / dof : 0.0);
  out.covariance = normal_inv * scale;
  return out;
}

}  // namespace attobeat
