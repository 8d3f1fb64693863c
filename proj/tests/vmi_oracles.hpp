#pragma once

// Independent oracles for the VMI operator, shared by the unit and acceptance suites.

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "attobeat/vmi.hpp"

namespace attobeat::oracle {

inline double gauss(double x, double mu, double s) { return std::exp(-0.5 * (x - mu) * (x - mu) / (s * s)); }

inline double hat(double s, double node) { return std::max(0.0, 1.0 - std::abs(s - node)); }

// Shells of the given (centre, width, weight) with l-content beta[l/2] relative to l = 0.
inline LegendreDist3D shells(int r_max, int l_max, std::vector<std::array<double, 3>> peaks, std::vector<double> beta) {
  LegendreDist3D a(r_max, l_max);
  for (int r = 1; r <= r_max; ++r) {
    double f = 0.0;
    for (const auto& [mu, s, w] : peaks) f += w * gauss(r, mu, s);
    for (int l = 0; l <= l_max; l += 2) {
      const auto i = static_cast<std::size_t>(l / 2);
      a.at(r, l) = f * (i < beta.size() ? beta[i] : 0.0);
    }
  }
  return a;
}

// Chord integral 2∫_0^∞ f(√(ρ²+y²), z/s) dy of a continuous 3D density.
template <class F>
inline double chord(F f, double x, double z, double y_max) {
  const double rho2 = x * x + z * z;
  auto g = [&](double y) {
    const double s = std::sqrt(rho2 + y * y);
    return s > 0.0 ? f(s, z / s) : f(0.0, 1.0);
  };
  return 2.0 * boost::math::quadrature::gauss_kronrod<double, 31>::integrate(g, 0.0, y_max, 10, 1e-11);
}

inline double rel_rms(const Eigen::VectorXd& got, const Eigen::VectorXd& want) { return (got - want).norm() / want.norm(); }

// Relative RMS between the operator's projection of a P2-weighted Gaussian shell
// (R = 80, l_max = 4) and a Monte Carlo histogram of `n` 3D samples, compared as
// annulus-averaged Legendre coefficients in 2-pixel rings. The 3D density is
// a0(s)·(1 + 2 P2(u)) = 3u²·a0(s) with a0 hat-interpolated from the shell.
inline double monte_carlo_projection_error(long n, std::uint64_t seed) {
  const int R = 80, L = 4;
  const auto op = AbelOperator::build(R, L);
  const auto a = shells(R, L, {{40, 6, 1}}, {1.0, 2.0});
  const auto b = op.project(a);
  auto a0 = [&](double s) {
    const int k = static_cast<int>(std::floor(s));
    double v = 0.0;
    if (k >= 1 && k <= R) v += (1.0 - (s - k)) * a.at(k, 0);
    if (k + 1 >= 1 && k + 1 <= R) v += (s - k) * a.at(k + 1, 0);
    return v;
  };
  double norm = 0.0, bound = 0.0;
  const int fine = 40000;
  for (int i = 0; i < fine; ++i) {
    const double s = (i + 0.5) * (R + 1.0) / fine;
    norm += 4.0 * kPi * s * s * a0(s) * (R + 1.0) / fine;
    bound = std::max(bound, s * s * a0(s));
  }
  bound *= 1.01;

  const double width = 2.0;
  const int bins = static_cast<int>(std::ceil((R + 1.0) / width));
  Eigen::MatrixXd moments = Eigen::MatrixXd::Zero(bins, L / 2 + 1);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (long k = 0; k < n;) {
    const double s = (R + 1.0) * uni(rng);
    if (uni(rng) * bound > s * s * a0(s)) continue;
    ++k;
    const double u = std::cbrt(2.0 * uni(rng) - 1.0);
    const double phi = 2.0 * kPi * uni(rng);
    const double x = s * std::sqrt(std::max(0.0, 1.0 - u * u)) * std::cos(phi), z = s * u;
    const double rho = std::hypot(x, z);
    const int bin = std::min(bins - 1, static_cast<int>(rho / width));
    const double c = rho > 0 ? z / rho : 1.0;
    for (int l = 0; l <= L; l += 2) moments(bin, l / 2) += std::legendre(static_cast<unsigned>(l), c);
  }
  moments *= norm / static_cast<double>(n);

  // Angular Gram matrix over the full detector circle: ∫ P_l P_l' dθ.
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(L / 2 + 1, L / 2 + 1);
  const int nt = 4096;
  for (int t = 0; t < nt; ++t) {
    const double c = std::cos(2.0 * kPi * (t + 0.5) / nt);
    for (int i = 0; i <= L / 2; ++i)
      for (int j = 0; j <= L / 2; ++j)
        gram(i, j) += std::legendre(2u * i, c) * std::legendre(2u * j, c) * 2.0 * kPi / nt;
  }
  const Eigen::MatrixXd gram_inv = gram.inverse();

  // Area-averaged b over each annulus, from the operator and from the samples.
  Eigen::VectorXd want(bins * (L / 2 + 1)), got(bins * (L / 2 + 1));
  for (int k = 0; k < bins; ++k) {
    const double lo = k * width, hi = std::min((k + 1) * width, R + 1.0);
    const double area = 0.5 * (hi * hi - lo * lo);
    Eigen::VectorXd mean_b = Eigen::VectorXd::Zero(L / 2 + 1);
    const int sub = 200;
    for (int l = 0; l <= L; l += 2) {
      double acc = 0.0;
      for (int q = 0; q < sub; ++q) {
        const double rho = lo + (q + 0.5) * (hi - lo) / sub;
        const int nd = static_cast<int>(std::floor(rho));
        double c = 0.0;
        if (nd == 0 && l == 0) c = b.at(1, 0);
        else {
          if (nd >= 1 && nd <= R) c += (1.0 - (rho - nd)) * b.at(nd, l);
          if (nd + 1 <= R) c += (rho - nd) * b.at(nd + 1, l);
        }
        acc += rho * c * (hi - lo) / sub;
      }
      mean_b(l / 2) = acc / area;
    }
    const Eigen::VectorXd mc = gram_inv * moments.row(k).transpose() / area;
    want.segment(k * (L / 2 + 1), L / 2 + 1) = mean_b;
    got.segment(k * (L / 2 + 1), L / 2 + 1) = mc;
  }
  return rel_rms(got, want);
}

}  // namespace attobeat::oracle
