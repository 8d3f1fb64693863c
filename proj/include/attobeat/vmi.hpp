#pragma once

// Velocity-map imaging: Legendre-expanded 3D distributions, their Abel
// projection b = M a onto the detector, synthetic detector frames with shot
// noise, and inversion of frames back to 3D coefficients via a = M⁻¹ b.
//
// Radial basis: hat functions centred on integer pixel radii 1..R_max (value
// zero at the origin and beyond R_max + 1; rendered frames hold the projected
// l = 0 term flat inside the first pixel instead). Angular basis: even Legendre
// polynomials up to l_max. The same basis describes the 3D distribution (a)
// and the 2D projection (b); the projection of P_l(cos θ3) content only ever
// produces 2D angular content of order <= l, so M is exact in l.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <type_traits>
#include <vector>

#include <fmt/format.h>

#include "attobeat/error.hpp"
#include "attobeat/units.hpp"

namespace attobeat {

struct Dist3DTag {};
struct Dist2DTag {};

/// Coefficients c_{r,l} on radius nodes r = 1..r_max and even l = 0..l_max.
/// Stored as an r_max × (l_max/2 + 1) matrix; row r−1, column l/2.
template <class Tag>
struct RadialLegendre {
  int r_max = 0;
  int l_max = 0;
  Eigen::MatrixXd values;

  RadialLegendre() = default;
  RadialLegendre(int r_max_, int l_max_)
      : r_max(r_max_), l_max(l_max_), values(Eigen::MatrixXd::Zero(r_max_, l_max_ / 2 + 1)) {}

  int orders() const { return l_max / 2 + 1; }
  Eigen::Index size() const { return values.size(); }
  double& at(int r, int l) { return values(r - 1, l / 2); }
  double at(int r, int l) const { return values(r - 1, l / 2); }

  /// Flat layout: index = (l/2)·r_max + (r−1).
  Eigen::VectorXd flatten() const { return Eigen::Map<const Eigen::VectorXd>(values.data(), values.size()); }

  static RadialLegendre from_flat(int r_max_, int l_max_, const Eigen::VectorXd& flat) {
    RadialLegendre out(r_max_, l_max_);
    if (flat.size() != out.size()) throw InvalidInput("coefficient vector has the wrong length");
    out.values = Eigen::Map<const Eigen::MatrixXd>(flat.data(), r_max_, l_max_ / 2 + 1);
    return out;
  }

  /// Σ_l c(v) P_l(cos θ) with c(v) hat-interpolated between nodes. For
  /// projections the l = 0 term is held at its node-1 value inside the first
  /// node, since a projected profile is flat at the origin; all other terms
  /// fall linearly to zero there.
  double evaluate(double v, double cos_theta) const {
    if (v < 0.0 || v >= r_max + 1) return 0.0;
    const int k = static_cast<int>(std::floor(v));
    const double frac = v - k;
    double out = 0.0;
    for (int l = 0; l <= l_max; l += 2) {
      double c = 0.0;
      if (std::is_same_v<Tag, Dist2DTag> && k == 0 && l == 0) {
        c = at(1, 0);
      } else {
        if (k >= 1 && k <= r_max) c += (1.0 - frac) * at(k, l);
        if (k + 1 <= r_max) c += frac * at(k + 1, l);
      }
      out += c * std::legendre(static_cast<unsigned>(l), cos_theta);
    }
    return out;
  }
};

using LegendreDist3D = RadialLegendre<Dist3DTag>;
using LegendreDist2D = RadialLegendre<Dist2DTag>;

namespace detail {

struct QuadratureRule {
  std::vector<double> nodes;    // on [-1, 1]
  std::vector<double> weights;
};

template <unsigned N>
QuadratureRule gauss_legendre() {
  using G = boost::math::quadrature::gauss<double, N>;
  QuadratureRule q;
  const auto& x = G::abscissa();
  const auto& w = G::weights();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] == 0.0) {
      q.nodes.push_back(0.0);
      q.weights.push_back(w[i]);
    } else {
      q.nodes.push_back(x[i]);
      q.weights.push_back(w[i]);
      q.nodes.push_back(-x[i]);
      q.weights.push_back(w[i]);
    }
  }
  return q;
}

inline QuadratureRule gauss_legendre(int n) {
  switch (n) {
    case 2: return gauss_legendre<2>();
    case 4: return gauss_legendre<4>();
    case 6: return gauss_legendre<6>();
    case 8: return gauss_legendre<8>();
    case 10: return gauss_legendre<10>();
    case 12: return gauss_legendre<12>();
    case 16: return gauss_legendre<16>();
    case 20: return gauss_legendre<20>();
    default: throw InvalidInput(fmt::format("unsupported Gauss-Legendre order {}", n));
  }
}

// C_{l,l'}(t) = (2l'+1)/2 ∫ P_l(t u) P_l'(u) du: re-expansion of P_l(t·cos θ2) in P_l'(cos θ2).
inline Eigen::MatrixXd angular_transfer(double t, int l_max, const QuadratureRule& q) {
  const int L = l_max / 2 + 1;
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(L, L);  // (l' index, l index)
  for (std::size_t i = 0; i < q.nodes.size(); ++i) {
    const double u = q.nodes[i];
    for (int a = 0; a < L; ++a) {
      const double pl = std::legendre(static_cast<unsigned>(2 * a), t * u);
      for (int b = 0; b <= a; ++b)
        c(b, a) += q.weights[i] * pl * std::legendre(static_cast<unsigned>(2 * b), u);
    }
  }
  for (int b = 0; b < L; ++b) c.row(b) *= (4.0 * b + 1.0) / 2.0;
  return c;
}

}  // namespace detail

/// Dense projection matrix M (b = M a) and its inverse, for fixed (R_max, l_max).
class AbelOperator {
 public:
  AbelOperator() = default;

  static AbelOperator build(int r_max, int l_max, int chord_points = 8) {
    if (r_max < 4) throw InvalidInput(fmt::format("AbelOperator: r_max must be >= 4, got {}", r_max));
    if (l_max < 0 || l_max > 8 || l_max % 2 != 0)
      throw InvalidInput(fmt::format("AbelOperator: l_max must be one of 0,2,4,6,8, got {}", l_max));
    AbelOperator op;
    op.r_max_ = r_max;
    op.l_max_ = l_max;
    const int L = l_max / 2 + 1;
    const Eigen::Index n = static_cast<Eigen::Index>(r_max) * L;
    op.m_ = Eigen::MatrixXd::Zero(n, n);

    const auto chord = detail::gauss_legendre(chord_points);
    const auto angular = detail::gauss_legendre(12);
    for (int rho = 1; rho <= r_max; ++rho) {
      const double rho2 = static_cast<double>(rho) * rho;
      for (int r = rho; r <= r_max; ++r) {
        // Rising half of hat r on [r-1, r], falling half on [r, r+1].
        for (int half = 0; half < 2; ++half) {
          const double seg_lo = half == 0 ? r - 1.0 : r;
          const double seg_hi = half == 0 ? r : r + 1.0;
          const double s_lo = std::max(seg_lo, static_cast<double>(rho));
          if (seg_hi <= s_lo) continue;
          const double y_lo = std::sqrt(std::max(0.0, s_lo * s_lo - rho2));
          const double y_hi = std::sqrt(seg_hi * seg_hi - rho2);
          const double mid = 0.5 * (y_lo + y_hi), halfw = 0.5 * (y_hi - y_lo);
          for (std::size_t q = 0; q < chord.nodes.size(); ++q) {
            const double y = mid + halfw * chord.nodes[q];
            const double s = std::sqrt(rho2 + y * y);
            const double hat = half == 0 ? s - seg_lo : seg_hi - s;
            // Factor 2: the chord runs over ±y.
            const double w = 2.0 * halfw * chord.weights[q] * hat;
            const Eigen::MatrixXd c = detail::angular_transfer(rho / s, l_max, angular);
            for (int a = 0; a < L; ++a)
              for (int b = 0; b <= a; ++b)
                op.m_(op.flat(rho, 2 * b), op.flat(r, 2 * a)) += w * c(b, a);
          }
        }
      }
    }

    Eigen::PartialPivLU<Eigen::MatrixXd> lu(op.m_);
    op.m_inv_ = lu.inverse();
    Eigen::BDCSVD<Eigen::MatrixXd> svd(op.m_);
    const auto& sv = svd.singularValues();
    op.condition_ = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1) : INFINITY;
    op.identity_error_ = (op.m_ * op.m_inv_ - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().rowwise().sum().maxCoeff();
    if (!std::isfinite(op.condition_) || op.identity_error_ > 1e-8)
      throw NumericalFailure(fmt::format("AbelOperator: ill-conditioned projection (cond {:.3g}, |M Minv - I| {:.3g})",
                                         op.condition_, op.identity_error_));
    return op;
  }

  int r_max() const { return r_max_; }
  int l_max() const { return l_max_; }
  int orders() const { return l_max_ / 2 + 1; }
  Eigen::Index dim() const { return m_.rows(); }
  const Eigen::MatrixXd& forward() const { return m_; }
  const Eigen::MatrixXd& inverse() const { return m_inv_; }
  double condition_number() const { return condition_; }
  /// ‖M·M⁻¹ − I‖∞ measured at build time.
  double identity_error() const { return identity_error_; }

  Eigen::Index flat(int r, int l) const { return static_cast<Eigen::Index>(l / 2) * r_max_ + (r - 1); }

  LegendreDist2D project(const LegendreDist3D& a) const {
    check(a.r_max, a.l_max);
    return LegendreDist2D::from_flat(r_max_, l_max_, m_ * a.flatten());
  }

  LegendreDist3D invert(const LegendreDist2D& b) const {
    check(b.r_max, b.l_max);
    return LegendreDist3D::from_flat(r_max_, l_max_, m_inv_ * b.flatten());
  }

 private:
  void check(int r, int l) const {
    if (r != r_max_ || l != l_max_)
      throw InvalidInput(fmt::format("coefficients ({}, {}) do not match operator ({}, {})", r, l, r_max_, l_max_));
  }

  int r_max_ = 0;
  int l_max_ = 0;
  Eigen::MatrixXd m_;
  Eigen::MatrixXd m_inv_;
  double condition_ = 0.0;
  double identity_error_ = 0.0;
};

/// Detector frame. Pixel (row, col) sits at x = col − center_x, z = center_y − row;
/// the symmetry axis is vertical (z).
struct VMIImage {
  Eigen::MatrixXd pixels;  // counts, rows × cols
  double center_x = 0.0;
  double center_y = 0.0;
  double exposure = 0.0;         // expected total counts the frame was rendered with
  double counts_per_unit = 1.0;  // counts per unit of projected intensity; 1 for real data

  int width() const { return static_cast<int>(pixels.cols()); }
  int height() const { return static_cast<int>(pixels.rows()); }
};

enum class ImageSide { kBoth, kLeft, kRight };

/// Per-pixel hat/Legendre basis weights for one frame geometry.
class PixelBasis {
 public:
  struct Pixel {
    Eigen::Index index;  // column-major pixel index
    int node;            // lower hat node floor(ρ)
    double frac;         // ρ − node
    double x;
    std::array<double, 5> legendre;  // P_0, P_2, ..., P_8 at cos θ2

    /// (node, weight) pairs of the radial interpolation for Legendre index a,
    /// with the same centre rule as RadialLegendre::evaluate.
    std::array<std::pair<int, double>, 2> weights(int a, int r_max) const {
      if (node == 0 && a == 0) return {{{1, 1.0}, {1, 0.0}}};
      std::array<std::pair<int, double>, 2> w{{{1, 0.0}, {1, 0.0}}};
      if (node >= 1 && node <= r_max) w[0] = {node, 1.0 - frac};
      if (node + 1 <= r_max) w[1] = {node + 1, frac};
      return w;
    }
  };

  PixelBasis(int width, int height, double cx, double cy, int r_max, int l_max)
      : width_(width), height_(height), cx_(cx), cy_(cy), r_max_(r_max), l_max_(l_max) {
    for (int col = 0; col < width; ++col)
      for (int row = 0; row < height; ++row) {
        const double x = col - cx, z = cy - row;
        const double rho = std::hypot(x, z);
        if (rho >= r_max + 1) continue;
        Pixel p{static_cast<Eigen::Index>(col) * height + row, static_cast<int>(std::floor(rho)), 0.0, x, {}};
        p.frac = rho - p.node;
        const double u = rho > 0.0 ? z / rho : 1.0;
        for (int l = 0; l <= l_max; l += 2) p.legendre[static_cast<std::size_t>(l / 2)] = std::legendre(static_cast<unsigned>(l), u);
        pixels_.push_back(p);
      }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  double center_x() const { return cx_; }
  double center_y() const { return cy_; }
  int r_max() const { return r_max_; }
  int l_max() const { return l_max_; }
  std::span<const Pixel> pixels() const { return pixels_; }

  /// Σ b_{ρ,l} hat_ρ(ρ_pix) P_l(cos θ2) at every pixel.
  Eigen::MatrixXd intensity(const LegendreDist2D& b) const {
    if (b.r_max != r_max_ || b.l_max != l_max_) throw InvalidInput("coefficients do not match the frame geometry");
    Eigen::MatrixXd img = Eigen::MatrixXd::Zero(height_, width_);
    const int L = l_max_ / 2 + 1;
    for (const auto& p : pixels_) {
      double s = 0.0;
      for (int a = 0; a < L; ++a) {
        double c = 0.0;
        for (const auto& [node, w] : p.weights(a, r_max_)) c += w * b.values(node - 1, a);
        s += c * p.legendre[static_cast<std::size_t>(a)];
      }
      img.data()[p.index] = s;
    }
    return img;
  }

 private:
  int width_, height_;
  double cx_, cy_;
  int r_max_, l_max_;
  std::vector<Pixel> pixels_;
};

namespace detail {

inline void check_non_negative(Eigen::MatrixXd& img) {
  const double hi = img.maxCoeff();
  const double lo = img.minCoeff();
  if (lo < -1e-9 * std::max(hi, 0.0) && lo < -1e-300)
    throw InvalidInput(fmt::format("projected intensity is negative ({:.3g} vs max {:.3g})", lo, hi));
  img = img.cwiseMax(0.0);
}

// Poisson counts with per-pixel mean `expected`. Sparse frames draw a Poisson
// total and place it multinomially over pixels, which has the same joint law as
// independent per-pixel draws; dense frames draw each lit pixel directly.
inline Eigen::MatrixXd poisson_counts(const Eigen::MatrixXd& expected, std::mt19937_64& rng) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(expected.rows(), expected.cols());
  const double acc = expected.sum();
  if (!(acc > 0.0)) return out;
  const auto lit = (expected.array() > 0.0).count();
  if (acc > static_cast<double>(lit)) {
    for (Eigen::Index i = 0; i < expected.size(); ++i) {
      const double m = expected.data()[i];
      if (m > 0.0) out.data()[i] = static_cast<double>(std::poisson_distribution<long long>(m)(rng));
    }
    return out;
  }
  std::vector<double> cdf(static_cast<std::size_t>(expected.size()));
  double run = 0.0;
  for (Eigen::Index i = 0; i < expected.size(); ++i) cdf[static_cast<std::size_t>(i)] = (run += expected.data()[i]);
  std::poisson_distribution<long long> total(run);
  const long long n = total(rng);
  std::uniform_real_distribution<double> uni(0.0, run);
  for (long long k = 0; k < n; ++k) {
    const double u = uni(rng);
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    if (it == cdf.end()) --it;
    out.data()[it - cdf.begin()] += 1.0;
  }
  return out;
}

}  // namespace detail

struct RenderOptions {
  bool noise = true;
  std::uint64_t seed = 0;
};

/// Frame with expected pixel values counts_per_unit · I(pixel).
inline VMIImage render_image_scaled(const PixelBasis& basis, const LegendreDist2D& b, double counts_per_unit,
                                    const RenderOptions& opt = {}) {
  if (!(counts_per_unit > 0.0)) throw InvalidInput("render: counts per unit must be positive");
  VMIImage img;
  img.center_x = basis.center_x();
  img.center_y = basis.center_y();
  img.counts_per_unit = counts_per_unit;
  Eigen::MatrixXd expected = basis.intensity(b);
  detail::check_non_negative(expected);
  expected *= counts_per_unit;
  img.exposure = expected.sum();
  if (opt.noise) {
    std::mt19937_64 rng(opt.seed);
    img.pixels = detail::poisson_counts(expected, rng);
  } else {
    img.pixels = std::move(expected);
  }
  return img;
}

/// Frame of size (2R+1)² centred at (R, R) whose expected total count is `exposure`.
inline VMIImage render_image(const PixelBasis& basis, const LegendreDist2D& b, double exposure,
                             const RenderOptions& opt = {}) {
  if (!(exposure > 0.0)) throw InvalidInput("render: exposure must be positive");
  Eigen::MatrixXd raw = basis.intensity(b);
  detail::check_non_negative(raw);
  const double total = raw.sum();
  if (!(total > 0.0)) {
    VMIImage img;
    img.pixels = Eigen::MatrixXd::Zero(basis.height(), basis.width());
    img.center_x = basis.center_x();
    img.center_y = basis.center_y();
    img.exposure = 0.0;
    return img;
  }
  return render_image_scaled(basis, b, exposure / total, opt);
}

inline PixelBasis standard_frame(int r_max, int l_max) {
  return PixelBasis(2 * r_max + 1, 2 * r_max + 1, r_max, r_max, r_max, l_max);
}

inline VMIImage render_image(const LegendreDist2D& b, double exposure, const RenderOptions& opt = {}) {
  return render_image(standard_frame(b.r_max, b.l_max), b, exposure, opt);
}

/// Result of inverting one frame. Coefficients are in units of projected
/// intensity (counts divided by the frame's counts_per_unit).
struct InversionResult {
  LegendreDist3D a;
  LegendreDist2D b;
  Eigen::MatrixXd a_sigma;  // same layout as a.values; empty unless requested
  int first_valid_radius = 3;
  std::vector<double> velocity;  // pixel radii 1..R
  std::vector<double> beta2, beta4;
  std::vector<double> beta2_sigma, beta4_sigma;
  std::vector<double> p_v;  // 4π v² a_{v,0}
  std::vector<double> p_e;  // (4π/m) v a_{v,0}
};

/// Precomputed least-squares fit of frames to the 2D basis followed by M⁻¹.
/// Radius nodes below kFirstValid are not resolvable (too few pixels per ring
/// for l_max) and are zero-filled.
class ImageInverter {
 public:
  static constexpr int kFirstValid = 3;

  ImageInverter(const AbelOperator& op, int width, int height, double cx, double cy,
                ImageSide side = ImageSide::kBoth, double mass = 1.0)
      : basis_(width, height, cx, cy, op.r_max(), op.l_max()), side_(side), mass_(mass) {
    r_max_ = op.r_max();
    l_max_ = op.l_max();
    const int L = op.orders();
    const int nodes = r_max_ - kFirstValid + 1;
    n_sub_ = static_cast<Eigen::Index>(nodes) * L;
    Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(n_sub_, n_sub_);
    std::array<Eigen::Index, 10> idx{};
    std::array<double, 10> val{};
    for (const auto& p : basis_.pixels()) {
      if (!use(p)) continue;
      const int k = row_entries(p, idx, val);
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) normal(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]) += val[static_cast<std::size_t>(i)] * val[static_cast<std::size_t>(j)];
    }
    Eigen::LLT<Eigen::MatrixXd> llt(normal);
    if (llt.info() != Eigen::Success)
      throw NumericalFailure("image fit: normal matrix is rank deficient for this geometry");
    normal_inv_ = llt.solve(Eigen::MatrixXd::Identity(n_sub_, n_sub_));
    // Columns of M⁻¹ belonging to the fitted nodes.
    Eigen::MatrixXd minv_sub(op.dim(), n_sub_);
    for (int a = 0; a < L; ++a)
      for (int r = kFirstValid; r <= r_max_; ++r) minv_sub.col(sub(r, a)) = op.inverse().col(op.flat(r, 2 * a));
    gain_ = minv_sub * normal_inv_;
    // Entries of a below the first valid node are reported as zero.
    for (int a = 0; a < L; ++a)
      for (int r = 1; r < kFirstValid; ++r) gain_.row(op.flat(r, 2 * a)).setZero();
  }

  const PixelBasis& basis() const { return basis_; }

  InversionResult invert(const VMIImage& img, bool with_uncertainty = false) const {
    if (img.width() != basis_.width() || img.height() != basis_.height())
      throw InvalidInput(fmt::format("frame is {}x{}, inverter expects {}x{}", img.width(), img.height(),
                                     basis_.width(), basis_.height()));
    if (std::abs(img.center_x - basis_.center_x()) > 1e-9 || std::abs(img.center_y - basis_.center_y()) > 1e-9)
      throw InvalidInput("frame center does not match the inverter geometry");
    if (!(img.counts_per_unit > 0.0)) throw InvalidInput("frame counts_per_unit must be positive");
    const int L = l_max_ / 2 + 1;
    Eigen::VectorXd h = Eigen::VectorXd::Zero(n_sub_);
    std::array<Eigen::Index, 10> idx{};
    std::array<double, 10> val{};
    std::vector<Eigen::Triplet<double>> cov_terms;
    for (const auto& p : basis_.pixels()) {
      const double y = img.pixels.data()[p.index];
      if (y == 0.0 || !use(p)) continue;
      if (y < 0.0 || !std::isfinite(y)) throw InvalidInput("frame contains negative or non-finite counts");
      const int k = row_entries(p, idx, val);
      for (int i = 0; i < k; ++i) h(idx[static_cast<std::size_t>(i)]) += val[static_cast<std::size_t>(i)] * y;
      if (with_uncertainty)
        for (int i = 0; i < k; ++i)
          for (int j = 0; j < k; ++j)
            cov_terms.emplace_back(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)],
                                   y * val[static_cast<std::size_t>(i)] * val[static_cast<std::size_t>(j)]);
    }
    const double scale = 1.0 / img.counts_per_unit;
    InversionResult out;
    out.first_valid_radius = kFirstValid;
    out.a = LegendreDist3D::from_flat(r_max_, l_max_, scale * (gain_ * h));
    const Eigen::VectorXd b_sub = scale * (normal_inv_ * h);
    out.b = LegendreDist2D(r_max_, l_max_);
    for (int a = 0; a < L; ++a)
      for (int r = kFirstValid; r <= r_max_; ++r) out.b.at(r, 2 * a) = b_sub(sub(r, a));

    if (with_uncertainty) {
      // Poisson variance = counts: cov(a) = G (Aᵀ diag(y) A) Gᵀ.
      Eigen::SparseMatrix<double> meat(n_sub_, n_sub_);
      meat.setFromTriplets(cov_terms.begin(), cov_terms.end());
      const Eigen::MatrixXd gm = gain_ * meat;
      const Eigen::VectorXd var = (gm.cwiseProduct(gain_)).rowwise().sum();
      out.a_sigma = Eigen::Map<const Eigen::MatrixXd>(var.data(), r_max_, L).cwiseMax(0.0).cwiseSqrt() * scale;
    }
    derive_observables(out);
    return out;
  }

 private:
  bool use(const PixelBasis::Pixel& p) const {
    const double rho = p.node + p.frac;
    if (rho < kFirstValid || rho > r_max_) return false;
    if (side_ == ImageSide::kLeft) return p.x < -0.5;
    if (side_ == ImageSide::kRight) return p.x > 0.5;
    return true;
  }

  Eigen::Index sub(int r, int a) const { return static_cast<Eigen::Index>(a) * (r_max_ - kFirstValid + 1) + (r - kFirstValid); }

  int row_entries(const PixelBasis::Pixel& p, std::array<Eigen::Index, 10>& idx, std::array<double, 10>& val) const {
    const int L = l_max_ / 2 + 1;
    int k = 0;
    for (int side = 0; side < 2; ++side) {
      const int node = p.node + side;
      const double w = side == 0 ? 1.0 - p.frac : p.frac;
      if (node < kFirstValid || node > r_max_ || w == 0.0) continue;
      for (int a = 0; a < L; ++a) {
        idx[static_cast<std::size_t>(k)] = sub(node, a);
        val[static_cast<std::size_t>(k)] = w * p.legendre[static_cast<std::size_t>(a)];
        ++k;
      }
    }
    return k;
  }

  void derive_observables(InversionResult& out) const {
    const auto R = static_cast<std::size_t>(r_max_);
    out.velocity.resize(R);
    out.beta2.assign(R, 0.0);
    out.beta4.assign(R, 0.0);
    out.beta2_sigma.assign(R, 0.0);
    out.beta4_sigma.assign(R, 0.0);
    out.p_v.resize(R);
    out.p_e.resize(R);
    const double a0_max = out.a.values.col(0).cwiseAbs().maxCoeff();
    for (int r = 1; r <= r_max_; ++r) {
      const auto i = static_cast<std::size_t>(r - 1);
      const double v = r;
      const double a0 = out.a.at(r, 0);
      out.velocity[i] = v;
      out.p_v[i] = 4.0 * kPi * v * v * a0;
      out.p_e[i] = 4.0 * kPi / mass_ * v * a0;
      if (l_max_ < 2 || !(std::abs(a0) > 0.01 * a0_max) || r < kFirstValid) continue;
      out.beta2[i] = out.a.at(r, 2) / a0;
      if (l_max_ >= 4) out.beta4[i] = out.a.at(r, 4) / a0;
      if (out.a_sigma.size() > 0) {
        const double s0 = out.a_sigma(r - 1, 0);
        out.beta2_sigma[i] = std::hypot(out.a_sigma(r - 1, 1), out.beta2[i] * s0) / std::abs(a0);
        if (l_max_ >= 4) out.beta4_sigma[i] = std::hypot(out.a_sigma(r - 1, 2), out.beta4[i] * s0) / std::abs(a0);
      }
    }
  }

  PixelBasis basis_;
  ImageSide side_;
  double mass_;
  int r_max_ = 0, l_max_ = 0;
  Eigen::Index n_sub_ = 0;
  Eigen::MatrixXd normal_inv_;
  Eigen::MatrixXd gain_;
};

/// One-shot inversion of a frame centred where the frame says.
inline InversionResult image_to_coeffs(const VMIImage& img, const AbelOperator& op, ImageSide side = ImageSide::kBoth,
                                       bool with_uncertainty = true) {
  ImageInverter inv(op, img.width(), img.height(), img.center_x, img.center_y, side);
  return inv.invert(img, with_uncertainty);
}

}  // namespace attobeat
