#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "attobeat/optics.hpp"

using namespace attobeat;

namespace {

std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  return g;
}

int count_maxima(const std::vector<double>& y) {
  int n = 0;
  for (std::size_t i = 1; i + 1 < y.size(); ++i)
    if (y[i] > y[i - 1] && y[i] >= y[i + 1] && y[i] > 1e-6 * y[y.size() / 2]) ++n;
  return n;
}

}  // namespace

TEST(Optics, ZeroDelayDoublesTheSinglePulse) {
  const auto p = PulsePair::from_fwhm_ev(30.0, 1.0, 0.0);
  for (double w : {p.center - 9000.0, p.center, p.center + 4000.0})
    EXPECT_DOUBLE_EQ(pair_amplitude(p, w).real(), 2.0 * single_pulse_amplitude(p, w));
}

TEST(Optics, AmplitudeVanishesAtFringeMinima) {
  const auto p = PulsePair::from_fwhm_ev(30.0, 1.0, 29.0);
  const double c = kSpeedOfLightCmPerFs;
  const int n = static_cast<int>(std::floor(c * p.center * 29.0));
  const double w = (n + 0.5) / (c * 29.0);
  EXPECT_LT(std::abs(pair_amplitude(p, w)), 1e-12);
}

TEST(Optics, FringeSpacing) {
  EXPECT_NEAR(fringe_spacing(29.0), 1150.22, 0.01);
  EXPECT_NEAR(fringe_spacing(58.0), 575.11, 0.01);
  EXPECT_NEAR(fringe_spacing(102.0), 327.02, 0.01);
  EXPECT_DOUBLE_EQ(fringe_spacing(58.0) * 2.0, fringe_spacing(29.0));
  EXPECT_THROW(fringe_spacing(0.0), InvalidInput);
  EXPECT_THROW(fringe_spacing(-3.0), InvalidInput);
}

TEST(Optics, IntensityMaximaSitOnIntegerOrders) {
  const auto p = PulsePair::from_fwhm_ev(30.0, 1.0, 29.0);
  const double c = kSpeedOfLightCmPerFs;
  const double k0 = std::round(c * p.center * 29.0);
  const double w0 = k0 / (c * 29.0);
  const double h = 0.5;
  auto fringe = [&](double w) { return std::pow(pair_interference(w, p.tau_xx), 2); };
  EXPECT_NEAR(fringe(w0), 1.0, 1e-12);
  EXPECT_GT(fringe(w0), fringe(w0 - h));
  EXPECT_GT(fringe(w0), fringe(w0 + h));
  // Half an order away the fringe is dark.
  EXPECT_LT(fringe(w0 + 0.5 * fringe_spacing(29.0)), 1e-20);
}

TEST(Optics, ZeroDelayHasNoFringes) {
  const auto p = PulsePair::from_fwhm_ev(30.0, 1.0, 0.0);
  const auto g = linspace(p.center - 4 * p.sigma, p.center + 4 * p.sigma, 4001);
  EXPECT_EQ(count_maxima(spectrum_intensity(p, g)), 1);
}

TEST(Optics, FringeDensityScalesWithDelay) {
  const auto p = PulsePair::from_fwhm_ev(30.0, 1.0);
  const auto g = linspace(p.center - 2.5 * p.sigma, p.center + 2.5 * p.sigma, 40001);
  const double n29 = count_maxima(spectrum_intensity(p.with_delay(29.0), g));
  const double n45 = count_maxima(spectrum_intensity(p.with_delay(45.0), g));
  EXPECT_NEAR(n45 / n29, 45.0 / 29.0, 0.08);
}

TEST(Optics, ParsevalDelayIndependence) {
  PulsePair p;
  p.sigma = 4000.0;
  const auto g = linspace(p.center - 12 * p.sigma, p.center + 12 * p.sigma, 400001);
  auto total = [&](double tau) {
    const auto y = spectrum_intensity(p.with_delay(tau), g);
    double s = 0.0;
    for (std::size_t i = 1; i < y.size(); ++i) s += 0.5 * (y[i] + y[i - 1]) * (g[i] - g[i - 1]);
    return s;
  };
  const double ref = total(11.0);
  for (double tau : {14.0, 29.0, 45.0, 102.0}) EXPECT_NEAR(total(tau) / ref, 1.0, 1e-6) << tau;
  // Analytic value 2·∫F0² = 2·√π·σ once the interference term has died out.
  EXPECT_NEAR(ref / (2.0 * std::sqrt(kPi) * p.sigma), 1.0, 1e-6);
}

TEST(Optics, AmplitudeIsEvenInDelay) {
  const auto p = PulsePair::from_fwhm_ev(30.0, 1.0);
  for (double tau : {3.0, 29.0, 71.0})
    for (double w : {p.center - 1234.0, p.center + 77.0})
      EXPECT_DOUBLE_EQ(pair_interference(w, tau), pair_interference(w, -tau));
}

TEST(Optics, BandwidthConversion) {
  const auto p = PulsePair::from_fwhm_ev(30.0, 1.0);
  EXPECT_NEAR(p.sigma, 4843.8, 0.1);
  // Half-maximum of |F0|² sits at ±FWHM/2.
  const double half = ev_to_wavenumber(1.0) / 2.0;
  EXPECT_NEAR(std::pow(single_pulse_amplitude(p, p.center + half), 2), 0.5, 1e-12);
}

TEST(Optics, RejectsInvalidInput) {
  PulsePair p;
  p.sigma = 0.0;
  EXPECT_THROW(p.validate(), InvalidInput);
  p = PulsePair{};
  p.tau_xx = -1.0;
  EXPECT_THROW(p.validate(), InvalidInput);
  const std::vector<double> empty;
  EXPECT_THROW(spectrum_intensity(PulsePair{}, empty), InvalidInput);
  const std::vector<double> bad{1.0, 1.0};
  EXPECT_THROW(spectrum_intensity(PulsePair{}, bad), InvalidInput);
}
