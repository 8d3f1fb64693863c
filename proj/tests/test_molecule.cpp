#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "attobeat/molecule.hpp"

using namespace attobeat;

namespace {

MorseConstants h2plus() { return {2321.7, 66.2, MorseConstants::highest_bound_level(2321.7, 66.2)}; }

// Independent evaluation of G(v) for the oracle checks below.
double term(double we, double wexe, int v) {
  const double h = v + 0.5;
  return we * h - wexe * h * h;
}

}  // namespace

TEST(Molecule, DefaultConstantsReproduceLiteratureGaps) {
  const auto lv = levels_from_morse(h2plus(), 7, 10);
  EXPECT_NEAR(beat_energy(lv, 7, 8), 1262.5, 1e-9);
  EXPECT_NEAR(beat_energy(lv, 8, 9), 1130.1, 1e-9);
  EXPECT_NEAR(beat_energy(lv, 8, 10), 2127.8, 1e-9);
  EXPECT_NEAR(beat_energy(lv, 7, 9), 2392.6, 1e-9);
  EXPECT_NEAR(beat_energy(lv, 9, 10), 997.7, 1e-9);
}

TEST(Molecule, BeatEnergyIsSymmetricAndAdditive) {
  const auto lv = levels_from_morse(h2plus(), 5, 11);
  EXPECT_EQ(beat_energy(lv, 8, 8), 0.0);
  EXPECT_DOUBLE_EQ(beat_energy(lv, 9, 8), beat_energy(lv, 8, 9));
  EXPECT_NEAR(beat_energy(lv, 7, 9), beat_energy(lv, 7, 8) + beat_energy(lv, 8, 9), 1e-9);
  EXPECT_NEAR(beat_energy(lv, 8, 10), beat_energy(lv, 8, 9) + beat_energy(lv, 9, 10), 1e-9);
}

TEST(Molecule, TwoLevelsGiveClosedFormGap) {
  for (int v : {0, 3, 9}) {
    const auto lv = levels_from_morse(h2plus(), v, v + 1);
    ASSERT_EQ(lv.size(), 2u);
    EXPECT_NEAR(lv[1].energy - lv[0].energy, 2321.7 - 2.0 * 66.2 * (v + 1), 1e-9);
  }
}

TEST(Molecule, HarmonicLimitHasEqualGaps) {
  const auto lv = levels_from_morse({2000.0, 0.0, 50}, 0, 6);
  for (std::size_t i = 1; i < lv.size(); ++i) EXPECT_NEAR(lv[i].energy - lv[i - 1].energy, 2000.0, 1e-9);
}

TEST(Molecule, LevelsAgreeWithIndependentTermValues) {
  const auto lv = levels_from_morse(h2plus(), 5, 11);
  for (const auto& l : lv.levels()) EXPECT_NEAR(l.energy, term(2321.7, 66.2, l.v), 1e-9);
}

TEST(Molecule, InvariantsHold) {
  const auto lv = levels_from_morse(h2plus(), 5, 11);
  double total = 0.0;
  for (std::size_t i = 0; i < lv.size(); ++i) {
    total += lv[i].population;
    EXPECT_GE(lv[i].probe_weight, 0.0);
    if (i > 0) EXPECT_GT(lv[i].energy, lv[i - 1].energy);
    if (i > 1) EXPECT_LT(lv[i].energy - lv[i - 1].energy, lv[i - 1].energy - lv[i - 2].energy);
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(Molecule, PopulationsAreNormalized) {
  const std::vector<double> p{1, 2, 3, 4};
  const auto lv = levels_from_morse(h2plus(), 6, 9).with_populations(p);
  for (std::size_t i = 0; i < lv.size(); ++i) EXPECT_NEAR(lv[i].population, p[i] / 10.0, 1e-15);
}

TEST(Molecule, RejectsInvalidInput) {
  EXPECT_THROW(levels_from_morse(h2plus(), 5, 5), InvalidInput);
  EXPECT_THROW(levels_from_morse(h2plus(), -1, 4), InvalidInput);
  EXPECT_THROW(levels_from_morse({2321.7, 66.2, 40}, 5, 40), InvalidInput);  // past dissociation
  EXPECT_THROW(levels_from_morse({-1.0, 0.0, 10}, 0, 3), InvalidInput);
  const auto lv = levels_from_morse(h2plus(), 5, 11);
  EXPECT_THROW(beat_energy(lv, 4, 5), InvalidInput);
  EXPECT_THROW(VibrationalLevels({{1, 10.0, 1.0, 1.0}, {2, 5.0, 1.0, 1.0}}), InvalidInput);
  EXPECT_THROW(VibrationalLevels({{1, 0.0, -1.0, 1.0}, {2, 5.0, 1.0, 1.0}}), InvalidInput);
  EXPECT_THROW(VibrationalLevels({{0, 0.0, 1.0, 1.0}, {1, 10.0, 1.0, 1.0}, {2, 30.0, 1.0, 1.0}}), InvalidInput);
}

TEST(BirgeSponer, LiteratureGapsGiveDefaultConstantsExactly) {
  const std::vector<LevelGap> gaps{{8, 9, 1130.1}, {7, 8, 1262.5}, {8, 10, 2127.8}, {7, 9, 2392.6}};
  const auto fit = birge_sponer_fit(gaps);
  EXPECT_NEAR(fit.constants.omega_e, 2321.7, 1e-8);
  EXPECT_NEAR(fit.constants.omega_e_x_e, 66.2, 1e-9);
  EXPECT_LT(fit.residual_rms, 1e-9);
}

TEST(BirgeSponer, RoundTripOfNearestNeighbourGaps) {
  for (const auto& c : {h2plus(), MorseConstants{1500.0, 12.5, 40}, MorseConstants{4401.2, 121.3, 15}}) {
    const auto lv = levels_from_morse(c, 0, std::min(c.v_max, 12));
    std::vector<LevelGap> gaps;
    for (std::size_t i = 1; i < lv.size(); ++i) gaps.push_back({lv[i - 1].v, lv[i].v, lv[i].energy - lv[i - 1].energy});
    const auto fit = birge_sponer_fit(gaps);
    EXPECT_NEAR(fit.constants.omega_e / c.omega_e, 1.0, 1e-9);
    EXPECT_NEAR(fit.constants.omega_e_x_e / c.omega_e_x_e, 1.0, 1e-9);
  }
}

TEST(BirgeSponer, EqualHarmonicGapsCollapseToZeroAnharmonicity) {
  const std::vector<LevelGap> gaps{{1, 2, 1800.0}, {2, 3, 1800.0}};
  const auto fit = birge_sponer_fit(gaps);
  EXPECT_NEAR(fit.constants.omega_e_x_e, 0.0, 1e-9);
  EXPECT_NEAR(fit.constants.omega_e, 1800.0, 1e-8);
}

TEST(BirgeSponer, MeasuredColumnLeavesResidual) {
  const std::vector<LevelGap> gaps{{8, 9, 1141, 7}, {7, 8, 1259, 6}, {8, 10, 2167, 11}, {7, 9, 2387, 13}};
  const auto fit = birge_sponer_fit(gaps);
  EXPECT_GT(fit.residual_rms, 1.0);
  EXPECT_GT(fit.constants.omega_e_x_e, 0.0);
  EXPECT_GT(fit.covariance(0, 0), 0.0);
}

TEST(BirgeSponer, RejectsRankDeficientInput) {
  const std::vector<LevelGap> same_mid{{8, 9, 1130.1}, {7, 10, 3390.0}};
  EXPECT_THROW(birge_sponer_fit(same_mid), InvalidInput);
  const std::vector<LevelGap> one{{8, 9, 1130.1}};
  EXPECT_THROW(birge_sponer_fit(one), InvalidInput);
}
