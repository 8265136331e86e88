#include <gtest/gtest.h>

#include "properties.hpp"

using namespace mdpde::testing;

TEST(Properties, ScoreIdentitiesAtAlphaZero) {
    const auto c = check_score_identities();
    EXPECT_TRUE(c.ok) << c.detail;
}

TEST(Properties, LogisticClosedFormsMatchTwoPointSums) {
    const auto c = check_logistic_closed_form();
    EXPECT_TRUE(c.ok) << c.detail;
}

TEST(Properties, LogisticEstimatingFormsAgree) {
    const auto c = check_logistic_forms();
    EXPECT_TRUE(c.ok) << c.detail;
}

TEST(Properties, PoissonPowerMomentsMatchDirectSums) {
    const auto c = check_power_moments();
    EXPECT_TRUE(c.ok) << c.detail;
}

TEST(Properties, EstimatingFunctionIsScaledGradient) {
    const auto c = check_gradient();
    EXPECT_TRUE(c.ok) << c.detail;
}

TEST(Properties, AlphaZeroIsMaximumLikelihood) {
    const auto c = check_mle_oracle();
    EXPECT_TRUE(c.ok) << c.detail;
}

TEST(Properties, FitsAreStationaryMinima) {
    const auto c = check_stationarity();
    EXPECT_TRUE(c.ok) << c.detail;
}

TEST(Properties, InfluenceDichotomy) {
    const auto c = check_influence_dichotomy();
    EXPECT_TRUE(c.ok) << c.detail;
}

TEST(Properties, OutliersMoveMaximumLikelihoodButNotRobustFit) {
    const auto s = aids_outlier_stability();
    EXPECT_GT(s.mle_slope_gap, 0.7);
    EXPECT_LT(s.shift_robust(0), 0.16);
    EXPECT_LT(s.shift_robust(1), 0.16);
}
