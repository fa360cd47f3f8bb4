// Copyright 2026 The loopdet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "loopdet/core_model.hpp"

namespace loopdet {
namespace {

DeviceParams lossy(double t0, double theta, double tl, double eta, double r) {
    DeviceParams p = lossless_device(r);
    p.t0 = t0;
    p.theta = theta;
    p.tl = tl;
    p.eta = eta;
    return p;
}

// Literal closed form of the summed series, written with the 1/t24 factors.
double total_literal(const DeviceParams& p) {
    const FullCoupler c = to_full(p.coupler);
    return p.eta * p.t0 *
           (p.theta * (c.t13 * c.t24 - c.t14 * c.t23) / c.t24 -
            c.t14 * c.t23 * p.theta / (c.t24 * (p.tl * c.t24 * p.theta - 1.0)));
}

// Brute-force partial sum of the per-channel formula with explicit powers.
double partial_sum(const DeviceParams& p, int n) {
    const FullCoupler c = to_full(p.coupler);
    double sum = p.t0 * p.theta * c.t13 * p.eta;
    for (int k = 2; k <= n; ++k) {
        sum += p.t0 * c.t14 * std::pow(p.theta, k) * std::pow(p.tl, k - 1) * c.t23 * std::pow(c.t24, k - 2) * p.eta;
    }
    return sum;
}

TEST(ChannelTransmissions, AllLightExitsOnFirstPassAtRatioOne) {
    DeviceParams p = lossless_device(1.0);
    p.eta = 0.6;
    const auto prof = channel_transmissions(p, 5);
    ASSERT_EQ(prof.n_channels(), 5u);
    EXPECT_DOUBLE_EQ(prof.h[0], 0.6);
    for (int k = 1; k < 5; ++k) EXPECT_EQ(prof.h[k], 0.0);
    EXPECT_EQ(prof.remainder, 0.0);
}

TEST(ChannelTransmissions, RatioZeroGivesOneLoopThenExit) {
    const auto prof = channel_transmissions(lossless_device(0.0), 5);
    const std::vector<double> expected{0, 1, 0, 0, 0};
    for (int k = 0; k < 5; ++k) EXPECT_DOUBLE_EQ(prof.h[k], expected[k]);
}

TEST(ChannelTransmissions, BalancedLosslessHalvesEachChannel) {
    const auto prof = channel_transmissions(lossless_device(0.5), 4);
    const std::vector<double> expected{0.5, 0.25, 0.125, 0.0625};
    for (int k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(prof.h[k], expected[k]);
    EXPECT_NEAR(prof.remainder, 0.0625, 1e-15);
}

TEST(ChannelTransmissions, RejectsOutOfRangeCoefficient) {
    DeviceParams p = measured_device();
    p.tl = 1.2;
    try {
        channel_transmissions(p, 5);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::parameter_domain);
    }
    p = measured_device();
    p.coupler = FullCoupler{0.5, -0.1, 0.5, 0.5};
    EXPECT_THROW(channel_transmissions(p, 5), Error);
    EXPECT_THROW(channel_transmissions(measured_device(), 0), Error);
}

TEST(ChannelTransmissions, RejectsLoopShorterThanDeadTime) {
    DeviceParams p = measured_device();
    p.loop_delay_ns = 40.0;
    EXPECT_THROW(validate(p), Error);
}

TEST(ChannelTransmissions, UnitLoopGainWithExitPathDiverges) {
    DeviceParams p = lossless_device(0.5);
    p.coupler = FullCoupler{0.5, 0.5, 0.2, 1.0};
    try {
        total_transmission(p);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::divergent_series);
    }
}

TEST(ChannelTransmissions, IdealCouplerMatchesFullSubstitution) {
    for (double r : {0.0, 0.2, 0.446, 0.7, 1.0}) {
        DeviceParams ideal = lossless_device(r);
        ideal.tl = 0.9;
        ideal.eta = 0.7;
        DeviceParams full = ideal;
        full.coupler = FullCoupler{r, 1.0 - r, 1.0 - r, r};
        const auto a = channel_transmissions(ideal, 12);
        const auto b = channel_transmissions(full, 12);
        for (int k = 0; k < 12; ++k) EXPECT_EQ(a.h[k], b.h[k]);
        // eta r, then eta (1-r)^2 tl^(k-1) r^(k-2)
        EXPECT_NEAR(a.h[0], 0.7 * r, 1e-15);
        for (int k = 2; k <= 12; ++k) {
            EXPECT_NEAR(a.h[k - 1], 0.7 * (1 - r) * (1 - r) * std::pow(0.9, k - 1) * std::pow(r, k - 2), 1e-15);
        }
    }
}

TEST(ChannelTransmissions, GeometricTailFromChannelTwo) {
    DeviceParams p = measured_device();
    p.coupler = FullCoupler{0.4, 0.55, 0.6, 0.35};
    const auto prof = channel_transmissions(p, 20);
    const double gain = p.theta * p.tl * 0.35;
    for (int k = 1; k + 1 < 20; ++k) EXPECT_NEAR(prof.h[k + 1] / prof.h[k], gain, 1e-14);
}

TEST(TotalTransmission, LosslessDeviceConservesProbability) {
    EXPECT_NEAR(total_transmission(lossless_device(0.5)), 1.0, 1e-15);
}

TEST(TotalTransmission, MeasuredDeviceWithinBand) {
    const DeviceParams p = with_ratio(measured_device(), 0.45);
    const double t_over_eta = total_transmission(p) / p.eta;
    EXPECT_GE(t_over_eta, 0.78);
    EXPECT_LE(t_over_eta, 0.80);
    EXPECT_NEAR(total_transmission(p), partial_sum(p, 200), 1e-12);
}

TEST(TotalTransmission, MatchesLiteralClosedFormAndTruncatedSum) {
    for (double r : {0.05, 0.3, 0.45, 0.6, 0.95}) {
        for (double tl : {0.7, 0.94, 1.0}) {
            DeviceParams p = lossy(0.9, 0.95, tl, 0.6, r);
            EXPECT_NEAR(total_transmission(p), total_literal(p), 1e-13);
            for (std::size_t n : {1u, 3u, 10u, 30u}) {
                const auto prof = channel_transmissions(p, n);
                EXPECT_NEAR(prof.total(), total_transmission(p), 1e-12);
            }
            EXPECT_NEAR(total_transmission(p), partial_sum(p, 200) + channel_transmissions(p, 200).remainder, 1e-10);
        }
    }
}

TEST(TotalTransmission, NondecreasingInEachLossFactor) {
    const std::vector<double> grid{0.5, 0.7, 0.9, 1.0};
    for (double r : {0.3, 0.5, 0.8}) {
        for (double a : grid) {
            for (double b : grid) {
                for (double c : grid) {
                    double prev_t0 = -1, prev_theta = -1, prev_tl = -1, prev_eta = -1;
                    for (double x : grid) {
                        const double t_t0 = total_transmission(lossy(x, a, b, c, r));
                        const double t_theta = total_transmission(lossy(a, x, b, c, r));
                        const double t_tl = total_transmission(lossy(a, b, x, c, r));
                        const double t_eta = total_transmission(lossy(a, b, c, x, r));
                        EXPECT_GE(t_t0, prev_t0);
                        EXPECT_GE(t_theta, prev_theta);
                        EXPECT_GE(t_tl, prev_tl);
                        EXPECT_GE(t_eta, prev_eta);
                        prev_t0 = t_t0;
                        prev_theta = t_theta;
                        prev_tl = t_tl;
                        prev_eta = t_eta;
                    }
                }
            }
        }
    }
}

TEST(TotalTransmission, PhysicalBounds) {
    for (double r = 0.0; r <= 1.0; r += 0.05) {
        for (double eta : {0.3, 0.6, 1.0}) {
            const DeviceParams p = lossy(0.92, 0.955, 0.94, eta, r);
            const auto prof = channel_transmissions(p, 40);
            for (double hk : prof.h) {
                EXPECT_GE(hk, 0.0);
                EXPECT_LE(hk, 1.0);
            }
            const double t = total_transmission(p);
            EXPECT_GE(t, 0.0);
            EXPECT_LE(t, eta + 1e-15);
        }
    }
}

TEST(TotalTransmissionSimplified, LosslessIsOneForAnyRatio) {
    for (double r : {0.0, 0.3, 0.5, 0.9}) {
        EXPECT_NEAR(total_transmission_simplified(r, lossless_device(r)), 1.0, 1e-15);
    }
}

TEST(TotalTransmissionSimplified, MeasuredDeviceValues) {
    const DeviceParams p = measured_device();
    // 0.92 (2 * 0.94 * 0.955 - 1) / 0.94
    EXPECT_NEAR(total_transmission_first_term(p) / p.eta, 0.7784765957446809, 1e-12);
    EXPECT_NEAR(total_transmission_simplified(0.45, p) / p.eta, 0.7956611977484545, 1e-12);
    EXPECT_NEAR(total_transmission_simplified(0.45, p) / p.eta, 0.796, 5e-4);
}

TEST(TotalTransmissionSimplified, ExactForOneRatioCouplerWithExcessLoss) {
    for (double r : {0.1, 0.446, 0.8}) {
        const DeviceParams p = with_ratio(measured_device(), r);
        EXPECT_NEAR(total_transmission_simplified(r, p), total_transmission(p), 1e-14);
    }
}

TEST(NormalizedChannels, SumsToOne) {
    for (double r : {0.1, 0.5, 0.9}) {
        const auto H = normalized_channels(channel_transmissions(with_ratio(measured_device(), r), 7));
        EXPECT_NEAR(H.total(), 1.0, 1e-12);
    }
    const auto H = normalized_channels(channel_transmissions(lossless_device(0.5), 60));
    EXPECT_DOUBLE_EQ(H.h[0], 0.5);
    EXPECT_DOUBLE_EQ(H.h[1], 0.25);
    EXPECT_DOUBLE_EQ(H.h[2], 0.125);
}

TEST(NormalizedChannels, ZeroTransmissionIsDegenerate) {
    DeviceParams p = measured_device();
    p.eta = 0.0;
    try {
        normalized_channels(channel_transmissions(p, 5));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::degenerate_device);
    }
}

TEST(NormalizedChannels, SomeRatioGivesThirtyNineFortyTwoThirteen) {
    bool found = false;
    for (double r = 0.0; r <= 1.0; r += 0.005) {
        const auto H = normalized_channels(channel_transmissions(with_ratio(measured_device(), r), 30));
        if (std::abs(H.h[0] - 0.39) < 0.02 && std::abs(H.h[1] - 0.42) < 0.02 && std::abs(H.h[2] - 0.13) < 0.02) {
            found = true;
        }
    }
    EXPECT_TRUE(found);
}

TEST(ChannelRatioStatistic, LosslessBalancedIsOne) {
    const auto H = normalized_channels(channel_transmissions(lossless_device(0.5), 30));
    for (double v : channel_ratios(H.h, 1, 10)) EXPECT_NEAR(v, 1.0, 1e-12);
    EXPECT_NEAR(channel_ratio_statistic(H.h), 1.0, 1e-12);
}

TEST(ChannelRatioStatistic, MeasuredLossesNearTwoThetaTlMinusOne) {
    const double predicted = 2 * 0.955 * 0.94 - 1;
    EXPECT_NEAR(predicted, 0.7954, 1e-4);
    double lo = 1e9, hi = -1e9;
    for (double r = 0.3; r <= 0.6 + 1e-12; r += 0.01) {
        const auto H = normalized_channels(channel_transmissions(with_ratio(measured_device(), r), 30));
        const double s = channel_ratio_statistic(H.h, 2, 6);
        EXPECT_NEAR(s, 0.80, 0.02);
        lo = std::min(lo, s);
        hi = std::max(hi, s);
    }
    EXPECT_LT(hi - lo, 0.02);
}

TEST(ChannelRatioStatistic, ZeroDenominatorIsUndefined) {
    const std::vector<double> H{0.5, 0.0, 0.2, 0.1};
    try {
        channel_ratio_statistic(H);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::undefined_ratio);
    }
}

TEST(LossDb, MatchesQuotedDecibels) {
    EXPECT_NEAR(loss_db(0.94), 0.27, 0.005);
    EXPECT_NEAR(loss_db(0.92), 0.36, 0.005);
}

}  // namespace
}  // namespace loopdet
