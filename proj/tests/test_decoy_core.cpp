#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "decoyqkd/decoy_core.hpp"
#include "decoyqkd/errors.hpp"
#include "support/oracle.hpp"

using namespace decoyqkd;

TEST(PoissonCoefficient, MatchesFactorialFormula) {
    for (double mu : {1e-6, 0.05, 0.2, 0.6, 1.0, 2.5, 7.0}) {
        for (int k = 0; k <= 20; ++k) {
            const double want = static_cast<double>(oracle::poisson(mu, k));
            EXPECT_NEAR(poisson_coefficient(mu, k), want, 1e-14 * want + 1e-300)
                << "mu=" << mu << " k=" << k;
        }
    }
}

TEST(PoissonCoefficient, FrozenValue) {
    EXPECT_NEAR(poisson_coefficient(0.6, 1), 0.329286981656416, 1e-15);
}

TEST(PoissonCoefficient, VacuumIntensity) {
    EXPECT_EQ(poisson_coefficient(0.0, 0), 1.0);
    EXPECT_EQ(poisson_coefficient(0.0, 1), 0.0);
    EXPECT_EQ(poisson_coefficient(0.0, 5), 0.0);
}

TEST(PoissonCoefficient, RejectsBadInput) {
    EXPECT_THROW(poisson_coefficient(-0.1, 1), DomainError);
    EXPECT_THROW(poisson_coefficient(0.2, -1), DomainError);
    EXPECT_THROW(poisson_coefficient(std::nan(""), 1), DomainError);
}

TEST(CoherentCoefficients, MassIsConserved) {
    for (double mu : {0.0, 0.1, 0.6, 3.0, 12.0}) {
        const auto d = coherent_coefficients(mu, 10);
        ASSERT_EQ(d.k_max(), 10);
        double sum = d.tail_mass;
        for (double a : d.coefficients) {
            sum += a;
        }
        EXPECT_NEAR(sum, 1.0, 1e-14) << "mu=" << mu;
        EXPECT_GE(d.tail_mass, 0.0);
    }
}

TEST(CoherentCoefficients, TailMatchesDirectSum) {
    const auto d = coherent_coefficients(0.6, 4);
    long double tail = 0;
    for (int k = 5; k < 60; ++k) {
        tail += oracle::poisson(0.6L, k);
    }
    EXPECT_NEAR(d.tail_mass, static_cast<double>(tail), 1e-17);
}

TEST(PhotonDistribution, FromCoefficientsValidates) {
    const auto d = PhotonDistribution::from_coefficients({0.5, 0.3, 0.1, 0.05});
    EXPECT_NEAR(d.tail_mass, 0.05, 1e-15);
    EXPECT_THROW(PhotonDistribution::from_coefficients({0.6, 0.5, 0.1}), DomainError);
    EXPECT_THROW(PhotonDistribution::from_coefficients({0.5, -0.1, 0.1}), DomainError);
    EXPECT_THROW(PhotonDistribution::from_coefficients({}), DomainError);
}

TEST(CoefficientBounds, ZeroDeltaIsExact) {
    const auto m = coefficient_bounds(0.2, 0.0);
    const auto d = coherent_coefficients(0.2);
    for (int k = 0; k <= 10; ++k) {
        EXPECT_EQ(m.lo(k), d[k]);
        EXPECT_EQ(m.hi(k), d[k]);
    }
}

TEST(CoefficientBounds, AgreeWithGridSearch) {
    std::mt19937_64 eng(11);
    std::uniform_real_distribution<double> mu_dist(0.01, 3.0);
    std::uniform_real_distribution<double> delta_dist(0.0, 0.6);
    for (int trial = 0; trial < 60; ++trial) {
        const double mu = mu_dist(eng);
        const double delta = delta_dist(eng);
        const auto m = coefficient_bounds(mu, delta, 8);
        for (int k = 0; k <= 8; ++k) {
            const auto r = oracle::grid_range(mu * (1 - delta), mu * (1 + delta), k, 4000);
            const double lo = static_cast<double>(r.lo);
            const double hi = static_cast<double>(r.hi);
            // Grid extremes are inner approximations of the true extremes.
            EXPECT_LE(m.lo(k), lo * (1 + 1e-12) + 1e-300);
            EXPECT_GE(m.hi(k), hi * (1 - 1e-12));
            EXPECT_NEAR(m.lo(k), lo, 1e-12 * lo + 1e-300);
            EXPECT_NEAR(m.hi(k), hi, 1e-6 * hi + 1e-300);
        }
    }
}

TEST(CoefficientBounds, InteriorModeIsUsed) {
    // a_1 peaks at mu = 1, inside [0.5, 1.5].
    const auto m = coefficient_bounds(1.0, 0.5, 4);
    EXPECT_NEAR(m.hi(1), std::exp(-1.0), 1e-15);
    EXPECT_NEAR(m.lo(1), std::min(0.5 * std::exp(-0.5), 1.5 * std::exp(-1.5)), 1e-15);
}

TEST(CoefficientBounds, WidenWithDelta) {
    for (double mu : {0.2, 0.6, 2.0}) {
        auto prev = coefficient_bounds(mu, 0.0);
        for (double delta = 0.01; delta < 0.5; delta += 0.01) {
            const auto m = coefficient_bounds(mu, delta);
            for (int k = 0; k <= 10; ++k) {
                EXPECT_LE(m.lo(k), prev.lo(k));
                EXPECT_GE(m.hi(k), prev.hi(k));
            }
            prev = m;
        }
    }
}

TEST(CoefficientBounds, RejectsBadDelta) {
    EXPECT_THROW(coefficient_bounds(0.2, -0.01), DomainError);
    EXPECT_THROW(coefficient_bounds(0.2, 1.0), DomainError);
    EXPECT_THROW(coherent_interval(0.3, 0.2, 0.25), DomainError);
}

TEST(ExactCondition, HoldsForUsualIntensities) {
    const auto c = check_exact_condition(coherent_coefficients(0.2), coherent_coefficients(0.6));
    EXPECT_TRUE(c.ok);
    EXPECT_FALSE(c.first_violation.has_value());
}

TEST(ExactCondition, FailsWhenSwapped) {
    const auto c = check_exact_condition(coherent_coefficients(0.6), coherent_coefficients(0.2));
    EXPECT_FALSE(c.ok);
    ASSERT_TRUE(c.first_violation.has_value());
    EXPECT_EQ(*c.first_violation, 3);
}

TEST(ExactCondition, NeedsThreeTerms) {
    EXPECT_THROW(check_exact_condition(coherent_coefficients(0.2, 2), coherent_coefficients(0.6, 2)),
                 DomainError);
}

TEST(RobustCondition, WideDecoyAgainstExactSignal) {
    const auto decoy = coherent_interval(0.0, 0.2, 0.4);
    const auto signal = coefficient_bounds(0.6, 0.0);
    EXPECT_NEAR(signal.lo(2) / decoy.hi(2), 1.84214419442546, 1e-13);
    EXPECT_TRUE(check_robust_condition(decoy, signal).ok);
}

TEST(RobustCondition, SwappedSourcesFail) {
    const auto decoy = coherent_interval(0.0, 0.2, 0.4);
    const auto signal = coefficient_bounds(0.6, 0.0);
    const auto c = check_robust_condition(signal, decoy);
    EXPECT_FALSE(c.ok);
    ASSERT_TRUE(c.first_violation.has_value());
    EXPECT_EQ(*c.first_violation, 2);
}

TEST(RobustCondition, ReducesToExactAtZeroDelta) {
    for (double mu : {0.05, 0.1, 0.2, 0.3}) {
        for (double mu_prime : {0.4, 0.6, 0.9}) {
            const bool exact = check_exact_condition(coherent_coefficients(mu),
                                                     coherent_coefficients(mu_prime))
                                   .ok;
            const bool robust = check_robust_condition(coefficient_bounds(mu, 0.0),
                                                       coefficient_bounds(mu_prime, 0.0))
                                    .ok;
            EXPECT_EQ(exact, robust) << mu << " " << mu_prime;
        }
    }
}

TEST(RobustCondition, EventuallyFailsAsDeltaGrows) {
    EXPECT_TRUE(check_robust_condition(coefficient_bounds(0.2, 0.2), coefficient_bounds(0.6, 0.2)).ok);
    EXPECT_FALSE(check_robust_condition(coefficient_bounds(0.5, 0.3), coefficient_bounds(0.6, 0.3)).ok);
}

TEST(RobustCondition, DegenerateDenominator) {
    const auto vacuum = coefficient_bounds(0.0, 0.0);
    const auto c = check_robust_condition(vacuum, coefficient_bounds(0.6, 0.0));
    EXPECT_FALSE(c.ok);
    EXPECT_TRUE(c.degenerate_denominator);
}

TEST(RobustCondition, ZeroUpperCoefficientIsSkipped) {
    // Decoy supported on k <= 2 only: higher terms place no constraint.
    auto decoy = SourceModel::from_coefficient_bounds(0.2, 0.2, 0.2, {0.8, 0.15, 0.05, 0.0},
                                                      {0.8, 0.15, 0.05, 0.0});
    auto signal = SourceModel::from_coefficient_bounds(0.6, 0.6, 0.6, {0.5, 0.3, 0.15, 0.05},
                                                       {0.5, 0.3, 0.15, 0.05});
    EXPECT_TRUE(check_robust_condition(decoy, signal).ok);
}

TEST(Mix, WeightedAverage) {
    const std::vector<PhotonDistribution> parts = {coherent_coefficients(0.0),
                                                   coherent_coefficients(0.4)};
    const std::vector<double> w = {0.5, 0.5};
    const auto m = mix(parts, w);
    for (int k = 0; k <= 10; ++k) {
        EXPECT_NEAR(m[k], 0.5 * parts[0][k] + 0.5 * parts[1][k], 1e-16);
    }
    EXPECT_NEAR(m.tail_mass, 0.5 * parts[1].tail_mass, 1e-20);
    const std::vector<double> bad = {0.7, 0.5};
    EXPECT_THROW(mix(parts, bad), DomainError);
}

TEST(ProtocolSources, ValidateProbabilities) {
    ProtocolSources s;
    s.vacuum = coefficient_bounds(0.0, 0.0);
    s.decoy = coefficient_bounds(0.2, 0.0);
    s.signal = coefficient_bounds(0.6, 0.0);
    s.p0 = 0.1;
    s.p_mu = 0.3;
    s.p_mu_prime = 0.6;
    EXPECT_NO_THROW(s.validate());
    s.p_mu_prime = 0.7;
    EXPECT_THROW(s.validate(), DomainError);
}
