#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "decoyqkd/attack_sim.hpp"
#include "decoyqkd/errors.hpp"
#include "decoyqkd/rng.hpp"
#include "decoyqkd/soundness.hpp"
#include "support/oracle.hpp"

using namespace decoyqkd;

namespace {

// Three-sigma binomial window around p for n trials.
void expect_binomial(double estimate, double p, double n, const char* what) {
    const double se = std::sqrt(p * (1 - p) / n);
    EXPECT_NEAR(estimate, p, 3.0 * se + 1e-15) << what;
}

}  // namespace

TEST(ClosedForm, SmallEtaLimit) {
    const auto tiny = attack_closed_form(1e-6);
    EXPECT_NEAR(tiny.naive_s1_estimate / 1e-6, 2.6533549, 1e-6);
    EXPECT_NEAR(tiny.true_s1_prime / 1e-6, 0.5, 1e-9);
    const auto small = attack_closed_form(1e-3);
    EXPECT_NEAR(small.naive_s1_estimate / 1e-3, 2.65300684, 1e-7);
}

TEST(ClosedForm, TenPercentTransmittance) {
    const auto cf = attack_closed_form(0.1);
    EXPECT_NEAR(cf.s_mu, 0.0196052804238384, 1e-15);
    EXPECT_NEAR(cf.s_mu_prime, 0.0291177332078756, 1e-15);
    EXPECT_NEAR(cf.true_s1_prime, 0.05, 1e-15);
    EXPECT_NEAR(cf.robust_s1_lower, 0.0425040812107369, 1e-14);
    EXPECT_GT(cf.naive_s1_estimate, cf.true_s1_prime);
    EXPECT_LE(cf.robust_s1_lower, cf.true_s1_prime);
}

TEST(ClosedForm, DirectSumOracle) {
    // Vacuum blocks dropped, doubled-decoy blocks attenuated by eta.
    for (double eta : {0.01, 0.1, 0.5}) {
        long double s_mu = 0, s_mu_prime = 0;
        for (int k = 1; k < 60; ++k) {
            const long double y = 1 - std::pow(1.0L - eta, k);
            s_mu += 0.5L * oracle::poisson(0.4L, k) * y;
            s_mu_prime += 0.5L * oracle::poisson(0.6L, k) * y;
        }
        const auto cf = attack_closed_form(eta);
        EXPECT_NEAR(cf.s_mu, static_cast<double>(s_mu), 1e-15);
        EXPECT_NEAR(cf.s_mu_prime, static_cast<double>(s_mu_prime), 1e-15);
    }
}

TEST(AveragedDecoy, HalfVacuumHalfDoubled) {
    const auto d = averaged_attack_decoy(0.2);
    EXPECT_NEAR(d[0], 0.5 + 0.5 * std::exp(-0.4), 1e-16);
    EXPECT_NEAR(d[1], 0.5 * 0.4 * std::exp(-0.4), 1e-16);
}

TEST(Rng, PoissonMoments) {
    auto eng = rng::stream(5, 0);
    const double mean = 0.6;
    const int n = 400000;
    double sum = 0, sq = 0;
    for (int i = 0; i < n; ++i) {
        const int k = rng::poisson(eng, mean);
        sum += k;
        sq += static_cast<double>(k) * k;
    }
    const double m = sum / n;
    EXPECT_NEAR(m, mean, 4 * std::sqrt(mean / n));
    EXPECT_NEAR(sq / n - m * m, mean, 0.01);
}

TEST(Rng, StreamsAreDistinct) {
    auto a = rng::stream(1, 0);
    auto b = rng::stream(1, 1);
    auto c = rng::stream(2, 0);
    const auto x = a();
    EXPECT_NE(x, b());
    EXPECT_NE(x, c());
}

TEST(Simulate, TwoBlockAttackAgreesWithClosedForm) {
    const auto sc = AttackScenario::two_block_attack(0.1, 2'000'000, 100);
    const auto ledger = simulate(sc, ChannelRule::two_block_attack(sc), 42);
    const auto cf = attack_closed_form(0.1);
    expect_binomial(ledger.observed.s_mu, cf.s_mu, static_cast<double>(ledger.decoy.pulses), "S_mu");
    expect_binomial(ledger.observed.s_mu_prime, cf.s_mu_prime,
                    static_cast<double>(ledger.signal.pulses), "S_mu'");
    expect_binomial(*ledger.signal.sub_rate(1), cf.true_s1_prime,
                    static_cast<double>(ledger.signal.pulses_by_k[1]), "s1'");
    EXPECT_EQ(ledger.observed.s0, 0.0);
    EXPECT_TRUE(verify_counting_identity(ledger));
}

TEST(Simulate, DeterministicAndThreadIndependent) {
    const auto sc = AttackScenario::two_block_attack(0.3, 600'000, 10);
    const auto ch = ChannelRule::two_block_attack(sc);
    const auto one = simulate(sc, ch, 9, 1);
    const auto four = simulate(sc, ch, 9, 4);
    const auto again = simulate(sc, ch, 9, 3);
    EXPECT_EQ(one, four);
    EXPECT_EQ(one, again);
    const auto other = simulate(sc, ch, 10, 1);
    EXPECT_NE(one.signal.counts, other.signal.counts);
}

TEST(Simulate, CountingIdentityCatchesCorruption) {
    const auto sc = AttackScenario::two_block_attack(0.3, 200'000, 10);
    auto ledger = simulate(sc, ChannelRule::two_block_attack(sc), 3);
    ASSERT_TRUE(verify_counting_identity(ledger));
    auto broken = ledger;
    broken.signal.counts_by_k[1] += 1;
    EXPECT_FALSE(verify_counting_identity(broken));
    broken = ledger;
    broken.l_sizes[2] -= 1;
    EXPECT_FALSE(verify_counting_identity(broken));
    broken = ledger;
    broken.decoy.pulses += 1;
    EXPECT_FALSE(verify_counting_identity(broken));
}

// With exact intensities and a channel that only sees photon number, the
// k-photon yield is the same in every class.
TEST(Simulate, PhotonNumberChannelGivesEqualYields) {
    AttackScenario sc;
    sc.n_pulses = 2'000'000;
    sc.n_blocks = 1;
    BlockAction action;
    action.yields = {0.01, 0.3, 0.6, 0.9};
    const auto ledger = simulate(sc, ChannelRule{{action}}, 17);
    for (std::size_t k = 0; k <= 2; ++k) {
        const double n_d = static_cast<double>(ledger.decoy.pulses_by_k[k]);
        const double n_s = static_cast<double>(ledger.signal.pulses_by_k[k]);
        const double y = action.yields[k];
        const double se = std::sqrt(y * (1 - y) * (1 / n_d + 1 / n_s));
        EXPECT_NEAR(*ledger.decoy.sub_rate(k), *ledger.signal.sub_rate(k), 4 * se) << k;
    }
    EXPECT_NEAR(ledger.true_weighted_s1, 0.3, 0.01);
    const auto b = robust_s1_lower(ledger.observed, coefficient_bounds(0.2, 0.0), coefficient_bounds(0.6, 0.0));
    EXPECT_NEAR(b.s1_lower, 0.3, 0.05);
}

TEST(Simulate, AttackSplitsSinglePhotonYields) {
    const auto sc = AttackScenario::two_block_attack(0.1, 2'000'000, 100);
    const auto ledger = simulate(sc, ChannelRule::two_block_attack(sc), 8);
    // Single-photon decoys only come from the doubled blocks.
    const double s1 = *ledger.decoy.sub_rate(1);
    const double s1p = *ledger.signal.sub_rate(1);
    EXPECT_NEAR(s1, 0.1, 0.01);
    EXPECT_NEAR(s1p, 0.05, 0.005);
}

TEST(Simulate, DarkCountsAndDetectorErrors) {
    AttackScenario sc;
    sc.n_pulses = 1'000'000;
    sc.dark_count = 1e-3;
    sc.detector_error = 0.02;
    const auto ledger = simulate(sc, ChannelRule::uniform(0.0), 4);
    expect_binomial(ledger.observed.s0, 1e-3, static_cast<double>(ledger.vacuum.pulses), "dark");
    EXPECT_NEAR(ledger.observed.qber_signal, 0.5, 0.1);
}

TEST(Simulate, RejectsInvalidScenario) {
    AttackScenario sc;
    sc.n_pulses = 1000;
    sc.n_blocks = 3;
    EXPECT_THROW(simulate(sc, ChannelRule::uniform(0.5), 1), DomainError);
    sc.n_blocks = 10;
    sc.p0 = 0.5;
    EXPECT_THROW(simulate(sc, ChannelRule::uniform(0.5), 1), DomainError);
    sc = AttackScenario{};
    sc.n_pulses = 1000;
    sc.n_blocks = 10;
    EXPECT_THROW(simulate(sc, ChannelRule{{BlockAction::drop(), BlockAction::drop()}}, 1), DomainError);
}

TEST(Filter, UniformSpreadKeepsHalf) {
    std::vector<double> measured(100001);
    for (std::size_t i = 0; i < measured.size(); ++i) {
        measured[i] = 0.18 + 0.04 * static_cast<double>(i) / (measured.size() - 1);
    }
    const auto r = filter_pulses(measured, 0.2, 0.05);
    EXPECT_NEAR(r.discard_fraction, 0.5, 1e-3);
    for (auto i : r.kept) {
        EXPECT_GE(measured[i], 0.19 * (1 - 1e-12));
        EXPECT_LE(measured[i], 0.21 * (1 + 1e-12));
    }
    const auto window = coefficient_bounds(0.2, 0.05);
    for (int k = 0; k <= 10; ++k) {
        EXPECT_LE(r.model.lo(k), window.lo(k) * (1 + 1e-12));
        EXPECT_GE(r.model.hi(k), window.hi(k) * (1 - 1e-12));
    }
}

TEST(Filter, EdgesAreInclusive) {
    const std::vector<double> measured = {0.19, 0.21, 0.2, 0.189, 0.2101};
    const auto r = filter_pulses(measured, 0.2, 0.05);
    EXPECT_EQ(r.kept, (std::vector<std::size_t>{0, 1, 2}));
    EXPECT_NEAR(r.discard_fraction, 0.4, 1e-15);
}

TEST(Filter, NothingKept) {
    const std::vector<double> measured = {0.5, 0.6};
    const auto r = filter_pulses(measured, 0.2, 0.05);
    EXPECT_TRUE(r.kept.empty());
    EXPECT_EQ(r.discard_fraction, 1.0);
}

TEST(Soundness, SmallHarnessRun) {
    SoundnessOptions opt;
    opt.trials = 6;
    opt.n_pulses = 1 << 18;
    opt.n_blocks = 16;
    const auto summary = run_soundness(opt, 99);
    ASSERT_EQ(summary.trials.size(), 6u);
    EXPECT_EQ(summary.violations, 0);
    for (const auto& t : summary.trials) {
        EXPECT_TRUE(t.identity_ok);
        EXPECT_GE(t.delta, 0.01);
        EXPECT_LE(t.delta, 0.2);
    }
    const auto again = run_soundness(opt, 99);
    EXPECT_EQ(again.trials.back().observed, summary.trials.back().observed);
}
