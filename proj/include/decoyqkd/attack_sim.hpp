#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "decoyqkd/bounds.hpp"
#include "decoyqkd/decoy_core.hpp"

namespace decoyqkd {

/// Identifies the pulse-level random stream. Pulses are processed in fixed
/// chunks; chunk c draws from an mt19937_64 seeded with
/// splitmix64(seed + (c + 1) * 0x9E3779B97F4A7C15). Uniforms take the top 53
/// bits; photon numbers are drawn by sequential CDF inversion.
inline constexpr std::string_view kRngAlgorithm =
    "mt19937_64;chunk-seed=splitmix64;chunk=65536;uniform=53bit;poisson=inversion";
inline constexpr std::uint64_t kChunkPulses = 65536;

/// Intensity multipliers applied to every pulse of one block.
struct BlockErrors {
    double decoy_multiplier = 1.0;
    double signal_multiplier = 1.0;

    bool operator==(const BlockErrors&) const = default;
};

struct AttackScenario {
    std::uint64_t n_pulses = 0;
    std::uint64_t n_blocks = 1;
    double eta_e = 1.0;
    double mu = 0.2;
    double mu_prime = 0.6;
    /// One entry per block; empty means every pulse has its nominal intensity.
    std::vector<BlockErrors> block_pattern;
    double p0 = 0.1;
    double p_mu = 0.45;
    double p_mu_prime = 0.45;
    double dark_count = 0.0;
    /// Probability that a photon-induced click lands in the wrong bit.
    double detector_error = 0.0;
    int k_max = kDefaultKMax;

    void validate() const;
    std::uint64_t block_size() const { return n_pulses / n_blocks; }

    /// Half the blocks (even index) carry vacuum decoys, the other half carry
    /// decoys at twice the nominal intensity; signals are exact.
    static AttackScenario two_block_attack(double eta_e, std::uint64_t n_pulses,
                                       std::uint64_t n_blocks);

    bool operator==(const AttackScenario&) const = default;
};

/// What Eve does to the pulses of one block. She sees the block and the
/// photon number, never the class a pulse was drawn from.
///
/// With `yields` empty a k-photon pulse clicks with probability
/// 1 - (1 - transmittance)^k. Otherwise `yields[k]` is the click
/// probability directly, the last entry covering every larger k.
struct BlockAction {
    double transmittance = 1.0;
    std::vector<double> yields;

    double yield(int k) const;

    static BlockAction drop() { return BlockAction{0.0, {}}; }
    static BlockAction attenuate(double eta) { return BlockAction{eta, {}}; }

    bool operator==(const BlockAction&) const = default;
};

/// Pulse index -> block index -> action. A single entry applies to every block.
struct ChannelRule {
    std::vector<BlockAction> blocks;

    const BlockAction& action(std::uint64_t block) const;
    void validate(std::uint64_t n_blocks) const;

    static ChannelRule uniform(double eta);
    /// Drops every vacuum-decoy block and attenuates the rest by eta_e.
    static ChannelRule two_block_attack(const AttackScenario& scenario);

    bool operator==(const ChannelRule&) const = default;
};

/// Pulses and clicks of one source class, tallied both in total and per
/// photon number. The per-k vectors have k_max + 2 entries; the last one
/// collects every k > k_max.
struct ClassTally {
    std::uint64_t pulses = 0;
    std::uint64_t counts = 0;
    std::uint64_t errors = 0;
    std::vector<std::uint64_t> pulses_by_k;
    std::vector<std::uint64_t> counts_by_k;

    double rate() const;
    double qber() const;
    /// Counting rate of the k-photon sub-class, empty when it has no pulses.
    std::optional<double> sub_rate(std::size_t k) const;

    bool operator==(const ClassTally&) const = default;
};

struct SimulationLedger {
    std::string rng_algorithm;
    std::uint64_t seed = 0;
    std::uint64_t n_pulses = 0;
    std::uint64_t n_blocks = 0;
    int k_max = 0;

    ClassTally vacuum;
    ClassTally decoy;
    ClassTally signal;

    /// |l_k| for k = 0..k_max, then the overflow set.
    std::vector<std::uint64_t> l_sizes;
    /// sum over i in l_k of d_i, k = 0..k_max.
    std::vector<double> weighted_sums;

    ObservedRates observed;
    /// N^-1 sum_{i in l_1} d_i: what the robust bound is a bound on.
    double true_weighted_s1 = 0.0;
    /// Share of signal (decoy) clicks caused by single-photon pulses.
    double true_delta1_prime = 0.0;
    double true_delta1 = 0.0;

    std::vector<std::string> warnings;

    bool operator==(const SimulationLedger&) const = default;
};

struct AttackClosedForm {
    double eta_e = 0.0;
    double s_mu = 0.0;
    double s_mu_prime = 0.0;
    double true_s1 = 0.0;
    double true_s1_prime = 0.0;
    /// Exact-source bound fed with the block-averaged decoy state.
    double naive_s1_estimate = 0.0;
    /// Bound with decoy intensity known only to lie in [0, 2 mu].
    double robust_s1_lower = 0.0;
};

/// Decoy state averaged over the block pattern: half vacuum, half Poisson(2 mu).
PhotonDistribution averaged_attack_decoy(double mu = 0.2, int k_max = kDefaultKMax);

/// Exact observables and bounds of the two-block attack (vacuum / doubled
/// decoy blocks, first kind dropped, second attenuated by eta_e).
AttackClosedForm attack_closed_form(double eta_e, double mu = 0.2, double mu_prime = 0.6);

/// Pulse-by-pulse Monte Carlo. Deterministic in (scenario, channel, seed);
/// the result does not depend on `threads` (0 = hardware concurrency).
SimulationLedger simulate(const AttackScenario& scenario, const ChannelRule& channel,
                          std::uint64_t seed, unsigned threads = 0);

/// Integer check that the per-photon-number tallies add up to the class
/// totals and that every pulse sits in exactly one l_k.
bool verify_counting_identity(const SimulationLedger& ledger);

struct FilterResult {
    std::vector<std::size_t> kept;
    double discard_fraction = 0.0;
    SourceModel model;
};

/// Keeps pulses whose measured intensity is within relative tolerance delta
/// of nominal and returns the coefficient bounds that cover what was kept.
FilterResult filter_pulses(std::span<const double> measured_intensities, double nominal,
                           double delta, int k_max = kDefaultKMax);

}  // namespace decoyqkd
