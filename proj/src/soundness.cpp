#include "decoyqkd/soundness.hpp"

#include <algorithm>
#include <limits>

#include "decoyqkd/errors.hpp"
#include "decoyqkd/rng.hpp"

namespace decoyqkd {

namespace {

// Trial scenarios come from their own stream, index 2^63 + trial, so they
// never collide with the pulse-chunk streams of the same seed.
constexpr std::uint64_t kScenarioStreamBase = 1ULL << 63;

ChannelRule random_channel(ChannelKind kind, const AttackScenario& sc, double delta,
                           std::mt19937_64& eng) {
    ChannelRule rule;
    rule.blocks.reserve(sc.n_blocks);
    for (std::uint64_t b = 0; b < sc.n_blocks; ++b) {
        switch (kind) {
            case ChannelKind::kBlockAttenuation: {
                const bool dropped = rng::uniform01(eng) < 0.25;
                rule.blocks.push_back(dropped ? BlockAction::drop()
                                              : BlockAction::attenuate(rng::uniform01(eng)));
                break;
            }
            case ChannelKind::kPhotonNumberResolving: {
                BlockAction action;
                action.yields.push_back(0.01 * rng::uniform01(eng));
                for (int k = 1; k <= sc.k_max + 1; ++k) {
                    action.yields.push_back(rng::uniform01(eng));
                }
                rule.blocks.push_back(std::move(action));
                break;
            }
            case ChannelKind::kPatternTracking: {
                // Favour blocks whose decoys run hot, starve the cold ones.
                const double m = sc.block_pattern[b].decoy_multiplier;
                const double position = delta > 0.0 ? (m - (1.0 - delta)) / (2.0 * delta) : 0.5;
                rule.blocks.push_back(BlockAction::attenuate(std::clamp(position, 0.0, 1.0)));
                break;
            }
        }
    }
    return rule;
}

}  // namespace

std::string to_string(ChannelKind kind) {
    switch (kind) {
        case ChannelKind::kBlockAttenuation:
            return "block_attenuation";
        case ChannelKind::kPhotonNumberResolving:
            return "photon_number_resolving";
        case ChannelKind::kPatternTracking:
            return "pattern_tracking";
    }
    return "unknown";
}

SoundnessSummary run_soundness(const SoundnessOptions& options, std::uint64_t seed) {
    if (options.trials <= 0 || options.deltas.empty()) {
        throw DomainError("soundness harness needs at least one trial and one delta");
    }
    SoundnessSummary summary;
    summary.min_relative_margin = std::numeric_limits<double>::infinity();
    for (int t = 0; t < options.trials; ++t) {
        auto eng = rng::stream(seed, kScenarioStreamBase + static_cast<std::uint64_t>(t));
        SoundnessTrial trial;
        trial.index = t;
        const auto pick = static_cast<std::size_t>(rng::uniform01(eng) *
                                                   static_cast<double>(options.deltas.size()));
        trial.delta = options.deltas[std::min(pick, options.deltas.size() - 1)];
        trial.channel = static_cast<ChannelKind>(t % 3);

        AttackScenario sc;
        sc.n_pulses = options.n_pulses;
        sc.n_blocks = options.n_blocks;
        sc.mu = options.mu;
        sc.mu_prime = options.mu_prime;
        sc.p0 = options.p0;
        sc.p_mu = options.p_mu;
        sc.p_mu_prime = options.p_mu_prime;
        sc.block_pattern.resize(sc.n_blocks);
        for (auto& blk : sc.block_pattern) {
            blk.decoy_multiplier = rng::uniform(eng, 1.0 - trial.delta, 1.0 + trial.delta);
            blk.signal_multiplier = rng::uniform(eng, 1.0 - trial.delta, 1.0 + trial.delta);
        }
        const auto channel = random_channel(trial.channel, sc, trial.delta, eng);

        const auto ledger = simulate(sc, channel, seed + static_cast<std::uint64_t>(t),
                                     options.threads);
        trial.observed = ledger.observed;
        trial.identity_ok = verify_counting_identity(ledger);
        trial.true_weighted_s1 = ledger.true_weighted_s1;
        trial.true_delta1_prime = ledger.true_delta1_prime;
        trial.bound = robust_s1_lower(ledger.observed,
                                      coefficient_bounds(options.mu, trial.delta),
                                      coefficient_bounds(options.mu_prime, trial.delta));
        const double d1p = trial.bound.delta1_prime_lower.value_or(0.0);
        trial.sound = trial.identity_ok && trial.bound.s1_lower <= trial.true_weighted_s1 &&
                      d1p <= trial.true_delta1_prime;
        if (!trial.sound) {
            ++summary.violations;
        }
        if (trial.true_weighted_s1 > 0.0) {
            summary.min_relative_margin =
                std::min(summary.min_relative_margin,
                         (trial.true_weighted_s1 - trial.bound.s1_lower) / trial.true_weighted_s1);
        }
        summary.trials.push_back(std::move(trial));
    }
    return summary;
}

}  // namespace decoyqkd
