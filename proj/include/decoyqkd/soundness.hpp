#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "decoyqkd/attack_sim.hpp"
#include "decoyqkd/bounds.hpp"

namespace decoyqkd {

struct SoundnessOptions {
    int trials = 100;
    std::uint64_t n_pulses = 1u << 21;
    std::uint64_t n_blocks = 32;
    double mu = 0.2;
    double mu_prime = 0.6;
    double p0 = 0.1;
    double p_mu = 0.45;
    double p_mu_prime = 0.45;
    /// Relative error bounds to draw from, one per trial.
    std::vector<double> deltas = {0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07,
                                  0.08, 0.09, 0.10, 0.11, 0.12, 0.13, 0.14,
                                  0.15, 0.16, 0.17, 0.18, 0.19, 0.20};
    unsigned threads = 0;

    bool operator==(const SoundnessOptions&) const = default;
};

enum class ChannelKind {
    /// Independent random transmittance per block, some blocks dropped.
    kBlockAttenuation,
    /// Eve resolves photon number: independent random yield per (block, k).
    kPhotonNumberResolving,
    /// Transmittance tracks the block's decoy error to exploit the pattern.
    kPatternTracking,
};

std::string to_string(ChannelKind kind);

struct SoundnessTrial {
    int index = 0;
    double delta = 0.0;
    ChannelKind channel = ChannelKind::kBlockAttenuation;
    ObservedRates observed;
    BoundResult bound;
    double true_weighted_s1 = 0.0;
    double true_delta1_prime = 0.0;
    bool identity_ok = false;
    /// bound <= truth for both s1 and the signal single-photon fraction.
    bool sound = false;
};

struct SoundnessSummary {
    std::vector<SoundnessTrial> trials;
    int violations = 0;
    /// Smallest (truth - bound) / truth over all trials.
    double min_relative_margin = 0.0;
};

/// Random correlated intensity errors within [1 - delta, 1 + delta] per block
/// for both decoy and signal, a random time-dependent channel, one Monte Carlo
/// run each; the robust bound is checked against the ledger's ground truth.
SoundnessSummary run_soundness(const SoundnessOptions& options, std::uint64_t seed);

}  // namespace decoyqkd
