#include "decoyqkd/attack_sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <string>
#include <thread>

#include "decoyqkd/errors.hpp"
#include "decoyqkd/rng.hpp"

namespace decoyqkd {

namespace {

constexpr std::uint64_t kWarnBelowPulses = 100000;

void require_unit(double x, const char* what) {
    if (!std::isfinite(x) || x < 0.0 || x > 1.0) {
        throw DomainError(std::string(what) + " must lie in [0, 1]");
    }
}

ClassTally empty_tally(int k_max) {
    ClassTally t;
    t.pulses_by_k.assign(static_cast<std::size_t>(k_max) + 2, 0);
    t.counts_by_k.assign(static_cast<std::size_t>(k_max) + 2, 0);
    return t;
}

void accumulate(ClassTally& into, const ClassTally& from) {
    into.pulses += from.pulses;
    into.counts += from.counts;
    into.errors += from.errors;
    for (std::size_t k = 0; k < into.pulses_by_k.size(); ++k) {
        into.pulses_by_k[k] += from.pulses_by_k[k];
        into.counts_by_k[k] += from.counts_by_k[k];
    }
}

// Per-block constants hoisted out of the pulse loop.
struct BlockState {
    double decoy_mean = 0.0;
    double decoy_exp = 1.0;
    double signal_mean = 0.0;
    double signal_exp = 1.0;
    std::vector<double> yields;  // k = 0..k_max + 1; the last entry is only a cache for k_max + 1
    const BlockAction* action = nullptr;

    double yield(int k) const {
        if (k < static_cast<int>(yields.size())) {
            return yields[static_cast<std::size_t>(k)];
        }
        return action->yield(k);
    }
};

struct Partial {
    ClassTally vacuum;
    ClassTally decoy;
    ClassTally signal;
    // Clicks per (block, k <= k_max), all classes together.
    std::vector<std::uint64_t> clicks;
};

Partial make_partial(int k_max, std::uint64_t n_blocks) {
    return Partial{empty_tally(k_max), empty_tally(k_max), empty_tally(k_max),
                   std::vector<std::uint64_t>(n_blocks * (static_cast<std::size_t>(k_max) + 1), 0)};
}

void run_chunk(const AttackScenario& sc, const std::vector<BlockState>& blocks,
               std::uint64_t seed, std::uint64_t chunk, Partial& out) {
    auto eng = rng::stream(seed, chunk);
    const std::uint64_t begin = chunk * kChunkPulses;
    const std::uint64_t end = std::min(sc.n_pulses, begin + kChunkPulses);
    const std::uint64_t block_size = sc.block_size();
    const auto overflow = static_cast<std::size_t>(sc.k_max) + 1;
    const double decoy_edge = sc.p0 + sc.p_mu;

    for (std::uint64_t i = begin; i < end; ++i) {
        const std::uint64_t b = i / block_size;
        const BlockState& block = blocks[b];

        const double u_class = rng::uniform01(eng);
        ClassTally* tally = nullptr;
        int k = 0;
        if (u_class < sc.p0) {
            tally = &out.vacuum;
            rng::uniform01(eng);  // keeps one photon-number draw per pulse
        } else if (u_class < decoy_edge) {
            tally = &out.decoy;
            k = rng::poisson(eng, block.decoy_mean, block.decoy_exp);
        } else {
            tally = &out.signal;
            k = rng::poisson(eng, block.signal_mean, block.signal_exp);
        }

        bool click = false;
        bool error = false;
        if (rng::uniform01(eng) < block.yield(k)) {
            click = true;
            error = sc.detector_error > 0.0 && rng::uniform01(eng) < sc.detector_error;
        } else if (sc.dark_count > 0.0 && rng::uniform01(eng) < sc.dark_count) {
            click = true;
            error = rng::uniform01(eng) < 0.5;
        }

        const auto bin = std::min(static_cast<std::size_t>(k), overflow);
        ++tally->pulses;
        ++tally->pulses_by_k[bin];
        if (click) {
            ++tally->counts;
            ++tally->counts_by_k[bin];
            if (error) {
                ++tally->errors;
            }
            if (k <= sc.k_max) {
                ++out.clicks[b * overflow + static_cast<std::size_t>(k)];
            }
        }
    }
}

}  // namespace

void AttackScenario::validate() const {
    if (n_blocks == 0 || n_pulses == 0 || n_pulses % n_blocks != 0) {
        throw DomainError("n_pulses must be a positive multiple of n_blocks");
    }
    if (!block_pattern.empty() && block_pattern.size() != n_blocks) {
        throw DomainError("block_pattern needs exactly one entry per block, or none");
    }
    for (const auto& blk : block_pattern) {
        if (!std::isfinite(blk.decoy_multiplier) || blk.decoy_multiplier < 0.0 ||
            !std::isfinite(blk.signal_multiplier) || blk.signal_multiplier < 0.0) {
            throw DomainError("intensity multipliers must be non-negative");
        }
    }
    require_unit(eta_e, "eta_e");
    require_unit(dark_count, "dark_count");
    require_unit(detector_error, "detector_error");
    if (!std::isfinite(mu) || !std::isfinite(mu_prime) || mu < 0.0 || mu_prime < 0.0) {
        throw DomainError("nominal intensities must be non-negative");
    }
    for (double p : {p0, p_mu, p_mu_prime}) {
        if (!std::isfinite(p) || p <= 0.0 || p >= 1.0) {
            throw DomainError("class probabilities must lie in (0, 1)");
        }
    }
    if (std::abs(p0 + p_mu + p_mu_prime - 1.0) > 1e-12) {
        throw DomainError("class probabilities p0 + p_mu + p_mu_prime must sum to 1");
    }
    if (k_max < 3) {
        throw DomainError("k_max must be at least 3");
    }
}

AttackScenario AttackScenario::two_block_attack(double eta_e, std::uint64_t n_pulses,
                                            std::uint64_t n_blocks) {
    AttackScenario sc;
    sc.n_pulses = n_pulses;
    sc.n_blocks = n_blocks;
    sc.eta_e = eta_e;
    sc.block_pattern.resize(n_blocks);
    for (std::uint64_t b = 0; b < n_blocks; ++b) {
        sc.block_pattern[b].decoy_multiplier = (b % 2 == 0) ? 0.0 : 2.0;
    }
    return sc;
}

double BlockAction::yield(int k) const {
    if (!yields.empty()) {
        const auto idx = std::min(static_cast<std::size_t>(k), yields.size() - 1);
        return yields[idx];
    }
    if (k == 0) {
        return 0.0;
    }
    return 1.0 - std::pow(1.0 - transmittance, k);
}

const BlockAction& ChannelRule::action(std::uint64_t block) const {
    return blocks.size() == 1 ? blocks.front() : blocks.at(block);
}

void ChannelRule::validate(std::uint64_t n_blocks) const {
    if (blocks.size() != 1 && blocks.size() != n_blocks) {
        throw DomainError("channel rule needs one action, or one per block");
    }
    for (const auto& a : blocks) {
        require_unit(a.transmittance, "block transmittance");
        for (double y : a.yields) {
            require_unit(y, "photon-number yield");
        }
    }
}

ChannelRule ChannelRule::uniform(double eta) {
    return ChannelRule{{BlockAction::attenuate(eta)}};
}

ChannelRule ChannelRule::two_block_attack(const AttackScenario& scenario) {
    ChannelRule rule;
    rule.blocks.reserve(scenario.block_pattern.size());
    for (const auto& blk : scenario.block_pattern) {
        rule.blocks.push_back(blk.decoy_multiplier == 0.0 ? BlockAction::drop()
                                                          : BlockAction::attenuate(scenario.eta_e));
    }
    return rule;
}

double ClassTally::rate() const {
    return pulses == 0 ? 0.0 : static_cast<double>(counts) / static_cast<double>(pulses);
}

double ClassTally::qber() const {
    return counts == 0 ? 0.0 : static_cast<double>(errors) / static_cast<double>(counts);
}

std::optional<double> ClassTally::sub_rate(std::size_t k) const {
    if (k >= pulses_by_k.size() || pulses_by_k[k] == 0) {
        return std::nullopt;
    }
    return static_cast<double>(counts_by_k[k]) / static_cast<double>(pulses_by_k[k]);
}

PhotonDistribution averaged_attack_decoy(double mu, int k_max) {
    const PhotonDistribution parts[] = {coherent_coefficients(0.0, k_max),
                                        coherent_coefficients(2.0 * mu, k_max)};
    const double weights[] = {0.5, 0.5};
    return mix(parts, weights);
}

AttackClosedForm attack_closed_form(double eta_e, double mu, double mu_prime) {
    require_unit(eta_e, "eta_e");
    AttackClosedForm out;
    out.eta_e = eta_e;
    out.s_mu = -std::expm1(-2.0 * eta_e * mu) / 2.0;
    out.s_mu_prime = -std::expm1(-eta_e * mu_prime) / 2.0;
    out.true_s1 = eta_e;
    out.true_s1_prime = eta_e / 2.0;

    const ObservedRates obs{0.0, out.s_mu, out.s_mu_prime, 0.0, 0.0};
    out.naive_s1_estimate =
        naive_s1_lower(obs, averaged_attack_decoy(mu), coherent_coefficients(mu_prime)).s1_lower;
    out.robust_s1_lower = robust_s1_lower(obs, coherent_interval(0.0, mu, 2.0 * mu),
                                          coefficient_bounds(mu_prime, 0.0))
                              .s1_lower;
    return out;
}

SimulationLedger simulate(const AttackScenario& scenario, const ChannelRule& channel,
                          std::uint64_t seed, unsigned threads) {
    scenario.validate();
    channel.validate(scenario.n_blocks);
    const int k_max = scenario.k_max;
    const auto width = static_cast<std::size_t>(k_max) + 1;

    std::vector<BlockState> blocks(scenario.n_blocks);
    for (std::uint64_t b = 0; b < scenario.n_blocks; ++b) {
        auto& st = blocks[b];
        st.action = &channel.action(b);
        const auto errors = scenario.block_pattern.empty() ? BlockErrors{} : scenario.block_pattern[b];
        st.decoy_mean = scenario.mu * errors.decoy_multiplier;
        st.signal_mean = scenario.mu_prime * errors.signal_multiplier;
        st.decoy_exp = std::exp(-st.decoy_mean);
        st.signal_exp = std::exp(-st.signal_mean);
        for (int k = 0; k <= k_max + 1; ++k) {
            st.yields.push_back(st.action->yield(k));
        }
    }

    const std::uint64_t n_chunks = (scenario.n_pulses + kChunkPulses - 1) / kChunkPulses;
    unsigned workers = threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : threads;
    workers = static_cast<unsigned>(std::min<std::uint64_t>(workers, n_chunks));

    std::vector<Partial> partials;
    partials.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        partials.push_back(make_partial(k_max, scenario.n_blocks));
    }
    std::atomic<std::uint64_t> next{0};
    auto work = [&](Partial& out) {
        for (std::uint64_t c = next++; c < n_chunks; c = next++) {
            run_chunk(scenario, blocks, seed, c, out);
        }
    };
    if (workers == 1) {
        work(partials.front());
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back(work, std::ref(partials[w]));
        }
    }

    // Integer tallies merge exactly, so the ledger is independent of how
    // chunks were spread over workers.
    Partial total = make_partial(k_max, scenario.n_blocks);
    for (const auto& p : partials) {
        accumulate(total.vacuum, p.vacuum);
        accumulate(total.decoy, p.decoy);
        accumulate(total.signal, p.signal);
        for (std::size_t j = 0; j < total.clicks.size(); ++j) {
            total.clicks[j] += p.clicks[j];
        }
    }

    SimulationLedger ledger;
    ledger.rng_algorithm = std::string(kRngAlgorithm);
    ledger.seed = seed;
    ledger.n_pulses = scenario.n_pulses;
    ledger.n_blocks = scenario.n_blocks;
    ledger.k_max = k_max;
    ledger.vacuum = std::move(total.vacuum);
    ledger.decoy = std::move(total.decoy);
    ledger.signal = std::move(total.signal);

    ledger.l_sizes.assign(width + 1, 0);
    for (std::size_t k = 0; k <= width; ++k) {
        ledger.l_sizes[k] = ledger.vacuum.pulses_by_k[k] + ledger.decoy.pulses_by_k[k] +
                            ledger.signal.pulses_by_k[k];
    }

    // d_i = eta_i / (probability that pulse slot i carries k photons).
    ledger.weighted_sums.assign(width, 0.0);
    for (std::uint64_t b = 0; b < scenario.n_blocks; ++b) {
        const auto& st = blocks[b];
        for (int k = 0; k <= k_max; ++k) {
            const auto clicks = total.clicks[b * width + static_cast<std::size_t>(k)];
            if (clicks == 0) {
                continue;
            }
            double weight = scenario.p_mu * poisson_coefficient(st.decoy_mean, k) +
                            scenario.p_mu_prime * poisson_coefficient(st.signal_mean, k);
            if (k == 0) {
                weight += scenario.p0;
            }
            ledger.weighted_sums[static_cast<std::size_t>(k)] +=
                static_cast<double>(clicks) / weight;
        }
    }

    ledger.observed = ObservedRates{ledger.vacuum.rate(), ledger.decoy.rate(),
                                    ledger.signal.rate(), ledger.signal.qber(),
                                    ledger.decoy.qber()};
    ledger.true_weighted_s1 = ledger.weighted_sums[1] / static_cast<double>(scenario.n_pulses);
    if (ledger.signal.counts > 0) {
        ledger.true_delta1_prime = static_cast<double>(ledger.signal.counts_by_k[1]) /
                                   static_cast<double>(ledger.signal.counts);
    }
    if (ledger.decoy.counts > 0) {
        ledger.true_delta1 = static_cast<double>(ledger.decoy.counts_by_k[1]) /
                             static_cast<double>(ledger.decoy.counts);
    }
    if (scenario.n_pulses < kWarnBelowPulses) {
        ledger.warnings.push_back("fewer than 1e5 pulses: class rates carry large sampling error");
    }
    return ledger;
}

bool verify_counting_identity(const SimulationLedger& ledger) {
    const auto bins = static_cast<std::size_t>(ledger.k_max) + 2;
    auto class_ok = [bins](const ClassTally& t) {
        if (t.pulses_by_k.size() != bins || t.counts_by_k.size() != bins) {
            return false;
        }
        std::uint64_t pulses = 0;
        std::uint64_t counts = 0;
        for (std::size_t k = 0; k < bins; ++k) {
            if (t.counts_by_k[k] > t.pulses_by_k[k]) {
                return false;
            }
            pulses += t.pulses_by_k[k];
            counts += t.counts_by_k[k];
        }
        return pulses == t.pulses && counts == t.counts && t.errors <= t.counts;
    };
    if (!class_ok(ledger.vacuum) || !class_ok(ledger.decoy) || !class_ok(ledger.signal)) {
        return false;
    }
    if (ledger.l_sizes.size() != bins) {
        return false;
    }
    std::uint64_t assigned = 0;
    for (std::size_t k = 0; k < bins; ++k) {
        if (ledger.l_sizes[k] != ledger.vacuum.pulses_by_k[k] + ledger.decoy.pulses_by_k[k] +
                                     ledger.signal.pulses_by_k[k]) {
            return false;
        }
        assigned += ledger.l_sizes[k];
    }
    if (assigned != ledger.n_pulses ||
        ledger.vacuum.pulses + ledger.decoy.pulses + ledger.signal.pulses != ledger.n_pulses) {
        return false;
    }
    return ledger.observed.s0 == ledger.vacuum.rate() &&
           ledger.observed.s_mu == ledger.decoy.rate() &&
           ledger.observed.s_mu_prime == ledger.signal.rate();
}

FilterResult filter_pulses(std::span<const double> measured_intensities, double nominal,
                           double delta, int k_max) {
    if (!std::isfinite(nominal) || nominal <= 0.0) {
        throw DomainError("nominal intensity must be positive to define a relative window");
    }
    if (!std::isfinite(delta) || delta < 0.0 || delta >= 1.0) {
        throw DomainError("relative tolerance must lie in [0, 1)");
    }
    const double lo = nominal * (1.0 - delta);
    const double hi = nominal * (1.0 + delta);
    // Absorbs the rounding in nominal * (1 +- delta) at the window edges.
    const double slack = 1e-12 * nominal;

    FilterResult out;
    double kept_lo = lo;
    double kept_hi = hi;
    for (std::size_t i = 0; i < measured_intensities.size(); ++i) {
        const double m = measured_intensities[i];
        if (std::isfinite(m) && m >= lo - slack && m <= hi + slack) {
            out.kept.push_back(i);
            kept_lo = std::min(kept_lo, m);
            kept_hi = std::max(kept_hi, m);
        }
    }
    if (!measured_intensities.empty()) {
        out.discard_fraction = 1.0 - static_cast<double>(out.kept.size()) /
                                         static_cast<double>(measured_intensities.size());
    }
    out.model = coherent_interval(std::max(0.0, kept_lo), nominal, kept_hi, k_max);
    return out;
}

}  // namespace decoyqkd
