#include "decoyqkd/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "decoyqkd/errors.hpp"

namespace decoyqkd {

namespace {

struct Clamp {
    double value;
    bool clamped;
};

Clamp clamp_unit(double raw, double hi = 1.0) {
    const double v = std::clamp(raw, 0.0, hi);
    return {v, v != raw};
}

std::string violation_message(const char* which, const ConditionCheck& check) {
    std::string msg = std::string(which) + " decoy condition violated";
    if (check.degenerate_denominator) {
        msg += " (degenerate denominator: a_2 upper bound is zero)";
    } else if (check.first_violation) {
        msg += " at k = " + std::to_string(*check.first_violation);
    }
    return msg;
}

// Turns a raw s1 value into a result with the single-photon fractions filled
// in. `a1_signal` / `a1_decoy` are the coefficients the fractions use.
BoundResult finish(const ObservedRates& obs, double raw, double a1_signal, double a1_decoy) {
    BoundResult result;
    result.condition_ok = true;
    result.s1_raw = raw;
    const auto s1 = clamp_unit(raw);
    result.s1_lower = s1.value;
    result.clamped = s1.clamped;
    if (obs.s_mu_prime > 0.0) {
        const auto d = clamp_unit(a1_signal * s1.value / obs.s_mu_prime);
        result.delta1_prime_lower = d.value;
        result.clamped = result.clamped || d.clamped;
    }
    if (obs.s_mu > 0.0) {
        const auto d = clamp_unit(a1_decoy * s1.value / obs.s_mu);
        result.delta1_lower = d.value;
        result.clamped = result.clamped || d.clamped;
    }
    return result;
}

}  // namespace

void ObservedRates::validate() const {
    const std::pair<double, const char*> fields[] = {
        {s0, "s0"},
        {s_mu, "s_mu"},
        {s_mu_prime, "s_mu_prime"},
        {qber_signal, "qber_signal"},
        {qber_decoy, "qber_decoy"},
    };
    for (const auto& [value, name] : fields) {
        if (!std::isfinite(value) || value < 0.0 || value > 1.0) {
            throw DomainError(std::string("observed ") + name + " must lie in [0, 1]");
        }
    }
}

BoundResult naive_s1_lower(const ObservedRates& obs, const PhotonDistribution& decoy,
                           const PhotonDistribution& signal) {
    obs.validate();
    const auto check = check_exact_condition(decoy, signal);
    if (!check) {
        throw ConditionViolation(violation_message("exact", check));
    }
    const double den = signal[2] * decoy[1] - signal[1] * decoy[2];
    if (!(den > 0.0)) {
        throw ConditionViolation("coefficient ordering violated: a'_2 a_1 - a'_1 a_2 <= 0");
    }
    const double num = signal[2] * (obs.s_mu - decoy[0] * obs.s0) -
                       decoy[2] * (obs.s_mu_prime - signal[0] * obs.s0);
    auto result = finish(obs, num / den, signal[1], decoy[1]);
    const auto lambda = clamp_unit(obs.s_mu - decoy[0] * obs.s0 - decoy[1] * result.s1_lower);
    result.lambda_upper = lambda.value;
    result.clamped = result.clamped || lambda.clamped;
    return result;
}

BoundResult robust_s1_lower(const ObservedRates& obs, const SourceModel& decoy,
                            const SourceModel& signal) {
    obs.validate();
    const auto check = check_robust_condition(decoy, signal);
    if (!check) {
        throw ConditionViolation(violation_message("robust", check));
    }
    const double den = signal.lo(2) * decoy.hi(1) - signal.lo(1) * decoy.hi(2);
    if (!(den > 0.0)) {
        throw ConditionViolation("coefficient ordering violated: a'_2^L a_1^U - a'_1^L a_2^U <= 0");
    }
    const double num = signal.lo(2) * obs.s_mu - decoy.hi(2) * obs.s_mu_prime +
                       signal.lo(0) * decoy.hi(2) * obs.s0 -
                       decoy.hi(0) * signal.lo(2) * obs.s0;
    return finish(obs, num / den, signal.lo(1), decoy.lo(1));
}

ErrorRateBound e1_upper(const ObservedRates& obs, const SourceModel& source, double s1_lower,
                        QberBasis basis) {
    obs.validate();
    if (!std::isfinite(s1_lower) || s1_lower < 0.0 || s1_lower > 1.0) {
        throw DomainError("s1_lower must lie in [0, 1]");
    }
    const double a1 = source.lo(1);
    if (s1_lower == 0.0 || a1 == 0.0) {
        return ErrorRateBound{0.5, true, false};
    }
    const bool signal = basis == QberBasis::kSignal;
    const double qber = signal ? obs.qber_signal : obs.qber_decoy;
    const double rate = signal ? obs.s_mu_prime : obs.s_mu;
    constexpr double kVacuumErrorRate = 0.5;
    const double raw = (qber * rate - kVacuumErrorRate * source.lo(0) * obs.s0) / (a1 * s1_lower);
    const auto t1 = clamp_unit(raw, 0.5);
    return ErrorRateBound{t1.value, false, t1.clamped};
}

}  // namespace decoyqkd
