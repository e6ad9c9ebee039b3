#include "decoyqkd/keyrate.hpp"

#include <cmath>

#include "decoyqkd/errors.hpp"

namespace decoyqkd {

void KeyRateParams::validate() const {
    if (!std::isfinite(repetition_rate) || repetition_rate <= 0.0) {
        throw DomainError("repetition_rate must be positive");
    }
    if (!std::isfinite(duration) || duration <= 0.0) {
        throw DomainError("duration must be positive");
    }
    if (!std::isfinite(p_mu_prime) || p_mu_prime <= 0.0 || p_mu_prime >= 1.0) {
        throw DomainError("p_mu_prime must lie in (0, 1)");
    }
    if (!std::isfinite(sift_factor) || sift_factor < 0.0 || sift_factor > 1.0) {
        throw DomainError("sift_factor must lie in [0, 1]");
    }
    if (!std::isfinite(ec_efficiency) || ec_efficiency < 1.0) {
        throw DomainError("ec_efficiency must be at least 1");
    }
}

double binary_entropy(double x) {
    if (!std::isfinite(x) || x < 0.0 || x > 1.0) {
        throw DomainError("binary entropy argument must lie in [0, 1]");
    }
    if (x == 0.0 || x == 1.0) {
        return 0.0;
    }
    return -x * std::log2(x) - (1.0 - x) * std::log2(1.0 - x);
}

KeyRate key_rate(double delta1_prime, double t1, double t, double f) {
    if (!std::isfinite(delta1_prime) || delta1_prime < 0.0 || delta1_prime > 1.0) {
        throw DomainError("single-photon fraction must lie in [0, 1]");
    }
    if (!std::isfinite(f) || f < 1.0) {
        throw DomainError("error-correction inefficiency must be at least 1");
    }
    const double r = delta1_prime * (1.0 - binary_entropy(t1)) - f * binary_entropy(t);
    if (r < 0.0) {
        return KeyRate{0.0, true};
    }
    return KeyRate{r, false};
}

KeyRateReport key_rate_hz(const KeyRate& rate, const ObservedRates& obs,
                          const KeyRateParams& params) {
    params.validate();
    KeyRateReport report;
    report.r_per_bit = rate.r_per_bit;
    report.clamped_nonnegative = rate.clamped_nonnegative;
    report.r_hz = rate.r_per_bit * obs.s_mu_prime * params.repetition_rate * params.p_mu_prime *
                  params.sift_factor;
    report.total_bits = report.r_hz * params.duration;
    return report;
}

KeyRateEvaluation evaluate_key_rate(const ProtocolSources& sources, const ObservedRates& obs,
                                    const KeyRateParams& params) {
    sources.validate();
    params.validate();
    KeyRateEvaluation eval;
    eval.bound = robust_s1_lower(obs, sources.decoy, sources.signal);
    if (!eval.bound.delta1_prime_lower) {
        throw NumericalFailure("signal counting rate is zero: single-photon fraction undefined");
    }
    const auto& source =
        params.qber_basis == QberBasis::kSignal ? sources.signal : sources.decoy;
    eval.t1 = e1_upper(obs, source, eval.bound.s1_lower, params.qber_basis);
    const auto rate = key_rate(*eval.bound.delta1_prime_lower, eval.t1.t1_upper,
                               obs.qber_signal, params.ec_efficiency);
    eval.report = key_rate_hz(rate, obs, params);
    eval.report.delta1_prime_used = *eval.bound.delta1_prime_lower;
    eval.report.t1_used = eval.t1.t1_upper;
    eval.report.t_used = obs.qber_signal;
    return eval;
}

ProtocolSources sources_at_delta(const ProtocolSources& base, double delta) {
    ProtocolSources out = base;
    out.decoy = coefficient_bounds(base.decoy.nominal_intensity, delta, base.decoy.k_max());
    out.signal = coefficient_bounds(base.signal.nominal_intensity, delta, base.signal.k_max());
    return out;
}

std::vector<SweepRow> sweep_delta(const ProtocolSources& base, const ObservedRates& obs,
                                  const KeyRateParams& params, std::span<const double> deltas) {
    std::vector<SweepRow> rows;
    rows.reserve(deltas.size());
    for (double delta : deltas) {
        SweepRow row;
        row.delta = delta;
        try {
            row.evaluation = evaluate_key_rate(sources_at_delta(base, delta), obs, params);
        } catch (const ConditionViolation& e) {
            row.error = e.what();
            row.failure = FailureKind::kCondition;
        } catch (const NumericalFailure& e) {
            row.error = e.what();
            row.failure = FailureKind::kNumerical;
        } catch (const DomainError& e) {
            row.error = e.what();
            row.failure = FailureKind::kDomain;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

KeyRateParams calibrate_sift_factor(const KeyRateParams& params, double r_per_bit,
                                    const ObservedRates& obs, double target_hz) {
    params.validate();
    const double scale = r_per_bit * obs.s_mu_prime * params.repetition_rate * params.p_mu_prime;
    if (!(scale > 0.0)) {
        throw NumericalFailure("calibration anchor has zero key rate");
    }
    if (!std::isfinite(target_hz) || target_hz < 0.0) {
        throw DomainError("calibration target must be a non-negative rate");
    }
    KeyRateParams out = params;
    out.sift_factor = target_hz / scale;
    if (out.sift_factor > 1.0) {
        throw NumericalFailure("calibrated sift_factor exceeds 1; raise p_mu_prime");
    }
    return out;
}

}  // namespace decoyqkd
