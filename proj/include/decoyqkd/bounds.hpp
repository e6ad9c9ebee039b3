#pragma once

#include <optional>

#include "decoyqkd/decoy_core.hpp"

namespace decoyqkd {

/// Protocol observables. Rates are counts per pulse sent in each class.
/// No ordering between the three rates is assumed; an adversarial channel
/// is free to break S0 <= S_mu <= S_mu'.
struct ObservedRates {
    double s0 = 0.0;
    double s_mu = 0.0;
    double s_mu_prime = 0.0;
    double qber_signal = 0.0;
    double qber_decoy = 0.0;

    void validate() const;

    bool operator==(const ObservedRates&) const = default;
};

/// Certified lower bounds on the single-photon contribution.
///
/// `delta1_prime_lower` / `delta1_lower` are empty when the class rate they
/// divide by is zero: with no counts the fraction is undefined.
/// `lambda_upper` is only produced by the exact-source path.
struct BoundResult {
    double s1_lower = 0.0;
    double s1_raw = 0.0;
    std::optional<double> delta1_prime_lower;
    std::optional<double> delta1_lower;
    std::optional<double> lambda_upper;
    bool condition_ok = false;
    bool clamped = false;

    bool operator==(const BoundResult&) const = default;
};

/// Which class's QBER feeds the single-photon error-rate bound.
enum class QberBasis { kSignal, kDecoy };

struct ErrorRateBound {
    double t1_upper = 0.5;
    /// s1_lower or a_1^L was zero, so only the trivial bound 1/2 is available.
    bool vacuous = false;
    bool clamped = false;

    bool operator==(const ErrorRateBound&) const = default;
};

/// Classic decoy bound assuming every pulse is exactly in the stated state:
///   s1 >= [a'_2 (S_mu - a_0 S0) - a_2 (S_mu' - a'_0 S0)] / (a'_2 a_1 - a'_1 a_2).
/// Throws ConditionViolation if the exact decoy condition fails or the
/// denominator is not positive.
BoundResult naive_s1_lower(const ObservedRates& obs, const PhotonDistribution& decoy,
                           const PhotonDistribution& signal);

/// Bound that stays valid when each pulse's coefficients only lie within
/// [a_k^L, a_k^U]:
///   N^-1 sum_{i in l_1} d_i >=
///     [a'_2^L S_mu - a_2^U S_mu' + a'_0^L a_2^U S0 - a_0^U a'_2^L S0]
///     / (a'_2^L a_1^U - a'_1^L a_2^U).
/// Refuses (ConditionViolation) rather than return a number when the robust
/// condition does not hold.
BoundResult robust_s1_lower(const ObservedRates& obs, const SourceModel& decoy,
                            const SourceModel& signal);

/// Upper bound on the single-photon error rate, attributing every error of
/// the chosen class to single photons except the minimal vacuum share:
///   t1 <= (E S - a_0^L S0 / 2) / (a_1^L s1_lower), clamped to [0, 1/2].
/// `source` must be the model of the class selected by `basis`.
ErrorRateBound e1_upper(const ObservedRates& obs, const SourceModel& source, double s1_lower,
                        QberBasis basis = QberBasis::kDecoy);

}  // namespace decoyqkd
