#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "decoyqkd/bounds.hpp"
#include "decoyqkd/decoy_core.hpp"

namespace decoyqkd {

/// Conversion from per-bit key rate to bits per second.
///
/// Only the product p_mu_prime * sift_factor enters r_hz; the two are kept
/// apart so a report says which one was fitted.
struct KeyRateParams {
    double repetition_rate = 4e6;
    double duration = 1481.2;
    double p_mu_prime = 0.6;
    double sift_factor = 0.5;
    double ec_efficiency = 1.0;
    QberBasis qber_basis = QberBasis::kSignal;

    void validate() const;

    bool operator==(const KeyRateParams&) const = default;
};

struct KeyRateReport {
    double r_per_bit = 0.0;
    double r_hz = 0.0;
    double total_bits = 0.0;
    double delta1_prime_used = 0.0;
    double t1_used = 0.0;
    double t_used = 0.0;
    bool clamped_nonnegative = false;

    bool operator==(const KeyRateReport&) const = default;
};

struct KeyRate {
    double r_per_bit = 0.0;
    bool clamped_nonnegative = false;
};

/// H(x) = -x log2 x - (1 - x) log2(1 - x), H(0) = H(1) = 0.
double binary_entropy(double x);

/// R = delta1' [1 - H(t1)] - f H(t); negative values become 0 with a flag.
KeyRate key_rate(double delta1_prime, double t1, double t, double f = 1.0);

/// r_hz = r_per_bit * S_mu' * repetition_rate * p_mu_prime * sift_factor.
KeyRateReport key_rate_hz(const KeyRate& rate, const ObservedRates& obs,
                          const KeyRateParams& params);

/// Everything computed for one operating point.
struct KeyRateEvaluation {
    BoundResult bound;
    ErrorRateBound t1;
    KeyRateReport report;
};

/// Robust bound -> t1 bound -> key rate -> Hz for fixed sources.
KeyRateEvaluation evaluate_key_rate(const ProtocolSources& sources, const ObservedRates& obs,
                                    const KeyRateParams& params);

enum class FailureKind { kNone, kDomain, kCondition, kNumerical };

struct SweepRow {
    double delta = 0.0;
    std::optional<KeyRateEvaluation> evaluation;
    /// Set instead of `evaluation` when this row could not be certified.
    std::string error;
    FailureKind failure = FailureKind::kNone;

    bool ok() const { return evaluation.has_value(); }
};

/// Sources rebuilt at relative intensity error `delta` around the nominal
/// intensities of `base`, keeping its probabilities and k_max.
ProtocolSources sources_at_delta(const ProtocolSources& base, double delta);

/// One row per delta, in input order. A failing row records its error and
/// the sweep carries on.
std::vector<SweepRow> sweep_delta(const ProtocolSources& base, const ObservedRates& obs,
                                  const KeyRateParams& params, std::span<const double> deltas);

/// Returns params with sift_factor chosen so that `r_per_bit` maps to
/// `target_hz`; p_mu_prime is held fixed.
KeyRateParams calibrate_sift_factor(const KeyRateParams& params, double r_per_bit,
                                    const ObservedRates& obs, double target_hz);

}  // namespace decoyqkd
