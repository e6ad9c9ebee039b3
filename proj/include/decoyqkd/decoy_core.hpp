#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace decoyqkd {

inline constexpr int kDefaultKMax = 10;

/// Photon-number diagonal state, truncated at k_max.
///
/// `coefficients[k]` is the probability of exactly k photons for k <= k_max;
/// whatever probability lies beyond the truncation is kept in `tail_mass` so
/// that nothing is dropped silently.
struct PhotonDistribution {
    std::vector<double> coefficients;
    double tail_mass = 0.0;

    int k_max() const { return static_cast<int>(coefficients.size()) - 1; }
    double operator[](std::size_t k) const { return coefficients.at(k); }

    /// Validates a user-supplied coefficient list and derives the tail.
    static PhotonDistribution from_coefficients(std::vector<double> coefficients);

    bool operator==(const PhotonDistribution&) const = default;
};

/// A source whose per-pulse state is only known to lie within bounds.
///
/// For coherent sources the bounds come from an intensity interval
/// [intensity_lo, intensity_hi]; for other diagonal sources the caller may
/// supply the coefficient bounds directly.
struct SourceModel {
    double nominal_intensity = 0.0;
    double intensity_lo = 0.0;
    double intensity_hi = 0.0;
    std::vector<double> coeff_lo;
    std::vector<double> coeff_hi;

    int k_max() const { return static_cast<int>(coeff_lo.size()) - 1; }
    double lo(std::size_t k) const { return coeff_lo.at(k); }
    double hi(std::size_t k) const { return coeff_hi.at(k); }

    /// Zero-width model of an exactly known state.
    static SourceModel exact(const PhotonDistribution& dist, double intensity);

    /// Caller-provided coefficient bounds for a non-Poissonian source.
    static SourceModel from_coefficient_bounds(double nominal, double intensity_lo,
                                               double intensity_hi,
                                               std::vector<double> coeff_lo,
                                               std::vector<double> coeff_hi);

    bool operator==(const SourceModel&) const = default;
};

/// The three sources of a vacuum + decoy + signal protocol.
struct ProtocolSources {
    SourceModel vacuum;
    SourceModel decoy;
    SourceModel signal;
    double p0 = 0.0;
    double p_mu = 0.0;
    double p_mu_prime = 0.0;

    /// Throws DomainError if probabilities or intensity ordering are invalid.
    void validate() const;

    bool operator==(const ProtocolSources&) const = default;
};

/// Result of a decoy-condition scan. `first_violation` names the smallest k
/// that fails (2 when the k = 2 ratio itself is the problem).
struct ConditionCheck {
    bool ok = false;
    std::optional<int> first_violation;
    bool degenerate_denominator = false;

    explicit operator bool() const { return ok; }
};

/// Single Poisson coefficient mu^k e^{-mu} / k!.
double poisson_coefficient(double mu, int k);

/// Poisson(mu) coefficients for k = 0..k_max with the remaining tail.
PhotonDistribution coherent_coefficients(double mu, int k_max = kDefaultKMax);

/// Coefficient bounds for a coherent source with intensity in [lo, hi].
/// Each a_k is extremised over the interval, including the interior mode
/// at mu = k when the interval contains it.
SourceModel coherent_interval(double intensity_lo, double nominal, double intensity_hi,
                              int k_max = kDefaultKMax);

/// Relative-error version: intensity in [nominal(1 - delta), nominal(1 + delta)].
SourceModel coefficient_bounds(double nominal, double delta, int k_max = kDefaultKMax);

/// a'_k / a_k > a'_2 / a_2 for every 3 <= k <= k_max.
ConditionCheck check_exact_condition(const PhotonDistribution& decoy,
                                     const PhotonDistribution& signal);

/// a'_2^L / a_2^U > 1 and a'_k^L / a_k^U >= a'_2^L / a_2^U for every 3 <= k <= k_max.
ConditionCheck check_robust_condition(const SourceModel& decoy, const SourceModel& signal);

/// Probability-weighted mixture of distributions sharing k_max.
PhotonDistribution mix(std::span<const PhotonDistribution> parts, std::span<const double> weights);

}  // namespace decoyqkd
