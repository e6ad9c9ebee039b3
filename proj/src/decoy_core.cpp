#include "decoyqkd/decoy_core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "decoyqkd/errors.hpp"

namespace decoyqkd {

namespace {

constexpr double kProbabilityTolerance = 1e-12;

void require_intensity(double mu, const char* what) {
    if (!std::isfinite(mu) || mu < 0.0) {
        throw DomainError(std::string(what) + " must be a finite, non-negative mean photon number");
    }
}

void require_probability(double p, const char* what) {
    if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
        throw DomainError(std::string(what) + " must lie in [0, 1]");
    }
}

// Poisson mass beyond k_max, summed term by term so that tiny tails keep
// their relative precision instead of vanishing into 1 - sum.
double poisson_tail(double mu, int k_max, double head_sum) {
    if (mu == 0.0) {
        return 0.0;
    }
    if (mu > 500.0) {
        return std::max(0.0, 1.0 - head_sum);
    }
    double term = poisson_coefficient(mu, k_max);
    double tail = 0.0;
    for (int k = k_max + 1;; ++k) {
        term *= mu / k;
        tail += term;
        if (k > mu && term < tail * 1e-18) {
            break;
        }
        if (term == 0.0) {
            break;
        }
    }
    return tail;
}

}  // namespace

double poisson_coefficient(double mu, int k) {
    require_intensity(mu, "intensity");
    if (k < 0) {
        throw DomainError("photon number must be non-negative");
    }
    double term = std::exp(-mu);
    for (int j = 1; j <= k; ++j) {
        term *= mu / j;
    }
    return term;
}

PhotonDistribution PhotonDistribution::from_coefficients(std::vector<double> coefficients) {
    if (coefficients.empty()) {
        throw DomainError("photon distribution needs at least the k = 0 coefficient");
    }
    double sum = 0.0;
    for (double a : coefficients) {
        require_probability(a, "photon-number coefficient");
        sum += a;
    }
    if (sum > 1.0 + kProbabilityTolerance) {
        throw DomainError("photon-number coefficients sum to more than 1");
    }
    return PhotonDistribution{std::move(coefficients), std::max(0.0, 1.0 - sum)};
}

PhotonDistribution coherent_coefficients(double mu, int k_max) {
    require_intensity(mu, "intensity");
    if (k_max < 2) {
        throw DomainError("k_max must be at least 2");
    }
    PhotonDistribution dist;
    dist.coefficients.resize(static_cast<std::size_t>(k_max) + 1);
    double term = std::exp(-mu);
    double sum = 0.0;
    for (int k = 0; k <= k_max; ++k) {
        if (k > 0) {
            term *= mu / k;
        }
        dist.coefficients[static_cast<std::size_t>(k)] = term;
        sum += term;
    }
    dist.tail_mass = poisson_tail(mu, k_max, sum);
    return dist;
}

SourceModel SourceModel::exact(const PhotonDistribution& dist, double intensity) {
    require_intensity(intensity, "intensity");
    return SourceModel{intensity, intensity, intensity, dist.coefficients, dist.coefficients};
}

SourceModel SourceModel::from_coefficient_bounds(double nominal, double intensity_lo,
                                                 double intensity_hi,
                                                 std::vector<double> coeff_lo,
                                                 std::vector<double> coeff_hi) {
    require_intensity(intensity_lo, "intensity lower bound");
    require_intensity(nominal, "nominal intensity");
    require_intensity(intensity_hi, "intensity upper bound");
    if (!(intensity_lo <= nominal && nominal <= intensity_hi)) {
        throw DomainError("intensity bounds must satisfy lo <= nominal <= hi");
    }
    if (coeff_lo.size() != coeff_hi.size() || coeff_lo.size() < 3) {
        throw DomainError("coefficient bound lists must have equal length covering k = 0..2");
    }
    for (std::size_t k = 0; k < coeff_lo.size(); ++k) {
        require_probability(coeff_lo[k], "coefficient lower bound");
        require_probability(coeff_hi[k], "coefficient upper bound");
        if (coeff_lo[k] > coeff_hi[k]) {
            throw DomainError("coefficient lower bound exceeds upper bound at k = " +
                              std::to_string(k));
        }
    }
    return SourceModel{nominal, intensity_lo, intensity_hi, std::move(coeff_lo),
                       std::move(coeff_hi)};
}

SourceModel coherent_interval(double intensity_lo, double nominal, double intensity_hi,
                              int k_max) {
    require_intensity(intensity_lo, "intensity lower bound");
    require_intensity(nominal, "nominal intensity");
    require_intensity(intensity_hi, "intensity upper bound");
    if (!(intensity_lo <= nominal && nominal <= intensity_hi)) {
        throw DomainError("intensity bounds must satisfy lo <= nominal <= hi");
    }
    if (k_max < 2) {
        throw DomainError("k_max must be at least 2");
    }
    SourceModel model{nominal, intensity_lo, intensity_hi, {}, {}};
    model.coeff_lo.reserve(static_cast<std::size_t>(k_max) + 1);
    model.coeff_hi.reserve(static_cast<std::size_t>(k_max) + 1);
    for (int k = 0; k <= k_max; ++k) {
        // a_k(mu) rises until mu = k and falls after it.
        const double at_lo = poisson_coefficient(intensity_lo, k);
        const double at_hi = poisson_coefficient(intensity_hi, k);
        double lo = std::min(at_lo, at_hi);
        double hi = std::max(at_lo, at_hi);
        if (intensity_lo < k && k < intensity_hi) {
            hi = std::max(hi, poisson_coefficient(static_cast<double>(k), k));
        }
        model.coeff_lo.push_back(lo);
        model.coeff_hi.push_back(hi);
    }
    return model;
}

SourceModel coefficient_bounds(double nominal, double delta, int k_max) {
    require_intensity(nominal, "nominal intensity");
    if (!std::isfinite(delta) || delta < 0.0 || delta >= 1.0) {
        throw DomainError("relative intensity error bound must lie in [0, 1)");
    }
    if (delta == 0.0) {
        return coherent_interval(nominal, nominal, nominal, k_max);
    }
    return coherent_interval(nominal * (1.0 - delta), nominal, nominal * (1.0 + delta), k_max);
}

ConditionCheck check_exact_condition(const PhotonDistribution& decoy,
                                     const PhotonDistribution& signal) {
    if (decoy.k_max() != signal.k_max() || decoy.k_max() < 3) {
        throw DomainError("condition check needs distributions sharing k_max >= 3");
    }
    ConditionCheck check;
    if (decoy[2] == 0.0) {
        check.degenerate_denominator = true;
        check.first_violation = 2;
        return check;
    }
    const double threshold = signal[2] / decoy[2];
    for (int k = 3; k <= decoy.k_max(); ++k) {
        const auto idx = static_cast<std::size_t>(k);
        if (decoy[idx] == 0.0) {
            continue;
        }
        if (!(signal[idx] / decoy[idx] > threshold)) {
            check.first_violation = k;
            return check;
        }
    }
    check.ok = true;
    return check;
}

ConditionCheck check_robust_condition(const SourceModel& decoy, const SourceModel& signal) {
    if (decoy.k_max() != signal.k_max() || decoy.k_max() < 3) {
        throw DomainError("condition check needs source models sharing k_max >= 3");
    }
    ConditionCheck check;
    if (decoy.hi(2) == 0.0) {
        check.degenerate_denominator = true;
        check.first_violation = 2;
        return check;
    }
    const double threshold = signal.lo(2) / decoy.hi(2);
    if (!(threshold > 1.0)) {
        check.first_violation = 2;
        return check;
    }
    for (int k = 3; k <= decoy.k_max(); ++k) {
        const auto idx = static_cast<std::size_t>(k);
        if (decoy.hi(idx) == 0.0) {
            continue;
        }
        if (!(signal.lo(idx) / decoy.hi(idx) >= threshold)) {
            check.first_violation = k;
            return check;
        }
    }
    check.ok = true;
    return check;
}

PhotonDistribution mix(std::span<const PhotonDistribution> parts, std::span<const double> weights) {
    if (parts.empty() || parts.size() != weights.size()) {
        throw DomainError("mixture needs one weight per component");
    }
    const auto size = parts.front().coefficients.size();
    PhotonDistribution out{std::vector<double>(size, 0.0), 0.0};
    double total = 0.0;
    for (std::size_t j = 0; j < parts.size(); ++j) {
        require_probability(weights[j], "mixture weight");
        if (parts[j].coefficients.size() != size) {
            throw DomainError("mixture components must share k_max");
        }
        for (std::size_t k = 0; k < size; ++k) {
            out.coefficients[k] += weights[j] * parts[j].coefficients[k];
        }
        out.tail_mass += weights[j] * parts[j].tail_mass;
        total += weights[j];
    }
    if (std::abs(total - 1.0) > kProbabilityTolerance) {
        throw DomainError("mixture weights must sum to 1");
    }
    return out;
}

void ProtocolSources::validate() const {
    for (double p : {p0, p_mu, p_mu_prime}) {
        if (!std::isfinite(p) || p <= 0.0 || p >= 1.0) {
            throw DomainError("source selection probabilities must be strictly positive");
        }
    }
    if (std::abs(p0 + p_mu + p_mu_prime - 1.0) > kProbabilityTolerance) {
        throw DomainError("source selection probabilities p0 + p_mu + p_mu_prime must sum to 1");
    }
    if (vacuum.nominal_intensity != 0.0 || vacuum.intensity_hi != 0.0) {
        throw DomainError("vacuum source must have zero intensity");
    }
    if (!(decoy.nominal_intensity < signal.nominal_intensity)) {
        throw DomainError("decoy intensity must be below signal intensity");
    }
    if (decoy.k_max() != signal.k_max()) {
        throw DomainError("decoy and signal models must share k_max");
    }
}

}  // namespace decoyqkd
