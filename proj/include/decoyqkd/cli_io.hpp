#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "decoyqkd/attack_sim.hpp"
#include "decoyqkd/bounds.hpp"
#include "decoyqkd/keyrate.hpp"
#include "decoyqkd/soundness.hpp"

namespace decoyqkd {

inline constexpr std::string_view kToolVersion = "0.1.0";

enum class Mode { kBound, kKeyrate, kSweep, kAttack, kSoundness };

std::string to_string(Mode mode);
std::optional<Mode> mode_from_string(std::string_view name);

namespace exit_code {
inline constexpr int kSuccess = 0;
inline constexpr int kConfigError = 2;
inline constexpr int kConditionViolation = 3;
inline constexpr int kNumericalFailure = 4;
inline constexpr int kIoError = 5;
}  // namespace exit_code

/// Schema violation; the message names the offending key.
class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct SourcesConfig {
    double mu = 0.2;
    double mu_prime = 0.6;
    double delta = 0.0;
    double p0 = 0.1;
    double p_mu = 0.3;
    double p_mu_prime = 0.6;
    int k_max = kDefaultKMax;

    ProtocolSources build(double delta_override) const;
    ProtocolSources build() const { return build(delta); }

    bool operator==(const SourcesConfig&) const = default;
};

struct SweepConfig {
    std::vector<double> deltas = {0.05, 0.04, 0.03, 0.02, 0.01, 0.0};
    /// Fit sift_factor so the delta = 0 row reports this many Hz.
    std::optional<double> calibrate_to_hz;
    /// Published values to report residuals against, aligned with `deltas`.
    std::vector<double> reference_hz;

    bool operator==(const SweepConfig&) const = default;
};

struct AttackConfig {
    std::uint64_t n_pulses = 10'000'000;
    std::uint64_t n_blocks = 100;
    double eta_e = 0.1;
    double p0 = 0.1;
    double p_mu = 0.45;
    double p_mu_prime = 0.45;
    double dark_count = 0.0;
    double detector_error = 0.0;
    unsigned threads = 0;

    AttackScenario scenario(double mu, double mu_prime, int k_max) const;

    bool operator==(const AttackConfig&) const = default;
};

struct RunConfig {
    Mode mode = Mode::kBound;
    SourcesConfig sources;
    std::optional<ObservedRates> observed;
    /// "inline" or the CSV path the observed rates were read from.
    std::string observed_source = "inline";
    KeyRateParams params;
    SweepConfig sweep;
    AttackConfig attack;
    SoundnessOptions soundness;
    std::uint64_t seed = 1;
    std::string output;

    bool operator==(const RunConfig&) const = default;
};

/// Two-column key,value CSV with keys s0, s_mu, s_mu_prime, qber_signal,
/// qber_decoy. A "key,value" header line is optional.
ObservedRates parse_observed_csv(std::string_view text);

/// Parses and validates a JSON configuration. Every default is written into
/// the result. `base_dir` resolves a relative "observed_file".
RunConfig parse_config(std::string_view text, const std::string& base_dir = "");
RunConfig parse_config(const nlohmann::json& doc, const std::string& base_dir = "");

/// Fully materialised configuration; parse_config(to_json(c)) == c.
nlohmann::json to_json(const RunConfig& config);

struct RunResult {
    int exit_code = exit_code::kSuccess;
    nlohmann::json report;
};

/// Executes the pipeline selected by config.mode. Never throws for
/// condition or numerical failures: they come back as exit codes with the
/// report's "error" field set.
RunResult run(const RunConfig& config, std::string timestamp = "");

/// Report serialised with shortest round-trip numbers.
std::string emit_report(const nlohmann::json& report);

/// Copy of the report with the meta.timestamp field removed.
nlohmann::json strip_timestamp(nlohmann::json report);

}  // namespace decoyqkd
