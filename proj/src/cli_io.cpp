#include "decoyqkd/cli_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "decoyqkd/errors.hpp"

namespace decoyqkd {

using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Config reading
// ---------------------------------------------------------------------------

// Typed access to one JSON object that remembers which keys were consumed,
// so finish() can reject anything unexpected.
class Section {
  public:
    Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) {
            throw ConfigError(label() + ": expected an object");
        }
    }

    std::string where(const std::string& key) const {
        return path_.empty() ? key : path_ + "." + key;
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return obj_.contains(key);
    }

    double number(const std::string& key, double fallback) {
        if (!has(key)) {
            return fallback;
        }
        const auto& v = obj_.at(key);
        if (!v.is_number()) {
            throw ConfigError(where(key) + ": expected a number");
        }
        return v.get<double>();
    }

    std::optional<double> optional_number(const std::string& key) {
        if (!has(key) || obj_.at(key).is_null()) {
            return std::nullopt;
        }
        return number(key, 0.0);
    }

    std::uint64_t count(const std::string& key, std::uint64_t fallback) {
        if (!has(key)) {
            return fallback;
        }
        const auto& v = obj_.at(key);
        if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
            throw ConfigError(where(key) + ": expected a non-negative integer");
        }
        return v.get<std::uint64_t>();
    }

    int integer(const std::string& key, int fallback) {
        if (!has(key)) {
            return fallback;
        }
        const auto& v = obj_.at(key);
        if (!v.is_number_integer()) {
            throw ConfigError(where(key) + ": expected an integer");
        }
        return v.get<int>();
    }

    std::string string(const std::string& key, std::string fallback) {
        if (!has(key)) {
            return fallback;
        }
        const auto& v = obj_.at(key);
        if (!v.is_string()) {
            throw ConfigError(where(key) + ": expected a string");
        }
        return v.get<std::string>();
    }

    std::vector<double> numbers(const std::string& key, std::vector<double> fallback) {
        if (!has(key)) {
            return fallback;
        }
        const auto& v = obj_.at(key);
        if (!v.is_array()) {
            throw ConfigError(where(key) + ": expected an array of numbers");
        }
        std::vector<double> out;
        for (const auto& x : v) {
            if (!x.is_number()) {
                throw ConfigError(where(key) + ": expected an array of numbers");
            }
            out.push_back(x.get<double>());
        }
        return out;
    }

    const json* child(const std::string& key) {
        return has(key) ? &obj_.at(key) : nullptr;
    }

    void finish() const {
        for (const auto& [key, _] : obj_.items()) {
            if (!seen_.contains(key)) {
                throw ConfigError(where(key) + ": unknown key");
            }
        }
    }

  private:
    std::string label() const { return path_.empty() ? "config" : path_; }

    const json& obj_;
    std::string path_;
    std::set<std::string> seen_;
};

void require(bool ok, const std::string& key, const std::string& constraint) {
    if (!ok) {
        throw ConfigError(key + ": " + constraint);
    }
}

bool unit(double x) { return std::isfinite(x) && x >= 0.0 && x <= 1.0; }
bool open_unit(double x) { return std::isfinite(x) && x > 0.0 && x < 1.0; }
bool relative_error(double x) { return std::isfinite(x) && x >= 0.0 && x < 1.0; }

void check_probabilities(const std::string& section, double p0, double p_mu, double p_mu_prime) {
    require(open_unit(p0), section + ".p0", "must lie in (0, 1)");
    require(open_unit(p_mu), section + ".p_mu", "must lie in (0, 1)");
    require(open_unit(p_mu_prime), section + ".p_mu_prime", "must lie in (0, 1)");
    const double sum = p0 + p_mu + p_mu_prime;
    if (std::abs(sum - 1.0) > 1e-12) {
        std::ostringstream msg;
        msg << "probabilities p0 + p_mu + p_mu_prime must sum to 1 (got " << sum << ")";
        throw ConfigError(section + ": " + msg.str());
    }
}

SourcesConfig read_sources(const json* node) {
    SourcesConfig s;
    if (node != nullptr) {
        Section sec(*node, "sources");
        s.mu = sec.number("mu", s.mu);
        s.mu_prime = sec.number("mu_prime", s.mu_prime);
        s.delta = sec.number("delta", s.delta);
        s.p0 = sec.number("p0", s.p0);
        s.p_mu = sec.number("p_mu", s.p_mu);
        s.p_mu_prime = sec.number("p_mu_prime", s.p_mu_prime);
        s.k_max = sec.integer("k_max", s.k_max);
        sec.finish();
    }
    require(std::isfinite(s.mu) && s.mu > 0.0, "sources.mu", "must be positive");
    require(std::isfinite(s.mu_prime) && s.mu_prime > s.mu, "sources.mu_prime",
            "must exceed sources.mu");
    require(relative_error(s.delta), "sources.delta", "must lie in [0, 1)");
    require(s.k_max >= 3 && s.k_max <= 100, "sources.k_max", "must lie in [3, 100]");
    check_probabilities("sources", s.p0, s.p_mu, s.p_mu_prime);
    return s;
}

ObservedRates read_observed(const json& node) {
    Section sec(node, "observed");
    ObservedRates o;
    const char* keys[] = {"s0", "s_mu", "s_mu_prime", "qber_signal", "qber_decoy"};
    double* slots[] = {&o.s0, &o.s_mu, &o.s_mu_prime, &o.qber_signal, &o.qber_decoy};
    for (std::size_t j = 0; j < 5; ++j) {
        require(sec.has(keys[j]), sec.where(keys[j]), "required");
        *slots[j] = sec.number(keys[j], 0.0);
        require(unit(*slots[j]), sec.where(keys[j]), "must lie in [0, 1]");
    }
    sec.finish();
    return o;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

KeyRateParams read_params(const json* node, const SourcesConfig& sources) {
    KeyRateParams p;
    p.p_mu_prime = sources.p_mu_prime;
    if (node != nullptr) {
        Section sec(*node, "params");
        p.repetition_rate = sec.number("repetition_rate", p.repetition_rate);
        p.duration = sec.number("duration", p.duration);
        p.p_mu_prime = sec.number("p_mu_prime", p.p_mu_prime);
        p.sift_factor = sec.number("sift_factor", p.sift_factor);
        p.ec_efficiency = sec.number("ec_efficiency", p.ec_efficiency);
        const auto basis = sec.string("qber_basis", "signal");
        require(basis == "signal" || basis == "decoy", "params.qber_basis",
                "must be \"signal\" or \"decoy\"");
        p.qber_basis = basis == "signal" ? QberBasis::kSignal : QberBasis::kDecoy;
        sec.finish();
    }
    try {
        p.validate();
    } catch (const DomainError& e) {
        throw ConfigError(std::string("params: ") + e.what());
    }
    return p;
}

SweepConfig read_sweep(const json* node) {
    SweepConfig s;
    if (node != nullptr) {
        Section sec(*node, "sweep");
        s.deltas = sec.numbers("deltas", s.deltas);
        s.calibrate_to_hz = sec.optional_number("calibrate_to_hz");
        s.reference_hz = sec.numbers("reference_hz", {});
        sec.finish();
    }
    require(!s.deltas.empty(), "sweep.deltas", "must not be empty");
    for (double d : s.deltas) {
        require(relative_error(d), "sweep.deltas", "every entry must lie in [0, 1)");
    }
    require(s.reference_hz.empty() || s.reference_hz.size() == s.deltas.size(),
            "sweep.reference_hz", "must have one entry per delta");
    if (s.calibrate_to_hz) {
        require(std::isfinite(*s.calibrate_to_hz) && *s.calibrate_to_hz > 0.0,
                "sweep.calibrate_to_hz", "must be positive");
        require(std::find(s.deltas.begin(), s.deltas.end(), 0.0) != s.deltas.end(),
                "sweep.calibrate_to_hz", "needs a delta = 0 row to calibrate against");
    }
    return s;
}

AttackConfig read_attack(const json* node) {
    AttackConfig a;
    if (node != nullptr) {
        Section sec(*node, "attack");
        a.n_pulses = sec.count("n_pulses", a.n_pulses);
        a.n_blocks = sec.count("n_blocks", a.n_blocks);
        a.eta_e = sec.number("eta_e", a.eta_e);
        a.p0 = sec.number("p0", a.p0);
        a.p_mu = sec.number("p_mu", a.p_mu);
        a.p_mu_prime = sec.number("p_mu_prime", a.p_mu_prime);
        a.dark_count = sec.number("dark_count", a.dark_count);
        a.detector_error = sec.number("detector_error", a.detector_error);
        a.threads = static_cast<unsigned>(sec.count("threads", a.threads));
        sec.finish();
    }
    require(a.n_blocks >= 2 && a.n_blocks % 2 == 0, "attack.n_blocks",
            "must be an even number >= 2");
    require(a.n_pulses > 0 && a.n_pulses % a.n_blocks == 0, "attack.n_pulses",
            "must be a positive multiple of attack.n_blocks");
    require(unit(a.eta_e), "attack.eta_e", "must lie in [0, 1]");
    require(unit(a.dark_count), "attack.dark_count", "must lie in [0, 1]");
    require(unit(a.detector_error), "attack.detector_error", "must lie in [0, 1]");
    check_probabilities("attack", a.p0, a.p_mu, a.p_mu_prime);
    return a;
}

SoundnessOptions read_soundness(const json* node, const SourcesConfig& sources) {
    SoundnessOptions s;
    if (node != nullptr) {
        Section sec(*node, "soundness");
        s.trials = sec.integer("trials", s.trials);
        s.n_pulses = sec.count("n_pulses", s.n_pulses);
        s.n_blocks = sec.count("n_blocks", s.n_blocks);
        s.p0 = sec.number("p0", s.p0);
        s.p_mu = sec.number("p_mu", s.p_mu);
        s.p_mu_prime = sec.number("p_mu_prime", s.p_mu_prime);
        s.deltas = sec.numbers("deltas", s.deltas);
        s.threads = static_cast<unsigned>(sec.count("threads", s.threads));
        sec.finish();
    }
    s.mu = sources.mu;
    s.mu_prime = sources.mu_prime;
    require(s.trials > 0, "soundness.trials", "must be positive");
    require(s.n_blocks > 0, "soundness.n_blocks", "must be positive");
    require(s.n_pulses > 0 && s.n_pulses % s.n_blocks == 0, "soundness.n_pulses",
            "must be a positive multiple of soundness.n_blocks");
    require(!s.deltas.empty(), "soundness.deltas", "must not be empty");
    for (double d : s.deltas) {
        require(relative_error(d), "soundness.deltas", "every entry must lie in [0, 1)");
    }
    check_probabilities("soundness", s.p0, s.p_mu, s.p_mu_prime);
    return s;
}

// ---------------------------------------------------------------------------
// Report writing
// ---------------------------------------------------------------------------

json optional_json(const std::optional<double>& v) {
    return v ? json(*v) : json(nullptr);
}

json to_json(const ObservedRates& o) {
    return json{{"s0", o.s0},
                {"s_mu", o.s_mu},
                {"s_mu_prime", o.s_mu_prime},
                {"qber_signal", o.qber_signal},
                {"qber_decoy", o.qber_decoy}};
}

json to_json(const ConditionCheck& c) {
    return json{{"ok", c.ok},
                {"first_violation", c.first_violation ? json(*c.first_violation) : json(nullptr)},
                {"degenerate_denominator", c.degenerate_denominator}};
}

json to_json(const BoundResult& b) {
    return json{{"s1_lower", b.s1_lower},
                {"s1_raw", b.s1_raw},
                {"delta1_prime_lower", optional_json(b.delta1_prime_lower)},
                {"delta1_lower", optional_json(b.delta1_lower)},
                {"lambda_upper", optional_json(b.lambda_upper)},
                {"condition_ok", b.condition_ok},
                {"clamped", b.clamped}};
}

json to_json(const ErrorRateBound& t) {
    return json{{"t1_upper", t.t1_upper}, {"vacuous", t.vacuous}, {"clamped", t.clamped}};
}

json to_json(const KeyRateReport& r) {
    return json{{"r_per_bit", r.r_per_bit},
                {"r_hz", r.r_hz},
                {"total_bits", r.total_bits},
                {"delta1_prime_used", r.delta1_prime_used},
                {"t1_used", r.t1_used},
                {"t_used", r.t_used},
                {"clamped_nonnegative", r.clamped_nonnegative}};
}

json to_json(const SourceModel& m) {
    return json{{"nominal_intensity", m.nominal_intensity},
                {"intensity_lo", m.intensity_lo},
                {"intensity_hi", m.intensity_hi},
                {"coeff_lo", m.coeff_lo},
                {"coeff_hi", m.coeff_hi}};
}

json to_json(const ClassTally& t) {
    json sub = json::array();
    for (std::size_t k = 0; k < t.pulses_by_k.size(); ++k) {
        sub.push_back(optional_json(t.sub_rate(k)));
    }
    return json{{"pulses", t.pulses},
                {"counts", t.counts},
                {"errors", t.errors},
                {"pulses_by_k", t.pulses_by_k},
                {"counts_by_k", t.counts_by_k},
                {"sub_rates", sub}};
}

json to_json(const SimulationLedger& l) {
    return json{{"rng_algorithm", l.rng_algorithm},
                {"seed", l.seed},
                {"n_pulses", l.n_pulses},
                {"n_blocks", l.n_blocks},
                {"k_max", l.k_max},
                {"vacuum", to_json(l.vacuum)},
                {"decoy", to_json(l.decoy)},
                {"signal", to_json(l.signal)},
                {"l_sizes", l.l_sizes},
                {"weighted_sums", l.weighted_sums},
                {"observed", to_json(l.observed)},
                {"true_weighted_s1", l.true_weighted_s1},
                {"true_delta1_prime", l.true_delta1_prime},
                {"true_delta1", l.true_delta1},
                {"warnings", l.warnings}};
}

std::string basis_name(QberBasis b) { return b == QberBasis::kSignal ? "signal" : "decoy"; }

struct Failure {
    int code;
    std::string kind;
};

// Condition checks on nominal (exact) and bounded (robust) sources, always
// written before anything that may refuse.
json conditions_json(const SourcesConfig& cfg, const ProtocolSources& sources) {
    const auto decoy = coherent_coefficients(cfg.mu, cfg.k_max);
    const auto signal = coherent_coefficients(cfg.mu_prime, cfg.k_max);
    return json{{"exact_nominal", to_json(check_exact_condition(decoy, signal))},
                {"robust", to_json(check_robust_condition(sources.decoy, sources.signal))},
                {"robust_ratio_k2", sources.signal.lo(2) / sources.decoy.hi(2)}};
}

// Exact-source bound at the nominal intensities, kept as a diagnostic next to
// the certified one.
json naive_json(const SourcesConfig& cfg, const ObservedRates& obs) {
    try {
        return to_json(naive_s1_lower(obs, coherent_coefficients(cfg.mu, cfg.k_max),
                                      coherent_coefficients(cfg.mu_prime, cfg.k_max)));
    } catch (const std::exception& e) {
        return json{{"error", e.what()}};
    }
}

void run_bound(const RunConfig& c, json& report, bool with_keyrate) {
    const auto sources = c.sources.build();
    const auto& obs = *c.observed;
    report["conditions"] = conditions_json(c.sources, sources);
    report["bounds"]["naive_nominal"] = naive_json(c.sources, obs);
    report["bounds"]["decoy_model"] = to_json(sources.decoy);
    report["bounds"]["signal_model"] = to_json(sources.signal);

    const auto bound = robust_s1_lower(obs, sources.decoy, sources.signal);
    report["bounds"]["robust"] = to_json(bound);
    const auto& t1_source =
        c.params.qber_basis == QberBasis::kSignal ? sources.signal : sources.decoy;
    report["bounds"]["t1"] = to_json(e1_upper(obs, t1_source, bound.s1_lower, c.params.qber_basis));
    report["bounds"]["t1"]["basis"] = basis_name(c.params.qber_basis);

    if (with_keyrate) {
        const auto eval = evaluate_key_rate(sources, obs, c.params);
        report["keyrate"] = to_json(eval.report);
    }
}

json sweep_row_json(const SweepRow& row) {
    json j{{"delta", row.delta}, {"ok", row.ok()}};
    if (row.evaluation) {
        j["bound"] = to_json(row.evaluation->bound);
        j["t1"] = to_json(row.evaluation->t1);
        j["keyrate"] = to_json(row.evaluation->report);
    } else {
        j["error"] = row.error;
    }
    return j;
}

int failure_code(FailureKind kind) {
    switch (kind) {
        case FailureKind::kNone:
            return exit_code::kSuccess;
        case FailureKind::kDomain:
            return exit_code::kConfigError;
        case FailureKind::kCondition:
            return exit_code::kConditionViolation;
        case FailureKind::kNumerical:
            return exit_code::kNumericalFailure;
    }
    return exit_code::kNumericalFailure;
}

int run_sweep(const RunConfig& c, json& report) {
    const auto base = c.sources.build(0.0);
    const auto& obs = *c.observed;
    auto params = c.params;
    auto rows = sweep_delta(base, obs, params, c.sweep.deltas);

    json calibration = nullptr;
    if (c.sweep.calibrate_to_hz) {
        const auto anchor = std::find_if(rows.begin(), rows.end(),
                                         [](const SweepRow& r) { return r.delta == 0.0; });
        if (anchor == rows.end()) {
            throw DomainError("calibration needs a delta = 0 row");
        }
        if (!anchor->ok()) {
            throw NumericalFailure("calibration row (delta = 0) failed: " + anchor->error);
        }
        params = calibrate_sift_factor(params, anchor->evaluation->report.r_per_bit, obs,
                                       *c.sweep.calibrate_to_hz);
        rows = sweep_delta(base, obs, params, c.sweep.deltas);
        calibration = json{{"target_hz", *c.sweep.calibrate_to_hz},
                           {"p_mu_prime", params.p_mu_prime},
                           {"fitted_sift_factor", params.sift_factor},
                           {"signal_yield_factor", params.p_mu_prime * params.sift_factor}};
    }

    int code = exit_code::kSuccess;
    json table = json::array();
    for (std::size_t j = 0; j < rows.size(); ++j) {
        auto row = sweep_row_json(rows[j]);
        if (!c.sweep.reference_hz.empty()) {
            const double ref = c.sweep.reference_hz[j];
            row["reference_hz"] = ref;
            if (rows[j].ok() && ref != 0.0) {
                row["relative_residual"] = (rows[j].evaluation->report.r_hz - ref) / ref;
            }
        }
        if (!rows[j].ok() && code == exit_code::kSuccess) {
            code = failure_code(rows[j].failure);
        }
        table.push_back(std::move(row));
    }

    // Strictly decreasing in delta among certified rows.
    std::vector<std::pair<double, double>> by_delta;
    for (const auto& r : rows) {
        if (r.ok()) {
            by_delta.emplace_back(r.delta, r.evaluation->report.r_hz);
        }
    }
    std::sort(by_delta.begin(), by_delta.end());
    bool decreasing = true;
    for (std::size_t j = 1; j < by_delta.size(); ++j) {
        if (by_delta[j].first > by_delta[j - 1].first && !(by_delta[j].second < by_delta[j - 1].second)) {
            decreasing = false;
        }
    }

    report["keyrate"] = json{{"rows", table},
                             {"calibration", calibration},
                             {"qber_basis", basis_name(params.qber_basis)},
                             {"strictly_decreasing_in_delta", decreasing}};
    report["conditions"] = json::array();
    report["bounds"] = json::array();
    for (double d : c.sweep.deltas) {
        const auto s = sources_at_delta(base, d);
        report["conditions"].push_back(
            json{{"delta", d}, {"robust", to_json(check_robust_condition(s.decoy, s.signal))}});
    }
    for (const auto& r : rows) {
        report["bounds"].push_back(r.ok() ? json{{"delta", r.delta}, {"robust", to_json(r.evaluation->bound)}}
                                          : json{{"delta", r.delta}, {"error", r.error}});
    }
    return code;
}

double z_score(double estimate, double expected, double n) {
    const double se = std::sqrt(std::max(expected * (1.0 - expected), 1e-300) / std::max(n, 1.0));
    return (estimate - expected) / se;
}

int run_attack(const RunConfig& c, json& report) {
    const auto scenario = c.attack.scenario(c.sources.mu, c.sources.mu_prime, c.sources.k_max);
    const auto channel = ChannelRule::two_block_attack(scenario);
    const auto closed = attack_closed_form(c.attack.eta_e, c.sources.mu, c.sources.mu_prime);
    const auto ledger = simulate(scenario, channel, c.seed, c.attack.threads);
    const bool identity = verify_counting_identity(ledger);

    const auto averaged = averaged_attack_decoy(c.sources.mu, c.sources.k_max);
    const auto signal_dist = coherent_coefficients(c.sources.mu_prime, c.sources.k_max);
    const auto decoy_model = coherent_interval(0.0, c.sources.mu, 2.0 * c.sources.mu, c.sources.k_max);
    const auto signal_model = coefficient_bounds(c.sources.mu_prime, 0.0, c.sources.k_max);

    report["conditions"] = json{
        {"exact_averaged", to_json(check_exact_condition(averaged, signal_dist))},
        {"robust", to_json(check_robust_condition(decoy_model, signal_model))},
        {"robust_ratio_k2", signal_model.lo(2) / decoy_model.hi(2)}};

    const auto naive = naive_s1_lower(ledger.observed, averaged, signal_dist);
    const auto robust = robust_s1_lower(ledger.observed, decoy_model, signal_model);
    report["bounds"] = json{{"naive_averaged", to_json(naive)}, {"robust", to_json(robust)}};

    const double s1 = ledger.decoy.sub_rate(1).value_or(0.0);
    const double s1_prime = ledger.signal.sub_rate(1).value_or(0.0);
    const double n1 = static_cast<double>(ledger.decoy.pulses_by_k[1]);
    const double n1_prime = static_cast<double>(ledger.signal.pulses_by_k[1]);

    const double z_mu = z_score(ledger.observed.s_mu, closed.s_mu, static_cast<double>(ledger.decoy.pulses));
    const double z_mu_prime = z_score(ledger.observed.s_mu_prime, closed.s_mu_prime,
                                      static_cast<double>(ledger.signal.pulses));
    const double z_s1_prime = z_score(s1_prime, closed.true_s1_prime, n1_prime);
    // Two-sample z for s1 == s1'.
    const double pooled_se = std::sqrt(std::max(s1 * (1 - s1), 1e-300) / std::max(n1, 1.0) +
                                       std::max(s1_prime * (1 - s1_prime), 1e-300) / std::max(n1_prime, 1.0));

    json flags{{"identity_ok", identity},
               {"naive_overestimates", naive.s1_lower > s1_prime},
               {"robust_sound", robust.s1_lower <= ledger.true_weighted_s1},
               {"monte_carlo_agrees",
                std::abs(z_mu) <= 3.0 && std::abs(z_mu_prime) <= 3.0 && std::abs(z_s1_prime) <= 3.0},
               {"s1_differs_from_s1_prime", std::abs(s1 - s1_prime) > 3.0 * pooled_se}};
    report["simulation"] = json{
        {"closed_form",
         {{"eta_e", closed.eta_e},
          {"s_mu", closed.s_mu},
          {"s_mu_prime", closed.s_mu_prime},
          {"true_s1", closed.true_s1},
          {"true_s1_prime", closed.true_s1_prime},
          {"naive_s1_estimate", closed.naive_s1_estimate},
          {"robust_s1_lower", closed.robust_s1_lower}}},
        {"monte_carlo",
         {{"s1", s1}, {"s1_prime", s1_prime}, {"z_s_mu", z_mu}, {"z_s_mu_prime", z_mu_prime},
          {"z_s1_prime", z_s1_prime}}},
        {"flags", flags},
        {"ledger", to_json(ledger)}};
    return identity ? exit_code::kSuccess : exit_code::kNumericalFailure;
}

int run_soundness_mode(const RunConfig& c, json& report) {
    const auto summary = run_soundness(c.soundness, c.seed);
    json trials = json::array();
    for (const auto& t : summary.trials) {
        trials.push_back(json{{"index", t.index},
                              {"delta", t.delta},
                              {"channel", to_string(t.channel)},
                              {"observed", to_json(t.observed)},
                              {"bound", to_json(t.bound)},
                              {"true_weighted_s1", t.true_weighted_s1},
                              {"true_delta1_prime", t.true_delta1_prime},
                              {"identity_ok", t.identity_ok},
                              {"sound", t.sound}});
    }
    report["simulation"] = json{{"trials", trials},
                                {"violations", summary.violations},
                                {"min_relative_margin", summary.min_relative_margin}};
    return summary.violations == 0 ? exit_code::kSuccess : exit_code::kNumericalFailure;
}

}  // namespace

// ---------------------------------------------------------------------------
// Public surface
// ---------------------------------------------------------------------------

std::string to_string(Mode mode) {
    switch (mode) {
        case Mode::kBound:
            return "bound";
        case Mode::kKeyrate:
            return "keyrate";
        case Mode::kSweep:
            return "sweep";
        case Mode::kAttack:
            return "attack";
        case Mode::kSoundness:
            return "soundness";
    }
    return "unknown";
}

std::optional<Mode> mode_from_string(std::string_view name) {
    for (auto m : {Mode::kBound, Mode::kKeyrate, Mode::kSweep, Mode::kAttack, Mode::kSoundness}) {
        if (to_string(m) == name) {
            return m;
        }
    }
    return std::nullopt;
}

ProtocolSources SourcesConfig::build(double delta_override) const {
    ProtocolSources s;
    s.vacuum = coefficient_bounds(0.0, 0.0, k_max);
    s.decoy = coefficient_bounds(mu, delta_override, k_max);
    s.signal = coefficient_bounds(mu_prime, delta_override, k_max);
    s.p0 = p0;
    s.p_mu = p_mu;
    s.p_mu_prime = p_mu_prime;
    return s;
}

AttackScenario AttackConfig::scenario(double mu, double mu_prime, int k_max) const {
    auto sc = AttackScenario::two_block_attack(eta_e, n_pulses, n_blocks);
    sc.mu = mu;
    sc.mu_prime = mu_prime;
    sc.p0 = p0;
    sc.p_mu = p_mu;
    sc.p_mu_prime = p_mu_prime;
    sc.dark_count = dark_count;
    sc.detector_error = detector_error;
    sc.k_max = k_max;
    return sc;
}

ObservedRates parse_observed_csv(std::string_view text) {
    ObservedRates o;
    const std::pair<const char*, double*> fields[] = {{"s0", &o.s0},
                                                      {"s_mu", &o.s_mu},
                                                      {"s_mu_prime", &o.s_mu_prime},
                                                      {"qber_signal", &o.qber_signal},
                                                      {"qber_decoy", &o.qber_decoy}};
    std::set<std::string> seen;
    auto trim = [](std::string_view s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string_view::npos) {
            return std::string_view{};
        }
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    };
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        const auto line = trim(text.substr(0, nl));
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (line.empty() || line.front() == '#') {
            continue;
        }
        const auto comma = line.find(',');
        if (comma == std::string_view::npos) {
            throw ConfigError("observed csv line " + std::to_string(line_no) + ": expected key,value");
        }
        const std::string key(trim(line.substr(0, comma)));
        const auto value_text = trim(line.substr(comma + 1));
        if (key == "key" && value_text == "value") {
            continue;
        }
        const auto it = std::find_if(std::begin(fields), std::end(fields),
                                     [&](const auto& f) { return key == f.first; });
        if (it == std::end(fields)) {
            throw ConfigError("observed csv: unknown key '" + key + "'");
        }
        if (!seen.insert(key).second) {
            throw ConfigError("observed csv: duplicate key '" + key + "'");
        }
        double value = 0.0;
        const auto res = std::from_chars(value_text.data(), value_text.data() + value_text.size(), value);
        if (res.ec != std::errc{} || res.ptr != value_text.data() + value_text.size()) {
            throw ConfigError("observed csv: '" + key + "' is not a number");
        }
        require(unit(value), "observed csv " + key, "must lie in [0, 1]");
        *it->second = value;
    }
    for (const auto& [key, _] : fields) {
        require(seen.contains(key), std::string("observed csv ") + key, "required");
    }
    return o;
}

RunConfig parse_config(std::string_view text, const std::string& base_dir) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: malformed JSON: ") + e.what());
    }
    return parse_config(doc, base_dir);
}

RunConfig parse_config(const json& doc, const std::string& base_dir) {
    Section root(doc, "");
    RunConfig c;

    require(root.has("mode"), "mode", "required");
    const auto mode = mode_from_string(root.string("mode", ""));
    require(mode.has_value(), "mode", "must be one of bound, keyrate, sweep, attack, soundness");
    c.mode = *mode;

    c.sources = read_sources(root.child("sources"));

    const json* observed = root.child("observed");
    const json* observed_file = root.child("observed_file");
    require(observed == nullptr || observed_file == nullptr, "observed_file",
            "give either observed or observed_file, not both");
    if (observed != nullptr) {
        c.observed = read_observed(*observed);
        c.observed_source = root.string("observed_source", "inline");
    } else if (observed_file != nullptr) {
        require(observed_file->is_string(), "observed_file", "expected a string path");
        std::filesystem::path path = observed_file->get<std::string>();
        if (path.is_relative() && !base_dir.empty()) {
            path = std::filesystem::path(base_dir) / path;
        }
        c.observed = parse_observed_csv(read_file(path.string()));
        c.observed_source = path.string();
    } else {
        require(!root.has("observed_source"), "observed_source", "only valid alongside observed");
    }

    c.params = read_params(root.child("params"), c.sources);
    c.sweep = read_sweep(root.child("sweep"));
    c.attack = read_attack(root.child("attack"));
    c.soundness = read_soundness(root.child("soundness"), c.sources);

    if (root.has("seed")) {
        c.seed = root.count("seed", c.seed);
    }
    c.output = root.string("output", "");
    root.finish();

    if (c.mode == Mode::kBound || c.mode == Mode::kKeyrate || c.mode == Mode::kSweep) {
        require(c.observed.has_value(), "observed", "required for mode '" + to_string(c.mode) + "'");
    }
    return c;
}

json to_json(const RunConfig& c) {
    json doc;
    doc["mode"] = to_string(c.mode);
    doc["sources"] = json{{"mu", c.sources.mu},
                          {"mu_prime", c.sources.mu_prime},
                          {"delta", c.sources.delta},
                          {"p0", c.sources.p0},
                          {"p_mu", c.sources.p_mu},
                          {"p_mu_prime", c.sources.p_mu_prime},
                          {"k_max", c.sources.k_max}};
    if (c.observed) {
        doc["observed"] = to_json(*c.observed);
        doc["observed_source"] = c.observed_source;
    }
    doc["params"] = json{{"repetition_rate", c.params.repetition_rate},
                         {"duration", c.params.duration},
                         {"p_mu_prime", c.params.p_mu_prime},
                         {"sift_factor", c.params.sift_factor},
                         {"ec_efficiency", c.params.ec_efficiency},
                         {"qber_basis", basis_name(c.params.qber_basis)}};
    doc["sweep"] = json{{"deltas", c.sweep.deltas},
                        {"calibrate_to_hz", optional_json(c.sweep.calibrate_to_hz)},
                        {"reference_hz", c.sweep.reference_hz}};
    doc["attack"] = json{{"n_pulses", c.attack.n_pulses},
                         {"n_blocks", c.attack.n_blocks},
                         {"eta_e", c.attack.eta_e},
                         {"p0", c.attack.p0},
                         {"p_mu", c.attack.p_mu},
                         {"p_mu_prime", c.attack.p_mu_prime},
                         {"dark_count", c.attack.dark_count},
                         {"detector_error", c.attack.detector_error},
                         {"threads", c.attack.threads}};
    doc["soundness"] = json{{"trials", c.soundness.trials},
                            {"n_pulses", c.soundness.n_pulses},
                            {"n_blocks", c.soundness.n_blocks},
                            {"p0", c.soundness.p0},
                            {"p_mu", c.soundness.p_mu},
                            {"p_mu_prime", c.soundness.p_mu_prime},
                            {"deltas", c.soundness.deltas},
                            {"threads", c.soundness.threads}};
    doc["seed"] = c.seed;
    doc["output"] = c.output;
    return doc;
}

RunResult run(const RunConfig& config, std::string timestamp) {
    RunResult result;
    auto& report = result.report;
    report["inputs"] = to_json(config);
    report["meta"] = json{{"tool", "decoyqkd"},
                          {"version", std::string(kToolVersion)},
                          {"mode", to_string(config.mode)},
                          {"seed", config.seed},
                          {"rng_algorithm", std::string(kRngAlgorithm)},
                          {"timestamp", std::move(timestamp)}};
    report["conditions"] = nullptr;
    report["bounds"] = nullptr;
    report["keyrate"] = nullptr;
    report["simulation"] = nullptr;

    auto fail = [&](int code, const char* kind, const char* what) {
        result.exit_code = code;
        report["error"] = json{{"kind", kind}, {"message", what}};
    };
    try {
        switch (config.mode) {
            case Mode::kBound:
                run_bound(config, report, false);
                break;
            case Mode::kKeyrate:
                run_bound(config, report, true);
                break;
            case Mode::kSweep:
                result.exit_code = run_sweep(config, report);
                break;
            case Mode::kAttack:
                result.exit_code = run_attack(config, report);
                break;
            case Mode::kSoundness:
                result.exit_code = run_soundness_mode(config, report);
                break;
        }
    } catch (const ConditionViolation& e) {
        fail(exit_code::kConditionViolation, "condition_violated", e.what());
    } catch (const NumericalFailure& e) {
        fail(exit_code::kNumericalFailure, "numerical_failure", e.what());
    } catch (const DomainError& e) {
        fail(exit_code::kConfigError, "domain_error", e.what());
    }
    return result;
}

std::string emit_report(const json& report) { return report.dump(2) + "\n"; }

json strip_timestamp(json report) {
    if (report.contains("meta") && report["meta"].is_object()) {
        report["meta"].erase("timestamp");
    }
    return report;
}

}  // namespace decoyqkd
