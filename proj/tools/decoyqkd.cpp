// decoyqkd: command-line front end for the decoy-state bound pipeline.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "decoyqkd/cli_io.hpp"

namespace {

using nlohmann::json;
namespace ec = decoyqkd::exit_code;

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm utc{};
    gmtime_r(&now, &utc);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &utc);
    return buf;
}

std::string num(const json& v, const char* pattern = "{:.6g}") {
    return v.is_number() ? fmt::format(fmt::runtime(pattern), v.get<double>()) : std::string("-");
}

void print_bound_summary(const json& report) {
    const auto& b = report["bounds"];
    if (!b.is_object() || !b.contains("robust")) {
        return;
    }
    const auto& r = b["robust"];
    fmt::print(stderr, "{:<22}{}\n", "s1 lower", num(r["s1_lower"]));
    fmt::print(stderr, "{:<22}{}\n", "delta1' lower", num(r["delta1_prime_lower"]));
    fmt::print(stderr, "{:<22}{}\n", "delta1 lower", num(r["delta1_lower"]));
    if (b.contains("t1")) {
        fmt::print(stderr, "{:<22}{}\n", "t1 upper", num(b["t1"]["t1_upper"]));
    }
    const auto& k = report["keyrate"];
    if (k.is_object() && k.contains("r_per_bit")) {
        fmt::print(stderr, "{:<22}{}\n", "R per bit", num(k["r_per_bit"]));
        fmt::print(stderr, "{:<22}{}\n", "R (Hz)", num(k["r_hz"], "{:.2f}"));
    }
}

void print_sweep_summary(const json& report) {
    const auto& k = report["keyrate"];
    if (!k.is_object()) {
        return;
    }
    fmt::print(stderr, "{:>7} {:>12} {:>12} {:>12} {:>10} {:>10}\n", "delta", "s1", "delta1'",
               "t1", "R (Hz)", "resid");
    for (const auto& row : k["rows"]) {
        if (!row["ok"].get<bool>()) {
            fmt::print(stderr, "{:>7.3f}  failed: {}\n", row["delta"].get<double>(),
                       row["error"].get<std::string>());
            continue;
        }
        const json resid = row.contains("relative_residual")
                               ? json(100.0 * row["relative_residual"].get<double>())
                               : json();
        fmt::print(stderr, "{:>7.3f} {:>12} {:>12} {:>12} {:>10} {:>10}\n",
                   row["delta"].get<double>(), num(row["bound"]["s1_lower"]),
                   num(row["bound"]["delta1_prime_lower"]), num(row["t1"]["t1_upper"]),
                   num(row["keyrate"]["r_hz"], "{:.1f}"), num(resid, "{:+.2f}%"));
    }
    if (k["calibration"].is_object()) {
        fmt::print(stderr, "calibrated sift factor {}\n",
                   num(k["calibration"]["fitted_sift_factor"]));
    }
}

void print_attack_summary(const json& report) {
    const auto& s = report["simulation"];
    if (!s.is_object()) {
        return;
    }
    const auto& cf = s["closed_form"];
    const auto& mc = s["monte_carlo"];
    const auto& obs = s["ledger"]["observed"];
    fmt::print(stderr, "{:<12} {:>14} {:>14}\n", "", "closed form", "monte carlo");
    fmt::print(stderr, "{:<12} {:>14} {:>14}\n", "S_mu", num(cf["s_mu"]), num(obs["s_mu"]));
    fmt::print(stderr, "{:<12} {:>14} {:>14}\n", "S_mu'", num(cf["s_mu_prime"]),
               num(obs["s_mu_prime"]));
    fmt::print(stderr, "{:<12} {:>14} {:>14}\n", "s1'", num(cf["true_s1_prime"]),
               num(mc["s1_prime"]));
    fmt::print(stderr, "{:<12} {:>14} {:>14}\n", "naive s1", num(cf["naive_s1_estimate"]),
               num(report["bounds"]["naive_averaged"]["s1_lower"]));
    fmt::print(stderr, "{:<12} {:>14} {:>14}\n", "robust s1", num(cf["robust_s1_lower"]),
               num(report["bounds"]["robust"]["s1_lower"]));
    for (const auto& [name, flag] : s["flags"].items()) {
        fmt::print(stderr, "{:<28}{}\n", name, flag.get<bool>() ? "yes" : "no");
    }
}

void print_soundness_summary(const json& report) {
    const auto& s = report["simulation"];
    if (!s.is_object()) {
        return;
    }
    fmt::print(stderr, "trials {}  violations {}  min relative margin {}\n", s["trials"].size(),
               s["violations"].get<int>(), num(s["min_relative_margin"], "{:.4f}"));
}

void print_summary(decoyqkd::Mode mode, const json& report) {
    if (report.contains("error")) {
        fmt::print(stderr, "error ({}): {}\n", report["error"]["kind"].get<std::string>(),
                   report["error"]["message"].get<std::string>());
    }
    switch (mode) {
        case decoyqkd::Mode::kBound:
        case decoyqkd::Mode::kKeyrate:
            print_bound_summary(report);
            break;
        case decoyqkd::Mode::kSweep:
            print_sweep_summary(report);
            break;
        case decoyqkd::Mode::kAttack:
            print_attack_summary(report);
            break;
        case decoyqkd::Mode::kSoundness:
            print_soundness_summary(report);
            break;
    }
}

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<double> delta;
    std::string out;
    bool quiet = false;
};

// Applies command-line overrides to the raw document so they go through the
// same validation as the file itself.
void apply_overrides(json& doc, decoyqkd::Mode mode, const Options& opt) {
    doc["mode"] = decoyqkd::to_string(mode);
    if (opt.seed) {
        doc["seed"] = *opt.seed;
    }
    if (!opt.delta) {
        return;
    }
    const double d = *opt.delta;
    if (!doc.contains("sources")) {
        doc["sources"] = json::object();
    }
    doc["sources"]["delta"] = d;
    if (mode == decoyqkd::Mode::kSweep) {
        if (!doc.contains("sweep")) {
            doc["sweep"] = json::object();
        }
        auto& sweep = doc["sweep"];
        const bool calibrating = sweep.contains("calibrate_to_hz") && !sweep["calibrate_to_hz"].is_null();
        sweep["deltas"] = calibrating && d != 0.0 ? json::array({d, 0.0}) : json::array({d});
        sweep.erase("reference_hz");
    } else if (mode == decoyqkd::Mode::kSoundness) {
        if (!doc.contains("soundness")) {
            doc["soundness"] = json::object();
        }
        doc["soundness"]["deltas"] = json::array({d});
    }
}

int execute(decoyqkd::Mode mode, const Options& opt) {
    json doc = json::object();
    std::string base_dir;
    if (!opt.config.empty()) {
        std::ifstream in(opt.config, std::ios::binary);
        if (!in) {
            std::cerr << "error: cannot read config " << opt.config << "\n";
            return ec::kIoError;
        }
        std::ostringstream ss;
        ss << in.rdbuf();
        try {
            doc = json::parse(ss.str());
        } catch (const json::parse_error& e) {
            std::cerr << "error: config: malformed JSON: " << e.what() << "\n";
            return ec::kConfigError;
        }
        base_dir = std::filesystem::path(opt.config).parent_path().string();
    }

    decoyqkd::RunConfig config;
    try {
        if (!doc.is_object()) {
            throw decoyqkd::ConfigError("config: expected an object");
        }
        apply_overrides(doc, mode, opt);
        config = decoyqkd::parse_config(doc, base_dir);
    } catch (const decoyqkd::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return ec::kConfigError;
    } catch (const decoyqkd::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return ec::kIoError;
    }

    const auto result = decoyqkd::run(config, utc_timestamp());
    const std::string text = decoyqkd::emit_report(result.report);
    const std::string out = !opt.out.empty() ? opt.out : config.output;
    if (out.empty()) {
        std::cout << text;
        std::cout.flush();
        if (!std::cout) {
            return ec::kIoError;
        }
    } else {
        std::ofstream file(out, std::ios::binary);
        file << text;
        file.close();
        if (!file) {
            std::cerr << "error: cannot write report to " << out << "\n";
            return ec::kIoError;
        }
    }
    if (!opt.quiet) {
        print_summary(mode, result.report);
    }
    return result.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Decoy-state QKD bounds with imperfect intensity control"};
    app.set_version_flag("--version", std::string(decoyqkd::kToolVersion));
    app.require_subcommand(1);

    Options opt;
    const std::pair<decoyqkd::Mode, const char*> commands[] = {
        {decoyqkd::Mode::kBound, "Certified single-photon bounds for observed rates"},
        {decoyqkd::Mode::kKeyrate, "Bounds plus the secure key rate"},
        {decoyqkd::Mode::kSweep, "Key rate over a list of intensity error bounds"},
        {decoyqkd::Mode::kAttack, "Closed form and Monte Carlo of the two-block attack"},
        {decoyqkd::Mode::kSoundness, "Random attacks checked against the robust bound"},
    };
    std::vector<std::pair<CLI::App*, decoyqkd::Mode>> subs;
    for (const auto& [mode, help] : commands) {
        auto* sub = app.add_subcommand(decoyqkd::to_string(mode), help);
        sub->add_option("--config,-c", opt.config, "JSON configuration file");
        sub->add_option("--seed", opt.seed, "Override the RNG seed");
        sub->add_option("--out,-o", opt.out, "Write the JSON report here instead of stdout");
        sub->add_option("--delta", opt.delta, "Override the relative intensity error bound")
            ->check(CLI::Range(0.0, 0.999999));
        sub->add_flag("--quiet,-q", opt.quiet, "Suppress the summary on stderr");
        subs.emplace_back(sub, mode);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : ec::kConfigError;
    }

    for (const auto& [sub, mode] : subs) {
        if (sub->parsed()) {
            return execute(mode, opt);
        }
    }
    return ec::kConfigError;
}
