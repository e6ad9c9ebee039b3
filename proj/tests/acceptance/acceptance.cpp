// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any fails.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>

#include "decoyqkd/attack_sim.hpp"
#include "decoyqkd/bounds.hpp"
#include "decoyqkd/cli_io.hpp"
#include "decoyqkd/keyrate.hpp"
#include "decoyqkd/soundness.hpp"

using namespace decoyqkd;

namespace {

int failures = 0;

void report(int id, const char* name, bool pass, const std::string& detail) {
    std::printf("AC-%d %-38s %s  %s\n", id, name, pass ? "PASS" : "FAIL", detail.c_str());
    if (!pass) {
        ++failures;
    }
    std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

ObservedRates fifty_km() { return ObservedRates{2.609e-5, 1.548e-4, 3.817e-4, 0.04247, 0.08379}; }

void small_eta_limit() {
    const double eta = 1e-7;
    const auto cf = attack_closed_form(eta);
    const double naive = cf.naive_s1_estimate / eta;
    const double truth = cf.true_s1_prime / eta;
    const bool pass = std::abs(naive - 2.65336) <= 1e-4 && std::abs(truth - 0.5) <= 1e-6;
    report(1, "closed form eta -> 0", pass, fmt("naive/eta=%.7f true_s1'/eta=%.9f", naive, truth));
}

void monte_carlo_agreement() {
    const auto sc = AttackScenario::two_block_attack(0.1, 10'000'000, 100);
    const auto ledger = simulate(sc, ChannelRule::two_block_attack(sc), 2024);
    const auto cf = attack_closed_form(0.1);
    auto z = [](double est, double p, double n) { return (est - p) / std::sqrt(p * (1 - p) / n); };
    const double z_mu = z(ledger.observed.s_mu, cf.s_mu, static_cast<double>(ledger.decoy.pulses));
    const double z_mup =
        z(ledger.observed.s_mu_prime, cf.s_mu_prime, static_cast<double>(ledger.signal.pulses));
    const double z_s1p = z(*ledger.signal.sub_rate(1), cf.true_s1_prime,
                           static_cast<double>(ledger.signal.pulses_by_k[1]));
    const bool pass = std::abs(z_mu) <= 3 && std::abs(z_mup) <= 3 && std::abs(z_s1p) <= 3 &&
                      verify_counting_identity(ledger);
    report(2, "Monte Carlo vs closed form (N=1e7)", pass,
           fmt("z(S_mu)=%+.2f z(S_mu')=%+.2f z(s1')=%+.2f", z_mu, z_mup, z_s1p));
}

void soundness() {
    SoundnessOptions opt;
    const auto summary = run_soundness(opt, 20240601);
    double dmin = 1, dmax = 0;
    for (const auto& t : summary.trials) {
        dmin = std::min(dmin, t.delta);
        dmax = std::max(dmax, t.delta);
    }
    const bool pass = summary.trials.size() >= 100 && summary.violations == 0 && dmin >= 0.01 &&
                      dmax <= 0.2;
    report(3, "soundness, random attacks", pass,
           fmt("trials=%.0f violations=%.0f min_margin=%.4f delta in [%.2f,", summary.trials.size(),
               summary.violations, summary.min_relative_margin, dmin) +
               fmt("%.2f]", dmax));
}

void reduction() {
    std::mt19937_64 eng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0;
    for (int i = 0; i < 1000; ++i) {
        const double mu = 0.05 + 0.3 * u(eng);
        const double mu_prime = mu + 0.1 + 0.8 * u(eng);
        ObservedRates o{1e-4 * u(eng), 1e-3 * u(eng), 1e-3 * u(eng), 0, 0};
        const auto n = naive_s1_lower(o, coherent_coefficients(mu), coherent_coefficients(mu_prime));
        const auto r = robust_s1_lower(o, coefficient_bounds(mu, 0.0), coefficient_bounds(mu_prime, 0.0));
        const double scale = std::max({std::abs(n.s1_raw), o.s_mu, o.s_mu_prime});
        worst = std::max(worst, std::abs(r.s1_raw - n.s1_raw) / scale);
    }
    report(4, "robust == naive at delta=0", worst <= 1e-12,
           fmt("1000 inputs, max relative difference %.2e", worst));
}

void table() {
    const std::array<double, 6> deltas = {0.05, 0.04, 0.03, 0.02, 0.01, 0.0};
    const std::array<double, 6> published = {70.8, 84.3, 97.6, 110.7, 123.6, 136.3};
    ProtocolSources base;
    base.vacuum = coefficient_bounds(0.0, 0.0);
    base.decoy = coefficient_bounds(0.2, 0.0);
    base.signal = coefficient_bounds(0.6, 0.0);
    base.p0 = 0.1;
    base.p_mu = 0.3;
    base.p_mu_prime = 0.6;
    KeyRateParams params;
    auto rows = sweep_delta(base, fifty_km(), params, deltas);
    params = calibrate_sift_factor(params, rows.back().evaluation->report.r_per_bit, fifty_km(), 136.3);
    rows = sweep_delta(base, fifty_km(), params, deltas);
    bool pass = true;
    std::string detail = "residuals:";
    for (std::size_t j = 0; j < rows.size(); ++j) {
        if (!rows[j].ok()) {
            pass = false;
            detail += " row failed";
            continue;
        }
        const double hz = rows[j].evaluation->report.r_hz;
        const double res = (hz - published[j]) / published[j];
        pass = pass && std::abs(res) <= 0.15;
        if (j > 0 && rows[j - 1].ok()) {
            pass = pass && hz > rows[j - 1].evaluation->report.r_hz;
        }
        detail += fmt(" d=%.2f:%.1fHz(%+.2f%%)", deltas[j], hz, 100 * res);
    }
    pass = pass && std::abs(rows.back().evaluation->report.r_hz - 136.3) < 1e-9;
    report(5, "key rate table at 50 km", pass, detail);
}

void robust_condition() {
    const auto decoy = coherent_interval(0.0, 0.2, 0.4);
    const auto signal = coefficient_bounds(0.6, 0.0);
    const bool forward = check_robust_condition(decoy, signal).ok;
    const bool swapped = check_robust_condition(signal, decoy).ok;
    const double ratio = signal.lo(2) / decoy.hi(2);
    report(6, "robust condition [0,0.4] vs 0.6", forward && !swapped && std::abs(ratio - 1.842) < 1e-3,
           fmt("ratio=%.6f forward=%.0f swapped=%.0f", ratio, forward, swapped));
}

void entropy_and_rate() {
    bool pass = binary_entropy(0.5) == 1.0 && key_rate(1, 0, 0, 1).r_per_bit == 1.0;
    double asym = 0;
    for (int j = 0; j <= 1000; ++j) {
        const double x = j / 1000.0;
        asym = std::max(asym, std::abs(binary_entropy(x) - binary_entropy(1 - x)));
    }
    pass = pass && asym <= 1e-12;
    int grid_failures = 0;
    const double grid[] = {0.0, 0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.49};
    for (double d : {0.2, 0.5, 0.8}) {
        for (double t1 : grid) {
            for (double t : grid) {
                const double r = key_rate(d, t1, t).r_per_bit;
                grid_failures += key_rate(d + 0.1, t1, t).r_per_bit < r;
                grid_failures += key_rate(d, t1 + 0.01, t).r_per_bit > r;
                grid_failures += key_rate(d, t1, t + 0.01).r_per_bit > r;
                grid_failures += key_rate(d, t1, t, 1.2).r_per_bit > r;
            }
        }
    }
    pass = pass && grid_failures == 0;
    report(7, "entropy and key rate properties", pass,
           fmt("H(0.5)=%.17g max|H(x)-H(1-x)|=%.1e R(1,0,0,1)=%.17g monotonicity failures=%.0f",
               binary_entropy(0.5), asym, key_rate(1, 0, 0, 1).r_per_bit, grid_failures));
}

void determinism() {
    nlohmann::json doc{{"mode", "attack"},
                       {"attack", {{"n_pulses", 2'000'000}, {"n_blocks", 100}}},
                       {"seed", 31}};
    const auto config = parse_config(doc);
    const auto a = run(config, "2000-01-01T00:00:00Z");
    const auto b = run(config, "2099-12-31T23:59:59Z");
    nlohmann::json sdoc{{"mode", "soundness"},
                        {"soundness", {{"trials", 4}, {"n_pulses", 1 << 18}, {"n_blocks", 16}}}};
    const auto sconfig = parse_config(sdoc);
    const auto c = run(sconfig, "x");
    const auto d = run(sconfig, "y");
    const bool pass = emit_report(strip_timestamp(a.report)) == emit_report(strip_timestamp(b.report)) &&
                      emit_report(strip_timestamp(c.report)) == emit_report(strip_timestamp(d.report)) &&
                      a.report != b.report;
    report(8, "reports identical but for timestamp", pass,
           fmt("attack report %.0f bytes, soundness report %.0f bytes",
               emit_report(a.report).size(), emit_report(c.report).size()));
}

}  // namespace

int main() {
    small_eta_limit();
    monte_carlo_agreement();
    soundness();
    reduction();
    table();
    robust_condition();
    entropy_and_rate();
    determinism();
    std::printf("%s: %d criteria failed\n", failures == 0 ? "ACCEPTED" : "REJECTED", failures);
    return failures == 0 ? 0 : 1;
}
