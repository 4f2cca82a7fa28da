// Acceptance harness: one [PASS]/[FAIL] line per criterion on the desk setup.
// Exit status is nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "bflsim/aggregators.hpp"
#include "bflsim/config.hpp"
#include "bflsim/defense.hpp"
#include "bflsim/params.hpp"
#include "bflsim/sim.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "weight_fuzz.hpp"

namespace fs = std::filesystem;
using bfl::AttackKind;
using bfl::ExperimentConfig;

namespace {

// Tolerances, as stated per criterion.
constexpr double parity_tol = 0.02;
constexpr double gaussian_fedavg_min = 0.5;
constexpr double gaussian_slack = 0.03;
constexpr double label_flip_slack = 0.03;
constexpr double strong_attack_slack = 0.05;
constexpr double strong_attack_margin = 0.2;
constexpr double fraction_slack = 0.05;
constexpr double fraction_margin = 0.1;
constexpr double majority_slack = 0.05;
constexpr double majority_median_min = 0.3;
constexpr double mean_tol = 1e-12;
constexpr double example_tol = 1e-12;
constexpr double grad_tol = 1e-4;
constexpr double convergence_ratio = 0.5;
constexpr double variant_slack = 0.05;

const std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};

int failures = 0;
double slowest_run = 0.0;

void report(int id, bool ok, const std::string& detail) {
    std::cout << (ok ? "[PASS]" : "[FAIL]") << " criterion " << id << ": " << detail << std::endl;
    if (!ok) {
        ++failures;
    }
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

ExperimentConfig desk(std::uint64_t seed) {
    ExperimentConfig c;
    c.seed = seed;
    c.rounds = 100;
    c.total_clients = 50;
    c.participants_per_round = 50;
    c.malicious_fraction = 0.3;
    c.eval_every = 10;
    c.learning_rate = 0.05;
    c.batch_size = 32;
    c.data.num_samples = 20000;
    c.data.feature_dim = 20;
    c.data.num_classes = 10;
    c.data.class_separation = 6.0;
    c.bias_h = 0.5;
    return c;
}

ExperimentConfig with(ExperimentConfig c, AttackKind attack, const std::string& defense,
                      double malicious_fraction = 0.3) {
    c.attack.kind = attack;
    c.malicious_fraction = malicious_fraction;
    bfl::config::set_value(c, "defense.kind", defense);
    return c;
}

std::map<std::string, std::vector<bfl::RoundMetrics>> cache;

const std::vector<bfl::RoundMetrics>& history(const ExperimentConfig& c) {
    const auto key = bfl::config::to_json(c);
    auto it = cache.find(key);
    if (it == cache.end()) {
        const auto start = std::chrono::steady_clock::now();
        auto h = bfl::run_experiment(c);
        const std::chrono::duration<double> took = std::chrono::steady_clock::now() - start;
        slowest_run = std::max(slowest_run, took.count());
        it = cache.emplace(key, std::move(h)).first;
    }
    return it->second;
}

double final_error(const ExperimentConfig& c) {
    return bfl::sim::final_test_error(history(c)).value();
}

double seed_mean(AttackKind attack, const std::string& defense, double fraction = 0.3) {
    double s = 0.0;
    for (auto seed : seeds) {
        s += final_error(with(desk(seed), attack, defense, fraction));
    }
    return s / static_cast<double>(seeds.size());
}

void criterion_1() {
    const double ada = seed_mean(AttackKind::none, "adabfl");
    const double avg = seed_mean(AttackKind::none, "fedavg");
    report(1, std::abs(ada - avg) <= parity_tol,
           "no attack, mean error adabfl " + fmt(ada) + " vs fedavg " + fmt(avg) + " (tol " + fmt(parity_tol) + ")");
}

void criterion_2() {
    const double base = seed_mean(AttackKind::none, "adabfl");
    const double avg = seed_mean(AttackKind::gaussian, "fedavg");
    const double ada = seed_mean(AttackKind::gaussian, "adabfl");
    report(2, avg >= gaussian_fedavg_min && ada <= base + gaussian_slack,
           "gaussian 30%, fedavg " + fmt(avg) + " (need >= " + fmt(gaussian_fedavg_min) + "), adabfl " + fmt(ada) +
               " (need <= " + fmt(base + gaussian_slack) + ")");
}

void criterion_3() {
    const double base = seed_mean(AttackKind::none, "adabfl");
    const double ada = seed_mean(AttackKind::label_flip, "adabfl");
    report(3, ada <= base + label_flip_slack,
           "label flip 30%, adabfl " + fmt(ada) + " (need <= " + fmt(base + label_flip_slack) + ")");
}

void criterion_4() {
    const double base = seed_mean(AttackKind::none, "adabfl");
    bool ok = true;
    std::string detail;
    for (auto attack : {AttackKind::trim, AttackKind::min_max, AttackKind::sybil}) {
        const double ada = seed_mean(attack, "adabfl");
        const double avg = seed_mean(attack, "fedavg");
        const bool pass = ada <= base + strong_attack_slack && avg - ada >= strong_attack_margin;
        ok = ok && pass;
        detail += std::string(bfl::attacks::to_string(attack)) + " adabfl " + fmt(ada) + " fedavg " + fmt(avg) +
                  (pass ? " ok" : " fails") + "; ";
    }
    report(4, ok,
           detail + "need adabfl <= " + fmt(base + strong_attack_slack) + " and fedavg - adabfl >= " +
               fmt(strong_attack_margin));
}

void criterion_5() {
    const double base = seed_mean(AttackKind::none, "adabfl");
    const double ada40 = seed_mean(AttackKind::gaussian, "adabfl", 0.4);
    int degraded = 0;
    std::string per_seed;
    for (auto seed : seeds) {
        const double tm = final_error(with(desk(seed), AttackKind::gaussian, "trim_mean", 0.4)) -
                          final_error(with(desk(seed), AttackKind::none, "trim_mean", 0.4));
        const double ada = final_error(with(desk(seed), AttackKind::gaussian, "adabfl", 0.4)) -
                           final_error(with(desk(seed), AttackKind::none, "adabfl", 0.4));
        if (tm - ada >= fraction_margin) {
            ++degraded;
        }
        per_seed += " " + fmt(tm - ada);
    }
    report(5, ada40 <= base + fraction_slack && degraded >= 3,
           "gaussian 40%, adabfl " + fmt(ada40) + " (need <= " + fmt(base + fraction_slack) +
               "); trim_mean extra degradation per seed" + per_seed + ", " + std::to_string(degraded) +
               "/5 seeds >= " + fmt(fraction_margin) + " (need 3)");
}

void criterion_6() {
    int agree = 0;
    std::string detail;
    for (std::uint64_t seed : {1, 2, 3}) {
        const double base = final_error(with(desk(seed), AttackKind::none, "adabfl", 0.55));
        const double g = final_error(with(desk(seed), AttackKind::gaussian, "adabfl", 0.55));
        const double t = final_error(with(desk(seed), AttackKind::trim, "adabfl", 0.55));
        const double med = final_error(with(desk(seed), AttackKind::trim, "median", 0.55));
        const bool pass = g <= base + majority_slack && t <= base + majority_slack && med >= majority_median_min;
        agree += pass ? 1 : 0;
        detail += " seed " + std::to_string(seed) + ": base " + fmt(base) + " gaussian " + fmt(g) + " trim " + fmt(t) +
                  " median/trim " + fmt(med) + (pass ? " ok;" : " fails;");
    }
    report(6, agree >= 2, "55% malicious," + detail + " " + std::to_string(agree) + "/3 agree (need 2)");
}

void criterion_7() {
    namespace params = bfl::params;
    std::mt19937_64 g(7);
    std::size_t bad_trim = 0, bad_median = 0, bad_winsor = 0, bad_trust = 0, bad_krum = 0;
    for (int it = 0; it < 1000; ++it) {
        const auto s = oracle::random_set(g, 1, 9, 5);
        const std::size_t ps = std::uniform_int_distribution<std::size_t>(0, (s.size() - 1) / 2)(g);
        if (oracle::max_abs_diff(params::coordinate_trimmed_mean(s, bfl::TrimConfig{ps}), oracle::trimmed_mean(s, ps)) >
            mean_tol) {
            ++bad_trim;
        }
        if (params::coordinate_median(s) != oracle::median(s)) {
            ++bad_median;
        }
        if (params::winsorize(s, bfl::TrimConfig{ps}) != oracle::winsorize(s, ps)) {
            ++bad_winsor;
        }
        const auto got = bfl::adabfl::trust_scores(s);
        const auto want = oracle::trust_scores(s);
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (std::abs(got[i] - want[i]) > mean_tol * std::max(1.0, want[i])) {
                ++bad_trust;
                break;
            }
        }
        const auto k = oracle::random_set(g, 3, 9, 5);
        const std::size_t f = std::uniform_int_distribution<std::size_t>(0, k.size() - 3)(g);
        if (bfl::agg::krum_select(k, f) != oracle::krum(k, f)) {
            ++bad_krum;
        }
    }
    const std::size_t bad = bad_trim + bad_median + bad_winsor + bad_trust + bad_krum;
    report(7, bad == 0,
           "1000 instances each, mismatches trimmed_mean " + std::to_string(bad_trim) + " median " +
               std::to_string(bad_median) + " winsorize " + std::to_string(bad_winsor) + " trust_scores " +
               std::to_string(bad_trust) + " krum " + std::to_string(bad_krum));
}

void criterion_8() {
    namespace adabfl = bfl::adabfl;
    using bfl::AggWeights;
    using bfl::DefenseSignals;
    auto near = [](double a, double b) { return std::abs(a - b) <= example_tol; };
    int bad_examples = 0;
    auto expect = [&](bool ok) { bad_examples += ok ? 0 : 1; };

    AggWeights w;
    w.beta1 = 0.4;
    w.beta2 = 0.3;
    w.beta3 = 0.3;
    const auto a = adabfl::update_weights_thresholded(w, DefenseSignals{0.02, 0.5});
    expect(near(a.beta1, 0.3) && near(a.beta2, 0.4) && near(a.beta3, 0.3));
    const auto b = adabfl::update_weights_thresholded(w, DefenseSignals{0.0, 0.9});
    expect(near(b.beta1, 0.4) && near(b.beta2, 0.3) && near(b.beta3, 0.3));
    const auto c = adabfl::update_weights_thresholded(w, DefenseSignals{0.0, 0.1});
    expect(near(c.beta1, 0.4 / 1.05) && near(c.beta2, 0.4 / 1.05) && near(c.beta3, 0.25 / 1.05));

    const auto e = adabfl::threshold_free_betas(DefenseSignals{1, 1}, 0.0);
    expect(near(e[0], 1.0 / 3.0) && near(e[1], 1.0 / 3.0) && near(e[2], 1.0 / 3.0));
    const auto f = adabfl::threshold_free_betas(DefenseSignals{0.5, 0.5}, 0.0);
    expect(near(f[0], 1.0 / 3.5) && near(f[1], 0.5 / 3.5) && near(f[2], 2.0 / 3.5));

    AggWeights m;
    const DefenseSignals s{0.3, 0.2};
    m.alpha = 0.0;
    const auto m0 = adabfl::momentum_thresholds(m, s);
    expect(m0.rho1 == s.p1 && m0.rho2 == s.p2);
    m.alpha = 1.0;
    const auto m1 = adabfl::momentum_thresholds(m, s);
    expect(m1.rho1 == m.rho1 && m1.rho2 == m.rho2);
    AggWeights cur;
    cur.alpha = 0.7;
    const double r0 = cur.rho1;
    for (int t = 1; t <= 40; ++t) {
        cur = adabfl::momentum_thresholds(cur, s);
        expect(std::abs(std::abs(cur.rho1 - s.p1) - std::pow(0.7, t) * std::abs(r0 - s.p1)) <= example_tol);
    }

    std::mt19937_64 g(8);
    int off_simplex = 0;
    double worst_free = 0.0;
    for (int it = 0; it < 10000; ++it) {
        const auto fw = weight_fuzz::random_weights(g);
        const auto fs = weight_fuzz::random_signals(g);
        for (auto mode : {bfl::WeightMode::thresholded, bfl::WeightMode::threshold_free, bfl::WeightMode::momentum}) {
            const auto out = adabfl::update_weights(mode, fw, fs);
            const bool ok = std::abs(out.beta1 + out.beta2 + out.beta3 - 1.0) <= example_tol && out.beta1 >= 0 &&
                            out.beta2 >= 0 && out.beta3 >= 0 && out.beta1 <= 1 && out.beta2 <= 1 && out.beta3 <= 1;
            off_simplex += ok ? 0 : 1;
        }
        const auto tf = adabfl::threshold_free_betas(fs, fw.epsilon);
        worst_free = std::max(worst_free, std::abs(tf[0] + tf[1] + tf[2] - 1.0));
    }
    std::ostringstream out;
    out << "worked example mismatches " << bad_examples << ", off-simplex updates " << off_simplex
        << "/30000, worst threshold-free sum deviation " << worst_free << " (tol " << example_tol << ")";
    report(8, bad_examples == 0 && off_simplex == 0 && worst_free <= example_tol, out.str());
}

void criterion_9() {
    std::mt19937_64 g(9);
    double worst = 0.0;
    for (auto kind : {bfl::ModelKind::logistic, bfl::ModelKind::mlp}) {
        for (int it = 0; it < 20; ++it) {
            worst = std::max(worst, gradcheck::relative_error(gradcheck::random_instance(g, kind), 1e-5));
        }
    }
    std::ostringstream out;
    out << "20 instances per model kind, worst relative error " << worst << " (tol " << grad_tol << ")";
    report(9, worst <= grad_tol, out.str());
}

void criterion_10() {
    bool ok = true;
    std::string detail;
    for (auto seed : seeds) {
        auto c = with(desk(seed), AttackKind::none, "adabfl");
        c.learning_rate = 1.0 / std::sqrt(static_cast<double>(c.rounds));
        const auto& h = history(c);
        const std::size_t q = h.size() / 4;
        double first = 0.0, last = 0.0;
        for (std::size_t i = 0; i < q; ++i) {
            first += h[i].grad_norm_estimate;
            last += h[h.size() - q + i].grad_norm_estimate;
        }
        const double ratio = last / first;
        ok = ok && ratio <= convergence_ratio;
        detail += " " + fmt(ratio);
    }
    report(10, ok, "final/first quarter grad_norm_estimate per seed" + detail + " (need <= " +
                       fmt(convergence_ratio) + ")");
}

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void criterion_11() {
    const auto dir = fs::temp_directory_path() / "bflsim_acceptance";
    fs::create_directories(dir);
    bool ok = true;
    int compared = 0;
    std::vector<ExperimentConfig> configs = {with(desk(1), AttackKind::gaussian, "adabfl"),
                                             with(desk(2), AttackKind::trim, "median", 0.55),
                                             with(desk(3), AttackKind::label_flip, "adabfl_1")};
    configs[2].participants_per_round = 30;
    for (const auto& c : configs) {
        for (auto format : {bfl::MetricsFormat::csv, bfl::MetricsFormat::jsonl}) {
            std::string reference;
            for (std::size_t workers : {1, 1, 3}) {
                const auto path = dir / "metrics.out";
                bfl::metrics::write_metrics(bfl::run_experiment(c, workers), path, format);
                const auto bytes = file_bytes(path);
                if (reference.empty()) {
                    reference = bytes;
                } else {
                    ok = ok && bytes == reference;
                    ++compared;
                }
            }
        }
    }
    report(11, ok, std::to_string(compared) + " repeated runs (workers 1 and 3, csv and jsonl) byte-identical: " +
                       (ok ? "yes" : "no"));
}

void criterion_12() {
    bool ok = true;
    std::string detail;
    for (const std::string variant : {"adabfl_1", "adabfl_2", "adabfl_3"}) {
        const double base = seed_mean(AttackKind::none, variant);
        const double err = seed_mean(AttackKind::gaussian, variant);
        const bool pass = err <= base + variant_slack;
        ok = ok && pass;
        detail += " " + variant + " " + fmt(err) + " (base " + fmt(base) + (pass ? ") ok;" : ") fails;");
    }
    report(12, ok, "gaussian 30%," + detail + " need <= base + " + fmt(variant_slack));
}

}  // namespace

int main() {
    const auto start = std::chrono::steady_clock::now();
    try {
        criterion_1();
        criterion_2();
        criterion_3();
        criterion_4();
        criterion_5();
        criterion_6();
        criterion_7();
        criterion_8();
        criterion_9();
        criterion_10();
        criterion_11();
        criterion_12();
    } catch (const std::exception& e) {
        std::cout << "[FAIL] harness error: " << e.what() << std::endl;
        return 2;
    }
    const std::chrono::duration<double> total = std::chrono::steady_clock::now() - start;
    std::cout << "slowest single run " << fmt(slowest_run) << " s, total " << fmt(total.count()) << " s, "
              << failures << " criteria failed" << std::endl;
    return failures == 0 ? 0 : 1;
}
