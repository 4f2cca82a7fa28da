#include "bflsim/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "bflsim/aggregators.hpp"
#include "bflsim/attacks.hpp"
#include "bflsim/errors.hpp"
#include "bflsim/rng.hpp"

namespace bfl {

namespace {

// Runs fn(i) for i in [0, count) on up to `workers` threads. Each index
// writes only its own output slot, so the result is independent of
// scheduling. The first exception by index order is rethrown.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t workers, Fn&& fn) {
    workers = std::max<std::size_t>(1, std::min(workers, count));
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(count);
    auto drain = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) {
        pool.emplace_back(drain);
    }
    drain();
    for (auto& th : pool) {
        th.join();
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

template <typename Fn>
auto in_stage(std::uint64_t t, const char* stage, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(static_cast<int>(t), stage, e.what());
    }
}

}  // namespace

Simulation::Simulation(const ExperimentConfig& cfg, std::size_t workers) : cfg_(cfg), workers_(workers) {
    cfg_.validate();
    const std::size_t classes = cfg_.data.num_classes;

    Dataset train;
    if (cfg_.data.source == DataSource::synthetic) {
        const Dataset all = data::generate_synthetic(cfg_.data.num_samples, cfg_.data.feature_dim, classes,
                                                     cfg_.data.class_separation, cfg_.seed);
        auto parts = data::split(all, cfg_.data.train_fraction, cfg_.seed);
        train = std::move(parts.train);
        test_ = std::move(parts.test);
    } else {
        train = data::load_idx(cfg_.data.train_images, cfg_.data.train_labels, classes);
        test_ = data::load_idx(cfg_.data.test_images, cfg_.data.test_labels, classes);
        if (train.feature_dim != test_.feature_dim) {
            throw ConsistencyError("idx train and test images differ in size");
        }
        cfg_.attack.validate(train.feature_dim, classes);
    }
    if (test_.empty()) {
        throw ConfigError("test split is empty");
    }
    spec_ = cfg_.model_spec(train.feature_dim, classes);
    spec_.validate();
    train_ = cfg_.train_config();
    cfg_.attack.seed = cfg_.seed;

    clients_ = data::partition_noniid(train, PartitionConfig{cfg_.total_clients, classes, cfg_.bias_h, cfg_.seed});

    std::vector<std::size_t> order(cfg_.total_clients);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto engine = rng::make_engine(cfg_.seed, rng::Stream::participants, {0});
    std::shuffle(order.begin(), order.end(), engine);
    malicious_.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cfg_.num_malicious()));
    std::sort(malicious_.begin(), malicious_.end());
    malicious_mask_.assign(cfg_.total_clients, false);
    for (std::size_t c : malicious_) {
        malicious_mask_[c] = true;
    }

    poisoned_.resize(cfg_.total_clients);
    for (std::size_t c : malicious_) {
        if (cfg_.attack.kind == AttackKind::label_flip) {
            poisoned_[c] = data::flip_labels(clients_[c], classes);
        } else if (cfg_.attack.kind == AttackKind::scaling) {
            poisoned_[c] = attacks::poison_with_trigger(clients_[c], cfg_.attack, c);
        }
    }

    global_ = model::initial_params(spec_, cfg_.init_kind(), cfg_.seed);
    weights_ = cfg_.defense.weights;
}

bool Simulation::is_malicious(std::size_t client) const {
    return client < malicious_mask_.size() && malicious_mask_[client];
}

std::vector<std::size_t> Simulation::participants(std::uint64_t t) const {
    const std::size_t n = cfg_.participants_per_round;
    std::vector<std::size_t> out;
    if (n == cfg_.total_clients) {
        out.resize(n);
        std::iota(out.begin(), out.end(), std::size_t{0});
        return out;
    }
    std::vector<std::size_t> honest;
    for (std::size_t c = 0; c < cfg_.total_clients; ++c) {
        if (!malicious_mask_[c]) {
            honest.push_back(c);
        }
    }
    auto engine = rng::make_engine(cfg_.seed, rng::Stream::participants, {t});
    std::shuffle(honest.begin(), honest.end(), engine);
    out = malicious_;
    out.insert(out.end(), honest.begin(), honest.begin() + static_cast<std::ptrdiff_t>(n - malicious_.size()));
    std::sort(out.begin(), out.end());
    return out;
}

RoundMetrics Simulation::run_round() {
    const std::uint64_t t = round_ + 1;
    const AttackKind attack = cfg_.attack.kind;
    const bool crafted = attacks::replaces_training(attack);

    const auto ids = in_stage(t, "participants", [&] { return participants(t); });
    const std::size_t n = ids.size();

    std::vector<bool> clean(n);
    std::vector<bool> trains(n);
    for (std::size_t i = 0; i < n; ++i) {
        const bool hostile = is_malicious(ids[i]) && attack != AttackKind::none;
        clean[i] = !hostile;
        trains[i] = !(hostile && crafted);
    }

    std::vector<ParamVector> submissions(n);
    std::vector<double> losses(n, 0.0);
    in_stage(t, "local_training", [&] {
        parallel_for(n, workers_, [&](std::size_t i) {
            if (!trains[i]) {
                return;
            }
            const std::size_t c = ids[i];
            const Dataset& local = clean[i] || poisoned_[c].empty() ? clients_[c] : poisoned_[c];
            auto res = model::local_train(spec_, global_, local, train_, t, c);
            submissions[i] = std::move(res.params);
            losses[i] = res.mean_loss;
        });
    });

    std::vector<ParamVector> honest;
    double loss_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (clean[i]) {
            honest.push_back(submissions[i]);
            loss_sum += losses[i];
        }
    }

    in_stage(t, "attack", [&] {
        if (attack == AttackKind::none || attack == AttackKind::label_flip) {
            return;
        }
        const AttackContext ctx{honest, global_, t};
        const std::size_t hostile = static_cast<std::size_t>(std::count(clean.begin(), clean.end(), false));
        if (crafted) {
            auto forged = attacks::craft(hostile, ctx, cfg_.attack);
            std::size_t k = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (!clean[i]) {
                    submissions[i] = std::move(forged[k++]);
                }
            }
        } else {
            for (std::size_t i = 0; i < n; ++i) {
                if (!clean[i]) {
                    submissions[i] = attacks::scaling_attack(submissions[i], ctx, cfg_.attack);
                }
            }
        }
    });

    RoundMetrics m;
    m.round = t;
    FilterResult benign;
    const bool adabfl = cfg_.defense.adabfl;
    ParamVector next = in_stage(t, "aggregation", [&] {
        ParamVector out;
        if (adabfl) {
            DefenseVariant variant;
            variant.topology = cfg_.defense.topology;
            variant.weight_mode = cfg_.defense.weight_mode;
            variant.m_synthetic = cfg_.synthetic_count();
            variant.trim.per_side = cfg_.per_side();
            FilterConfig filter = cfg_.defense.filter;
            filter.total_rounds = cfg_.rounds;
            DefenseOutcome res = adabfl::defend(submissions, variant, filter, weights_, t);
            weights_ = res.weights;
            benign = std::move(res.benign);
            m.betas = weights_.betas();
            m.p1 = res.signals.p1;
            m.p2 = res.signals.p2;
            out = std::move(res.global);
        } else {
            BaselineRule rule;
            rule.kind = cfg_.defense.baseline;
            rule.trim.per_side = rule.kind == BaselineKind::krum ? cfg_.num_malicious() : cfg_.per_side();
            rule.synthetic_count = cfg_.synthetic_count();
            rule.seed = cfg_.seed;
            out = agg::aggregate_baseline(rule, submissions, t);
        }
        params::require_finite(out, "aggregated global model");
        return out;
    });

    in_stage(t, "evaluation", [&] {
        const ParamVector honest_mean = params::mean(honest);
        m.train_loss = loss_sum / static_cast<double>(honest.size());
        m.grad_norm_estimate = params::l2_distance(honest_mean, global_) / train_.learning_rate;
        m.agg_error_norm = params::l2_distance(next, honest_mean);
        if (adabfl) {
            m.benign_set_size = benign.indices.size();
            m.malicious_accepted = static_cast<std::size_t>(
                std::count_if(benign.indices.begin(), benign.indices.end(), [&](std::size_t i) { return !clean[i]; }));
        }
        if (t % cfg_.eval_every == 0 || t == cfg_.rounds) {
            m.test_error = model::test_error(spec_, next, test_);
            if (attack == AttackKind::scaling) {
                std::size_t total = 0;
                std::size_t hits = 0;
                std::vector<double> x(spec_.feature_dim);
                for (std::size_t r = 0; r < test_.size(); ++r) {
                    if (test_.labels[r] == cfg_.attack.target_class) {
                        continue;
                    }
                    const auto row = test_.row(r);
                    std::copy(row.begin(), row.end(), x.begin());
                    attacks::stamp_trigger(x, cfg_.attack);
                    ++total;
                    hits += model::predict(spec_, next, x) == cfg_.attack.target_class ? 1 : 0;
                }
                if (total > 0) {
                    m.backdoor_success = static_cast<double>(hits) / static_cast<double>(total);
                }
            }
        }
    });

    if (observer_) {
        RoundTrace trace;
        trace.round = t;
        trace.previous_global = &global_;
        trace.new_global = &next;
        trace.participants = &ids;
        trace.submissions = &submissions;
        trace.clean = &clean;
        trace.benign = adabfl ? &benign : nullptr;
        observer_(trace);
    }

    global_ = std::move(next);
    round_ = t;
    return m;
}

std::vector<RoundMetrics> run_experiment(const ExperimentConfig& cfg, std::size_t workers, RoundObserver observer) {
    Simulation s(cfg, workers);
    s.set_observer(std::move(observer));
    std::vector<RoundMetrics> out;
    out.reserve(cfg.rounds);
    for (std::size_t t = 0; t < cfg.rounds; ++t) {
        out.push_back(s.run_round());
    }
    return out;
}

namespace sim {

namespace {

constexpr std::array<std::pair<std::string_view, SweepAxis>, 6> kAxes{{
    {"malicious_fraction", SweepAxis::malicious_fraction},
    {"bias_h", SweepAxis::bias_h},
    {"total_clients", SweepAxis::total_clients},
    {"synthetic_fraction", SweepAxis::synthetic_fraction},
    {"attack", SweepAxis::attack},
    {"defense", SweepAxis::defense},
}};

}  // namespace

SweepAxis parse_axis(std::string_view name) {
    for (const auto& [n, a] : kAxes) {
        if (n == name) {
            return a;
        }
    }
    throw ConfigError("unknown sweep axis '" + std::string(name) + "'");
}

std::string_view to_string(SweepAxis axis) {
    for (const auto& [n, a] : kAxes) {
        if (a == axis) {
            return n;
        }
    }
    return "unknown";
}

ExperimentConfig apply_axis(const ExperimentConfig& base, SweepAxis axis, const std::string& value) {
    ExperimentConfig cfg = base;
    switch (axis) {
        case SweepAxis::malicious_fraction:
            config::set_value(cfg, "malicious_fraction", value);
            break;
        case SweepAxis::bias_h:
            config::set_value(cfg, "partition.bias_h", value);
            break;
        case SweepAxis::total_clients:
            config::set_value(cfg, "total_clients", value);
            config::set_value(cfg, "participants_per_round", value);
            break;
        case SweepAxis::synthetic_fraction:
            config::set_value(cfg, "defense.synthetic_fraction", value);
            break;
        case SweepAxis::attack:
            config::set_value(cfg, "attack.kind", value);
            break;
        case SweepAxis::defense:
            config::set_value(cfg, "defense.kind", value);
            break;
    }
    return cfg;
}

std::vector<SweepRun> run_sweep(const ExperimentConfig& base, SweepAxis axis, const std::vector<std::string>& values,
                                const std::vector<std::string>& defenses, std::size_t workers) {
    if (values.empty()) {
        throw ConfigError("sweep needs at least one axis value");
    }
    std::vector<std::string> names = defenses;
    if (names.empty() || axis == SweepAxis::defense) {
        names = {base.defense.name()};
    }
    // Validate the whole grid before running anything.
    std::vector<SweepRun> runs;
    for (const auto& value : values) {
        for (const auto& name : names) {
            SweepRun run;
            ExperimentConfig cfg = base;
            if (axis != SweepAxis::defense) {
                config::set_value(cfg, "defense.kind", name);
            }
            cfg = apply_axis(cfg, axis, value);
            cfg.validate();
            run.axis_value = value;
            run.defense = cfg.defense.name();
            run.attack = std::string(attacks::to_string(cfg.attack.kind));
            run.config = std::move(cfg);
            runs.push_back(std::move(run));
        }
    }
    for (auto& run : runs) {
        run.history = run_experiment(run.config, workers);
    }
    return runs;
}

std::optional<double> final_test_error(const std::vector<RoundMetrics>& history) {
    for (auto it = history.rbegin(); it != history.rend(); ++it) {
        if (it->test_error) {
            return it->test_error;
        }
    }
    return std::nullopt;
}

}  // namespace sim
}  // namespace bfl
