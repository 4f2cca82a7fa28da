#include "bflsim/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "bflsim/errors.hpp"

namespace bfl {

namespace {

using json = nlohmann::json;

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(std::string_view key, std::string_view text) {
    double v = 0.0;
    const auto* end = text.data() + text.size();
    const auto res = std::from_chars(text.data(), end, v);
    if (res.ec != std::errc{} || res.ptr != end || !std::isfinite(v)) {
        throw ConfigError("config key '" + std::string(key) + "': expected a number, got '" + std::string(text) + "'");
    }
    return v;
}

long long parse_int(std::string_view key, std::string_view text) {
    long long v = 0;
    const auto* end = text.data() + text.size();
    const auto res = std::from_chars(text.data(), end, v);
    if (res.ec != std::errc{} || res.ptr != end) {
        // Accept integral values written as reals, e.g. 20000.0.
        const double d = parse_double(key, text);
        if (d != std::floor(d) || std::abs(d) > 9.0e15) {
            throw ConfigError("config key '" + std::string(key) + "': expected an integer, got '" +
                              std::string(text) + "'");
        }
        return static_cast<long long>(d);
    }
    return v;
}

std::size_t parse_count(std::string_view key, std::string_view text) {
    const long long v = parse_int(key, text);
    if (v < 0) {
        throw ConfigError("config key '" + std::string(key) + "' must be non-negative");
    }
    return static_cast<std::size_t>(v);
}

bool parse_bool(std::string_view key, std::string_view text) {
    if (text == "true" || text == "1") {
        return true;
    }
    if (text == "false" || text == "0") {
        return false;
    }
    throw ConfigError("config key '" + std::string(key) + "': expected true or false");
}

struct Field {
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, std::string_view key, std::string_view value)> set;
};

template <typename Member>
Field count_field(Member member) {
    return {[member](const ExperimentConfig& c) { return std::to_string(member(c)); },
            [member](ExperimentConfig& c, std::string_view k, std::string_view v) {
                member(c) = parse_count(k, v);
            }};
}

template <typename Member>
Field real_field(Member member) {
    return {[member](const ExperimentConfig& c) { return fmt_double(member(c)); },
            [member](ExperimentConfig& c, std::string_view k, std::string_view v) {
                member(c) = parse_double(k, v);
            }};
}

template <typename Member>
Field text_field(Member member) {
    return {[member](const ExperimentConfig& c) { return member(c); },
            [member](ExperimentConfig& c, std::string_view, std::string_view v) { member(c) = std::string(v); }};
}

// Accessor returning a reference to one config member.
#define BFL_MEMBER(expr) [](auto& c) -> auto& { return c.expr; }

void set_defense_kind(ExperimentConfig& c, std::string_view v) {
    auto& d = c.defense;
    if (v == "adabfl") {
        d.adabfl = true;
    } else if (v == "adabfl_1" || v == "adabfl_2" || v == "adabfl_3") {
        d.adabfl = true;
        d.topology = v.back() == '1' ? Topology::serial_1 : v.back() == '2' ? Topology::serial_2 : Topology::parallel_3;
    } else {
        d.baseline = agg::parse_baseline_kind(v);
        d.adabfl = false;
    }
}

const std::map<std::string, Field, std::less<>>& fields() {
    static const std::map<std::string, Field, std::less<>> table = [] {
        std::map<std::string, Field, std::less<>> t;
        t["seed"] = {[](const ExperimentConfig& c) { return std::to_string(c.seed); },
                     [](ExperimentConfig& c, std::string_view k, std::string_view v) {
                         c.seed = static_cast<std::uint64_t>(parse_count(k, v));
                     }};
        t["rounds"] = count_field(BFL_MEMBER(rounds));
        t["total_clients"] = count_field(BFL_MEMBER(total_clients));
        t["participants_per_round"] = count_field(BFL_MEMBER(participants_per_round));
        t["malicious_fraction"] = real_field(BFL_MEMBER(malicious_fraction));
        t["eval_every"] = count_field(BFL_MEMBER(eval_every));

        t["model.kind"] = {[](const ExperimentConfig& c) { return std::string(model::to_string(c.model_kind)); },
                           [](ExperimentConfig& c, std::string_view, std::string_view v) {
                               c.model_kind = model::parse_model_kind(v);
                           }};
        t["model.hidden_dim"] = count_field(BFL_MEMBER(hidden_dim));
        t["model.init"] = {[](const ExperimentConfig& c) { return std::string(config::to_string(c.init)); },
                           [](ExperimentConfig& c, std::string_view k, std::string_view v) {
                               if (v == "auto") {
                                   c.init = InitChoice::automatic;
                               } else if (v == "zeros") {
                                   c.init = InitChoice::zeros;
                               } else if (v == "he_normal") {
                                   c.init = InitChoice::he_normal;
                               } else {
                                   throw ConfigError("config key '" + std::string(k) +
                                                     "': expected auto, zeros or he_normal");
                               }
                           }};

        t["train.learning_rate"] = real_field(BFL_MEMBER(learning_rate));
        t["train.batch_size"] = count_field(BFL_MEMBER(batch_size));
        t["train.local_steps"] = count_field(BFL_MEMBER(local_steps));

        t["data.source"] = {[](const ExperimentConfig& c) { return std::string(config::to_string(c.data.source)); },
                            [](ExperimentConfig& c, std::string_view k, std::string_view v) {
                                if (v == "synthetic") {
                                    c.data.source = DataSource::synthetic;
                                } else if (v == "idx") {
                                    c.data.source = DataSource::idx;
                                } else {
                                    throw ConfigError("config key '" + std::string(k) +
                                                      "': expected synthetic or idx");
                                }
                            }};
        t["data.num_samples"] = count_field(BFL_MEMBER(data.num_samples));
        t["data.feature_dim"] = count_field(BFL_MEMBER(data.feature_dim));
        t["data.num_classes"] = count_field(BFL_MEMBER(data.num_classes));
        t["data.class_separation"] = real_field(BFL_MEMBER(data.class_separation));
        t["data.train_fraction"] = real_field(BFL_MEMBER(data.train_fraction));
        t["data.train_images"] = text_field(BFL_MEMBER(data.train_images));
        t["data.train_labels"] = text_field(BFL_MEMBER(data.train_labels));
        t["data.test_images"] = text_field(BFL_MEMBER(data.test_images));
        t["data.test_labels"] = text_field(BFL_MEMBER(data.test_labels));
        t["partition.bias_h"] = real_field(BFL_MEMBER(bias_h));

        t["attack.kind"] = {[](const ExperimentConfig& c) { return std::string(attacks::to_string(c.attack.kind)); },
                            [](ExperimentConfig& c, std::string_view, std::string_view v) {
                                c.attack.kind = attacks::parse_attack_kind(v);
                            }};
        t["attack.gaussian_variance"] = real_field(BFL_MEMBER(attack.gaussian_variance));
        t["attack.trim_reach"] = real_field(BFL_MEMBER(attack.trim_reach));
        t["attack.scale_factor"] = real_field(BFL_MEMBER(attack.scale_factor));
        t["attack.trigger_width"] = count_field(BFL_MEMBER(attack.trigger_width));
        t["attack.target_class"] = {[](const ExperimentConfig& c) { return std::to_string(c.attack.target_class); },
                                    [](ExperimentConfig& c, std::string_view k, std::string_view v) {
                                        c.attack.target_class = static_cast<std::uint32_t>(parse_count(k, v));
                                    }};

        t["defense.kind"] = {[](const ExperimentConfig& c) { return c.defense.name(); },
                             [](ExperimentConfig& c, std::string_view, std::string_view v) { set_defense_kind(c, v); }};
        t["defense.variant"] = {
            [](const ExperimentConfig& c) { return std::string(adabfl::to_string(c.defense.topology)); },
            [](ExperimentConfig& c, std::string_view, std::string_view v) {
                c.defense.topology = adabfl::parse_topology(v);
            }};
        t["defense.weight_mode"] = {
            [](const ExperimentConfig& c) { return std::string(adabfl::to_string(c.defense.weight_mode)); },
            [](ExperimentConfig& c, std::string_view, std::string_view v) {
                c.defense.weight_mode = adabfl::parse_weight_mode(v);
            }};
        t["defense.per_side"] = {[](const ExperimentConfig& c) { return std::to_string(c.defense.per_side); },
                                 [](ExperimentConfig& c, std::string_view k, std::string_view v) {
                                     c.defense.per_side = parse_int(k, v);
                                 }};
        t["defense.synthetic_fraction"] = real_field(BFL_MEMBER(defense.synthetic_fraction));

        t["defense.filter.gamma"] = real_field(BFL_MEMBER(defense.filter.gamma));
        t["defense.filter.kappa"] = real_field(BFL_MEMBER(defense.filter.kappa));
        t["defense.filter.lambda_schedule"] = {
            [](const ExperimentConfig& c) { return std::string(adabfl::to_string(c.defense.filter.schedule)); },
            [](ExperimentConfig& c, std::string_view, std::string_view v) {
                c.defense.filter.schedule = adabfl::parse_lambda_schedule(v);
            }};
        t["defense.filter.log_base"] = real_field(BFL_MEMBER(defense.filter.log_base));

        t["defense.weights.beta1"] = real_field(BFL_MEMBER(defense.weights.beta1));
        t["defense.weights.beta2"] = real_field(BFL_MEMBER(defense.weights.beta2));
        t["defense.weights.beta3"] = real_field(BFL_MEMBER(defense.weights.beta3));
        t["defense.weights.beta1_min"] = real_field(BFL_MEMBER(defense.weights.beta1_min));
        t["defense.weights.beta2_max"] = real_field(BFL_MEMBER(defense.weights.beta2_max));
        t["defense.weights.beta3_min"] = real_field(BFL_MEMBER(defense.weights.beta3_min));
        t["defense.weights.beta1_base"] = real_field(BFL_MEMBER(defense.weights.beta1_base));
        t["defense.weights.delta_high"] = real_field(BFL_MEMBER(defense.weights.delta_high));
        t["defense.weights.delta_low"] = real_field(BFL_MEMBER(defense.weights.delta_low));
        t["defense.weights.rho1"] = real_field(BFL_MEMBER(defense.weights.rho1));
        t["defense.weights.rho2"] = real_field(BFL_MEMBER(defense.weights.rho2));
        t["defense.weights.kappa_w"] = real_field(BFL_MEMBER(defense.weights.kappa_w));
        t["defense.weights.alpha"] = real_field(BFL_MEMBER(defense.weights.alpha));
        t["defense.weights.epsilon"] = real_field(BFL_MEMBER(defense.weights.epsilon));
        t["defense.weights.p2_branch_ge"] = {
            [](const ExperimentConfig& c) { return std::string(c.defense.weights.p2_branch_ge ? "true" : "false"); },
            [](ExperimentConfig& c, std::string_view k, std::string_view v) {
                c.defense.weights.p2_branch_ge = parse_bool(k, v);
            }};
        return t;
    }();
    return table;
}

#undef BFL_MEMBER

void flatten(const json& node, const std::string& prefix, std::vector<std::pair<std::string, std::string>>& out) {
    if (node.is_object()) {
        for (const auto& [k, v] : node.items()) {
            flatten(v, prefix.empty() ? k : prefix + "." + k, out);
        }
        return;
    }
    if (prefix.empty()) {
        throw ConfigError("config must be a JSON object");
    }
    if (node.is_string()) {
        out.emplace_back(prefix, node.get<std::string>());
    } else if (node.is_boolean()) {
        out.emplace_back(prefix, node.get<bool>() ? "true" : "false");
    } else if (node.is_number_integer()) {
        out.emplace_back(prefix, node.dump());
    } else if (node.is_number()) {
        out.emplace_back(prefix, fmt_double(node.get<double>()));
    } else {
        throw ConfigError("config key '" + prefix + "': expected a scalar value");
    }
}

}  // namespace

std::string DefenseConfig::name() const {
    if (!adabfl) {
        return std::string(agg::to_string(baseline));
    }
    switch (topology) {
        case Topology::serial_1:
            return "adabfl_1";
        case Topology::serial_2:
            return "adabfl_2";
        case Topology::parallel_3:
            break;
    }
    return "adabfl_3";
}

std::size_t ExperimentConfig::num_malicious() const {
    return static_cast<std::size_t>(std::floor(malicious_fraction * static_cast<double>(participants_per_round)));
}

std::size_t ExperimentConfig::per_side() const {
    if (defense.per_side >= 0) {
        return static_cast<std::size_t>(defense.per_side);
    }
    const std::size_t n = participants_per_round;
    return std::min(num_malicious(), n == 0 ? 0 : (n - 1) / 2);
}

std::size_t ExperimentConfig::synthetic_count() const {
    return static_cast<std::size_t>(std::llround(defense.synthetic_fraction * static_cast<double>(participants_per_round)));
}

ModelSpec ExperimentConfig::model_spec(std::size_t feature_dim, std::size_t num_classes) const {
    ModelSpec spec;
    spec.kind = model_kind;
    spec.feature_dim = feature_dim;
    spec.num_classes = num_classes;
    spec.hidden_dim = hidden_dim;
    return spec;
}

TrainConfig ExperimentConfig::train_config() const {
    TrainConfig t;
    t.learning_rate = learning_rate;
    t.batch_size = batch_size;
    t.local_steps = local_steps;
    t.seed = seed;
    return t;
}

InitKind ExperimentConfig::init_kind() const {
    switch (init) {
        case InitChoice::zeros:
            return InitKind::zeros;
        case InitChoice::he_normal:
            return InitKind::he_normal;
        case InitChoice::automatic:
            break;
    }
    return model_kind == ModelKind::mlp ? InitKind::he_normal : InitKind::zeros;
}

std::vector<std::string> ExperimentConfig::problems() const {
    std::vector<std::string> out;
    auto check = [&](bool ok, const std::string& msg) {
        if (!ok) {
            out.push_back(msg);
        }
    };
    auto guarded = [&](auto&& fn) {
        try {
            fn();
        } catch (const Error& e) {
            out.emplace_back(e.what());
        }
    };

    const std::size_t n = participants_per_round;
    check(total_clients >= 1, "total_clients must be positive");
    check(n >= 1 && n <= total_clients, "participants_per_round must be in [1, total_clients]");
    check(rounds >= 1, "rounds must be positive");
    check(eval_every >= 1, "eval_every must be positive");
    check(std::isfinite(malicious_fraction) && malicious_fraction >= 0.0 && malicious_fraction < 1.0,
          "malicious_fraction must lie in [0, 1)");
    check(local_steps >= 1, "train.local_steps must be positive");
    guarded([&] { train_config().validate(); });

    const bool synthetic = data.source == DataSource::synthetic;
    if (synthetic) {
        check(data.num_samples >= 2, "data.num_samples must be at least 2");
        check(data.feature_dim >= 1, "data.feature_dim must be positive");
        check(data.num_classes >= 2, "data.num_classes must be at least 2");
        check(std::isfinite(data.class_separation) && data.class_separation >= 0.0,
              "data.class_separation must be non-negative");
        check(data.train_fraction > 0.0 && data.train_fraction < 1.0, "data.train_fraction must lie in (0, 1)");
    } else {
        check(!data.train_images.empty() && !data.train_labels.empty() && !data.test_images.empty() &&
                  !data.test_labels.empty(),
              "idx data needs train_images, train_labels, test_images and test_labels");
    }
    const std::size_t classes = data.num_classes;
    if (synthetic) {
        guarded([&] { model_spec(data.feature_dim, classes).validate(); });
        PartitionConfig part{total_clients, classes, bias_h, seed};
        guarded([&] { part.validate(); });
        guarded([&] { attack.validate(data.feature_dim, classes); });
    }

    const std::size_t f = num_malicious();
    const bool model_poisoning = attacks::replaces_training(attack.kind);
    if (model_poisoning && (attack.kind == AttackKind::trim || attack.kind == AttackKind::min_max)) {
        check(n >= f + 2, "trim and min_max attacks need at least 2 honest participants");
    }
    if (attack.kind != AttackKind::none) {
        check(n > f, "at least one honest participant is required");
    }

    const std::size_t ps = per_side();
    check(2 * ps + 1 <= n, "per_side is too large for participants_per_round");
    check(std::isfinite(defense.synthetic_fraction) && defense.synthetic_fraction >= 0.0,
          "defense.synthetic_fraction must be non-negative");
    if (defense.adabfl) {
        guarded([&] {
            FilterConfig fc = defense.filter;
            fc.total_rounds = rounds;
            fc.validate();
        });
        guarded([&] { defense.weights.validate(); });
        if (defense.weight_mode == WeightMode::threshold_free) {
            check(defense.weights.epsilon > 0.0, "threshold_free weights need epsilon > 0");
        }
    } else {
        switch (defense.baseline) {
            case BaselineKind::krum:
                check(n >= f + 3, "krum needs participants_per_round >= malicious count + 3");
                break;
            case BaselineKind::gau_trim:
            case BaselineKind::gau_median:
                check(n >= 2, "gaussian synthetic updates need at least 2 participants");
                break;
            case BaselineKind::foundation_mean:
            case BaselineKind::foundation_trim:
            case BaselineKind::foundation_median:
                check(synthetic_count() <= n, "synthetic count exceeds participants_per_round");
                break;
            default:
                break;
        }
    }
    return out;
}

void ExperimentConfig::validate() const {
    const auto issues = problems();
    if (issues.empty()) {
        return;
    }
    std::string msg = "invalid config:";
    for (const auto& s : issues) {
        msg += "\n  - " + s;
    }
    throw ConfigError(msg);
}

namespace config {

std::string_view to_string(DataSource s) {
    return s == DataSource::synthetic ? "synthetic" : "idx";
}

std::string_view to_string(InitChoice c) {
    switch (c) {
        case InitChoice::zeros:
            return "zeros";
        case InitChoice::he_normal:
            return "he_normal";
        case InitChoice::automatic:
            break;
    }
    return "auto";
}

void set_value(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
    const auto& table = fields();
    const auto it = table.find(key);
    if (it == table.end()) {
        throw ConfigError("unknown config key '" + std::string(key) + "'");
    }
    it->second.set(cfg, key, value);
}

std::vector<std::pair<std::string, std::string>> entries(const ExperimentConfig& cfg) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [key, field] : fields()) {
        out.emplace_back(key, field.get(cfg));
    }
    return out;
}

ExperimentConfig parse_json(std::string_view text) {
    json root;
    std::vector<std::string> issues;
    std::vector<std::set<std::string>> object_keys;
    const json::parser_callback_t track_keys = [&](int, json::parse_event_t event, json& parsed) {
        if (event == json::parse_event_t::object_start) {
            object_keys.emplace_back();
        } else if (event == json::parse_event_t::object_end) {
            object_keys.pop_back();
        } else if (event == json::parse_event_t::key && !object_keys.empty()) {
            const auto key = parsed.get<std::string>();
            if (!object_keys.back().insert(key).second) {
                issues.push_back("duplicate config key '" + key + "'");
            }
        }
        return true;
    };
    try {
        root = json::parse(text, track_keys);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    std::vector<std::pair<std::string, std::string>> flat;
    flatten(root, "", flat);

    ExperimentConfig cfg;
    std::map<std::string, int> seen;
    // defense.kind first so that defense.variant in the same file wins.
    std::stable_partition(flat.begin(), flat.end(), [](const auto& kv) { return kv.first == "defense.kind"; });
    for (const auto& [key, value] : flat) {
        if (++seen[key] > 1) {
            issues.push_back("duplicate config key '" + key + "'");
            continue;
        }
        try {
            set_value(cfg, key, value);
        } catch (const Error& e) {
            issues.emplace_back(e.what());
        }
    }
    if (!issues.empty()) {
        std::string msg = "invalid config:";
        for (const auto& s : issues) {
            msg += "\n  - " + s;
        }
        throw ConfigError(msg);
    }
    return cfg;
}

ExperimentConfig load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file '" + path.string() + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_json(ss.str());
}

std::string to_json(const ExperimentConfig& cfg) {
    json root = json::object();
    for (const auto& [key, value] : entries(cfg)) {
        // numbers and booleans keep their JSON type
        auto typed = json::parse(value, nullptr, false);
        if (typed.is_number() || typed.is_boolean()) {
            root[key] = typed;
        } else {
            root[key] = value;
        }
    }
    return root.dump(2);
}

}  // namespace config
}  // namespace bfl
