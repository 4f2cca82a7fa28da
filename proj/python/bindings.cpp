#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "bflsim/aggregators.hpp"
#include "bflsim/attacks.hpp"
#include "bflsim/config.hpp"
#include "bflsim/defense.hpp"
#include "bflsim/errors.hpp"
#include "bflsim/params.hpp"
#include "bflsim/sim.hpp"

namespace py = pybind11;
using bfl::ParamVector;
using Set = std::vector<ParamVector>;

namespace {

py::object optional_value(const std::optional<double>& v) {
    return v ? py::cast(*v) : py::none();
}

py::dict metrics_dict(const bfl::RoundMetrics& m) {
    py::dict d;
    d["round"] = m.round;
    d["test_error"] = optional_value(m.test_error);
    d["train_loss"] = m.train_loss;
    d["benign_set_size"] = m.benign_set_size ? py::cast(*m.benign_set_size) : py::none();
    d["malicious_accepted"] = m.malicious_accepted ? py::cast(*m.malicious_accepted) : py::none();
    d["betas"] = m.betas ? py::cast(*m.betas) : py::none();
    d["p1"] = optional_value(m.p1);
    d["p2"] = optional_value(m.p2);
    d["grad_norm_estimate"] = m.grad_norm_estimate;
    d["agg_error_norm"] = m.agg_error_norm;
    d["backdoor_success"] = optional_value(m.backdoor_success);
    return d;
}

py::list history_list(const std::vector<bfl::RoundMetrics>& h) {
    py::list out;
    for (const auto& m : h) {
        out.append(metrics_dict(m));
    }
    return out;
}

std::string value_text(const py::handle& v) {
    if (py::isinstance<py::bool_>(v)) {
        return v.cast<bool>() ? "true" : "false";
    }
    if (py::isinstance<py::float_>(v)) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", v.cast<double>());
        return buf;
    }
    return py::str(v).cast<std::string>();
}

bfl::ExperimentConfig config_from(const py::dict& values) {
    bfl::ExperimentConfig cfg;
    for (const auto& [k, v] : values) {
        bfl::config::set_value(cfg, k.cast<std::string>(), value_text(v));
    }
    return cfg;
}

bfl::AttackSpec attack_spec(const std::string& kind, double gaussian_variance, double trim_reach, double scale_factor,
                            std::uint64_t seed) {
    bfl::AttackSpec spec;
    spec.kind = bfl::attacks::parse_attack_kind(kind);
    spec.gaussian_variance = gaussian_variance;
    spec.trim_reach = trim_reach;
    spec.scale_factor = scale_factor;
    spec.seed = seed;
    return spec;
}

}  // namespace

PYBIND11_MODULE(_bflsim, m) {
    m.doc() = "Byzantine-robust federated learning simulator";

    auto base = py::register_exception<bfl::Error>(m, "BflError", PyExc_RuntimeError);
    py::register_exception<bfl::ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<bfl::DefenseConfigError>(m, "DefenseConfigError", m.attr("ConfigError").ptr());
    py::register_exception<bfl::DimensionError>(m, "DimensionError", base.ptr());
    py::register_exception<bfl::InsufficientPopulationError>(m, "InsufficientPopulationError", base.ptr());
    py::register_exception<bfl::NumericError>(m, "NumericError", base.ptr());
    py::register_exception<bfl::StageError>(m, "StageError", base.ptr());

    m.def("mean", [](const Set& s) { return bfl::params::mean(s); });
    m.def("coordinate_trimmed_mean",
          [](const Set& s, std::size_t per_side) { return bfl::params::coordinate_trimmed_mean(s, {per_side}); },
          py::arg("updates"), py::arg("per_side"));
    m.def("coordinate_median", [](const Set& s) { return bfl::params::coordinate_median(s); });
    m.def("coordinate_extremes", [](const Set& s) { return bfl::params::coordinate_extremes(s); });
    m.def("winsorize", [](const Set& s, std::size_t per_side) { return bfl::params::winsorize(s, {per_side}); },
          py::arg("updates"), py::arg("per_side"));

    m.def("fedavg", [](const Set& s) { return bfl::agg::fedavg(s); });
    m.def("krum_select", [](const Set& s, std::size_t f) { return bfl::agg::krum_select(s, f); },
          py::arg("updates"), py::arg("num_malicious"));
    m.def(
        "aggregate_baseline",
        [](const std::string& kind, const Set& s, std::size_t per_side, std::size_t synthetic_count,
           std::uint64_t seed, std::uint64_t round) {
            bfl::BaselineRule rule{bfl::agg::parse_baseline_kind(kind), {per_side}, synthetic_count, seed};
            return bfl::agg::aggregate_baseline(rule, s, round);
        },
        py::arg("kind"), py::arg("updates"), py::arg("per_side") = 0, py::arg("synthetic_count") = 0,
        py::arg("seed") = 0, py::arg("round") = 1);

    py::class_<bfl::AggWeights>(m, "AggWeights")
        .def(py::init<>())
        .def_readwrite("beta1", &bfl::AggWeights::beta1)
        .def_readwrite("beta2", &bfl::AggWeights::beta2)
        .def_readwrite("beta3", &bfl::AggWeights::beta3)
        .def_readwrite("beta1_min", &bfl::AggWeights::beta1_min)
        .def_readwrite("beta2_max", &bfl::AggWeights::beta2_max)
        .def_readwrite("beta3_min", &bfl::AggWeights::beta3_min)
        .def_readwrite("beta1_base", &bfl::AggWeights::beta1_base)
        .def_readwrite("delta_high", &bfl::AggWeights::delta_high)
        .def_readwrite("delta_low", &bfl::AggWeights::delta_low)
        .def_readwrite("rho1", &bfl::AggWeights::rho1)
        .def_readwrite("rho2", &bfl::AggWeights::rho2)
        .def_readwrite("kappa_w", &bfl::AggWeights::kappa_w)
        .def_readwrite("alpha", &bfl::AggWeights::alpha)
        .def_readwrite("epsilon", &bfl::AggWeights::epsilon)
        .def_readwrite("p2_branch_ge", &bfl::AggWeights::p2_branch_ge)
        .def("betas", &bfl::AggWeights::betas);

    m.def(
        "filter_benign",
        [](const Set& s, double gamma, double kappa, std::size_t total_rounds, std::uint64_t t) {
            bfl::FilterConfig cfg;
            cfg.gamma = gamma;
            cfg.kappa = kappa;
            cfg.total_rounds = total_rounds;
            const auto r = bfl::adabfl::filter_benign(s, cfg, t);
            return py::make_tuple(r.indices, r.fell_back);
        },
        py::arg("updates"), py::arg("gamma") = 0.8, py::arg("kappa") = 1.0, py::arg("total_rounds") = 1,
        py::arg("round") = 1);
    m.def(
        "clip_and_signal",
        [](const Set& s, std::size_t per_side) {
            const auto r = bfl::adabfl::clip_and_signal(s, {per_side});
            return py::make_tuple(r.theta, r.p1);
        },
        py::arg("benign"), py::arg("per_side"));
    m.def("trust_scores", [](const Set& s) { return bfl::adabfl::trust_scores(s); });
    m.def("select_best", [](const std::vector<double>& v) { return bfl::adabfl::select_best(v); });
    m.def(
        "derive_fused",
        [](const Set& s, std::size_t i_star, std::size_t m_copies, std::size_t per_side) {
            const auto r = bfl::adabfl::derive_fused(s, i_star, m_copies, {per_side});
            return py::make_tuple(r.theta, r.p2);
        },
        py::arg("benign"), py::arg("i_star"), py::arg("m"), py::arg("per_side"));
    m.def(
        "update_weights",
        [](const std::string& mode, const bfl::AggWeights& w, double p1, double p2) {
            return bfl::adabfl::update_weights(bfl::adabfl::parse_weight_mode(mode), w, {p1, p2});
        },
        py::arg("mode"), py::arg("weights"), py::arg("p1"), py::arg("p2"));
    m.def(
        "threshold_free_betas",
        [](double p1, double p2, double eps) { return bfl::adabfl::threshold_free_betas({p1, p2}, eps); },
        py::arg("p1"), py::arg("p2"), py::arg("epsilon") = 1e-8);
    m.def(
        "defend",
        [](const Set& s, const std::string& topology, std::size_t m_synthetic, std::size_t per_side,
           const std::string& weight_mode, const bfl::AggWeights& w, double gamma, double kappa,
           std::size_t total_rounds, std::uint64_t t) {
            bfl::DefenseVariant v{bfl::adabfl::parse_topology(topology), m_synthetic, {per_side},
                                  bfl::adabfl::parse_weight_mode(weight_mode)};
            bfl::FilterConfig f;
            f.gamma = gamma;
            f.kappa = kappa;
            f.total_rounds = total_rounds;
            const auto out = bfl::adabfl::defend(s, v, f, w, t);
            py::dict d;
            d["global"] = out.global;
            d["weights"] = out.weights;
            d["p1"] = out.signals.p1;
            d["p2"] = out.signals.p2;
            d["benign"] = out.benign.indices;
            d["fell_back"] = out.benign.fell_back;
            d["best"] = out.best;
            return d;
        },
        py::arg("updates"), py::arg("topology") = "parallel_3", py::arg("m") = 0, py::arg("per_side") = 0,
        py::arg("weight_mode") = "thresholded", py::arg("weights") = bfl::AggWeights{}, py::arg("gamma") = 0.8,
        py::arg("kappa") = 1.0, py::arg("total_rounds") = 1, py::arg("round") = 1);

    m.def(
        "craft_attack",
        [](const std::string& kind, std::size_t num_malicious, const Set& benign, const ParamVector& previous_global,
           std::uint64_t round, double gaussian_variance, double trim_reach, double scale_factor, std::uint64_t seed) {
            const auto spec = attack_spec(kind, gaussian_variance, trim_reach, scale_factor, seed);
            const bfl::AttackContext ctx{benign, previous_global, round};
            return bfl::attacks::craft(num_malicious, ctx, spec);
        },
        py::arg("kind"), py::arg("num_malicious"), py::arg("benign"), py::arg("previous_global"),
        py::arg("round") = 1, py::arg("gaussian_variance") = 200.0, py::arg("trim_reach") = 0.5,
        py::arg("scale_factor") = 10.0, py::arg("seed") = 0);

    py::class_<bfl::ExperimentConfig>(m, "ExperimentConfig")
        .def(py::init<>())
        .def(py::init(&config_from), py::arg("values"))
        .def_static("from_json", [](const std::string& text) { return bfl::config::parse_json(text); })
        .def_static("load", [](const std::string& path) { return bfl::config::load_file(path); })
        .def("to_json", [](const bfl::ExperimentConfig& c) { return bfl::config::to_json(c); })
        .def("set",
             [](bfl::ExperimentConfig& c, const std::string& key, const py::object& value) {
                 bfl::config::set_value(c, key, value_text(value));
             })
        .def("entries",
             [](const bfl::ExperimentConfig& c) {
                 py::dict d;
                 for (const auto& [k, v] : bfl::config::entries(c)) {
                     d[py::str(k)] = v;
                 }
                 return d;
             })
        .def("problems", &bfl::ExperimentConfig::problems)
        .def("validate", &bfl::ExperimentConfig::validate);

    m.def(
        "run_experiment",
        [](const bfl::ExperimentConfig& cfg, std::size_t workers) {
            std::vector<bfl::RoundMetrics> h;
            {
                py::gil_scoped_release release;
                h = bfl::run_experiment(cfg, workers);
            }
            return history_list(h);
        },
        py::arg("config"), py::arg("workers") = 1);
    m.def(
        "run_sweep",
        [](const bfl::ExperimentConfig& cfg, const std::string& axis, const std::vector<std::string>& values,
           const std::vector<std::string>& defenses, std::size_t workers) {
            std::vector<bfl::SweepRun> runs;
            {
                py::gil_scoped_release release;
                runs = bfl::sim::run_sweep(cfg, bfl::sim::parse_axis(axis), values, defenses, workers);
            }
            py::list out;
            for (const auto& r : runs) {
                py::dict d;
                d["axis_value"] = r.axis_value;
                d["defense"] = r.defense;
                d["attack"] = r.attack;
                d["history"] = history_list(r.history);
                out.append(d);
            }
            return out;
        },
        py::arg("config"), py::arg("axis"), py::arg("values"), py::arg("defenses") = std::vector<std::string>{},
        py::arg("workers") = 1);
}
