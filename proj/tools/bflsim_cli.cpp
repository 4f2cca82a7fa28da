#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bflsim/config.hpp"
#include "bflsim/errors.hpp"
#include "bflsim/sim.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b != std::string::npos) {
            out.push_back(item.substr(b, e - b + 1));
        }
    }
    return out;
}

std::string extension(bfl::MetricsFormat f) {
    return f == bfl::MetricsFormat::csv ? ".csv" : ".jsonl";
}

std::string format_error(const std::optional<double>& v) {
    if (!v) {
        return "";
    }
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", *v);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw bfl::IoError("cannot open '" + path.string() + "' for writing");
    }
    out << text;
}

std::string safe_name(std::string s) {
    for (char& c : s) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '.' && c != '-' && c != '_') {
            c = '_';
        }
    }
    return s;
}

int cmd_validate(const std::string& config_path) {
    const auto cfg = bfl::config::load_file(config_path);
    cfg.validate();
    std::cout << "config ok: " << cfg.defense.name() << " vs " << bfl::attacks::to_string(cfg.attack.kind) << ", "
              << cfg.num_malicious() << " of " << cfg.participants_per_round << " participants malicious, per_side "
              << cfg.per_side() << ", " << cfg.rounds << " rounds\n";
    return kOk;
}

int cmd_run(const std::string& config_path, const std::string& out_dir, const std::string& format_name,
            std::size_t workers) {
    const auto format = bfl::metrics::parse_format(format_name);
    const auto cfg = bfl::config::load_file(config_path);
    cfg.validate();
    fs::create_directories(out_dir);
    const auto history = bfl::run_experiment(cfg, workers);
    bfl::metrics::write_metrics(history, fs::path(out_dir) / ("metrics" + extension(format)), format);
    write_text(fs::path(out_dir) / "config.json", bfl::config::to_json(cfg) + "\n");
    std::cout << "final test error " << format_error(bfl::sim::final_test_error(history)) << "\n";
    return kOk;
}

int cmd_sweep(const std::string& config_path, const std::string& axis_name, const std::string& values,
              const std::string& defenses, const std::string& out_dir, const std::string& format_name,
              std::size_t workers) {
    const auto format = bfl::metrics::parse_format(format_name);
    const auto axis = bfl::sim::parse_axis(axis_name);
    const auto base = bfl::config::load_file(config_path);
    const auto runs = bfl::sim::run_sweep(base, axis, split_list(values), split_list(defenses), workers);
    fs::create_directories(out_dir);

    std::ostringstream summary;
    summary << "axis,axis_value,defense,attack,final_test_error,file\n";
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const auto& r = runs[i];
        const std::string file = std::to_string(i) + "_" + safe_name(r.axis_value) + "_" + r.defense + "_" +
                                 r.attack + extension(format);
        bfl::metrics::write_metrics(r.history, fs::path(out_dir) / file, format);
        summary << axis_name << "," << r.axis_value << "," << r.defense << "," << r.attack << ","
                << format_error(bfl::sim::final_test_error(r.history)) << "," << file << "\n";
    }
    write_text(fs::path(out_dir) / "summary.csv", summary.str());
    std::cout << summary.str();
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Byzantine-robust federated learning simulator"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::string format = "csv";
    std::size_t workers = 1;
    std::string axis;
    std::string values;
    std::string defenses;

    auto* run = app.add_subcommand("run", "Run one experiment");
    run->add_option("--config", config_path, "Config file (JSON)")->required();
    run->add_option("--out", out_dir, "Output directory")->required();
    run->add_option("--format", format, "csv or jsonl")->check(CLI::IsMember({"csv", "jsonl"}));
    run->add_option("--workers", workers, "Threads for client training")->check(CLI::PositiveNumber);

    auto* sweep = app.add_subcommand("sweep", "Run one experiment per axis value");
    sweep->add_option("--config", config_path, "Base config file (JSON)")->required();
    sweep->add_option("--axis", axis, "malicious_fraction, bias_h, total_clients, synthetic_fraction, attack, defense")
        ->required();
    sweep->add_option("--values", values, "Comma separated axis values")->required();
    sweep->add_option("--defenses", defenses, "Comma separated defenses to cross with the values");
    sweep->add_option("--out", out_dir, "Output directory")->required();
    sweep->add_option("--format", format, "csv or jsonl")->check(CLI::IsMember({"csv", "jsonl"}));
    sweep->add_option("--workers", workers, "Threads for client training")->check(CLI::PositiveNumber);

    auto* validate = app.add_subcommand("validate", "Parse and check a config");
    validate->add_option("--config", config_path, "Config file (JSON)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfigError;
    }

    try {
        if (*validate) {
            return cmd_validate(config_path);
        }
        if (*run) {
            return cmd_run(config_path, out_dir, format, workers);
        }
        return cmd_sweep(config_path, axis, values, defenses, out_dir, format, workers);
    } catch (const bfl::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
}
