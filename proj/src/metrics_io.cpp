#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "bflsim/errors.hpp"
#include "bflsim/sim.hpp"

namespace bfl::metrics {

namespace {

using json = nlohmann::json;

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// One cell per field, empty when the value is absent.
std::vector<std::string> cells(const RoundMetrics& m) {
    auto opt = [](const auto& o) { return o ? fmt(static_cast<double>(*o)) : std::string(); };
    auto count = [](const std::optional<std::size_t>& o) { return o ? std::to_string(*o) : std::string(); };
    std::vector<std::string> out;
    out.push_back(std::to_string(m.round));
    out.push_back(opt(m.test_error));
    out.push_back(fmt(m.train_loss));
    out.push_back(count(m.benign_set_size));
    out.push_back(count(m.malicious_accepted));
    for (int k = 0; k < 3; ++k) {
        out.push_back(m.betas ? fmt((*m.betas)[k]) : std::string());
    }
    out.push_back(opt(m.p1));
    out.push_back(opt(m.p2));
    out.push_back(fmt(m.grad_norm_estimate));
    out.push_back(fmt(m.agg_error_norm));
    out.push_back(opt(m.backdoor_success));
    return out;
}

double parse_real(const std::string& s, const std::string& field) {
    if (s == "nan") {
        return std::nan("");
    }
    if (s == "inf") {
        return HUGE_VAL;
    }
    if (s == "-inf") {
        return -HUGE_VAL;
    }
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != s.size() || s.empty()) {
        throw FormatError("metrics field '" + field + "': bad number '" + s + "'");
    }
    return v;
}

std::size_t parse_count(const std::string& s, const std::string& field) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != s.size() || s.empty()) {
        throw FormatError("metrics field '" + field + "': bad integer '" + s + "'");
    }
    return static_cast<std::size_t>(v);
}

RoundMetrics from_cells(const std::vector<std::string>& c) {
    const auto& names = field_names();
    if (c.size() != names.size()) {
        throw FormatError("metrics record has " + std::to_string(c.size()) + " fields, expected " +
                          std::to_string(names.size()));
    }
    auto real = [&](std::size_t i) { return parse_real(c[i], names[i]); };
    auto opt_real = [&](std::size_t i) -> std::optional<double> {
        if (c[i].empty()) {
            return std::nullopt;
        }
        return real(i);
    };
    auto opt_count = [&](std::size_t i) -> std::optional<std::size_t> {
        if (c[i].empty()) {
            return std::nullopt;
        }
        return parse_count(c[i], names[i]);
    };
    RoundMetrics m;
    m.round = parse_count(c[0], names[0]);
    m.test_error = opt_real(1);
    m.train_loss = real(2);
    m.benign_set_size = opt_count(3);
    m.malicious_accepted = opt_count(4);
    if (!c[5].empty() || !c[6].empty() || !c[7].empty()) {
        m.betas = std::array<double, 3>{real(5), real(6), real(7)};
    }
    m.p1 = opt_real(8);
    m.p2 = opt_real(9);
    m.grad_norm_estimate = real(10);
    m.agg_error_norm = real(11);
    m.backdoor_success = opt_real(12);
    return m;
}

bool is_real_field(std::size_t i) {
    return i != 0 && i != 3 && i != 4;
}

}  // namespace

MetricsFormat parse_format(std::string_view name) {
    if (name == "csv") {
        return MetricsFormat::csv;
    }
    if (name == "jsonl" || name == "json_lines") {
        return MetricsFormat::jsonl;
    }
    throw ConfigError("unknown metrics format '" + std::string(name) + "'");
}

const std::vector<std::string>& field_names() {
    static const std::vector<std::string> names{
        "round", "test_error", "train_loss",         "benign_set_size", "malicious_accepted",
        "beta1", "beta2",      "beta3",              "p1",              "p2",
        "grad_norm_estimate",  "agg_error_norm",     "backdoor_success",
    };
    return names;
}

void write_metrics(const std::vector<RoundMetrics>& history, std::ostream& out, MetricsFormat format) {
    const auto& names = field_names();
    if (format == MetricsFormat::csv) {
        for (std::size_t i = 0; i < names.size(); ++i) {
            out << (i ? "," : "") << names[i];
        }
        out << '\n';
        for (const auto& m : history) {
            const auto c = cells(m);
            for (std::size_t i = 0; i < c.size(); ++i) {
                out << (i ? "," : "") << c[i];
            }
            out << '\n';
        }
        return;
    }
    for (const auto& m : history) {
        const auto c = cells(m);
        out << '{';
        for (std::size_t i = 0; i < c.size(); ++i) {
            out << (i ? "," : "") << '"' << names[i] << "\":";
            if (c[i].empty()) {
                out << "null";
            } else if (is_real_field(i) && !std::isfinite(parse_real(c[i], names[i]))) {
                out << '"' << c[i] << '"';
            } else {
                out << c[i];
            }
        }
        out << "}\n";
    }
}

void write_metrics(const std::vector<RoundMetrics>& history, const std::filesystem::path& path, MetricsFormat format) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    write_metrics(history, out, format);
    out.flush();
    if (!out) {
        throw IoError("failed writing metrics to '" + path.string() + "'");
    }
}

std::vector<RoundMetrics> read_metrics(std::istream& in, MetricsFormat format) {
    const auto& names = field_names();
    std::vector<RoundMetrics> out;
    std::string line;
    if (format == MetricsFormat::csv) {
        if (!std::getline(in, line)) {
            throw FormatError("metrics CSV has no header");
        }
        std::string expected;
        for (std::size_t i = 0; i < names.size(); ++i) {
            expected += (i ? "," : "") + names[i];
        }
        if (line != expected) {
            throw FormatError("metrics CSV header mismatch");
        }
        while (std::getline(in, line)) {
            if (line.empty()) {
                continue;
            }
            std::vector<std::string> c;
            std::string cell;
            std::istringstream ss(line);
            while (std::getline(ss, cell, ',')) {
                c.push_back(cell);
            }
            if (!line.empty() && line.back() == ',') {
                c.emplace_back();
            }
            out.push_back(from_cells(c));
        }
        return out;
    }
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw FormatError(std::string("metrics JSON line is malformed: ") + e.what());
        }
        std::vector<std::string> c;
        for (const auto& name : names) {
            if (!obj.contains(name)) {
                throw FormatError("metrics JSON line lacks field '" + name + "'");
            }
            const auto& v = obj[name];
            if (v.is_null()) {
                c.emplace_back();
            } else if (v.is_string()) {
                c.push_back(v.get<std::string>());
            } else if (v.is_number_unsigned() || v.is_number_integer()) {
                c.push_back(v.dump());
            } else if (v.is_number()) {
                c.push_back(fmt(v.get<double>()));
            } else {
                throw FormatError("metrics field '" + name + "' has an unexpected type");
            }
        }
        out.push_back(from_cells(c));
    }
    return out;
}

std::vector<RoundMetrics> read_metrics(const std::filesystem::path& path, MetricsFormat format) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "' for reading");
    }
    return read_metrics(in, format);
}

}  // namespace bfl::metrics
