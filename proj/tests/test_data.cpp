#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "bflsim/data.hpp"
#include "bflsim/errors.hpp"
#include "bflsim/model.hpp"

namespace fs = std::filesystem;
using bfl::Dataset;
using bfl::PartitionConfig;
namespace data = bfl::data;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "bflsim_test_data";
    fs::create_directories(dir);
    return dir / name;
}

// Full-batch gradient descent to (near) convergence; returns train error.
double fit_logistic(const Dataset& d, std::size_t iters) {
    bfl::ModelSpec spec{bfl::ModelKind::logistic, d.feature_dim, d.num_classes};
    bfl::ParamVector p(spec.param_dim(), 0.0);
    for (std::size_t i = 0; i < iters; ++i) {
        const auto lg = bfl::model::loss_and_gradient(spec, p, d);
        for (std::size_t k = 0; k < p.size(); ++k) {
            p[k] -= 0.5 * lg.gradient[k];
        }
    }
    return bfl::model::test_error(spec, p, d);
}

// Upper tail of the chi-square distribution (Wilson-Hilferty).
double chi_square_p(double x, double dof) {
    const double a = 2.0 / (9.0 * dof);
    const double z = (std::cbrt(x / dof) - (1.0 - a)) / std::sqrt(a);
    return 0.5 * std::erfc(z / std::sqrt(2.0));
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("generate_synthetic is deterministic and shaped") {
    const auto a = data::generate_synthetic(100, 2, 2, 10.0, 7);
    const auto b = data::generate_synthetic(100, 2, 2, 10.0, 7);
    CHECK(a.features == b.features);
    CHECK(a.labels == b.labels);
    const auto c = data::generate_synthetic(100, 2, 2, 10.0, 8);
    CHECK(a.features != c.features);

    const auto s = data::generate_synthetic(10, 3, 2, 1.0, 1);
    CHECK(s.size() == 10);
    CHECK(s.feature_dim == 3);
    CHECK(s.features.size() == 30);
    CHECK(std::all_of(s.labels.begin(), s.labels.end(), [](auto y) { return y < 2; }));
    CHECK(std::count(s.labels.begin(), s.labels.end(), 0u) == 5);

    CHECK_THROWS_AS(data::generate_synthetic(0, 3, 2, 1.0, 1), bfl::ConfigError);
    CHECK_THROWS_AS(data::generate_synthetic(10, 0, 2, 1.0, 1), bfl::ConfigError);
    CHECK_THROWS_AS(data::generate_synthetic(10, 3, 0, 1.0, 1), bfl::ConfigError);
    CHECK_THROWS_AS(data::generate_synthetic(10, 3, 2, -1.0, 1), bfl::ConfigError);
}

TEST_CASE("zero class separation leaves a linear model at chance") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto d = data::generate_synthetic(2000, 2, 2, 0.0, seed);
        CHECK(fit_logistic(d, 300) == doctest::Approx(0.5).epsilon(0.1));
    }
}

TEST_CASE("well separated classes are learnable") {
    const auto d = data::generate_synthetic(2000, 5, 3, 10.0, 3);
    CHECK(fit_logistic(d, 300) <= 0.02);
}

TEST_CASE("split is a seeded partition of the rows") {
    const auto d = data::generate_synthetic(101, 2, 3, 4.0, 2);
    const auto s = data::split(d, 0.8, 5);
    CHECK(s.train.size() == 81);
    CHECK(s.test.size() == 20);
    CHECK_THROWS_AS(data::split(d, 1.5, 5), bfl::ConfigError);
}

TEST_CASE("idx round trip is bit exact") {
    const std::size_t rows = 3, cols = 4, count = 5;
    std::vector<std::uint8_t> pixels(rows * cols * count);
    std::iota(pixels.begin(), pixels.end(), std::uint8_t{0});
    pixels[0] = 0;
    pixels[1] = 255;
    const std::vector<std::uint8_t> labels{0, 1, 2, 9, 4};
    const auto ip = scratch("rt-images.idx");
    const auto lp = scratch("rt-labels.idx");
    data::write_idx_images(ip, rows, cols, pixels);
    data::write_idx_labels(lp, labels);

    const auto d = data::load_idx(ip, lp);
    REQUIRE(d.size() == count);
    CHECK(d.feature_dim == rows * cols);
    CHECK(d.num_classes == 10);
    CHECK(d.features[0] == 0.0);
    CHECK(d.features[1] == 1.0);
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        CHECK(d.features[i] == static_cast<double>(pixels[i]) / 255.0);
    }
    for (std::size_t i = 0; i < count; ++i) {
        CHECK(d.labels[i] == labels[i]);
    }

    // Re-encode and compare bytes.
    std::vector<std::uint8_t> back(d.features.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        back[i] = static_cast<std::uint8_t>(std::lround(d.features[i] * 255.0));
    }
    const auto ip2 = scratch("rt-images-2.idx");
    data::write_idx_images(ip2, rows, cols, back);
    CHECK(read_bytes(ip) == read_bytes(ip2));
}

TEST_CASE("idx header errors") {
    const auto ip = scratch("e-images.idx");
    const auto lp = scratch("e-labels.idx");
    std::vector<std::uint8_t> pixels(6 * 4, 7);
    data::write_idx_images(ip, 2, 2, pixels);
    data::write_idx_labels(lp, std::vector<std::uint8_t>{0, 1, 0, 1, 0});
    CHECK_THROWS_AS(data::load_idx(ip, lp), bfl::ConsistencyError);

    // bad magic
    auto bytes = read_bytes(ip);
    bytes[3] = 0x02;
    const auto bad = scratch("bad-magic.idx");
    write_bytes(bad, bytes);
    data::write_idx_labels(lp, std::vector<std::uint8_t>{0, 1, 0, 1, 0, 1});
    CHECK_THROWS_AS(data::load_idx(bad, lp), bfl::FormatError);

    // truncated pixel payload
    bytes = read_bytes(ip);
    bytes.resize(bytes.size() - 3);
    const auto cut = scratch("truncated.idx");
    write_bytes(cut, bytes);
    CHECK_THROWS_AS(data::load_idx(cut, lp), bfl::IoError);

    CHECK_THROWS_AS(data::load_idx(scratch("missing.idx"), lp), bfl::IoError);
}

TEST_CASE("idx pair with mnist training dimensions") {
    const std::size_t count = 60000;
    std::vector<std::uint8_t> pixels(count * 28 * 28);
    std::mt19937_64 g(3);
    for (auto& p : pixels) {
        p = static_cast<std::uint8_t>(g());
    }
    std::vector<std::uint8_t> labels(count);
    for (std::size_t i = 0; i < count; ++i) {
        labels[i] = static_cast<std::uint8_t>(i % 10);
    }
    const auto ip = scratch("train-images-idx3-ubyte");
    const auto lp = scratch("train-labels-idx1-ubyte");
    data::write_idx_images(ip, 28, 28, pixels);
    data::write_idx_labels(lp, labels);
    const auto d = data::load_idx(ip, lp);
    CHECK(d.size() == 60000);
    CHECK(d.feature_dim == 784);
    CHECK(d.num_classes == 10);
    CHECK(std::all_of(d.labels.begin(), d.labels.end(), [](auto y) { return y < 10; }));
    CHECK(std::all_of(d.features.begin(), d.features.end(), [](double v) { return v >= 0.0 && v <= 1.0; }));
    fs::remove(ip);
    fs::remove(lp);
}

TEST_CASE("partition with h = 1 keeps every client on its cluster label") {
    const auto d = data::generate_synthetic(2000, 2, 5, 3.0, 4);
    const PartitionConfig cfg{12, 5, 1.0, 9};
    const auto parts = data::partition_noniid(d, cfg);
    REQUIRE(parts.size() == 12);
    for (std::size_t c = 0; c < parts.size(); ++c) {
        for (auto y : parts[c].labels) {
            CHECK(y == c % 5);
        }
    }
}

TEST_CASE("partition is a partition of the sample indices") {
    for (double h : {0.2, 0.5, 0.9}) {
        const auto d = data::generate_synthetic(1500, 3, 5, 3.0, 6);
        const auto idx = data::partition_indices(d, PartitionConfig{7, 5, h, 2});
        std::vector<std::size_t> all;
        for (const auto& v : idx) {
            all.insert(all.end(), v.begin(), v.end());
        }
        std::sort(all.begin(), all.end());
        std::vector<std::size_t> expected(d.size());
        std::iota(expected.begin(), expected.end(), std::size_t{0});
        CHECK(all == expected);

        const auto parts = data::partition_noniid(d, PartitionConfig{7, 5, h, 2});
        std::size_t total = 0;
        for (const auto& p : parts) {
            total += p.size();
        }
        CHECK(total == d.size());
        CHECK(data::partition_indices(d, PartitionConfig{7, 5, h, 2}) == idx);
    }
}

TEST_CASE("partition at h = 1/M is label-uniform across clients") {
    const std::size_t M = 10, N = 20;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto d = data::generate_synthetic(10000, 2, M, 1.0, seed);
        const auto parts = data::partition_noniid(d, PartitionConfig{N, M, 1.0 / M, seed});
        // Independence test on the client x label contingency table.
        std::vector<std::vector<double>> table(N, std::vector<double>(M, 0.0));
        std::vector<double> row(N, 0.0), col(M, 0.0);
        for (std::size_t c = 0; c < N; ++c) {
            for (auto y : parts[c].labels) {
                table[c][y] += 1;
                row[c] += 1;
                col[y] += 1;
            }
        }
        const double total = static_cast<double>(d.size());
        double stat = 0.0;
        for (std::size_t c = 0; c < N; ++c) {
            for (std::size_t y = 0; y < M; ++y) {
                const double e = row[c] * col[y] / total;
                stat += (table[c][y] - e) * (table[c][y] - e) / e;
            }
        }
        CHECK(chi_square_p(stat, static_cast<double>((N - 1) * (M - 1))) > 0.01);
    }
}

TEST_CASE("partition rejects invalid configs") {
    const auto d = data::generate_synthetic(200, 2, 5, 3.0, 4);
    CHECK_THROWS_AS(data::partition_noniid(d, PartitionConfig{4, 5, 0.5, 1}), bfl::ConfigError);
    CHECK_THROWS_AS(data::partition_noniid(d, PartitionConfig{10, 5, 0.1, 1}), bfl::ConfigError);
    CHECK_THROWS_AS(data::partition_noniid(d, PartitionConfig{10, 5, 1.1, 1}), bfl::ConfigError);
}

TEST_CASE("flip_labels") {
    Dataset d;
    d.feature_dim = 1;
    d.num_classes = 10;
    d.features = {0.5, 1.5, 2.5};
    d.labels = {0, 9, 3};
    const auto f = data::flip_labels(d, 10);
    CHECK(f.labels == std::vector<std::uint32_t>{9, 0, 6});
    CHECK(f.features == d.features);
    for (std::size_t m = 1; m <= 12; ++m) {
        Dataset e;
        e.feature_dim = 1;
        e.num_classes = m;
        for (std::uint32_t y = 0; y < m; ++y) {
            e.labels.push_back(y);
            e.features.push_back(y);
        }
        CHECK(data::flip_labels(data::flip_labels(e, m), m).labels == e.labels);
    }
    d.labels = {0, 10, 3};
    d.num_classes = 11;
    CHECK_THROWS_AS(data::flip_labels(d, 10), bfl::ConsistencyError);
}
