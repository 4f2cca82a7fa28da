#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "bflsim/data.hpp"
#include "bflsim/errors.hpp"

namespace bfl::data {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_be32(std::istream& in, const std::filesystem::path& path) {
    std::array<unsigned char, 4> b{};
    if (!in.read(reinterpret_cast<char*>(b.data()), 4)) {
        throw IoError("truncated IDX header in " + path.string());
    }
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

void write_be32(std::ostream& out, std::uint32_t v) {
    const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                                static_cast<char>(v)};
    out.write(b.data(), 4);
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    return in;
}

std::vector<std::uint8_t> read_payload(std::istream& in, std::size_t count, const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes(count);
    if (count > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(count))) {
        throw IoError("truncated IDX payload in " + path.string() + ": expected " + std::to_string(count) + " bytes");
    }
    return bytes;
}

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    return out;
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::size_t num_classes) {
    auto images = open_input(images_path);
    if (const auto magic = read_be32(images, images_path); magic != kImageMagic) {
        throw FormatError("bad IDX image magic in " + images_path.string());
    }
    const std::size_t n_images = read_be32(images, images_path);
    const std::size_t rows = read_be32(images, images_path);
    const std::size_t cols = read_be32(images, images_path);

    auto labels = open_input(labels_path);
    if (const auto magic = read_be32(labels, labels_path); magic != kLabelMagic) {
        throw FormatError("bad IDX label magic in " + labels_path.string());
    }
    const std::size_t n_labels = read_be32(labels, labels_path);
    if (n_images != n_labels) {
        throw ConsistencyError("IDX count mismatch: " + std::to_string(n_images) + " images vs " +
                               std::to_string(n_labels) + " labels");
    }

    const auto pixels = read_payload(images, n_images * rows * cols, images_path);
    const auto label_bytes = read_payload(labels, n_labels, labels_path);

    Dataset out;
    out.feature_dim = rows * cols;
    out.features.resize(pixels.size());
    std::transform(pixels.begin(), pixels.end(), out.features.begin(),
                   [](std::uint8_t p) { return static_cast<double>(p) / 255.0; });
    out.labels.assign(label_bytes.begin(), label_bytes.end());

    const std::size_t max_label = out.labels.empty() ? 0 : *std::max_element(out.labels.begin(), out.labels.end());
    out.num_classes = num_classes != 0 ? num_classes : max_label + 1;
    out.validate();
    return out;
}

void write_idx_images(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
                      std::span<const std::uint8_t> pixels) {
    if (rows == 0 || cols == 0 || pixels.size() % (rows * cols) != 0) {
        throw DimensionError("IDX image payload is not a whole number of " + std::to_string(rows) + "x" +
                             std::to_string(cols) + " images");
    }
    auto out = open_output(path);
    write_be32(out, kImageMagic);
    write_be32(out, static_cast<std::uint32_t>(pixels.size() / (rows * cols)));
    write_be32(out, static_cast<std::uint32_t>(rows));
    write_be32(out, static_cast<std::uint32_t>(cols));
    out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels) {
    auto out = open_output(path);
    write_be32(out, kLabelMagic);
    write_be32(out, static_cast<std::uint32_t>(labels.size()));
    out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

}  // namespace bfl::data
