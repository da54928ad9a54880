// IDX binary format (big-endian): magic 2051 for images (u8, dims N x H x W),
// magic 2049 for labels (u8, dims N). Pixels are scaled to [0,1] on load.
#pragma once

#include "catekit/tensor.hpp"

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace catekit {

namespace detail {
inline std::uint32_t read_be_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        throw std::runtime_error("truncated idx file: " + path);
    }
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}
inline void write_be_u32(std::ostream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}
}  // namespace detail

struct MnistImages {
    Tensor pixels;  // N x (H*W), values in [0,1]
    std::size_t image_height = 0;
    std::size_t image_width = 0;
};

constexpr std::uint32_t kIdxImageMagic = 2051;
constexpr std::uint32_t kIdxLabelMagic = 2049;

inline MnistImages load_idx_images(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open idx image file: " + path);
    const std::uint32_t magic = detail::read_be_u32(in, path);
    if (magic != kIdxImageMagic) {
        throw std::runtime_error("bad idx image magic " + std::to_string(magic) + " in " + path +
                                 " (expected " + std::to_string(kIdxImageMagic) + ")");
    }
    const std::uint32_t n = detail::read_be_u32(in, path);
    const std::uint32_t h = detail::read_be_u32(in, path);
    const std::uint32_t w = detail::read_be_u32(in, path);
    std::vector<unsigned char> bytes(static_cast<std::size_t>(n) * h * w);
    if (!in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
        throw std::runtime_error("truncated idx image payload: " + path);
    }
    MnistImages images;
    images.image_height = h;
    images.image_width = w;
    images.pixels = Tensor(Shape{n, static_cast<std::size_t>(h) * w});
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        images.pixels[i] = static_cast<double>(bytes[i]) / 255.0;
    }
    return images;
}

inline std::vector<int> load_idx_labels(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open idx label file: " + path);
    const std::uint32_t magic = detail::read_be_u32(in, path);
    if (magic != kIdxLabelMagic) {
        throw std::runtime_error("bad idx label magic " + std::to_string(magic) + " in " + path +
                                 " (expected " + std::to_string(kIdxLabelMagic) + ")");
    }
    const std::uint32_t n = detail::read_be_u32(in, path);
    std::vector<unsigned char> bytes(n);
    if (!in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
        throw std::runtime_error("truncated idx label payload: " + path);
    }
    return std::vector<int>(bytes.begin(), bytes.end());
}

// (images in [0,1] N x 784, labels N)
inline std::pair<MnistImages, std::vector<int>> load_mnist_idx(const std::string& images_path,
                                                               const std::string& labels_path) {
    auto images = load_idx_images(images_path);
    auto labels = load_idx_labels(labels_path);
    if (labels.size() != images.pixels.rows()) {
        throw std::runtime_error("idx image/label count mismatch: " +
                                 std::to_string(images.pixels.rows()) + " vs " +
                                 std::to_string(labels.size()));
    }
    return {std::move(images), std::move(labels)};
}

// Writers, used to build synthetic fixtures and for round-trip tests.
inline void write_idx_images(const std::string& path, const MnistImages& images) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write idx image file: " + path);
    detail::write_be_u32(out, kIdxImageMagic);
    detail::write_be_u32(out, static_cast<std::uint32_t>(images.pixels.rows()));
    detail::write_be_u32(out, static_cast<std::uint32_t>(images.image_height));
    detail::write_be_u32(out, static_cast<std::uint32_t>(images.image_width));
    std::vector<unsigned char> bytes(images.pixels.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        const double v = images.pixels[i] * 255.0;
        bytes[i] = static_cast<unsigned char>(v < 0.0 ? 0.0 : (v > 255.0 ? 255.0 : v + 0.5));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline void write_idx_labels(const std::string& path, const std::vector<int>& labels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write idx label file: " + path);
    detail::write_be_u32(out, kIdxLabelMagic);
    detail::write_be_u32(out, static_cast<std::uint32_t>(labels.size()));
    std::vector<unsigned char> bytes;
    bytes.reserve(labels.size());
    for (int l : labels) bytes.push_back(static_cast<unsigned char>(l));
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace catekit
