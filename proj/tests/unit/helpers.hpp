#pragma once

#include "ablatron/network.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

namespace testing {

inline ablatron::Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, float lo = -1.0f,
                                      float hi = 1.0f)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> d(lo, hi);
    ablatron::Matrix m(rows, cols);
    for (float& v : m.values) v = d(rng);
    return m;
}

// Small labelled set of `n` samples drawn from `classes` Gaussian blobs.
inline ablatron::Samples blobs(std::size_t n, ablatron::Shape shape, std::size_t classes, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> noise(0.0f, 0.3f);
    std::vector<std::vector<float>> centres(classes, std::vector<float>(shape.size()));
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (auto& c : centres) {
        for (float& v : c) v = u(rng);
    }
    ablatron::Samples s;
    s.shape = shape;
    s.class_count = classes;
    for (std::size_t i = 0; i < n; ++i) {
        const auto label = static_cast<std::uint32_t>(i % classes);
        for (const float c : centres[label]) s.features.push_back(c + noise(rng));
        s.labels.push_back(label);
    }
    return s;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag)
    {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("ablatron-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace testing

namespace testing {

// Writes an IDX image/label pair in the big-endian on-disk layout.
inline void write_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                      const std::vector<std::uint8_t>& pixels, const std::vector<std::uint8_t>& label_bytes,
                      std::uint32_t rows = 28, std::uint32_t cols = 28, std::uint32_t image_magic = 0x803,
                      std::uint32_t label_magic = 0x801, std::int64_t label_count = -1)
{
    auto be = [](std::ofstream& o, std::uint32_t v) {
        const char b[4] = {char(v >> 24), char(v >> 16), char(v >> 8), char(v)};
        o.write(b, 4);
    };
    const auto n = static_cast<std::uint32_t>(label_bytes.size());
    std::ofstream img(images, std::ios::binary);
    be(img, image_magic);
    be(img, n);
    be(img, rows);
    be(img, cols);
    img.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    std::ofstream lab(labels, std::ios::binary);
    be(lab, label_magic);
    be(lab, label_count < 0 ? n : static_cast<std::uint32_t>(label_count));
    lab.write(reinterpret_cast<const char*>(label_bytes.data()), static_cast<std::streamsize>(label_bytes.size()));
}

// Canonically named train and t10k files: class c images are bright in row band c.
inline void write_synthetic_mnist(const std::filesystem::path& dir, std::size_t train, std::size_t test,
                                  std::uint64_t seed = 1)
{
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> noise(0, 60);
    for (const auto& [prefix, n] : {std::pair<std::string, std::size_t>{"train", train}, {"t10k", test}}) {
        std::vector<std::uint8_t> pixels, labels;
        for (std::size_t i = 0; i < n; ++i) {
            const auto label = static_cast<std::uint8_t>(i % 10);
            labels.push_back(label);
            for (int r = 0; r < 28; ++r) {
                for (int c = 0; c < 28; ++c) {
                    const bool band = r / 2 == label + 2 && c > 3 && c < 24;
                    pixels.push_back(static_cast<std::uint8_t>(band ? 255 - noise(rng) : noise(rng)));
                }
            }
        }
        write_idx(dir / (prefix + "-images-idx3-ubyte"), dir / (prefix + "-labels-idx1-ubyte"), pixels, labels);
    }
}

}  // namespace testing
