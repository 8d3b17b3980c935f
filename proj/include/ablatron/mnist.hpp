#pragma once

#include "ablatron/network.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace ablatron {

enum class Split { train, test };

/// IDX images as stored (unsigned 8-bit) with their labels.
struct LabeledDataset {
    Split split = Split::test;
    std::uint32_t rows = 28;
    std::uint32_t cols = 28;
    std::vector<std::uint8_t> pixels;  // N x rows x cols
    std::vector<std::uint8_t> labels;

    std::size_t size() const noexcept { return labels.size(); }
    /// Pixels scaled by 1/255 into 1 x rows x cols samples with 10 classes.
    Samples present() const;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Parses an IDX image/label file pair. Throws ParseError (bad magic, count
/// mismatch, truncated payload, non-28x28 images) or DataError (label > 9).
LabeledDataset load_mnist(const std::filesystem::path& images, const std::filesystem::path& labels, Split split);

/// Loads the canonically named files (train-* / t10k-*) from `dir`.
LabeledDataset load_mnist_dir(const std::filesystem::path& dir, Split split);

}  // namespace ablatron
